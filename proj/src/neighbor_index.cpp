#include "r2vr/neighbor_index.hpp"

#include <algorithm>
#include <cmath>

#include "r2vr/pointcloud.hpp"

namespace r2vr {

namespace {

constexpr double kMaxCells = double(1 << 24);

void insert_candidate(std::vector<Neighbor>& best, std::size_t k, Neighbor n) {
  if (best.size() == k && !(n < best.back())) return;
  auto pos = std::upper_bound(best.begin(), best.end(), n);
  best.insert(pos, n);
  if (best.size() > k) best.pop_back();
}

}  // namespace

std::vector<Vec3> positions_of(const PointCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& r : cloud.records) out.push_back(r.position);
  return out;
}

NeighborIndex::NeighborIndex(const PointCloud& cloud, double cell_size)
    : NeighborIndex(positions_of(cloud), cell_size) {}

NeighborIndex::NeighborIndex(std::span<const Vec3> points, double cell_size)
    : points_(points.begin(), points.end()), cell_(cell_size) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw InvalidArgument("neighbor index cell_size must be positive");
  }
  if (points_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("neighbor index supports at most 2^32-1 points");
  }
  Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
  if (!points_.empty()) {
    lo = hi = points_.front();
    for (const auto& p : points_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  origin_ = lo;
  // Grow cells until the dense grid fits in memory.
  for (;;) {
    double total = 1.0;
    for (int a = 0; a < 3; ++a) {
      dims_[a] = static_cast<long>(std::floor((hi[a] - lo[a]) / cell_)) + 1;
      total *= double(dims_[a]);
    }
    if (total <= kMaxCells) break;
    cell_ *= 2.0;
  }

  const std::size_t ncells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
  cell_start_.assign(ncells + 1, 0);
  std::vector<std::uint32_t> cell_id(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto c = cell_of(points_[i]);
    cell_id[i] = static_cast<std::uint32_t>(flat(c[0], c[1], c[2]));
    ++cell_start_[cell_id[i] + 1];
  }
  for (std::size_t c = 0; c < ncells; ++c) cell_start_[c + 1] += cell_start_[c];
  cell_points_.resize(points_.size());
  std::vector<std::uint32_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cell_points_[fill[cell_id[i]]++] = static_cast<std::uint32_t>(i);
  }
}

double NeighborIndex::suggest_cell_size(std::span<const Vec3> points) {
  if (points.size() < 2) return 1.0;
  Vec3 lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) return 1.0;
  double cell = extent / std::max(1.0, std::cbrt(double(points.size())));
  // The cube-root guess assumes a filled volume; scans are surfaces and end
  // up with dozens of points per cell. Halve while a typical point shares its
  // cell with too many others.
  std::vector<std::uint64_t> keys(points.size());
  for (int iter = 0; iter < 6; ++iter) {
    const double next = cell / 2;
    const double dims = std::floor((hi - lo).x() / next + 1) * std::floor((hi - lo).y() / next + 1) *
                        std::floor((hi - lo).z() / next + 1);
    if (dims > kMaxCells) break;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3 f = ((points[i] - lo) / cell).array().floor();
      keys[i] = (std::uint64_t(f.x()) << 42) | (std::uint64_t(f.y()) << 21) | std::uint64_t(f.z());
    }
    std::sort(keys.begin(), keys.end());
    double load = 0;  // mean over points of the population of their cell
    for (std::size_t i = 0; i < keys.size();) {
      std::size_t j = i;
      while (j < keys.size() && keys[j] == keys[i]) ++j;
      load += double(j - i) * double(j - i);
      i = j;
    }
    if (load / double(points.size()) <= 8.0) break;
    cell = next;
  }
  return cell;
}

std::array<long, 3> NeighborIndex::cell_of(const Vec3& p) const {
  std::array<long, 3> c{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((p[a] - origin_[a]) / cell_);
    c[a] = std::clamp(static_cast<long>(std::clamp(f, -1.0, double(dims_[a]))), 0L, dims_[a] - 1);
  }
  return c;
}

void NeighborIndex::scan_cell(std::size_t cell, const Vec3& q, std::size_t k,
                              std::optional<std::uint32_t> exclude, std::vector<Neighbor>& best) const {
  for (std::uint32_t s = cell_start_[cell]; s < cell_start_[cell + 1]; ++s) {
    const std::uint32_t idx = cell_points_[s];
    if (exclude && *exclude == idx) continue;
    insert_candidate(best, k, {idx, (points_[idx] - q).squaredNorm()});
  }
}

void NeighborIndex::knn_into(const Vec3& query, std::size_t k, std::optional<std::uint32_t> exclude,
                             std::vector<Neighbor>& out) const {
  if (points_.empty()) throw InvalidArgument("knn on an empty index");
  if (k > points_.size()) throw InvalidArgument("knn k exceeds point count");
  out.clear();
  if (k == 0) return;
  const std::size_t available = points_.size() - (exclude ? 1 : 0);
  const std::size_t want = std::min(k, available);
  if (want == 0) return;

  const auto c = cell_of(query);
  const long max_r = std::max({dims_[0], dims_[1], dims_[2]});
  for (long r = 0; r <= max_r; ++r) {
    const long z0 = std::max(0L, c[2] - r), z1 = std::min(dims_[2] - 1, c[2] + r);
    const long y0 = std::max(0L, c[1] - r), y1 = std::min(dims_[1] - 1, c[1] + r);
    const long x0 = std::max(0L, c[0] - r), x1 = std::min(dims_[0] - 1, c[0] + r);
    for (long z = z0; z <= z1; ++z) {
      const bool zface = std::abs(z - c[2]) == r;
      for (long y = y0; y <= y1; ++y) {
        const bool face = zface || std::abs(y - c[1]) == r;
        if (face) {
          for (long x = x0; x <= x1; ++x) scan_cell(flat(x, y, z), query, want, exclude, out);
        } else {
          if (c[0] - r >= 0) scan_cell(flat(c[0] - r, y, z), query, want, exclude, out);
          if (r > 0 && c[0] + r < dims_[0]) scan_cell(flat(c[0] + r, y, z), query, want, exclude, out);
        }
      }
    }
    // Unvisited cells are at least r cells away from the query's cell.
    if (out.size() == want) {
      const double bound = double(r) * cell_;
      if (out.back().distance_sq < bound * bound) break;
    }
  }
}

std::vector<Neighbor> NeighborIndex::knn(const Vec3& query, std::size_t k) const {
  std::vector<Neighbor> out;
  knn_into(query, k, std::nullopt, out);
  return out;
}

std::vector<Neighbor> NeighborIndex::knn_of_point(std::uint32_t i, std::size_t k, bool include_self) const {
  if (i >= points_.size()) throw InvalidArgument("knn_of_point index out of range");
  std::vector<Neighbor> out;
  knn_into(points_[i], k, include_self ? std::nullopt : std::optional<std::uint32_t>(i), out);
  return out;
}

std::vector<std::uint32_t> NeighborIndex::radius_search(const Vec3& query, double radius) const {
  std::vector<std::uint32_t> out;
  if (points_.empty() || radius < 0) return out;
  const double r2 = radius * radius;
  std::array<long, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::clamp(static_cast<long>(std::floor((query[a] - radius - origin_[a]) / cell_)), 0L, dims_[a] - 1);
    hi[a] = std::clamp(static_cast<long>(std::floor((query[a] + radius - origin_[a]) / cell_)), 0L, dims_[a] - 1);
  }
  for (long z = lo[2]; z <= hi[2]; ++z)
    for (long y = lo[1]; y <= hi[1]; ++y)
      for (long x = lo[0]; x <= hi[0]; ++x) {
        const std::size_t cell = flat(x, y, z);
        for (std::uint32_t s = cell_start_[cell]; s < cell_start_[cell + 1]; ++s) {
          const std::uint32_t idx = cell_points_[s];
          if ((points_[idx] - query).squaredNorm() <= r2) out.push_back(idx);
        }
      }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace r2vr
