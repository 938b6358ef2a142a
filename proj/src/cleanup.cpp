#include "r2vr/cleanup.hpp"

#include <cmath>
#include <map>

#include "r2vr/neighbor_index.hpp"

namespace r2vr {

namespace {

void check_k(std::size_t n, std::size_t k) {
  if (k == 0) throw InvalidArgument("stray filter k must be positive");
  if (k >= n) {
    throw InvalidArgument("stray filter needs more than k=" + std::to_string(k) + " points, cloud has " +
                          std::to_string(n));
  }
}

double mean_of(const std::vector<Neighbor>& nb) {
  double s = 0;
  for (const auto& x : nb) s += std::sqrt(x.distance_sq);
  return s / double(nb.size());
}

StrayFilterResult finish_stray(const PointCloud& cloud, const std::vector<double>& means, double alpha) {
  StrayFilterResult res;
  const double n = double(means.size());
  double sum = 0;
  for (double m : means) sum += m;
  res.mean_distance = sum / n;
  double var = 0;
  for (double m : means) var += (m - res.mean_distance) * (m - res.mean_distance);
  res.std_distance = std::sqrt(var / n);
  res.threshold = res.mean_distance + alpha * res.std_distance;
  std::vector<std::uint8_t> keep(means.size(), 1);
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (means[i] > res.threshold) {
      keep[i] = 0;
      res.removed.push_back(static_cast<std::uint32_t>(i));
    }
  }
  res.filtered = select_points(cloud, keep);
  return res;
}

// Station origins resolved once; unknown ids throw before any work starts.
std::map<std::uint16_t, Vec3> resolve_origins(const PointCloud& cloud) {
  std::map<std::uint16_t, Vec3> out;
  for (const auto& r : cloud.records) {
    if (!out.count(r.station_id)) out.emplace(r.station_id, cloud.station_origin_in_cloud(r.station_id));
  }
  return out;
}

bool is_ghost(const Vec3& o, const Vec3& p, std::span<const SpecularRegion> regions, double epsilon) {
  const double dist = (p - o).norm();
  for (const auto& reg : regions) {
    const auto d = reg.segment_crossing(o, p);
    if (d && dist > *d + epsilon) return true;
  }
  return false;
}

GhostFilterResult finish_ghost(const PointCloud& cloud, std::vector<std::uint8_t>& keep) {
  GhostFilterResult res;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (!keep[i]) res.flagged.push_back(static_cast<std::uint32_t>(i));
  res.filtered = select_points(cloud, keep);
  return res;
}

}  // namespace

PointCloud select_points(const PointCloud& cloud, std::span<const std::uint8_t> keep) {
  if (keep.size() != cloud.size()) throw InvalidArgument("select_points: mask size mismatch");
  PointCloud out = cloud.clone_header();
  std::size_t n = 0;
  for (auto k : keep) n += k != 0;
  out.records.reserve(n);
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) out.records.push_back(cloud.records[i]);
  return out;
}

std::vector<double> knn_mean_distances(std::span<const Vec3> points, std::size_t k) {
  check_k(points.size(), k);
  const NeighborIndex index(points, NeighborIndex::suggest_cell_size(points));
  std::vector<double> means(points.size());
  const long n = static_cast<long>(points.size());
#pragma omp parallel
  {
    std::vector<Neighbor> nb;
#pragma omp for schedule(static, 1024)
    for (long i = 0; i < n; ++i) {
      index.knn_into(points[i], k, static_cast<std::uint32_t>(i), nb);
      means[i] = mean_of(nb);
    }
  }
  return means;
}

std::vector<double> knn_mean_distances_serial(std::span<const Vec3> points, std::size_t k) {
  check_k(points.size(), k);
  const NeighborIndex index(points, NeighborIndex::suggest_cell_size(points));
  std::vector<double> means(points.size());
  std::vector<Neighbor> nb;
  for (std::size_t i = 0; i < points.size(); ++i) {
    index.knn_into(points[i], k, static_cast<std::uint32_t>(i), nb);
    means[i] = mean_of(nb);
  }
  return means;
}

StrayFilterResult stray_point_filter(const PointCloud& cloud, const StrayFilterParams& params) {
  if (!(params.alpha >= 0) || !std::isfinite(params.alpha)) throw InvalidArgument("stray filter alpha must be >= 0");
  const auto pts = positions_of(cloud);
  return finish_stray(cloud, knn_mean_distances(pts, params.k), params.alpha);
}

StrayFilterResult stray_point_filter_serial(const PointCloud& cloud, const StrayFilterParams& params) {
  if (!(params.alpha >= 0) || !std::isfinite(params.alpha)) throw InvalidArgument("stray filter alpha must be >= 0");
  const auto pts = positions_of(cloud);
  return finish_stray(cloud, knn_mean_distances_serial(pts, params.k), params.alpha);
}

GhostFilterResult specular_ghost_filter(const PointCloud& cloud, std::span<const SpecularRegion> regions,
                                        double epsilon) {
  if (!(epsilon >= 0)) throw InvalidArgument("ghost filter epsilon must be >= 0");
  const auto origins = resolve_origins(cloud);
  std::vector<std::uint8_t> keep(cloud.size(), 1);
  if (!regions.empty()) {
    const long n = static_cast<long>(cloud.size());
#pragma omp parallel for schedule(static, 4096)
    for (long i = 0; i < n; ++i) {
      const auto& r = cloud.records[i];
      keep[i] = !is_ghost(origins.at(r.station_id), r.position, regions, epsilon);
    }
  }
  return finish_ghost(cloud, keep);
}

GhostFilterResult specular_ghost_filter_serial(const PointCloud& cloud, std::span<const SpecularRegion> regions,
                                               double epsilon) {
  if (!(epsilon >= 0)) throw InvalidArgument("ghost filter epsilon must be >= 0");
  const auto origins = resolve_origins(cloud);
  std::vector<std::uint8_t> keep(cloud.size(), 1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& r = cloud.records[i];
    keep[i] = !is_ghost(origins.at(r.station_id), r.position, regions, epsilon);
  }
  return finish_ghost(cloud, keep);
}

PointCloud crop(const PointCloud& cloud, const CropBox& box) {
  if (!box.valid()) throw InvalidArgument("crop box must satisfy min <= max componentwise");
  std::vector<std::uint8_t> keep(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) keep[i] = box.contains(cloud.records[i].position);
  return select_points(cloud, keep);
}

}  // namespace r2vr
