#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "r2vr/common.hpp"

namespace r2vr {

class PointCloud;

struct Neighbor {
  std::uint32_t index = 0;
  double distance_sq = 0.0;

  bool operator<(const Neighbor& o) const {
    return distance_sq < o.distance_sq || (distance_sq == o.distance_sq && index < o.index);
  }
  bool operator==(const Neighbor&) const = default;
};

/// Uniform-grid spatial index over a fixed point set.
///
/// Cells are stored in CSR order and the points inside each cell keep
/// ascending index order. kNN results are sorted by (distance, index), so a
/// tie at the k-th distance always resolves to the lower point index, which
/// matches a brute-force scan exactly.
class NeighborIndex {
 public:
  NeighborIndex(std::span<const Vec3> points, double cell_size);
  NeighborIndex(const PointCloud& cloud, double cell_size);

  std::size_t size() const { return points_.size(); }
  double cell_size() const { return cell_; }
  const Vec3& point(std::uint32_t i) const { return points_[i]; }

  // k nearest points to an arbitrary position. Throws InvalidArgument when
  // the index is empty or k > size().
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;

  // k nearest neighbours of an indexed point; the point itself is skipped
  // unless include_self. Returns min(k, n-1) entries when excluding self.
  std::vector<Neighbor> knn_of_point(std::uint32_t i, std::size_t k, bool include_self = false) const;

  // Allocation-free form used by the kernels; `out` is resized.
  void knn_into(const Vec3& query, std::size_t k, std::optional<std::uint32_t> exclude,
                std::vector<Neighbor>& out) const;

  // Indices within radius (inclusive), ascending.
  std::vector<std::uint32_t> radius_search(const Vec3& query, double radius) const;

  // Grid-size heuristic: roughly one point per cell on a surface-like cloud.
  static double suggest_cell_size(std::span<const Vec3> points);

 private:
  std::array<long, 3> cell_of(const Vec3& p) const;
  std::size_t flat(long x, long y, long z) const {
    return static_cast<std::size_t>((z * dims_[1] + y) * dims_[0] + x);
  }
  void scan_cell(std::size_t cell, const Vec3& q, std::size_t k, std::optional<std::uint32_t> exclude,
                 std::vector<Neighbor>& best) const;

  std::vector<Vec3> points_;
  double cell_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  std::array<long, 3> dims_{1, 1, 1};
  std::vector<std::uint32_t> cell_start_;
  std::vector<std::uint32_t> cell_points_;
};

std::vector<Vec3> positions_of(const PointCloud& cloud);

}  // namespace r2vr
