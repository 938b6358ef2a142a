#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "r2vr/pointcloud.hpp"
#include "r2vr/regions.hpp"

namespace r2vr {

struct StrayFilterParams {
  std::size_t k = 8;
  double alpha = 2.0;  // std multiplier on the global mean kNN distance
};

struct StrayFilterResult {
  PointCloud filtered;
  std::vector<std::uint32_t> removed;  // ascending indices into the input
  double mean_distance = 0.0;          // global statistics of the per-point means
  double std_distance = 0.0;
  double threshold = 0.0;
};

// Statistical outlier removal: a point goes when its mean distance to its k
// nearest neighbours exceeds mean + alpha * std over all points (population
// std). Throws InvalidArgument when k == 0 or k >= point count.
StrayFilterResult stray_point_filter(const PointCloud& cloud, const StrayFilterParams& params = {});
StrayFilterResult stray_point_filter_serial(const PointCloud& cloud, const StrayFilterParams& params = {});

// Per-point mean kNN distance (self excluded). The parallel and serial forms
// return identical values.
std::vector<double> knn_mean_distances(std::span<const Vec3> points, std::size_t k);
std::vector<double> knn_mean_distances_serial(std::span<const Vec3> points, std::size_t k);

struct GhostFilterResult {
  PointCloud filtered;
  std::vector<std::uint32_t> flagged;  // ascending
};

// Flags p from station s when the segment origin(s) -> p crosses a region at
// distance d and |p - origin(s)| > d + epsilon. Regions are given in the
// cloud's position frame. Throws InvalidArgument for an unknown station.
GhostFilterResult specular_ghost_filter(const PointCloud& cloud, std::span<const SpecularRegion> regions,
                                        double epsilon = 0.01);
GhostFilterResult specular_ghost_filter_serial(const PointCloud& cloud, std::span<const SpecularRegion> regions,
                                               double epsilon = 0.01);

// Keeps exactly the points inside the closed box; stations are kept.
// Throws InvalidArgument for an invalid box.
PointCloud crop(const PointCloud& cloud, const CropBox& box);

// Copy of the records whose keep flag is set, in order.
PointCloud select_points(const PointCloud& cloud, std::span<const std::uint8_t> keep);

}  // namespace r2vr
