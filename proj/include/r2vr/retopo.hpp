#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "r2vr/mesh.hpp"
#include "r2vr/pointcloud.hpp"

namespace r2vr {

struct PlaneSegment {
  Vec3 normal = Vec3::UnitZ();  // plane: normal . x = offset
  double offset = 0.0;
  std::vector<std::uint32_t> inlier_ids;  // into the point set given to ransac_planes
  std::array<Vec3, 4> rectangle{};        // valid once has_rectangle
  bool has_rectangle = false;
  std::string label;

  double distance(const Vec3& p) const { return std::abs(normal.dot(p) - offset); }
};

struct RansacParams {
  double epsilon = 0.002;
  std::size_t min_inliers = 200;
  std::size_t max_planes = 40;
  std::size_t iterations = 300;
  std::uint64_t seed = 0;
  // The second and third sample points come from within this radius of the
  // first; 0 samples globally.
  double sample_radius = 0.3;
  // Inliers are cut to the largest cluster linked at this distance before
  // refinement, so coplanar but separate surfaces become separate segments.
  // Negative: 4x the inliers' sampled mean spacing. 0 keeps every inlier.
  double cluster_radius = -1.0;
};

// Sequential RANSAC. Every reported inlier is within epsilon of its refined
// plane. Deterministic given the seed and independent of thread count.
std::vector<PlaneSegment> ransac_planes(std::span<const Vec3> points, const RansacParams& params = {});
std::vector<PlaneSegment> ransac_planes_serial(std::span<const Vec3> points, const RansacParams& params = {});

struct ManhattanFrame {
  std::array<Vec3, 3> axes;  // orthonormal, right-handed
};

// Frame from the largest segment's normal and the largest near-perpendicular
// one. Normals within tol of a frame axis (either sign) are replaced by it
// and their offsets re-fit over the inliers; inlier ids are kept as is.
std::vector<PlaneSegment> snap_orthogonal(std::vector<PlaneSegment> segments, std::span<const Vec3> points,
                                          double tol_deg = 5.0, ManhattanFrame* frame_out = nullptr);

// Minimum-area rectangle around the projected inliers. Throws
// DegenerateConfiguration for segments whose inliers project collinear.
std::vector<PlaneSegment> rectangles_from_segments(std::vector<PlaneSegment> segments,
                                                   std::span<const Vec3> points);

// floor / ceiling / wall_N / horizontal_N / plane_N relative to +z.
void classify_segments(std::vector<PlaneSegment>& segments, double tol_deg = 5.0);

inline constexpr double kWeldTolerance = 0.001;

// Two triangles per rectangle, vertices within kWeldTolerance merged, faces
// labelled by segment. Segments without rectangle are skipped.
TriangleMesh build_shell(std::span<const PlaneSegment> segments, double weld_tol = kWeldTolerance);

struct DecimationResult {
  TriangleMesh mesh;
  std::size_t collapses = 0;
  std::size_t nonmanifold_edges = 0;  // never collapsed
};

// Garland-Heckbert edge collapse, cheapest first, with boundary-preserving
// quadrics, link condition and normal-flip rejection. Stops at
// triangle_count <= target or when nothing legal remains. Throws
// InvalidArgument for target <= 0.
DecimationResult decimate_qem(const TriangleMesh& mesh, long target_triangles);

struct DeviationReport {
  double mean_mm = 0.0;
  double p95_mm = 0.0;  // nearest rank
  double max_mm = 0.0;
  std::size_t sample_count = 0;
};

// Exact point-to-mesh distance over a stride sample of at most sample_cap
// cloud points. Throws InvalidArgument for an empty mesh or cloud.
DeviationReport deviation(const TriangleMesh& mesh, std::span<const Vec3> points, std::size_t sample_cap = 200000);
DeviationReport deviation_serial(const TriangleMesh& mesh, std::span<const Vec3> points,
                                 std::size_t sample_cap = 200000);

// One centroid per occupied voxel, in order of first occupancy. Colour and
// intensity are averaged; the first point's station is kept.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

}  // namespace r2vr
