#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "r2vr/pointcloud.hpp"
#include "r2vr/rigid_transform.hpp"

namespace r2vr {

struct CheckerTarget {
  Vec3 centroid = Vec3::Zero();  // in the cloud's position frame
  Vec3 normal = Vec3::UnitZ();   // faces the station
  double confidence = 0.0;
  std::size_t support_count = 0;
  std::string label;
};

struct DetectionParams {
  double patch_radius = 0.1;
  double planarity_max = 0.01;  // smallest / middle PCA eigenvalue
  double contrast_min = 0.5;    // luminance gap between the two modes
  std::size_t min_points = 40;
  double dark_max = 0.2;
  double bright_min = 0.8;
  double link_radius = 0.03;  // dark-point clustering radius
  double target_edge = 0.15;  // nominal checker edge, for truncation scoring
};

// Throws InvalidArgument when the cloud carries neither colour nor intensity.
std::vector<CheckerTarget> detect_targets(const PointCloud& cloud, const DetectionParams& params = {});

struct Correspondence {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  double residual = 0.0;  // meters, after the final fit
};

struct MatchParams {
  double tolerance = 0.005;  // pairwise-distance consistency, meters
  std::uint64_t seed = 42;
  std::size_t max_triples = 4000;  // a-side triples examined before sampling
  double min_triangle_area = 1e-3;  // m^2; skinnier triples are not used as seeds
};

class MatchFailure : public Error {
 public:
  using Error::Error;
};

// Pairs targets of `a` with targets of `b` under one rigid motion. The result
// is sorted by index_a and independent of input order. Throws MatchFailure
// when fewer than three consistent pairs exist.
std::vector<Correspondence> match_targets(std::span<const CheckerTarget> a, std::span<const CheckerTarget> b,
                                          const MatchParams& params = {});

// Least-squares rigid motion T minimising sum |T src_i - dst_i|^2 (Kabsch with
// determinant correction). Throws DegenerateConfiguration for fewer than
// three pairs or a rank-deficient source set.
RigidTransform estimate_rigid(std::span<const Vec3> src, std::span<const Vec3> dst);

struct RegistrationReport {
  double mean_point_error_mm = 0.0;
  double rms_mm = 0.0;
  std::vector<double> per_target_residuals_mm;
  std::size_t used_targets = 0;
};

RegistrationReport registration_report(const RigidTransform& transform, std::span<const Vec3> src,
                                       std::span<const Vec3> dst);

struct RegistrationParams {
  DetectionParams detection;
  MatchParams matching;
};

struct PairRegistration {
  RigidTransform b_to_a;
  RegistrationReport report;
  std::vector<CheckerTarget> targets_a, targets_b;
  std::vector<Correspondence> correspondences;
};

// detect -> match -> estimate -> report; cloud_a is the anchor.
PairRegistration register_pair(const PointCloud& a, const PointCloud& b, const RegistrationParams& params = {});

// Maps every cloud into the anchor frame with its pose, producing a World
// cloud. Station ids are kept unless two inputs share one, in which case
// later stations get the next free id.
PointCloud merge_clouds(std::span<const PointCloud> clouds, std::span<const RigidTransform> poses);

}  // namespace r2vr
