#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "r2vr/mesh.hpp"
#include "r2vr/pointcloud.hpp"
#include "r2vr/regions.hpp"
#include "r2vr/rigid_transform.hpp"

namespace r2vr {

/// Terrestrial scanner noise and sampling model.
///
/// A diffuse return at true range d is reported at
///   d + systematic_bias + N(0, sigma(d)),  sigma(d) = max(1e-4, range_noise_at_10m * d / 10).
/// Rays sweep azimuth over horizontal_fov and elevation over
/// [90 - vertical_fov/2, 90] degrees, both at angular_step.
struct ScannerModel {
  double systematic_bias = 0.001;
  double range_noise_at_10m = 0.0003;
  double vertical_fov_deg = 300.0;
  double horizontal_fov_deg = 360.0;
  double angular_step = 0.004;  // radians
  std::uint64_t seed = 42;

  void validate() const;
  double range_sigma(double range) const;
  std::size_t azimuth_count() const;
  std::size_t elevation_count() const;
  double azimuth(std::size_t col) const;
  double elevation(std::size_t row) const;
};

enum class Material : std::uint8_t { Diffuse, Specular };

struct SceneTriangle {
  std::array<Vec3, 3> v;
  Material material = Material::Diffuse;
  Rgb albedo{160, 160, 160};
  std::int32_t target = -1;  // index into SceneDescription::targets for checker faces
};

struct TargetPlacement {
  Vec3 center = Vec3::Zero();  // on the host surface
  Vec3 normal = Vec3::UnitX();
  double edge = 0.15;
  double rotation_deg = 0.0;  // in-plane rotation of the checker
  Rgb background{160, 160, 160};  // host surface colour seen at the outer border
  std::string label;
};

// Placed checker; crossing point is `centroid`, cells span +-edge/2 along u, v.
struct TargetFrame {
  Vec3 centroid;
  Vec3 normal;
  Vec3 u, v;
  double edge = 0.15;
  Rgb background{160, 160, 160};
  std::string label;
};

struct SceneDescription {
  std::string name;
  std::vector<SceneTriangle> triangles;
  std::vector<TargetPlacement> target_placements;
  std::vector<TargetFrame> targets;

  void add_quad(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, Material m, Rgb albedo,
                std::int32_t target = -1);
  void add_box(const Vec3& min, const Vec3& max, Rgb albedo);
  void validate() const;
};

struct GroundTruth {
  std::vector<RigidTransform> station_poses;
  std::vector<Vec3> target_centroids;
  std::vector<std::vector<std::uint32_t>> ghost_point_ids;  // per scan
  std::vector<std::vector<std::uint32_t>> stray_point_ids;  // per scan
};

struct ScanResult {
  PointCloud cloud;  // Local frame; station pose = the pose that was simulated
  std::vector<std::uint32_t> ghost_point_ids;
};

// Checker standoff above the host surface.
inline constexpr double kTargetStandoff = 0.001;
// Reflections that re-hit geometry closer than this to the mirror yield no return.
inline constexpr double kMinGhostPath = 0.05;

ScanResult simulate_scan(const SceneDescription& scene, const RigidTransform& station_pose,
                         const ScannerModel& scanner, std::uint16_t station_id = 0, std::string station_name = {});

// Same output, single-threaded; kept as the reference for the parallel path.
ScanResult simulate_scan_serial(const SceneDescription& scene, const RigidTransform& station_pose,
                                const ScannerModel& scanner, std::uint16_t station_id = 0,
                                std::string station_name = {});

// Adds a 2x2 checker (8 triangles) per placement at kTargetStandoff along the
// normal. Throws InvalidArgument for a zero normal or non-positive edge.
SceneDescription place_targets(SceneDescription scene, const std::vector<TargetPlacement>& placements);

// Uniform points at least `min_clearance` from every scene triangle, inside
// the scene bounds, appended to a Local cloud. Returns their indices.
std::vector<std::uint32_t> inject_airborne(PointCloud& cloud, const SceneDescription& scene,
                                           const RigidTransform& station_pose, std::size_t count,
                                           double min_clearance, std::uint64_t seed);

// Ray-cast visibility of a world point from a station origin.
bool point_visible(const SceneDescription& scene, const Vec3& origin, const Vec3& p, double tol = 1e-4);

struct LabeledBox {
  std::string name;
  Vec3 min, max;
  std::vector<std::string> tags;
};

struct KitchenParams {
  double length = 4.0;  // x
  double width = 3.2;   // y
  double height = 2.6;  // z
  double counter_depth = 0.6;
  double counter_height = 0.9;
  double upper_depth = 0.35;
  double upper_bottom = 1.5;
  double upper_top = 2.2;
  double station_height = 1.45;
  double station_b_yaw_deg = 35.0;
  bool specular_surfaces = true;
  int target_count = 8;
  double target_edge = 0.15;
  double target_jitter = 0.05;
};

struct KitchenScene {
  SceneDescription scene;
  std::array<RigidTransform, 2> stations;
  GroundTruth truth;
  std::vector<SpecularRegion> specular_regions;
  CropBox room_box;
  std::vector<LabeledBox> fixtures;  // counters, cabinets, appliances
};

KitchenScene synth_kitchen(const KitchenParams& params, std::uint64_t seed);

// Counter-based normal draw keyed by (seed, row, col); schedule independent.
double keyed_gaussian(std::uint64_t seed, std::uint64_t row, std::uint64_t col);

// Scene (de)serialisation in the pipeline's TOML config dialect.
std::string scene_to_toml(const SceneDescription& scene);
SceneDescription scene_from_toml(const std::string& text);

}  // namespace r2vr
