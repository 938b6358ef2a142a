#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "r2vr/cleanup.hpp"
#include "r2vr/regions.hpp"
#include "r2vr/registration.hpp"
#include "r2vr/retopo.hpp"
#include "r2vr/simscan.hpp"

namespace r2vr {

// Every problem found in a config, not only the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

enum class InputSource { SynthKitchen, Scans };

struct SpecularRegionConfig {
  std::string label;
  std::array<Vec3, 4> corners;
};

struct FixtureConfig {
  std::string name;
  Vec3 min = Vec3::Zero(), max = Vec3::Zero();
  std::vector<std::string> tags;
  bool open_variant = false;  // pair with a generated open-shelf twin
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "r2vr_out";

  struct Input {
    InputSource source = InputSource::SynthKitchen;
    std::vector<std::filesystem::path> scans;  // .e57 / .ply, resolved against the config directory
    std::size_t anchor = 0;
    KitchenParams kitchen;
    double stray_fraction = 0.01;  // airborne points per scan, as a fraction of its returns
    double stray_clearance = 0.5;
    ScannerModel scanner;  // seed is replaced by the stage seed
  } input;

  RegistrationParams registration;  // matching seed is replaced by the stage seed

  struct Cleanup {
    StrayFilterParams stray;
    double ghost_epsilon = 0.01;
    // Unset: the synthetic kitchen's own regions and room box, nothing for scans.
    std::optional<std::vector<SpecularRegionConfig>> specular_regions;
    std::optional<CropBox> crop;
  } cleanup;

  struct Retopo {
    RansacParams ransac{.epsilon = 0.002, .min_inliers = 100, .cluster_radius = 0.06};
    double voxel = 0.02;
    double snap_tol_deg = 5.0;
    long decimation_target = 100000;
    std::size_t deviation_sample_cap = 200000;
  } retopo;

  struct Scene {
    std::size_t polygon_budget = 450000;
    double refresh_hz = 90.0;
    std::string format = "glb";
    int shelves = 2;
    double board = 0.018;
    std::vector<std::string> collision_tags{"counter", "appliance"};
    // Unset: the synthetic kitchen's fixtures, cabinets paired with open shelves.
    std::optional<std::vector<FixtureConfig>> fixtures;
  } scene;

  // Fully defaulted view, with paths as given; recorded in the manifest.
  nlohmann::ordered_json to_json() const;
};

// Parses and range-checks a TOML config. Relative paths are resolved against
// the file's directory. Throws ConfigError listing every violation, or
// IoError when the file cannot be read.
PipelineConfig validate_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

}  // namespace r2vr
