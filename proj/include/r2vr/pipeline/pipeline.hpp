#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "r2vr/pipeline/config.hpp"

namespace r2vr {

enum class Stage { Simulate, Ingest, Register, Clean, Crop, Retopo, Scene, Export, Report };

inline constexpr std::array<Stage, 9> kAllStages = {Stage::Simulate, Stage::Ingest, Stage::Register,
                                                    Stage::Clean,    Stage::Crop,   Stage::Retopo,
                                                    Stage::Scene,    Stage::Export, Stage::Report};

std::string_view stage_name(Stage s);
std::optional<Stage> stage_from_name(std::string_view name);

// Stages a config runs, in order; simulate only for the synthetic source.
std::vector<Stage> planned_stages(const PipelineConfig& cfg);

// mix_seed(master, FNV-1a of the stage name).
std::uint64_t stage_seed(std::uint64_t master, Stage s);

struct StageRecord {
  std::string stage;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
  nlohmann::ordered_json outputs = nlohmann::ordered_json::object();
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
};

struct StageFailure {
  std::string stage;
  std::string message;
  int exit_code = 2;
};

struct Manifest {
  int schema_version = kManifestSchemaVersion;
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config;
  std::vector<StageRecord> stages;  // execution order
  std::optional<StageFailure> failure;

  nlohmann::ordered_json to_json() const;
  static Manifest from_json(const nlohmann::ordered_json& j);
  const StageRecord* find(Stage s) const;
};

inline constexpr const char* kManifestFile = "manifest.json";

// Manifest text with wall times removed; equal for identical config + seed.
std::string canonical_manifest(const nlohmann::ordered_json& manifest);

// Thrown after the partial manifest has been written.
class PipelineError : public Error {
 public:
  explicit PipelineError(StageFailure f) : Error(f.stage + ": " + f.message), failure(std::move(f)) {}
  StageFailure failure;
};

// Runs every planned stage, persisting intermediates and the manifest under
// cfg.output_dir. Throws PipelineError naming the failed stage.
Manifest run_pipeline(const PipelineConfig& cfg);

// Runs one stage on intermediates already under cfg.output_dir and updates
// the manifest there: the record replaces any earlier one for the stage and
// records of later stages are dropped as stale.
StageRecord run_single_stage(const PipelineConfig& cfg, Stage stage);

// Reads <dir>/manifest.json. Throws IoError("no manifest ...") when absent.
Manifest load_manifest(const std::filesystem::path& dir);

// Human-readable per-stage table.
std::string summary_table(const Manifest& m);

}  // namespace r2vr
