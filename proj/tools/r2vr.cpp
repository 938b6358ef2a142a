#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

#include "CLI11.hpp"
#include "r2vr/pipeline/exit_codes.hpp"
#include "r2vr/pipeline/pipeline.hpp"

using namespace r2vr;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("-c,--config", c.config, "pipeline config (TOML)");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed, overrides the config");
  cmd->add_option("--out-dir", c.out_dir, "output directory, overrides the config");
}

PipelineConfig load(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : validate_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scan-to-VR kitchen reconstruction pipeline"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}))
      ->capture_default_str();
  app.set_version_flag("--version", std::string(kToolVersion));

  Common run_opts;
  auto* run = app.add_subcommand("run", "run every stage and write the manifest");
  add_common(run, run_opts, true);

  Common check_opts;
  auto* check = app.add_subcommand("validate", "check a config and print it with defaults filled in");
  add_common(check, check_opts, true);

  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  Common stage_opts;
  for (Stage s : kAllStages) {
    if (s == Stage::Report) continue;
    auto* cmd = app.add_subcommand(std::string(stage_name(s)), "run the " + std::string(stage_name(s)) +
                                                                   " stage on intermediates in the output directory");
    add_common(cmd, stage_opts, false);
    stage_cmds.emplace_back(cmd, s);
  }
  std::string report_dir = "r2vr_out";
  auto* report = app.add_subcommand("report", "print the manifest summary of an output directory");
  report->add_option("--out-dir", report_dir, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  auto logger = spdlog::stderr_color_mt("r2vr");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
  spdlog::set_pattern("[%l] %v");

  try {
    if (*run) {
      const Manifest m = run_pipeline(load(run_opts));
      std::cout << summary_table(m);
    } else if (*check) {
      std::cout << load(check_opts).to_json().dump(2) << "\n";
    } else if (*report) {
      std::cout << summary_table(load_manifest(report_dir));
    } else {
      for (const auto& [cmd, s] : stage_cmds) {
        if (!*cmd) continue;
        const StageRecord r = run_single_stage(load(stage_opts), s);
        std::cout << r.stage << ": " << r.metrics.dump() << "\n";
      }
    }
  } catch (const ConfigError& e) {
    for (const auto& v : e.violations()) spdlog::error("config: {}", v);
    return kExitConfig;
  } catch (const PipelineError& e) {
    spdlog::error("stage {} failed: {}", e.failure.stage, e.failure.message);
    return e.failure.exit_code;
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitStage;
  }
  return kExitOk;
}
