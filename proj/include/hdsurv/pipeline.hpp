#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hdsurv/evaluation.hpp"
#include "hdsurv/simulate.hpp"

namespace hdsurv {

struct InputFiles {
  std::filesystem::path survival;
  std::filesystem::path imaging;
  std::filesystem::path expression;
  std::optional<std::filesystem::path> clinical;
};

struct AnalysisToggles {
  bool cox_imaging = true;
  bool cox_expression = true;
  bool integrate = true;
  bool associate = true;
  bool evaluate = true;
};

struct SolverSettings {
  int folds = 10;
  int grid_size = 100;
  double ratio = 0.01;
  LassoOptions lasso;
  GroupLassoOptions group;
  SelectionRule rule = SelectionRule::Min;
  double qc_missing_threshold = 0.25;
  double qc_variance_epsilon = 1e-12;
};

struct ProtocolSettings {
  std::uint64_t master_seed = 0;
  int n_repeats = 100;
  double train_fraction = 0.75;
  double min_success_fraction = 0.95;
};

struct PipelineConfig {
  /// Exactly one of `input` and `simulation` is set.
  std::optional<InputFiles> input;
  std::optional<SimulationSpec> simulation;
  /// [simulate] seed; when absent the cohort seed is derived from master_seed.
  std::optional<std::uint64_t> simulation_seed_override;
  AnalysisToggles analysis;
  SolverSettings solver;
  ProtocolSettings protocol;
  std::filesystem::path output_dir = "hdsurv_out";
  bool svg = false;
  int threads = 1;  // not part of the config echo: results do not depend on it
};

/// Parses an INI document. Relative input paths are resolved against
/// `base_dir`. Unknown sections or keys, malformed values and a missing
/// master_seed raise ConfigError.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical INI text with every setting spelled out; parse_config of the
/// result yields the same configuration.
std::string config_to_ini(const PipelineConfig& config);

/// Seed used for the simulated cohort.
std::uint64_t simulation_seed(const PipelineConfig& config);

enum ExitCode : int { kSuccess = 0, kConfigError = 1, kNumericalFailure = 2, kPartialFailure = 3 };

struct StageOutcome {
  std::string stage;
  bool ok = true;
  bool numerical = false;
  std::string message;
  double seconds = 0.0;
};

struct PipelineResult {
  int exit_code = kSuccess;
  std::vector<StageOutcome> stages;
};

/**
 * Runs every enabled analysis and writes its outputs to config.output_dir.
 * A failing stage leaves `<stage>.failed` with the error message; later
 * stages that depend on it fail too. Outputs other than run_manifest.json
 * depend only on the configuration.
 */
PipelineResult run_pipeline(const PipelineConfig& config);

/// Rebuilds the configuration echoed in a run manifest.
PipelineConfig config_from_manifest(const std::filesystem::path& manifest_path);

/// Version string written to manifests.
const char* version();

}  // namespace hdsurv
