#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "transport/data.hpp"
#include "transport/estimators.hpp"
#include "transport/inference.hpp"
#include "transport/nuisance.hpp"
#include "transport/sensitivity.hpp"
#include "transport/simulate.hpp"

namespace transport::cli {

enum class DeltaMode { constant, grid, range, trapezoid };
enum class OutputFormat { structured, delimited };

struct SimulateConfig {
  std::string dgp_name = "toy";  // "toy" or "custom"
  DgpSpec dgp = DgpSpec::toy();
  MisspecConfig misspec;
  ExperimentOptions experiment;
  std::string emit_dataset;  // optional path for one generated dataset
};

/// Everything one CLI invocation needs, with defaults filled in.
struct RunConfig {
  std::filesystem::path dataset;
  char delimiter = ',';
  CovariateSchema schema;
  std::vector<std::string> arms;  // empty: every arm found in the data
  std::string referent;           // empty: the first arm

  EstimatorKind estimator = EstimatorKind::onestep;
  VarianceMethod variance = VarianceMethod::eic;
  std::size_t bootstrap_replicates = 500;
  std::size_t crossfit_folds = 0;
  Truncation truncation;
  double level = 0.95;

  DeltaMode delta_mode = DeltaMode::constant;
  std::map<std::string, DeltaRule> constants;  // arms not listed get 1
  std::vector<GridPoint> grid;
  bool grid_reference = true;
  std::map<std::string, DeltaRange> ranges;
  std::map<std::string, ArmDeltaSpec> distributions;
  std::size_t draws = 10000;
  std::optional<DeltaConstraint> constraint;

  std::uint64_t seed = 1;
  std::filesystem::path output;  // empty: standard output
  OutputFormat format = OutputFormat::structured;

  std::optional<SimulateConfig> simulate;

  // The full configuration, defaults included, as embedded in every report.
  nlohmann::json resolved() const;
};

// Relative paths are taken against base_dir. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

std::string_view to_string(DeltaMode mode);
std::string_view to_string(OutputFormat format);

}  // namespace transport::cli
