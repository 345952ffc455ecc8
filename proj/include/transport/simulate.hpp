#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "transport/data.hpp"
#include "transport/nuisance.hpp"

namespace transport {

/// Data-generating process on a finite grid of covariate cells.
///
/// Probabilities are indexed [arm][cell]. Trial records draw W from p_trial, A from
/// assign, Z ~ Bernoulli(adherence) and Y ~ Bernoulli(outcome_adherent or
/// outcome_nonadherent); target records draw W from p_target only.
struct DgpSpec {
  CovariateSchema schema;                  // binary or categorical covariates
  std::vector<std::vector<double>> cells;  // covariate values of each cell
  std::vector<double> p_trial;
  std::vector<double> p_target;
  std::vector<std::string> arms;
  std::vector<std::vector<double>> assign;
  std::vector<std::vector<double>> adherence;
  std::vector<std::vector<double>> outcome_adherent;
  std::vector<std::vector<double>> outcome_nonadherent;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  std::uint64_t seed = 1;

  // Throws ConfigError on shape mismatches or probabilities outside (0, 1).
  void validate() const;
  std::size_t cell_count() const { return cells.size(); }
  std::size_t arm_index(const std::string& arm) const;

  // One binary covariate, arms "0" and "1".
  static DgpSpec toy(std::size_t n1 = 1000, std::size_t n0 = 1000, std::uint64_t seed = 1);
};

StudyDataset generate_data(const DgpSpec& spec);

// Exact enumeration of the transported mean for a constant delta.
double oracle_psi(const DgpSpec& spec, const std::string& arm, double delta);

// Which nuisance models get the correct covariates. A misspecified model omits the
// first covariate, or is intercept-only when there is just one.
struct MisspecConfig {
  bool outcome = true;
  bool adherence = true;
  bool treatment = true;
  bool selection = true;

  static MisspecConfig parse(const std::string& correct);  // e.g. "Q,m" or "all"
  std::string describe() const;
  ModelCovariates model_covariates(const CovariateSchema& schema) const;
};

struct ExperimentOptions {
  std::vector<std::size_t> sizes{5000};  // total records, split by the spec's n1:n0 ratio
  std::size_t reps = 500;
  std::uint64_t seed = 1;
  std::string arm = "1";
  std::vector<double> deltas{1.0};
  double level = 0.95;
  unsigned threads = 1;
  bool include_gcomp = true;
};

struct ExperimentRow {
  std::size_t n = 0;
  double delta = 1.0;
  std::string estimator;
  double oracle = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double mc_se = 0.0;  // standard error of the mean estimate
  double rmse = 0.0;
  double coverage = 0.0;  // NaN for g-computation, which has no variance here
  std::size_t reps = 0;
  std::size_t failures = 0;
};

// Generate, fit per config, estimate, compare with oracle_psi. Fit failures are
// counted; more than 2% of reps at any size is a FitError.
std::vector<ExperimentRow> run_dr_experiment(const DgpSpec& spec, const MisspecConfig& config,
                                             const ExperimentOptions& options);

}  // namespace transport
