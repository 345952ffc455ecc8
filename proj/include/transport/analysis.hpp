#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "transport/data.hpp"
#include "transport/estimators.hpp"
#include "transport/inference.hpp"
#include "transport/nuisance.hpp"

namespace transport {

// Everything needed to turn a dataset into estimates with intervals.
struct AnalysisOptions {
  EstimatorKind estimator = EstimatorKind::onestep;
  VarianceMethod variance = VarianceMethod::eic;
  std::size_t bootstrap_replicates = 500;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  NuisanceOptions nuisance;
  std::size_t crossfit_folds = 0;  // 0 disables cross-fitting
  double level = 0.95;
};

// Full-sample fits, or cross-fit predictions when crossfit_folds > 0.
NuisanceSet fit_nuisances(const StudyDataset& ds, const AnalysisOptions& options);

EstimateResult estimate(const NuisanceSet& nu, std::string_view arm, const DeltaValue& delta, EstimatorKind kind);

struct InferenceRow {
  EstimateResult estimate;
  VarianceEstimate variance;
  CiResult ci;
};

struct Comparison {
  InferenceRow arm;
  InferenceRow referent;
  InferenceRow difference;  // arm minus referent
};

// Estimates for one arm and the referent plus their risk difference, with variances
// from the engine named in `options`.
Comparison compare_arms(const StudyDataset& ds, const NuisanceSet& nu, const std::string& arm,
                        const std::string& referent, const DeltaRule& arm_delta, const DeltaRule& referent_delta,
                        const AnalysisOptions& options);

// Previously published reference estimators with influence-curve intervals:
// the trial-population mean and the transported mean assuming equal adherence.
Comparison compare_trial(const NuisanceSet& nu, const std::string& arm, const std::string& referent, double level);
Comparison compare_setting1(const NuisanceSet& nu, const std::string& arm, const std::string& referent, double level);

}  // namespace transport
