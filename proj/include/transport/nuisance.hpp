#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "transport/data.hpp"
#include "transport/logistic.hpp"

namespace transport {

struct Truncation {
  double lower = 0.001;
  double upper = 0.999;
};

// Covariates entering each nuisance model. Empty optional means all covariates.
// Dropping covariates is how deliberately misspecified fits are produced.
struct ModelCovariates {
  CovariateSelection outcome;    // Q_{a,1}, Q_{a,0}
  CovariateSelection adherence;  // m_a
  CovariateSelection treatment;  // g_a
  CovariateSelection selection;  // h
};

struct NuisanceOptions {
  Truncation truncation;
  LogisticOptions logistic;
  ModelCovariates covariates;
};

// Per-record sample, arm, adherence and outcome, copied out of the dataset so that
// estimators only need the NuisanceSet.
struct Observations {
  std::vector<std::uint8_t> trial;
  std::vector<int> arm;  // -1 for target records
  std::vector<std::uint8_t> z;
  std::vector<double> y;

  std::size_t size() const { return trial.size(); }
  static Observations from(const StudyDataset& ds);
};

struct ArmModels {
  LogisticModel outcome_adherent;     // Q_{a,1}: trial, A=a, Z=1
  LogisticModel outcome_nonadherent;  // Q_{a,0}: trial, A=a, Z=0
  LogisticModel adherence;            // m_a:     trial, A=a
};

/// Fitted nuisance predictions for every record of a dataset.
///
/// With two arms a single treatment model is fit for the indicator of arms[1] and
/// g for arms[0] is its complement. With more arms each arm gets a one-vs-rest model.
/// All stored predictions are clipped into the truncation bounds.
struct NuisanceSet {
  std::vector<std::string> arms;
  Observations obs;

  // [arm][record]
  std::vector<std::vector<double>> q1, q0, m, g;
  // Pr(S=1 | W) per record.
  std::vector<double> h;

  std::size_t n0 = 0;
  std::size_t n1 = 0;
  double k_hat = 0.0;  // n0 / n
  Truncation truncation;
  std::size_t truncation_events = 0;

  // Number of cross-fitting folds; 0 for full-sample fits.
  std::size_t folds = 0;
  ModelCovariates covariates;

  // Full-sample models; empty when cross-fit.
  std::vector<ArmModels> arm_models;
  std::vector<LogisticModel> treatment_models;
  LogisticModel selection_model;

  std::vector<std::string> warnings;

  std::size_t size() const { return obs.size(); }
  bool cross_fit() const { return folds > 0; }
  std::size_t arm_index(std::string_view label) const;  // throws ConfigError
};

NuisanceSet fit_nuisance_set(const StudyDataset& ds, const NuisanceOptions& options = {});

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;
  std::vector<std::string> warnings;
};

// Folds stratified by (sample, arm). Within each stratum the shuffled members are dealt
// round-robin from a counter that carries over between strata, so a stratum smaller
// than k spans as many folds as it has members and k = n gives leave-one-out.
FoldAssignment make_folds(const StudyDataset& ds, std::size_t k, std::uint64_t seed);

// Each record's predictions come from models fit on every other fold.
NuisanceSet crossfit_predictions(const StudyDataset& ds, const FoldAssignment& folds,
                                 const NuisanceOptions& options = {}, unsigned threads = 1);

}  // namespace transport
