#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "transport/data.hpp"
#include "transport/nuisance.hpp"

namespace transport {

/// Ratio of target to trial conditional adherence for one arm.
///
/// Either a constant or a lookup keyed on the levels of one categorical covariate,
/// resolved to a per-record vector against a specific dataset.
class DeltaValue {
 public:
  static DeltaValue constant(double value);
  static DeltaValue by_stratum(const StudyDataset& ds, const std::string& covariate,
                               const std::map<std::string, double>& by_level);

  double at(std::size_t record) const { return per_record_.empty() ? value_ : per_record_[record]; }
  bool is_constant() const { return per_record_.empty(); }
  double constant_value() const { return value_; }
  std::size_t records() const { return per_record_.size(); }
  const std::string& describe() const { return description_; }

 private:
  double value_ = 1.0;
  std::vector<double> per_record_;
  std::string description_;
};

// Dataset-independent delta specification; resolves to a DeltaValue for a dataset
// (needed when the dataset changes, e.g. bootstrap resamples).
struct DeltaRule {
  double value = 1.0;
  std::string covariate;  // empty for a constant
  std::map<std::string, double> by_level;

  static DeltaRule constant(double v) { return DeltaRule{v, {}, {}}; }
  bool is_constant() const { return covariate.empty(); }
  DeltaValue resolve(const StudyDataset& ds) const {
    return is_constant() ? DeltaValue::constant(value) : DeltaValue::by_stratum(ds, covariate, by_level);
  }
};

// Throws DeltaError if delta < 0 or m_a(w) * delta > 1 at any target record.
void check_delta(const NuisanceSet& nu, std::size_t arm, const DeltaValue& delta);

enum class Estimand { psi_g, psi_os, theta_os, theta_prime_os, contrast };
std::string_view to_string(Estimand e);

struct EstimateResult {
  Estimand estimand = Estimand::psi_os;
  Estimand family = Estimand::psi_os;  // estimand of the components for a contrast
  std::vector<std::string> arms;       // one arm, or {arm, referent} for a contrast
  std::string delta;                   // snapshot description
  double point = 0.0;
  std::vector<double> influence;  // per record; empty for g-computation
  std::size_t n0 = 0;
  std::size_t n1 = 0;
  std::string metadata;

  // Estimates are never clipped; this flags values outside the probability range.
  bool out_of_range() const { return estimand != Estimand::contrast && (point < 0.0 || point > 1.0); }
};

EstimateResult gcomp_psi(const NuisanceSet& nu, std::string_view arm, const DeltaValue& delta);

// Estimated efficient influence curve at psi for every record.
std::vector<double> eic_evaluate(const NuisanceSet& nu, std::string_view arm, const DeltaValue& delta, double psi);

EstimateResult onestep_psi(const NuisanceSet& nu, std::string_view arm, const DeltaValue& delta);

// One-step estimator of the trial-population mean E[Y^a | S=1].
EstimateResult trial_onestep(const NuisanceSet& nu, std::string_view arm);

// One-step transport estimator that assumes trial and target adherence coincide.
EstimateResult transport_onestep_setting1(const NuisanceSet& nu, std::string_view arm);

EstimateResult risk_difference(const EstimateResult& r1, const EstimateResult& r0);

// q1 * m + q0 * (1 - m): the adherence-marginalized outcome model.
inline double marginal_outcome(const NuisanceSet& nu, std::size_t arm, std::size_t i) {
  return nu.q1[arm][i] * nu.m[arm][i] + nu.q0[arm][i] * (1.0 - nu.m[arm][i]);
}

std::string nuisance_metadata(const NuisanceSet& nu);

}  // namespace transport
