#include "transport/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "transport/errors.hpp"

namespace transport {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Mean outcome in the target had adherence been m * delta.
double target_mean(const NuisanceSet& nu, std::size_t a, std::size_t i, double delta) {
  const double md = nu.m[a][i] * delta;
  return nu.q1[a][i] * md + nu.q0[a][i] * (1.0 - md);
}

EstimateResult base_result(const NuisanceSet& nu, Estimand e, std::string_view arm, std::string delta) {
  EstimateResult r;
  r.estimand = e;
  r.family = e;
  r.arms = {std::string(arm)};
  r.delta = std::move(delta);
  r.n0 = nu.n0;
  r.n1 = nu.n1;
  r.metadata = nuisance_metadata(nu);
  return r;
}

void require_targets(const NuisanceSet& nu) {
  if (nu.n0 == 0 || nu.n1 == 0) throw DataError("estimation needs both trial and target records");
}

}  // namespace

DeltaValue DeltaValue::constant(double value) {
  if (!std::isfinite(value)) throw DeltaError("delta must be finite");
  DeltaValue d;
  d.value_ = value;
  d.description_ = fmt(value);
  return d;
}

DeltaValue DeltaValue::by_stratum(const StudyDataset& ds, const std::string& covariate,
                                  const std::map<std::string, double>& by_level) {
  const auto j = ds.schema().index_of(covariate);
  if (!j) throw ConfigError("delta covariate '" + covariate + "' is not in the schema");
  const Covariate& cov = ds.schema()[*j];
  std::vector<std::string> levels;
  if (cov.kind == CovariateKind::categorical)
    levels = cov.levels;
  else if (cov.kind == CovariateKind::binary)
    levels = {"0", "1"};
  else
    throw ConfigError("delta may only vary over a categorical or binary covariate ('" + covariate + "' is continuous)");

  std::vector<double> value_of_level;
  std::string desc = covariate + "{";
  for (std::size_t l = 0; l < levels.size(); ++l) {
    auto it = by_level.find(levels[l]);
    if (it == by_level.end()) throw ConfigError("delta for covariate '" + covariate + "' lacks level '" + levels[l] + "'");
    if (!std::isfinite(it->second)) throw DeltaError("delta must be finite");
    value_of_level.push_back(it->second);
    desc += (l ? "," : "") + levels[l] + ":" + fmt(it->second);
  }
  for (const auto& [level, _] : by_level)
    if (std::find(levels.begin(), levels.end(), level) == levels.end())
      throw ConfigError("delta names unknown level '" + level + "' of covariate '" + covariate + "'");

  DeltaValue d;
  d.per_record_.reserve(ds.size());
  for (const auto& r : ds.records()) d.per_record_.push_back(value_of_level[static_cast<std::size_t>(r.w[*j])]);
  d.description_ = desc + "}";
  return d;
}

void check_delta(const NuisanceSet& nu, std::size_t arm, const DeltaValue& delta) {
  if (!delta.is_constant() && delta.records() != nu.size())
    throw ConfigError("stratified delta was resolved against a different dataset");
  for (std::size_t i = 0; i < nu.size(); ++i) {
    if (nu.obs.trial[i]) continue;
    const double d = delta.at(i);
    const double md = nu.m[arm][i] * d;
    if (d < 0.0 || md > 1.0)
      throw DeltaError("delta invariant violated for arm '" + nu.arms[arm] + "' at record " + std::to_string(i + 1) +
                       ": delta = " + fmt(d) + ", m*delta = " + fmt(md));
  }
}

std::string_view to_string(Estimand e) {
  switch (e) {
    case Estimand::psi_g:
      return "psi_G";
    case Estimand::psi_os:
      return "psi_OS";
    case Estimand::theta_os:
      return "theta_OS";
    case Estimand::theta_prime_os:
      return "theta_prime_OS";
    case Estimand::contrast:
      return "contrast";
  }
  return "psi_OS";
}

std::string nuisance_metadata(const NuisanceSet& nu) {
  std::ostringstream os;
  os << "truncation=[" << fmt(nu.truncation.lower) << "," << fmt(nu.truncation.upper)
     << "];truncation_events=" << nu.truncation_events << ";crossfit_folds=" << nu.folds;
  return os.str();
}

EstimateResult gcomp_psi(const NuisanceSet& nu, std::string_view arm, const DeltaValue& delta) {
  require_targets(nu);
  const std::size_t a = nu.arm_index(arm);
  check_delta(nu, a, delta);
  double sum = 0.0;
  for (std::size_t i = 0; i < nu.size(); ++i)
    if (!nu.obs.trial[i]) sum += target_mean(nu, a, i, delta.at(i));
  EstimateResult r = base_result(nu, Estimand::psi_g, arm, delta.describe());
  r.point = sum / static_cast<double>(nu.n0);
  return r;
}

std::vector<double> eic_evaluate(const NuisanceSet& nu, std::string_view arm, const DeltaValue& delta, double psi) {
  const std::size_t a = nu.arm_index(arm);
  const double k = nu.k_hat;
  std::vector<double> phi(nu.size(), 0.0);
  for (std::size_t i = 0; i < nu.size(); ++i) {
    const double d = delta.at(i);
    if (!nu.obs.trial[i]) {
      phi[i] = (target_mean(nu, a, i, d) - psi) / k;
      continue;
    }
    if (nu.obs.arm[i] != static_cast<int>(a)) continue;
    const double q1 = nu.q1[a][i], q0 = nu.q0[a][i], m = nu.m[a][i];
    const double g = nu.g[a][i], h = nu.h[i];
    const bool adherent = nu.obs.z[i] == 1;
    const double z = adherent ? 1.0 : 0.0;
    const double stratum_weight = adherent ? d : (1.0 - m * d) / (1.0 - m);
    const double residual = nu.obs.y[i] - (adherent ? q1 : q0);
    const double term = stratum_weight * residual + d * (q1 - q0) * (z - m);
    phi[i] = (1.0 / g) * ((1.0 - h) / h) * term / k;
  }
  return phi;
}

EstimateResult onestep_psi(const NuisanceSet& nu, std::string_view arm, const DeltaValue& delta) {
  EstimateResult r = gcomp_psi(nu, arm, delta);
  const auto phi = eic_evaluate(nu, arm, delta, r.point);
  double correction = 0.0;
  for (double v : phi) correction += v;
  r.point += correction / static_cast<double>(nu.size());
  r.estimand = r.family = Estimand::psi_os;
  r.influence = eic_evaluate(nu, arm, delta, r.point);
  return r;
}

EstimateResult trial_onestep(const NuisanceSet& nu, std::string_view arm) {
  const std::size_t a = nu.arm_index(arm);
  if (nu.n1 == 0) throw DataError("trial one-step estimator needs trial records");
  const double n = static_cast<double>(nu.size()), n1 = static_cast<double>(nu.n1);
  std::vector<double> contribution(nu.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < nu.size(); ++i) {
    if (!nu.obs.trial[i]) continue;
    const double qm = marginal_outcome(nu, a, i);
    double c = qm;
    if (nu.obs.arm[i] == static_cast<int>(a)) c += (nu.obs.y[i] - qm) / nu.g[a][i];
    contribution[i] = c;
    sum += c;
  }
  EstimateResult r = base_result(nu, Estimand::theta_os, arm, "none");
  r.point = sum / n1;
  r.influence.assign(nu.size(), 0.0);
  for (std::size_t i = 0; i < nu.size(); ++i)
    if (nu.obs.trial[i]) r.influence[i] = (n / n1) * (contribution[i] - r.point);
  return r;
}

EstimateResult transport_onestep_setting1(const NuisanceSet& nu, std::string_view arm) {
  require_targets(nu);
  const std::size_t a = nu.arm_index(arm);
  const double n = static_cast<double>(nu.size()), n0 = static_cast<double>(nu.n0);
  std::vector<double> contribution(nu.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < nu.size(); ++i) {
    const double qm = marginal_outcome(nu, a, i);
    double c = 0.0;
    if (!nu.obs.trial[i])
      c = qm;
    else if (nu.obs.arm[i] == static_cast<int>(a))
      c = (1.0 / nu.g[a][i]) * ((1.0 - nu.h[i]) / nu.h[i]) * (nu.obs.y[i] - qm);
    contribution[i] = c;
    sum += c;
  }
  EstimateResult r = base_result(nu, Estimand::theta_prime_os, arm, "1 (setting i)");
  r.point = sum / n0;
  r.influence.resize(nu.size());
  for (std::size_t i = 0; i < nu.size(); ++i)
    r.influence[i] = (n / n0) * (contribution[i] - (nu.obs.trial[i] ? 0.0 : r.point));
  return r;
}

EstimateResult risk_difference(const EstimateResult& r1, const EstimateResult& r0) {
  if (r1.family != r0.family) throw ConfigError("risk difference needs both inputs from the same estimator");
  if (r1.n0 != r0.n0 || r1.n1 != r0.n1) throw DataError("risk difference inputs come from different record counts");
  if (!r1.influence.empty() && !r0.influence.empty() && r1.influence.size() != r0.influence.size())
    throw DataError("risk difference inputs have influence vectors of different lengths");
  EstimateResult rd;
  rd.estimand = Estimand::contrast;
  rd.family = r1.family;
  rd.arms = {r1.arms.empty() ? "" : r1.arms.front(), r0.arms.empty() ? "" : r0.arms.front()};
  rd.delta = r1.delta + " vs " + r0.delta;
  rd.point = r1.point - r0.point;
  rd.n0 = r1.n0;
  rd.n1 = r1.n1;
  rd.metadata = r1.metadata;
  if (!r1.influence.empty() && !r0.influence.empty()) {
    rd.influence.resize(r1.influence.size());
    for (std::size_t i = 0; i < rd.influence.size(); ++i) rd.influence[i] = r1.influence[i] - r0.influence[i];
  }
  return rd;
}

}  // namespace transport
