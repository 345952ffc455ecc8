#include "transport/analysis.hpp"

#include <cmath>

#include "transport/errors.hpp"

namespace transport {

NuisanceSet fit_nuisances(const StudyDataset& ds, const AnalysisOptions& options) {
  if (options.crossfit_folds == 0) return fit_nuisance_set(ds, options.nuisance);
  const FoldAssignment folds = make_folds(ds, options.crossfit_folds, options.seed);
  return crossfit_predictions(ds, folds, options.nuisance, options.threads);
}

EstimateResult estimate(const NuisanceSet& nu, std::string_view arm, const DeltaValue& delta, EstimatorKind kind) {
  return kind == EstimatorKind::gcomp ? gcomp_psi(nu, arm, delta) : onestep_psi(nu, arm, delta);
}

namespace {

InferenceRow row(EstimateResult est, VarianceEstimate var, double level) {
  InferenceRow r{std::move(est), var, {}};
  r.ci = wald_ci(r.estimate.point, r.variance, level);
  return r;
}

VarianceEstimate from_variance(VarianceMethod method, double variance, const VarianceEstimate& like) {
  VarianceEstimate v = like;
  v.method = method;
  v.variance = std::max(0.0, variance);
  v.se = std::sqrt(v.variance);
  return v;
}

Comparison from_influence(EstimateResult a, EstimateResult r, double level) {
  EstimateResult rd = risk_difference(a, r);
  const auto va = eic_variance(a.influence), vr = eic_variance(r.influence), vd = eic_variance(rd.influence);
  return Comparison{row(std::move(a), va, level), row(std::move(r), vr, level), row(std::move(rd), vd, level)};
}

}  // namespace

Comparison compare_arms(const StudyDataset& ds, const NuisanceSet& nu, const std::string& arm,
                        const std::string& referent, const DeltaRule& arm_delta, const DeltaRule& referent_delta,
                        const AnalysisOptions& options) {
  const DeltaValue da = arm_delta.resolve(ds), dr = referent_delta.resolve(ds);
  EstimateResult ea = estimate(nu, arm, da, options.estimator);
  EstimateResult er = estimate(nu, referent, dr, options.estimator);

  switch (options.variance) {
    case VarianceMethod::eic: {
      if (options.estimator != EstimatorKind::onestep)
        throw ConfigError("influence-curve variance needs the one-step estimator; use bootstrap or sandwich for gcomp");
      return from_influence(std::move(ea), std::move(er), options.level);
    }
    case VarianceMethod::sandwich: {
      SandwichStack stack(ds, nu, {ArmDelta{arm, da}, ArmDelta{referent, dr}}, options.estimator);
      const Eigen::MatrixXd cov = stack.covariance();
      const auto i = static_cast<Eigen::Index>(stack.psi_position(0));
      const auto j = static_cast<Eigen::Index>(stack.psi_position(1));
      VarianceEstimate base;
      base.stack_dimension = stack.dimension();
      EstimateResult rd = risk_difference(ea, er);
      const auto va = from_variance(VarianceMethod::sandwich, cov(i, i), base);
      const auto vr = from_variance(VarianceMethod::sandwich, cov(j, j), base);
      const auto vd = from_variance(VarianceMethod::sandwich, cov(i, i) + cov(j, j) - 2.0 * cov(i, j), base);
      return Comparison{row(std::move(ea), va, options.level), row(std::move(er), vr, options.level),
                        row(std::move(rd), vd, options.level)};
    }
    case VarianceMethod::bootstrap: {
      AnalysisOptions inner = options;
      inner.threads = 1;
      auto pipeline = [&](const StudyDataset& d) {
        const NuisanceSet n = fit_nuisances(d, inner);
        const double pa = estimate(n, arm, arm_delta.resolve(d), inner.estimator).point;
        const double pr = estimate(n, referent, referent_delta.resolve(d), inner.estimator).point;
        return std::vector<double>{pa, pr, pa - pr};
      };
      const auto reps = bootstrap_replicates(ds, pipeline, options.bootstrap_replicates, options.seed, options.threads);
      EstimateResult rd = risk_difference(ea, er);
      return Comparison{row(std::move(ea), bootstrap_variance(reps, 0), options.level),
                        row(std::move(er), bootstrap_variance(reps, 1), options.level),
                        row(std::move(rd), bootstrap_variance(reps, 2), options.level)};
    }
  }
  throw ConfigError("unknown variance engine");
}

Comparison compare_trial(const NuisanceSet& nu, const std::string& arm, const std::string& referent, double level) {
  return from_influence(trial_onestep(nu, arm), trial_onestep(nu, referent), level);
}

Comparison compare_setting1(const NuisanceSet& nu, const std::string& arm, const std::string& referent, double level) {
  return from_influence(transport_onestep_setting1(nu, arm), transport_onestep_setting1(nu, referent), level);
}

}  // namespace transport
