#include "transport/nuisance.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "transport/errors.hpp"
#include "transport/parallel.hpp"
#include "transport/random.hpp"

namespace transport {

Observations Observations::from(const StudyDataset& ds) {
  Observations obs;
  const std::size_t n = ds.size();
  obs.trial.resize(n);
  obs.arm.resize(n);
  obs.z.resize(n, 0);
  obs.y.resize(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = ds[i];
    obs.trial[i] = r.trial ? 1 : 0;
    obs.arm[i] = ds.arm_index(i);
    if (r.trial) {
      obs.z[i] = static_cast<std::uint8_t>(*r.z);
      obs.y[i] = *r.y;
    }
  }
  return obs;
}

std::size_t NuisanceSet::arm_index(std::string_view label) const {
  for (std::size_t a = 0; a < arms.size(); ++a)
    if (arms[a] == label) return a;
  throw ConfigError("unknown arm '" + std::string(label) + "'");
}

namespace {

struct FittedModels {
  std::vector<ArmModels> arms;
  std::vector<LogisticModel> treatment;
  LogisticModel selection;
};

LogisticModel fit_labeled(const StudyDataset& ds, const std::vector<std::size_t>& rows,
                          const std::function<double(std::size_t)>& response, const CovariateSelection& covariates,
                          const LogisticOptions& options, const std::string& label, std::vector<std::string>& warnings) {
  if (rows.empty()) throw FitError(label + ": no records to fit");
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) y[static_cast<Eigen::Index>(r)] = response(rows[r]);
  try {
    LogisticModel model = fit_logistic(design_rows(ds, rows, covariates), y, options);
    if (!model.converged)
      warnings.push_back(label + ": did not converge in " + std::to_string(model.iterations) + " iterations");
    return model;
  } catch (const FitError& e) {
    throw FitError(label + ": " + e.what());
  }
}

FittedModels fit_models(const StudyDataset& ds, std::span<const std::size_t> train, const NuisanceOptions& options,
                        const std::string& prefix, std::vector<std::string>& warnings) {
  const auto& arms = ds.arms();
  const auto& lopt = options.logistic;
  const auto& cov = options.covariates;
  FittedModels fm;

  std::vector<std::size_t> trial_rows, all_rows(train.begin(), train.end());
  for (std::size_t i : train)
    if (ds[i].trial) trial_rows.push_back(i);

  for (std::size_t a = 0; a < arms.size(); ++a) {
    std::vector<std::size_t> arm_rows, adherent, nonadherent;
    for (std::size_t i : trial_rows) {
      if (ds.arm_index(i) != static_cast<int>(a)) continue;
      arm_rows.push_back(i);
      (*ds[i].z == 1 ? adherent : nonadherent).push_back(i);
    }
    const std::string arm_label = prefix + "arm '" + arms[a] + "'";
    auto outcome = [&](std::size_t i) { return *ds[i].y; };
    auto adherence = [&](std::size_t i) { return static_cast<double>(*ds[i].z); };
    ArmModels am;
    am.outcome_adherent =
        fit_labeled(ds, adherent, outcome, cov.outcome, lopt, "outcome model (" + arm_label + ", z=1)", warnings);
    am.outcome_nonadherent =
        fit_labeled(ds, nonadherent, outcome, cov.outcome, lopt, "outcome model (" + arm_label + ", z=0)", warnings);
    am.adherence = fit_labeled(ds, arm_rows, adherence, cov.adherence, lopt, "adherence model (" + arm_label + ")",
                               warnings);
    fm.arms.push_back(std::move(am));
  }

  if (arms.size() < 2) throw FitError(prefix + "treatment model: fewer than two arms observed");
  const std::size_t n_treatment = arms.size() == 2 ? 1 : arms.size();
  for (std::size_t t = 0; t < n_treatment; ++t) {
    const int modeled = arms.size() == 2 ? 1 : static_cast<int>(t);
    auto indicator = [&](std::size_t i) { return ds.arm_index(i) == modeled ? 1.0 : 0.0; };
    fm.treatment.push_back(fit_labeled(ds, trial_rows, indicator, cov.treatment, lopt,
                                       prefix + "treatment model (arm '" + arms[static_cast<std::size_t>(modeled)] + "')",
                                       warnings));
  }

  auto selected = [&](std::size_t i) { return ds[i].trial ? 1.0 : 0.0; };
  fm.selection = fit_labeled(ds, all_rows, selected, cov.selection, lopt, prefix + "selection model", warnings);
  return fm;
}

std::size_t clip(double& p, const Truncation& t) {
  if (p < t.lower) {
    p = t.lower;
    return 1;
  }
  if (p > t.upper) {
    p = t.upper;
    return 1;
  }
  return 0;
}

// Writes predictions for `rows` into nu and returns the number of clipped values.
std::size_t predict_into(const StudyDataset& ds, std::span<const std::size_t> rows, const FittedModels& fm,
                         const NuisanceOptions& options, NuisanceSet& nu) {
  if (rows.empty()) return 0;
  const auto& cov = options.covariates;
  const auto& t = options.truncation;
  std::size_t events = 0;

  const Eigen::MatrixXd xq = design_rows(ds, rows, cov.outcome);
  const Eigen::MatrixXd xm = design_rows(ds, rows, cov.adherence);
  const Eigen::MatrixXd xg = design_rows(ds, rows, cov.treatment);
  const Eigen::MatrixXd xh = design_rows(ds, rows, cov.selection);

  for (std::size_t a = 0; a < fm.arms.size(); ++a) {
    const Eigen::VectorXd p1 = fm.arms[a].outcome_adherent.predict(xq);
    const Eigen::VectorXd p0 = fm.arms[a].outcome_nonadherent.predict(xq);
    const Eigen::VectorXd pm = fm.arms[a].adherence.predict(xm);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto e = static_cast<Eigen::Index>(r);
      const std::size_t i = rows[r];
      nu.q1[a][i] = p1[e];
      nu.q0[a][i] = p0[e];
      nu.m[a][i] = pm[e];
      events += clip(nu.q1[a][i], t) + clip(nu.q0[a][i], t) + clip(nu.m[a][i], t);
    }
  }

  if (fm.arms.size() == 2) {
    const Eigen::VectorXd pg = fm.treatment[0].predict(xg);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::size_t i = rows[r];
      double p = pg[static_cast<Eigen::Index>(r)];
      events += clip(p, t);
      nu.g[1][i] = p;
      nu.g[0][i] = 1.0 - p;
      clip(nu.g[0][i], t);
    }
  } else {
    for (std::size_t a = 0; a < fm.treatment.size(); ++a) {
      const Eigen::VectorXd pg = fm.treatment[a].predict(xg);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        nu.g[a][rows[r]] = pg[static_cast<Eigen::Index>(r)];
        events += clip(nu.g[a][rows[r]], t);
      }
    }
  }

  const Eigen::VectorXd ph = fm.selection.predict(xh);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    nu.h[rows[r]] = ph[static_cast<Eigen::Index>(r)];
    events += clip(nu.h[rows[r]], t);
  }
  return events;
}

void validate_truncation(const Truncation& t) {
  if (!(t.lower > 0.0 && t.lower < t.upper && t.upper < 1.0))
    throw ConfigError("truncation bounds must satisfy 0 < lower < upper < 1");
}

NuisanceSet empty_set(const StudyDataset& ds, const NuisanceOptions& options) {
  validate_truncation(options.truncation);
  NuisanceSet nu;
  nu.arms = ds.arms();
  nu.obs = Observations::from(ds);
  const std::size_t n = ds.size(), k = ds.arms().size();
  nu.q1.assign(k, std::vector<double>(n, 0.0));
  nu.q0 = nu.q1;
  nu.m = nu.q1;
  nu.g = nu.q1;
  nu.h.assign(n, 0.0);
  nu.n0 = ds.n0();
  nu.n1 = ds.n1();
  nu.k_hat = static_cast<double>(ds.n0()) / static_cast<double>(n);
  nu.truncation = options.truncation;
  nu.covariates = options.covariates;
  nu.warnings = ds.warnings();
  return nu;
}

}  // namespace

NuisanceSet fit_nuisance_set(const StudyDataset& ds, const NuisanceOptions& options) {
  NuisanceSet nu = empty_set(ds, options);
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  FittedModels fm = fit_models(ds, all, options, "", nu.warnings);
  nu.truncation_events = predict_into(ds, all, fm, options, nu);
  nu.arm_models = std::move(fm.arms);
  nu.treatment_models = std::move(fm.treatment);
  nu.selection_model = std::move(fm.selection);
  return nu;
}

FoldAssignment make_folds(const StudyDataset& ds, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross-fitting needs at least 2 folds");
  FoldAssignment fa;
  fa.k = k;
  fa.fold_of.assign(ds.size(), 0);

  // Stratum key: -1 for the target sample, else the arm index.
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < ds.size(); ++i) strata[ds[i].trial ? ds.arm_index(i) : -1].push_back(i);

  std::size_t counter = 0;
  std::uint64_t stratum_no = 0;
  for (auto& [key, members] : strata) {
    auto rng = substream(seed, 0x464f4c44 /* folds */, stratum_no++);
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[uniform_index(rng, i)]);
    if (members.size() < k) {
      const std::string name = key < 0 ? "target sample" : "trial arm '" + ds.arms()[static_cast<std::size_t>(key)] + "'";
      fa.warnings.push_back("stratum " + name + " has " + std::to_string(members.size()) + " records; k reduced from " +
                            std::to_string(k) + " to " + std::to_string(members.size()) + " for this stratum");
    }
    for (std::size_t idx : members) fa.fold_of[idx] = counter++ % k;
  }
  return fa;
}

NuisanceSet crossfit_predictions(const StudyDataset& ds, const FoldAssignment& folds, const NuisanceOptions& options,
                                 unsigned threads) {
  if (folds.fold_of.size() != ds.size()) throw ConfigError("fold assignment does not match the dataset");
  NuisanceSet nu = empty_set(ds, options);
  nu.folds = folds.k;
  nu.warnings.insert(nu.warnings.end(), folds.warnings.begin(), folds.warnings.end());

  std::vector<std::vector<std::size_t>> held_out(folds.k), training(folds.k);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t f = 0; f < folds.k; ++f) (folds.fold_of[i] == f ? held_out[f] : training[f]).push_back(i);
  }

  std::vector<std::size_t> events(folds.k, 0);
  std::vector<std::vector<std::string>> fold_warnings(folds.k);
  parallel_for(folds.k, threads, [&](std::size_t f) {
    if (held_out[f].empty()) return;
    const std::string prefix = "fold " + std::to_string(f + 1) + ": ";
    FittedModels fm = fit_models(ds, training[f], options, prefix, fold_warnings[f]);
    events[f] = predict_into(ds, held_out[f], fm, options, nu);
  });
  for (std::size_t f = 0; f < folds.k; ++f) {
    nu.truncation_events += events[f];
    nu.warnings.insert(nu.warnings.end(), fold_warnings[f].begin(), fold_warnings[f].end());
  }
  return nu;
}

}  // namespace transport
