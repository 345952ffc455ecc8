#include "transport/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "transport/errors.hpp"
#include "transport/logistic.hpp"
#include "transport/parallel.hpp"
#include "transport/random.hpp"
#include "transport/stats.hpp"

namespace transport {

std::string_view to_string(VarianceMethod m) {
  switch (m) {
    case VarianceMethod::eic:
      return "eic";
    case VarianceMethod::bootstrap:
      return "bootstrap";
    case VarianceMethod::sandwich:
      return "sandwich";
  }
  return "eic";
}

VarianceMethod parse_variance_method(std::string_view text) {
  if (text == "eic") return VarianceMethod::eic;
  if (text == "bootstrap") return VarianceMethod::bootstrap;
  if (text == "sandwich") return VarianceMethod::sandwich;
  throw ConfigError("unknown variance engine '" + std::string(text) + "' (expected eic, bootstrap or sandwich)");
}

std::string_view to_string(EstimatorKind k) { return k == EstimatorKind::gcomp ? "gcomp" : "onestep"; }

EstimatorKind parse_estimator_kind(std::string_view text) {
  if (text == "gcomp") return EstimatorKind::gcomp;
  if (text == "onestep") return EstimatorKind::onestep;
  throw ConfigError("unknown estimator '" + std::string(text) + "' (expected gcomp or onestep)");
}

VarianceEstimate eic_variance(std::span<const double> influence) {
  if (influence.size() < 2) throw ConfigError("influence-curve variance needs at least two records");
  VarianceEstimate v;
  v.method = VarianceMethod::eic;
  v.variance = sample_variance(influence) / static_cast<double>(influence.size());
  v.se = std::sqrt(v.variance);
  return v;
}

// ---------------------------------------------------------------------------
// Bootstrap

namespace {

bool record_less(const StudyRecord& a, const StudyRecord& b) {
  if (a.w != b.w) return a.w < b.w;
  if (a.arm != b.arm) return a.arm < b.arm;
  if (a.z != b.z) return a.z < b.z;
  return a.y < b.y;
}

constexpr std::uint64_t kBootstrapStream = 0x424f4f54;  // "BOOT"

}  // namespace

BootstrapReplicates bootstrap_replicates(const StudyDataset& ds, const BootstrapPipeline& pipeline,
                                         std::size_t replicates, std::uint64_t seed, unsigned threads) {
  if (replicates < 50) throw ConfigError("bootstrap needs at least 50 replicates (got " + std::to_string(replicates) + ")");

  std::vector<std::size_t> trial, target;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds[i].trial ? trial : target).push_back(i);
  auto by_content = [&](std::size_t a, std::size_t b) { return record_less(ds[a], ds[b]); };
  std::stable_sort(trial.begin(), trial.end(), by_content);
  std::stable_sort(target.begin(), target.end(), by_content);

  std::vector<std::vector<double>> values(replicates);
  std::vector<std::uint8_t> ok(replicates, 0);
  parallel_for(replicates, threads, [&](std::size_t b) {
    auto rng = substream(seed, kBootstrapStream, b);
    std::vector<std::size_t> rows;
    rows.reserve(ds.size());
    for (std::size_t j = 0; j < trial.size(); ++j) rows.push_back(trial[uniform_index(rng, trial.size())]);
    for (std::size_t j = 0; j < target.size(); ++j) rows.push_back(target[uniform_index(rng, target.size())]);
    try {
      values[b] = pipeline(ds.select(rows));
      ok[b] = 1;
    } catch (const Error&) {
      ok[b] = 0;
    }
  });

  BootstrapReplicates out;
  out.requested = replicates;
  for (std::size_t b = 0; b < replicates; ++b) {
    if (ok[b])
      out.values.push_back(std::move(values[b]));
    else
      ++out.failed;
  }
  if (static_cast<double>(out.failed) > 0.05 * static_cast<double>(replicates))
    throw FitError("bootstrap: " + std::to_string(out.failed) + " of " + std::to_string(replicates) +
                   " replicates failed (more than 5%)");
  return out;
}

VarianceEstimate bootstrap_variance(const BootstrapReplicates& reps, std::size_t column) {
  std::vector<double> col;
  col.reserve(reps.values.size());
  for (const auto& v : reps.values) col.push_back(v.at(column));
  if (col.size() < 2) throw FitError("bootstrap: fewer than two successful replicates");
  VarianceEstimate v;
  v.method = VarianceMethod::bootstrap;
  v.variance = sample_variance(col);
  v.se = std::sqrt(v.variance);
  v.replicates = col.size();
  v.failed_replicates = reps.failed;
  return v;
}

VarianceEstimate bootstrap_variance(const StudyDataset& ds, const std::function<double(const StudyDataset&)>& pipeline,
                                    std::size_t replicates, std::uint64_t seed, unsigned threads) {
  auto reps = bootstrap_replicates(
      ds, [&](const StudyDataset& d) { return std::vector<double>{pipeline(d)}; }, replicates, seed, threads);
  return bootstrap_variance(reps, 0);
}

// ---------------------------------------------------------------------------
// Sandwich

namespace {

Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta, std::size_t offset,
                                 std::size_t width) {
  return x * theta.segment(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(width));
}

}  // namespace

SandwichStack::SandwichStack(const StudyDataset& ds, const NuisanceSet& nu, std::vector<ArmDelta> targets,
                             EstimatorKind kind)
    : n_(ds.size()), kind_(kind), arm_count_(nu.arms.size()), obs_(Observations::from(ds)),
      targets_(std::move(targets)) {
  if (nu.cross_fit()) throw ConfigError("sandwich variance needs full-sample parametric fits, not cross-fit nuisances");
  if (nu.size() != ds.size() || nu.arms != ds.arms())
    throw ConfigError("nuisance set was not fit on this dataset");
  if (nu.arm_models.size() != nu.arms.size()) throw ConfigError("nuisance set carries no fitted models");
  if (targets_.empty()) throw ConfigError("sandwich stack needs at least one target");

  std::vector<std::size_t> all(n_);
  std::iota(all.begin(), all.end(), std::size_t{0});
  xq_ = design_rows(ds, all, nu.covariates.outcome);
  xm_ = design_rows(ds, all, nu.covariates.adherence);
  xg_ = design_rows(ds, all, nu.covariates.treatment);
  xh_ = design_rows(ds, all, nu.covariates.selection);
  const auto pq = static_cast<std::size_t>(xq_.cols()), pm = static_cast<std::size_t>(xm_.cols()),
             pg = static_cast<std::size_t>(xg_.cols()), ph = static_cast<std::size_t>(xh_.cols());

  std::vector<double> values;
  auto append = [&](const Eigen::VectorXd& coef) {
    Block b{values.size(), static_cast<std::size_t>(coef.size())};
    values.insert(values.end(), coef.data(), coef.data() + coef.size());
    return b;
  };

  for (const auto& t : targets_) {
    const std::size_t a = nu.arm_index(t.arm);
    check_delta(nu, a, t.delta);
    auto it = std::find_if(arm_blocks_.begin(), arm_blocks_.end(), [&](const ArmBlocks& ab) { return ab.arm == a; });
    if (it == arm_blocks_.end()) {
      const ArmModels& am = nu.arm_models[a];
      ArmBlocks ab{a, append(am.outcome_adherent.coefficients), append(am.outcome_nonadherent.coefficients),
                   append(am.adherence.coefficients)};
      if (ab.beta1.width != pq || ab.beta0.width != pq || ab.alpha.width != pm)
        throw ConfigError("nuisance coefficients do not match the design width");
      arm_blocks_.push_back(ab);
      it = arm_blocks_.end() - 1;
    }
    target_block_.push_back(static_cast<std::size_t>(it - arm_blocks_.begin()));
  }

  if (kind_ == EstimatorKind::onestep) {
    std::set<std::size_t> modeled;
    for (const auto& ab : arm_blocks_) modeled.insert(arm_count_ == 2 ? 1 : ab.arm);
    for (std::size_t m : modeled) {
      const auto& coef = nu.treatment_models.at(arm_count_ == 2 ? 0 : m).coefficients;
      if (static_cast<std::size_t>(coef.size()) != pg) throw ConfigError("treatment coefficients do not match the design width");
      treatment_blocks_.emplace_back(m, append(coef));
    }
    if (static_cast<std::size_t>(nu.selection_model.coefficients.size()) != ph)
      throw ConfigError("selection coefficients do not match the design width");
    selection_block_ = append(nu.selection_model.coefficients);
  }

  psi_offset_ = values.size();
  values.resize(values.size() + targets_.size(), 0.0);
  theta_ = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));

  // Solve each psi equation exactly at the fitted coefficients: with psi = 0 the mean
  // score of the last equation is mean(Y*) and its slope in psi is -n0/n.
  const Eigen::VectorXd at_zero = mean_scores(theta_);
  const double n0_share = static_cast<double>(nu.n0) / static_cast<double>(n_);
  for (std::size_t t = 0; t < targets_.size(); ++t)
    theta_[static_cast<Eigen::Index>(psi_position(t))] = at_zero[static_cast<Eigen::Index>(psi_position(t))] / n0_share;
}

double SandwichStack::treatment_probability(std::size_t arm, const std::vector<Eigen::VectorXd>& treatment_eta,
                                            Eigen::Index i) const {
  for (std::size_t b = 0; b < treatment_blocks_.size(); ++b) {
    if (arm_count_ == 2) {
      const double p = expit(treatment_eta[b][i]);
      return arm == 1 ? p : 1.0 - p;
    }
    if (treatment_blocks_[b].first == arm) return expit(treatment_eta[b][i]);
  }
  throw ConfigError("no treatment block for arm");
}

Eigen::MatrixXd SandwichStack::scores(const Eigen::VectorXd& theta) const {
  const auto n = static_cast<Eigen::Index>(n_);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(dimension()));

  struct ArmPredictions {
    Eigen::VectorXd q1, q0, m;
  };
  std::vector<ArmPredictions> pred(arm_blocks_.size());
  for (std::size_t b = 0; b < arm_blocks_.size(); ++b) {
    const ArmBlocks& ab = arm_blocks_[b];
    auto expit_vec = [](Eigen::VectorXd eta) { return eta.unaryExpr([](double v) { return expit(v); }).eval(); };
    pred[b].q1 = expit_vec(linear_predictor(xq_, theta, ab.beta1.offset, ab.beta1.width));
    pred[b].q0 = expit_vec(linear_predictor(xq_, theta, ab.beta0.offset, ab.beta0.width));
    pred[b].m = expit_vec(linear_predictor(xm_, theta, ab.alpha.offset, ab.alpha.width));

    const int arm = static_cast<int>(ab.arm);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!obs_.trial[i] || obs_.arm[i] != arm) continue;
      const double y = obs_.y[i], z = obs_.z[i];
      const double r_out = y - (z == 1.0 ? pred[b].q1[i] : pred[b].q0[i]);
      const auto& blk = z == 1.0 ? ab.beta1 : ab.beta0;
      u.block(i, static_cast<Eigen::Index>(blk.offset), 1, static_cast<Eigen::Index>(blk.width)) = r_out * xq_.row(i);
      u.block(i, static_cast<Eigen::Index>(ab.alpha.offset), 1, static_cast<Eigen::Index>(ab.alpha.width)) =
          (z - pred[b].m[i]) * xm_.row(i);
    }
  }

  std::vector<Eigen::VectorXd> treatment_eta;
  Eigen::VectorXd h;
  if (kind_ == EstimatorKind::onestep) {
    for (const auto& [modeled, blk] : treatment_blocks_) {
      treatment_eta.push_back(linear_predictor(xg_, theta, blk.offset, blk.width));
      const Eigen::VectorXd& eta = treatment_eta.back();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!obs_.trial[i]) continue;
        const double indicator = obs_.arm[i] == static_cast<int>(modeled) ? 1.0 : 0.0;
        u.block(i, static_cast<Eigen::Index>(blk.offset), 1, static_cast<Eigen::Index>(blk.width)) =
            (indicator - expit(eta[i])) * xg_.row(i);
      }
    }
    h = linear_predictor(xh_, theta, selection_block_.offset, selection_block_.width)
            .unaryExpr([](double v) { return expit(v); });
    for (Eigen::Index i = 0; i < n; ++i)
      u.block(i, static_cast<Eigen::Index>(selection_block_.offset), 1,
              static_cast<Eigen::Index>(selection_block_.width)) = ((obs_.trial[i] ? 1.0 : 0.0) - h[i]) * xh_.row(i);
  }

  for (std::size_t t = 0; t < targets_.size(); ++t) {
    const ArmPredictions& p = pred[target_block_[t]];
    const std::size_t arm = arm_blocks_[target_block_[t]].arm;
    const double psi = theta[static_cast<Eigen::Index>(psi_position(t))];
    const auto col = static_cast<Eigen::Index>(psi_position(t));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = targets_[t].delta.at(static_cast<std::size_t>(i));
      if (!obs_.trial[i]) {
        const double md = p.m[i] * d;
        u(i, col) = p.q1[i] * md + p.q0[i] * (1.0 - md) - psi;
        continue;
      }
      if (kind_ == EstimatorKind::gcomp || obs_.arm[i] != static_cast<int>(arm)) continue;
      const double g = treatment_probability(arm, treatment_eta, i);
      const double z = obs_.z[i];
      const double weight = z == 1.0 ? d : (1.0 - p.m[i] * d) / (1.0 - p.m[i]);
      const double residual = obs_.y[i] - (z == 1.0 ? p.q1[i] : p.q0[i]);
      const double term = weight * residual + d * (p.q1[i] - p.q0[i]) * (z - p.m[i]);
      u(i, col) = (1.0 / g) * ((1.0 - h[i]) / h[i]) * term;
    }
  }
  return u;
}

Eigen::VectorXd SandwichStack::mean_scores(const Eigen::VectorXd& theta) const {
  return scores(theta).colwise().mean().transpose();
}

Eigen::MatrixXd SandwichStack::bread() const {
  const auto p = static_cast<Eigen::Index>(dimension());
  Eigen::MatrixXd j(p, p);
  for (Eigen::Index c = 0; c < p; ++c) {
    const double step = std::max(1e-6, 1e-6 * std::abs(theta_[c]));
    Eigen::VectorXd up = theta_, down = theta_;
    up[c] += step;
    down[c] -= step;
    j.col(c) = (mean_scores(up) - mean_scores(down)) / (2.0 * step);
  }
  return j;
}

Eigen::MatrixXd SandwichStack::meat() const {
  const Eigen::MatrixXd u = scores(theta_);
  return (u.transpose() * u) / static_cast<double>(n_);
}

Eigen::MatrixXd SandwichStack::covariance() const {
  const Eigen::MatrixXd b = bread();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(b);
  if (lu.rank() < b.rows()) throw FitError("sandwich bread matrix is singular");
  const Eigen::MatrixXd b_inv = lu.inverse();
  return b_inv * meat() * b_inv.transpose() / static_cast<double>(n_);
}

VarianceEstimate sandwich_variance(const StudyDataset& ds, const NuisanceSet& nu, std::string_view arm,
                                   const DeltaValue& delta, EstimatorKind which) {
  SandwichStack stack(ds, nu, {ArmDelta{std::string(arm), delta}}, which);
  const Eigen::MatrixXd cov = stack.covariance();
  const auto last = static_cast<Eigen::Index>(stack.psi_position(0));
  VarianceEstimate v;
  v.method = VarianceMethod::sandwich;
  v.variance = std::max(0.0, cov(last, last));
  v.se = std::sqrt(v.variance);
  v.stack_dimension = stack.dimension();
  return v;
}

CiResult wald_ci(double point, const VarianceEstimate& var, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  const double half = normal_quantile(0.5 + level / 2.0) * var.se;
  return CiResult{level, point - half, point + half, point};
}

}  // namespace transport
