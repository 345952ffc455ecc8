#include "transport/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "transport/errors.hpp"
#include "transport/inference.hpp"
#include "transport/parallel.hpp"
#include "transport/random.hpp"
#include "transport/stats.hpp"

namespace transport {

TrapezoidDist::TrapezoidDist(double a, double b, double c, double d) : a_(a), b_(b), c_(c), d_(d) {
  if (!(std::isfinite(a) && std::isfinite(d) && a <= b && b <= c && c <= d && a < d))
    throw ConfigError("trapezoid needs a <= b <= c <= d with a < d");
  height_ = 2.0 / (d + c - b - a);
}

double TrapezoidDist::pdf(double x) const {
  if (x < a_ || x > d_) return 0.0;
  if (x < b_) return height_ * (x - a_) / (b_ - a_);
  if (x <= c_) return height_;
  return height_ * (d_ - x) / (d_ - c_);
}

double TrapezoidDist::cdf(double x) const {
  if (x <= a_) return 0.0;
  if (x >= d_) return 1.0;
  if (x < b_) return height_ * (x - a_) * (x - a_) / (2.0 * (b_ - a_));
  const double at_b = height_ * (b_ - a_) / 2.0;
  if (x <= c_) return at_b + height_ * (x - b_);
  return 1.0 - height_ * (d_ - x) * (d_ - x) / (2.0 * (d_ - c_));
}

double TrapezoidDist::mean() const {
  // Integral of x * pdf, split over the three pieces.
  double m = height_ * (c_ * c_ - b_ * b_) / 2.0;
  if (b_ > a_) m += height_ * (b_ - a_) * (a_ + 2.0 * b_) / 6.0;
  if (d_ > c_) m += height_ * (d_ - c_) * (2.0 * c_ + d_) / 6.0;
  return m;
}

double TrapezoidDist::quantile(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  const double at_b = height_ * (b_ - a_) / 2.0;
  const double at_c = at_b + height_ * (c_ - b_);
  double x;
  if (u <= at_b && b_ > a_)
    x = a_ + std::sqrt(2.0 * u * (b_ - a_) / height_);
  else if (u <= at_c)
    x = b_ + (u - at_b) / height_;
  else
    x = d_ - std::sqrt(2.0 * (1.0 - u) * (d_ - c_) / height_);
  return std::clamp(x, a_, d_);
}

double sample_trapezoid(const TrapezoidDist& dist, double u) { return dist.quantile(u); }

// ---------------------------------------------------------------------------

StaticGridResult run_static_grid(const StudyDataset& ds, const NuisanceSet& nu, const std::string& arm,
                                 const std::string& referent, std::vector<GridPoint> grid,
                                 const AnalysisOptions& options, bool include_reference) {
  StaticGridResult out;
  if (include_reference) {
    const bool has_unit = std::any_of(grid.begin(), grid.end(), [](const GridPoint& g) {
      return g.arm_delta == 1.0 && g.referent_delta == 1.0;
    });
    if (!has_unit) grid.insert(grid.begin(), GridPoint{1.0, 1.0});
    out.setting1 = compare_setting1(nu, arm, referent, options.level);
  }
  for (const auto& g : grid) {
    out.rows.push_back(GridRow{g, compare_arms(ds, nu, arm, referent, DeltaRule::constant(g.arm_delta),
                                               DeltaRule::constant(g.referent_delta), options)});
  }
  return out;
}

BoundsResult run_bounds(const NuisanceSet& nu, const std::string& arm, const std::string& referent,
                        const DeltaRange& arm_range, const DeltaRange& referent_range, EstimatorKind estimator) {
  for (const auto* r : {&arm_range, &referent_range})
    if (!(r->lower <= r->upper)) throw ConfigError("delta range needs lower <= upper");

  auto psi = [&](const std::string& a, double d) { return estimate(nu, a, DeltaValue::constant(d), estimator).point; };
  const double a_lo = psi(arm, arm_range.lower), a_hi = psi(arm, arm_range.upper);
  const double r_lo = psi(referent, referent_range.lower), r_hi = psi(referent, referent_range.upper);

  BoundsResult b;
  b.arm_range = arm_range;
  b.referent_range = referent_range;
  b.arm = {std::min(a_lo, a_hi), std::max(a_lo, a_hi)};
  b.referent = {std::min(r_lo, r_hi), std::max(r_lo, r_hi)};
  for (const auto& [da, pa] : {std::pair{arm_range.lower, a_lo}, std::pair{arm_range.upper, a_hi}})
    for (const auto& [dr, pr] : {std::pair{referent_range.lower, r_lo}, std::pair{referent_range.upper, r_hi}})
      b.vertices.push_back(BoundsVertex{da, dr, pa, pr, pa - pr});
  b.difference = {b.vertices.front().difference, b.vertices.front().difference};
  for (const auto& v : b.vertices) {
    b.difference.lower = std::min(b.difference.lower, v.difference);
    b.difference.upper = std::max(b.difference.upper, v.difference);
  }
  return b;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kDeltaStream = 0x44454c54;    // "DELT"
constexpr std::uint64_t kAugmentStream = 0x4155474d;  // "AUGM"

double draw_delta(const ArmDeltaSpec& spec, std::mt19937_64& rng) {
  if (const auto* c = std::get_if<double>(&spec)) return *c;
  const double u = uniform01(rng);
  if (const auto* r = std::get_if<DeltaRange>(&spec)) return r->lower + u * (r->upper - r->lower);
  return sample_trapezoid(std::get<TrapezoidDist>(spec), u);
}

const ArmDeltaSpec& spec_for(const DeltaScenario& s, const std::string& arm) {
  auto it = s.arms.find(arm);
  if (it == s.arms.end()) throw ConfigError("delta scenario has no specification for arm '" + arm + "'");
  return it->second;
}

QuantitySummary summarize(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return QuantitySummary{quantile_type7(v, 0.5), quantile_type7(v, 0.025), quantile_type7(v, 0.975)};
}

}  // namespace

std::vector<std::pair<double, double>> draw_delta_pairs(const DeltaScenario& scenario, const NuisanceSet& nu,
                                                        const std::string& arm, const std::string& referent) {
  if (scenario.draws < 100) throw ConfigError("Monte Carlo needs at least 100 draws (got " + std::to_string(scenario.draws) + ")");
  const ArmDeltaSpec& sa = spec_for(scenario, arm);
  const ArmDeltaSpec& sr = spec_for(scenario, referent);
  auto rng_arm = substream(scenario.seed, kDeltaStream, nu.arm_index(arm));
  auto rng_ref = substream(scenario.seed, kDeltaStream, nu.arm_index(referent));
  std::vector<std::pair<double, double>> pairs(scenario.draws);
  for (auto& p : pairs) p.first = draw_delta(sa, rng_arm);
  for (auto& p : pairs) p.second = draw_delta(sr, rng_ref);
  return pairs;
}

McTable run_mc(const NuisanceSet& nu, const DeltaScenario& scenario, const std::string& arm,
               const std::string& referent, unsigned threads) {
  const auto pairs = draw_delta_pairs(scenario, nu, arm, referent);
  McTable table;
  table.arm = arm;
  table.referent = referent;
  table.seed = scenario.seed;
  table.draws.resize(pairs.size());

  parallel_for(pairs.size(), threads, [&](std::size_t k) {
    McDraw& d = table.draws[k];
    d.delta_arm = pairs[k].first;
    d.delta_referent = pairs[k].second;
    try {
      const auto ea = onestep_psi(nu, arm, DeltaValue::constant(d.delta_arm));
      const auto er = onestep_psi(nu, referent, DeltaValue::constant(d.delta_referent));
      const auto rd = risk_difference(ea, er);
      d.psi_arm = ea.point;
      d.psi_referent = er.point;
      d.difference = rd.point;
      d.se_arm = eic_variance(ea.influence).se;
      d.se_referent = eic_variance(er.influence).se;
      d.se_difference = eic_variance(rd.influence).se;
    } catch (const DeltaError&) {
      d.flagged = true;
    }
  });
  for (const auto& d : table.draws) table.flagged += d.flagged ? 1 : 0;
  if (static_cast<double>(table.flagged) > 0.05 * static_cast<double>(table.draws.size()))
    throw DeltaError(std::to_string(table.flagged) + " of " + std::to_string(table.draws.size()) +
                     " Monte Carlo draws violate the delta invariant (more than 5%)");
  return table;
}

McSummaryBlock summarize_mc(const McTable& table, bool se_augment, const std::optional<DeltaConstraint>& constraint,
                            std::uint64_t seed) {
  if (table.draws.empty()) throw ConfigError("Monte Carlo table is empty");
  auto delta_of = [&](const McDraw& d, const std::string& label) {
    if (label == table.arm) return d.delta_arm;
    if (label == table.referent) return d.delta_referent;
    throw ConfigError("constraint names arm '" + label + "' which is not part of this comparison");
  };

  std::vector<double> pa, pr, rd;
  for (std::size_t k = 0; k < table.draws.size(); ++k) {
    const McDraw& d = table.draws[k];
    if (d.flagged) continue;
    if (constraint && !(delta_of(d, constraint->lhs) <= delta_of(d, constraint->rhs))) continue;
    double ea = 0.0, er = 0.0, ed = 0.0;
    if (se_augment) {
      auto rng = substream(seed, kAugmentStream, k);
      ea = d.se_arm * normal_quantile(uniform_open01(rng));
      er = d.se_referent * normal_quantile(uniform_open01(rng));
      ed = d.se_difference * normal_quantile(uniform_open01(rng));
    }
    pa.push_back(d.psi_arm - ea);
    pr.push_back(d.psi_referent - er);
    rd.push_back(d.difference - ed);
  }
  if (pa.empty()) throw ConfigError("no Monte Carlo draws satisfy the constraint");

  McSummaryBlock b;
  b.augmented = se_augment;
  b.constrained = constraint.has_value();
  b.subset_size = pa.size();
  b.psi_arm = summarize(std::move(pa));
  b.psi_referent = summarize(std::move(pr));
  b.difference = summarize(std::move(rd));
  return b;
}

std::vector<McSummaryBlock> summarize_all(const McTable& table, const std::optional<DeltaConstraint>& constraint,
                                          std::uint64_t seed) {
  std::vector<McSummaryBlock> blocks{summarize_mc(table, false, std::nullopt, seed),
                                     summarize_mc(table, true, std::nullopt, seed)};
  if (constraint) {
    blocks.push_back(summarize_mc(table, false, constraint, seed));
    blocks.push_back(summarize_mc(table, true, constraint, seed));
  }
  return blocks;
}

AdherenceSummary predicted_adherence_under_delta(const NuisanceSet& nu, const std::string& arm, double delta) {
  const std::size_t a = nu.arm_index(arm);
  if (!(delta >= 0.0)) throw DeltaError("delta must be non-negative");
  std::vector<double> m;
  m.reserve(nu.n0);
  for (std::size_t i = 0; i < nu.size(); ++i)
    if (!nu.obs.trial[i]) m.push_back(nu.m[a][i]);
  if (m.empty()) throw DataError("no target records");
  std::sort(m.begin(), m.end());
  // Summaries of m scaled afterwards, so the result is exactly linear in delta.
  return AdherenceSummary{delta * mean(m), delta * quantile_type7(m, 0.5), delta * quantile_type7(m, 0.25),
                          delta * quantile_type7(m, 0.75)};
}

}  // namespace transport
