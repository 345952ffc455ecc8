#include "transport/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <limits>
#include <sstream>

#include "transport/errors.hpp"
#include "transport/estimators.hpp"
#include "transport/inference.hpp"
#include "transport/parallel.hpp"
#include "transport/random.hpp"
#include "transport/stats.hpp"

namespace transport {

namespace {

constexpr std::uint64_t kGenerateStream = 0x47454e44;    // "GEND"
constexpr std::uint64_t kExperimentStream = 0x45585052;  // "EXPR"

bool open_probability(double p) { return p > 0.0 && p < 1.0; }

void check_distribution(const std::vector<double>& p, std::size_t cells, const std::string& what) {
  if (p.size() != cells) throw ConfigError(what + " needs one probability per cell");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ConfigError(what + " has a negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(what + " does not sum to 1");
}

void check_table(const std::vector<std::vector<double>>& t, std::size_t arms, std::size_t cells,
                 const std::string& what) {
  if (t.size() != arms) throw ConfigError(what + " needs one row per arm");
  for (const auto& row : t) {
    if (row.size() != cells) throw ConfigError(what + " needs one probability per cell");
    for (double v : row)
      if (!open_probability(v)) throw ConfigError(what + " probabilities must lie in (0, 1)");
  }
}

std::size_t draw_categorical(std::mt19937_64& rng, const std::vector<double>& p) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return k;
  }
  return p.size() - 1;
}

}  // namespace

void DgpSpec::validate() const {
  const std::size_t c = cells.size();
  if (c == 0) throw ConfigError("DGP needs at least one covariate cell");
  for (std::size_t j = 0; j < schema.size(); ++j)
    if (schema[j].kind == CovariateKind::continuous)
      throw ConfigError("DGP covariate '" + schema[j].name + "' must be binary or categorical");
  for (const auto& cell : cells) {
    if (cell.size() != schema.size()) throw ConfigError("DGP cell has the wrong number of covariate values");
    for (std::size_t j = 0; j < cell.size(); ++j)
      if (!schema.valid_value(j, cell[j])) throw ConfigError("DGP cell value invalid for covariate '" + schema[j].name + "'");
  }
  check_distribution(p_trial, c, "p_trial");
  check_distribution(p_target, c, "p_target");
  if (arms.empty()) throw ConfigError("DGP needs at least one arm");
  check_table(assign, arms.size(), c, "assign");
  for (std::size_t k = 0; k < c; ++k) {
    double sum = 0.0;
    for (const auto& row : assign) sum += row[k];
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("assignment probabilities must sum to 1 over arms in every cell");
  }
  check_table(adherence, arms.size(), c, "adherence");
  check_table(outcome_adherent, arms.size(), c, "outcome_adherent");
  check_table(outcome_nonadherent, arms.size(), c, "outcome_nonadherent");
}

std::size_t DgpSpec::arm_index(const std::string& arm) const {
  auto it = std::find(arms.begin(), arms.end(), arm);
  if (it == arms.end()) throw ConfigError("arm '" + arm + "' is not part of the DGP");
  return static_cast<std::size_t>(it - arms.begin());
}

DgpSpec DgpSpec::toy(std::size_t n1, std::size_t n0, std::uint64_t seed) {
  DgpSpec s;
  s.schema = CovariateSchema({Covariate{"w", CovariateKind::binary, {}}});
  s.cells = {{0.0}, {1.0}};
  s.p_trial = {0.6, 0.4};
  s.p_target = {0.5, 0.5};
  s.arms = {"0", "1"};
  s.assign = {{0.5, 0.5}, {0.5, 0.5}};
  s.adherence = {{0.95, 0.9}, {0.8, 0.6}};
  s.outcome_adherent = {{0.2, 0.4}, {0.3, 0.5}};
  s.outcome_nonadherent = {{0.6, 0.8}, {0.7, 0.9}};
  s.n1 = n1;
  s.n0 = n0;
  s.seed = seed;
  return s;
}

StudyDataset generate_data(const DgpSpec& spec) {
  spec.validate();
  auto rng = substream(spec.seed, kGenerateStream, 0);
  std::vector<StudyRecord> records;
  records.reserve(spec.n1 + spec.n0);
  std::vector<double> assign_cell(spec.arms.size());
  for (std::size_t i = 0; i < spec.n1; ++i) {
    const std::size_t c = draw_categorical(rng, spec.p_trial);
    for (std::size_t a = 0; a < spec.arms.size(); ++a) assign_cell[a] = spec.assign[a][c];
    const std::size_t a = draw_categorical(rng, assign_cell);
    const bool z = bernoulli(rng, spec.adherence[a][c]);
    const double q = z ? spec.outcome_adherent[a][c] : spec.outcome_nonadherent[a][c];
    const bool y = bernoulli(rng, q);
    records.push_back(StudyRecord{true, spec.cells[c], spec.arms[a], z ? 1 : 0, y ? 1.0 : 0.0});
  }
  for (std::size_t i = 0; i < spec.n0; ++i) {
    const std::size_t c = draw_categorical(rng, spec.p_target);
    records.push_back(StudyRecord{false, spec.cells[c], std::nullopt, std::nullopt, std::nullopt});
  }
  return StudyDataset(spec.schema, std::move(records));
}

double oracle_psi(const DgpSpec& spec, const std::string& arm, double delta) {
  const std::size_t a = spec.arm_index(arm);
  if (!(delta >= 0.0)) throw DeltaError("delta must be non-negative");
  double psi = 0.0;
  for (std::size_t c = 0; c < spec.cell_count(); ++c) {
    const double md = spec.adherence[a][c] * delta;
    if (spec.p_target[c] > 0.0 && md > 1.0) throw DeltaError("m * delta exceeds 1 in a target cell");
    psi += spec.p_target[c] * (spec.outcome_adherent[a][c] * md + spec.outcome_nonadherent[a][c] * (1.0 - md));
  }
  return psi;
}

// ---------------------------------------------------------------------------

MisspecConfig MisspecConfig::parse(const std::string& correct) {
  MisspecConfig c{false, false, false, false};
  if (correct == "all") return MisspecConfig{};
  if (correct == "none") return c;
  std::stringstream ss(correct);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char ch) { return std::isspace(ch); }), item.end());
    if (item == "Q")
      c.outcome = true;
    else if (item == "m")
      c.adherence = true;
    else if (item == "g")
      c.treatment = true;
    else if (item == "h")
      c.selection = true;
    else
      throw ConfigError("unknown nuisance '" + item + "' in misspecification config (use Q, m, g, h)");
  }
  return c;
}

std::string MisspecConfig::describe() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (on) s += (s.empty() ? "" : ",") + std::string(name);
  };
  add(outcome, "Q");
  add(adherence, "m");
  add(treatment, "g");
  add(selection, "h");
  return s.empty() ? "none" : s;
}

ModelCovariates MisspecConfig::model_covariates(const CovariateSchema& schema) const {
  std::vector<std::size_t> reduced;
  for (std::size_t j = 1; j < schema.size(); ++j) reduced.push_back(j);
  auto pick = [&](bool correct) -> CovariateSelection {
    if (correct) return std::nullopt;
    return reduced;
  };
  return ModelCovariates{pick(outcome), pick(adherence), pick(treatment), pick(selection)};
}

std::vector<ExperimentRow> run_dr_experiment(const DgpSpec& spec, const MisspecConfig& config,
                                             const ExperimentOptions& options) {
  spec.validate();
  if (options.reps == 0) throw ConfigError("experiment needs at least one replicate");
  if (options.sizes.empty()) throw ConfigError("experiment needs at least one sample size");
  if (options.deltas.empty()) throw ConfigError("experiment needs at least one delta");
  if (spec.n1 + spec.n0 == 0) throw ConfigError("DGP needs n1 + n0 > 0 to fix the sample ratio");

  std::vector<double> oracle;
  for (double d : options.deltas) oracle.push_back(oracle_psi(spec, options.arm, d));

  NuisanceOptions nopts;
  nopts.covariates = config.model_covariates(spec.schema);
  const double z = normal_quantile(0.5 + options.level / 2.0);
  const std::size_t nd = options.deltas.size();
  const double trial_share = static_cast<double>(spec.n1) / static_cast<double>(spec.n1 + spec.n0);

  std::vector<ExperimentRow> rows;
  for (std::size_t si = 0; si < options.sizes.size(); ++si) {
    const std::size_t n = options.sizes[si];
    DgpSpec rep_spec = spec;
    rep_spec.n1 = static_cast<std::size_t>(std::llround(trial_share * static_cast<double>(n)));
    rep_spec.n0 = n - rep_spec.n1;

    // [rep][delta]: one-step estimate, one-step covered, g-computation estimate
    std::vector<std::vector<double>> os(options.reps, std::vector<double>(nd)), gc = os;
    std::vector<std::vector<std::uint8_t>> covered(options.reps, std::vector<std::uint8_t>(nd));
    std::vector<std::uint8_t> failed(options.reps, 0);

    parallel_for(options.reps, options.threads, [&](std::size_t r) {
      DgpSpec local = rep_spec;
      local.seed = substream(options.seed, kExperimentStream, si * 1000003ULL + r)();
      try {
        const StudyDataset ds = generate_data(local);
        const NuisanceSet nu = fit_nuisance_set(ds, nopts);
        for (std::size_t k = 0; k < nd; ++k) {
          const DeltaValue delta = DeltaValue::constant(options.deltas[k]);
          const auto e = onestep_psi(nu, options.arm, delta);
          const double se = eic_variance(e.influence).se;
          os[r][k] = e.point;
          covered[r][k] = std::abs(e.point - oracle[k]) <= z * se;
          if (options.include_gcomp) gc[r][k] = gcomp_psi(nu, options.arm, delta).point;
        }
      } catch (const FitError&) {
        failed[r] = 1;
      } catch (const DataError&) {
        failed[r] = 1;
      }
    });

    std::size_t failures = 0;
    for (auto f : failed) failures += f;
    if (static_cast<double>(failures) > 0.02 * static_cast<double>(options.reps))
      throw FitError(std::to_string(failures) + " of " + std::to_string(options.reps) +
                     " simulation replicates failed at n=" + std::to_string(n) + " (more than 2%)");

    auto summarize = [&](const std::vector<std::vector<double>>& est, std::size_t k, const std::string& name,
                         bool with_coverage) {
      std::vector<double> v;
      double sq = 0.0, cov = 0.0;
      for (std::size_t r = 0; r < options.reps; ++r) {
        if (failed[r]) continue;
        v.push_back(est[r][k]);
        sq += (est[r][k] - oracle[k]) * (est[r][k] - oracle[k]);
        cov += covered[r][k];
      }
      ExperimentRow row;
      row.n = n;
      row.delta = options.deltas[k];
      row.estimator = name;
      row.oracle = oracle[k];
      row.reps = v.size();
      row.failures = failures;
      row.mean_estimate = mean(v);
      row.bias = row.mean_estimate - oracle[k];
      row.mc_se = v.size() > 1 ? std::sqrt(sample_variance(v) / static_cast<double>(v.size())) : 0.0;
      row.rmse = std::sqrt(sq / static_cast<double>(v.size()));
      row.coverage = with_coverage ? cov / static_cast<double>(v.size()) : std::numeric_limits<double>::quiet_NaN();
      return row;
    };
    for (std::size_t k = 0; k < nd; ++k) {
      rows.push_back(summarize(os, k, "onestep", true));
      if (options.include_gcomp) rows.push_back(summarize(gc, k, "gcomp", false));
    }
  }
  return rows;
}

}  // namespace transport
