#include "transport/cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <set>

#include "transport/analysis.hpp"
#include "transport/cli/report.hpp"
#include "transport/errors.hpp"
#include "transport/parallel.hpp"

namespace transport::cli {

namespace {

using Rows = std::vector<std::vector<Cell>>;

class Output {
 public:
  explicit Output(const std::filesystem::path& path) {
    if (path.empty()) return;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw ConfigError("cannot write output file '" + path.string() + "'");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

StudyDataset load(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("this command needs a dataset block");
  return load_dataset(cfg.dataset, cfg.schema, cfg.delimiter);
}

// Fills in arms and referent from the data and checks every arm named in the config.
void resolve_arms(RunConfig& cfg, const StudyDataset& ds) {
  const auto& present = ds.arms();
  auto known = [&](const std::string& a) { return std::find(present.begin(), present.end(), a) != present.end(); };
  if (cfg.arms.empty()) cfg.arms = present;
  for (const auto& a : cfg.arms)
    if (!known(a)) throw ConfigError("arm '" + a + "' does not occur in the data");
  if (cfg.referent.empty()) cfg.referent = cfg.arms.front();
  if (std::find(cfg.arms.begin(), cfg.arms.end(), cfg.referent) == cfg.arms.end())
    throw ConfigError("referent arm '" + cfg.referent + "' is not among the arms");
  if (cfg.arms.size() < 2) throw ConfigError("a comparison needs at least two arms");
  auto check = [&](const std::string& a, const char* block) {
    if (std::find(cfg.arms.begin(), cfg.arms.end(), a) == cfg.arms.end())
      throw ConfigError(std::string(block) + " names arm '" + a + "' which is not among the arms");
  };
  for (const auto& [a, _] : cfg.constants) check(a, "delta");
  for (const auto& [a, _] : cfg.ranges) check(a, "delta");
  for (const auto& [a, _] : cfg.distributions) check(a, "delta");
  if (cfg.constraint) {
    check(cfg.constraint->lhs, "delta constraint");
    check(cfg.constraint->rhs, "delta constraint");
  }
}

std::vector<std::string> comparison_arms(const RunConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& a : cfg.arms)
    if (a != cfg.referent) out.push_back(a);
  return out;
}

AnalysisOptions analysis_options(const RunConfig& cfg, unsigned threads) {
  AnalysisOptions o;
  o.estimator = cfg.estimator;
  o.variance = cfg.variance;
  o.bootstrap_replicates = cfg.bootstrap_replicates;
  o.seed = cfg.seed;
  o.threads = threads;
  o.nuisance.truncation = cfg.truncation;
  o.crossfit_folds = cfg.crossfit_folds;
  o.level = cfg.level;
  return o;
}

DeltaRule rule_for(const RunConfig& cfg, const std::string& arm) {
  auto it = cfg.constants.find(arm);
  return it == cfg.constants.end() ? DeltaRule::constant(1.0) : it->second;
}

std::string rule_text(const DeltaRule& r) {
  if (r.is_constant()) return format_number(r.value);
  std::string s = r.covariate + "{";
  bool first = true;
  for (const auto& [level, v] : r.by_level) {
    s += (first ? "" : ";") + level + ":" + format_number(v);
    first = false;
  }
  return s + "}";
}

const std::vector<std::string> kEstimateColumns{"comparison", "estimand", "quantity", "arm",   "delta_arm",
                                                "delta_referent", "point", "se",     "lower", "upper",
                                                "variance_method", "out_of_range"};

void add_comparison(Rows& rows, const std::string& arm, const std::string& referent, const Comparison& c,
                    const std::string& delta_arm, const std::string& delta_ref) {
  const std::string label = arm + " vs " + referent;
  auto add = [&](const InferenceRow& r, const char* quantity, const std::string& who) {
    rows.push_back({label, std::string(to_string(r.estimate.family)), std::string(quantity), who, delta_arm, delta_ref,
                    r.estimate.point, r.variance.se, r.ci.lower, r.ci.upper, std::string(to_string(r.variance.method)),
                    r.estimate.out_of_range()});
  };
  add(c.arm, "risk", arm);
  add(c.referent, "risk", referent);
  add(c.difference, "risk_difference", arm + "-" + referent);
}

void write_nuisance_tables(ReportWriter& w, const StudyDataset& ds, const NuisanceSet& nu) {
  w.table("nuisance_summary",
          {"n1", "n0", "k_hat", "truncation_lower", "truncation_upper", "truncation_events", "crossfit_folds"},
          {{static_cast<std::int64_t>(nu.n1), static_cast<std::int64_t>(nu.n0), nu.k_hat, nu.truncation.lower,
            nu.truncation.upper, static_cast<std::int64_t>(nu.truncation_events), static_cast<std::int64_t>(nu.folds)}});

  Rows rows;
  auto add = [&](const std::string& model, const std::string& arm, const LogisticModel& m,
                 const CovariateSelection& sel) {
    const auto names = design_column_names(ds.schema(), sel);
    for (Eigen::Index j = 0; j < m.coefficients.size(); ++j)
      rows.push_back({model, arm, names[static_cast<std::size_t>(j)], m.coefficients(j), m.converged,
                      static_cast<std::int64_t>(m.iterations)});
  };
  if (!nu.cross_fit()) {
    for (std::size_t a = 0; a < nu.arm_models.size(); ++a) {
      add("outcome_adherent", nu.arms[a], nu.arm_models[a].outcome_adherent, nu.covariates.outcome);
      add("outcome_nonadherent", nu.arms[a], nu.arm_models[a].outcome_nonadherent, nu.covariates.outcome);
      add("adherence", nu.arms[a], nu.arm_models[a].adherence, nu.covariates.adherence);
    }
    for (std::size_t t = 0; t < nu.treatment_models.size(); ++t) {
      const std::string& modeled = nu.treatment_models.size() == 1 ? nu.arms.back() : nu.arms[t];
      add("treatment", modeled, nu.treatment_models[t], nu.covariates.treatment);
    }
    add("selection", "", nu.selection_model, nu.covariates.selection);
  }
  w.table("nuisance_models", {"model", "arm", "term", "coefficient", "converged", "iterations"}, rows);

  Rows warn;
  for (const auto& m : nu.warnings) warn.push_back({m});
  if (!warn.empty()) w.table("warnings", {"message"}, warn);
}

void adherence_rows(Rows& rows, const NuisanceSet& nu, const std::string& arm, double delta) {
  try {
    const auto s = predicted_adherence_under_delta(nu, arm, delta);
    rows.push_back({arm, delta, s.mean, s.median, s.q1, s.q3});
  } catch (const DeltaError&) {
  }
}

const std::vector<std::string> kAdherenceColumns{"arm", "delta", "mean", "median", "q1", "q3"};

}  // namespace

void cmd_estimate(RunConfig cfg, unsigned threads) {
  if (cfg.delta_mode != DeltaMode::constant && cfg.delta_mode != DeltaMode::grid)
    throw ConfigError("estimate needs delta mode 'constant' or 'grid' (use 'bounds' for ranges, 'mc' for trapezoids)");
  const StudyDataset ds = load(cfg);
  resolve_arms(cfg, ds);
  if (cfg.delta_mode == DeltaMode::grid && cfg.arms.size() != 2)
    throw ConfigError("grid mode compares exactly two arms");
  const AnalysisOptions opts = analysis_options(cfg, threads);
  const NuisanceSet nu = fit_nuisances(ds, opts);

  Output out(cfg.output);
  ReportWriter w(out.stream(), cfg.format);
  w.header("estimate", cfg.resolved(), cfg.seed);

  Rows rows, adherence;
  std::set<std::pair<std::string, double>> adherence_seen;
  auto note_adherence = [&](const std::string& arm, double d) {
    if (adherence_seen.insert({arm, d}).second) adherence_rows(adherence, nu, arm, d);
  };
  for (const auto& arm : comparison_arms(cfg)) {
    if (cfg.delta_mode == DeltaMode::constant) {
      const DeltaRule ra = rule_for(cfg, arm), rr = rule_for(cfg, cfg.referent);
      add_comparison(rows, arm, cfg.referent, compare_arms(ds, nu, arm, cfg.referent, ra, rr, opts), rule_text(ra),
                     rule_text(rr));
      if (ra.is_constant()) note_adherence(arm, ra.value);
      if (rr.is_constant()) note_adherence(cfg.referent, rr.value);
    } else {
      const auto grid = run_static_grid(ds, nu, arm, cfg.referent, cfg.grid, opts, cfg.grid_reference);
      for (const auto& g : grid.rows) {
        add_comparison(rows, arm, cfg.referent, g.comparison, format_number(g.deltas.arm_delta),
                       format_number(g.deltas.referent_delta));
        note_adherence(arm, g.deltas.arm_delta);
        note_adherence(cfg.referent, g.deltas.referent_delta);
      }
    }
    // Previously published reference estimators, always with influence-curve intervals.
    add_comparison(rows, arm, cfg.referent, compare_setting1(nu, arm, cfg.referent, cfg.level), "1", "1");
    add_comparison(rows, arm, cfg.referent, compare_trial(nu, arm, cfg.referent, cfg.level), "none", "none");
  }
  w.table("estimates", kEstimateColumns, rows);
  w.table("predicted_adherence", kAdherenceColumns, adherence);
  write_nuisance_tables(w, ds, nu);
}

void cmd_mc(RunConfig cfg, unsigned threads) {
  if (cfg.delta_mode != DeltaMode::trapezoid) throw ConfigError("mc needs delta mode 'trapezoid'");
  if (cfg.estimator != EstimatorKind::onestep)
    throw ConfigError("mc uses the one-step estimator with influence-curve errors; set estimator to onestep");
  const StudyDataset ds = load(cfg);
  resolve_arms(cfg, ds);
  const AnalysisOptions opts = analysis_options(cfg, threads);
  const NuisanceSet nu = fit_nuisances(ds, opts);

  DeltaScenario scenario;
  scenario.arms = cfg.distributions;
  scenario.draws = cfg.draws;
  scenario.seed = cfg.seed;
  scenario.constraint = cfg.constraint;

  Output out(cfg.output);
  ReportWriter w(out.stream(), cfg.format);
  w.header("mc", cfg.resolved(), cfg.seed);

  Rows info, summary, draws, adherence;
  std::set<std::string> adherence_seen;
  for (const auto& arm : comparison_arms(cfg)) {
    const std::string label = arm + " vs " + cfg.referent;
    const McTable table = run_mc(nu, scenario, arm, cfg.referent, threads);
    const auto blocks = summarize_all(table, scenario.constraint, scenario.seed);
    const std::size_t usable = table.draws.size() - table.flagged;

    std::size_t satisfied = usable;
    if (blocks.size() > 2) satisfied = blocks[2].subset_size;
    info.push_back({label, static_cast<std::int64_t>(table.draws.size()), static_cast<std::int64_t>(table.flagged),
                    cfg.constraint ? cfg.constraint->lhs + "<=" + cfg.constraint->rhs : std::string("none"),
                    static_cast<std::int64_t>(satisfied),
                    static_cast<double>(satisfied) / static_cast<double>(usable)});
    for (const auto& b : blocks) {
      auto add = [&](const char* quantity, const QuantitySummary& q) {
        summary.push_back({label, std::string(b.constrained ? "constrained" : "all"), b.augmented,
                           static_cast<std::int64_t>(b.subset_size), std::string(quantity), q.median, q.lower,
                           q.upper});
      };
      add("risk_arm", b.psi_arm);
      add("risk_referent", b.psi_referent);
      add("risk_difference", b.difference);
    }
    for (std::size_t k = 0; k < table.draws.size(); ++k) {
      const McDraw& d = table.draws[k];
      draws.push_back({label, static_cast<std::int64_t>(k + 1), d.delta_arm, d.delta_referent, d.psi_arm,
                       d.psi_referent, d.difference, d.se_arm, d.se_referent, d.se_difference, d.flagged});
    }
    for (const auto& a : {arm, cfg.referent})
      if (const auto* t = std::get_if<TrapezoidDist>(&cfg.distributions.at(a)))
        if (adherence_seen.insert(a).second) adherence_rows(adherence, nu, a, t->mean());
  }
  w.table("mc_info", {"comparison", "draws", "flagged", "constraint", "constraint_satisfied", "constraint_fraction"},
          info);
  w.table("mc_summary",
          {"comparison", "subset", "random_error", "subset_size", "quantity", "median", "lower", "upper"}, summary);
  w.table("predicted_adherence", kAdherenceColumns, adherence);

  const std::vector<std::string> draw_columns{"comparison", "draw",     "delta_arm",   "delta_referent",
                                              "risk_arm",   "risk_referent", "risk_difference", "se_arm",
                                              "se_referent", "se_difference", "flagged"};
  if (cfg.output.empty()) {
    w.table("mc_draws", draw_columns, draws);
  } else {
    std::filesystem::path p = cfg.output;
    p += ".draws.csv";
    std::ofstream f(p);
    if (!f) throw ConfigError("cannot write draw table '" + p.string() + "'");
    write_csv(f, draw_columns, draws);
  }
  write_nuisance_tables(w, ds, nu);
}

void cmd_bounds(RunConfig cfg, unsigned threads) {
  if (cfg.delta_mode != DeltaMode::range) throw ConfigError("bounds needs delta mode 'range'");
  const StudyDataset ds = load(cfg);
  resolve_arms(cfg, ds);
  const NuisanceSet nu = fit_nuisances(ds, analysis_options(cfg, threads));

  auto range_for = [&](const std::string& arm) {
    auto it = cfg.ranges.find(arm);
    if (it == cfg.ranges.end()) throw ConfigError("range mode has no range for arm '" + arm + "'");
    return it->second;
  };

  Output out(cfg.output);
  ReportWriter w(out.stream(), cfg.format);
  w.header("bounds", cfg.resolved(), cfg.seed);

  Rows bounds, vertices;
  for (const auto& arm : comparison_arms(cfg)) {
    const std::string label = arm + " vs " + cfg.referent;
    const auto b = run_bounds(nu, arm, cfg.referent, range_for(arm), range_for(cfg.referent), cfg.estimator);
    bounds.push_back({label, std::string("risk_arm"), b.arm.lower, b.arm.upper});
    bounds.push_back({label, std::string("risk_referent"), b.referent.lower, b.referent.upper});
    bounds.push_back({label, std::string("risk_difference"), b.difference.lower, b.difference.upper});
    for (const auto& v : b.vertices)
      vertices.push_back({label, v.arm_delta, v.referent_delta, v.psi_arm, v.psi_referent, v.difference});
  }
  w.table("bounds", {"comparison", "quantity", "lower", "upper"}, bounds);
  w.table("bounds_vertices",
          {"comparison", "delta_arm", "delta_referent", "risk_arm", "risk_referent", "risk_difference"}, vertices);
  write_nuisance_tables(w, ds, nu);
}

void cmd_simulate(RunConfig cfg, unsigned threads) {
  if (!cfg.simulate) throw ConfigError("simulate needs a simulate block");
  SimulateConfig& sim = *cfg.simulate;
  sim.experiment.seed = cfg.seed;
  sim.experiment.threads = threads;

  if (!sim.emit_dataset.empty()) {
    DgpSpec spec = sim.dgp;
    spec.seed = cfg.seed;
    const StudyDataset ds = generate_data(spec);
    const std::filesystem::path p(sim.emit_dataset);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p);
    if (!f) throw ConfigError("cannot write dataset '" + p.string() + "'");
    write_dataset(ds, f);
  }

  const auto rows = run_dr_experiment(sim.dgp, sim.misspec, sim.experiment);

  Output out(cfg.output);
  ReportWriter w(out.stream(), cfg.format);
  w.header("simulate", cfg.resolved(), cfg.seed);

  Rows oracle;
  for (const auto& arm : sim.dgp.arms)
    for (double d : sim.experiment.deltas) {
      try {
        oracle.push_back({arm, d, oracle_psi(sim.dgp, arm, d)});
      } catch (const DeltaError&) {
        oracle.push_back({arm, d, std::numeric_limits<double>::quiet_NaN()});
      }
    }
  w.table("oracle", {"arm", "delta", "oracle"}, oracle);

  Rows table;
  for (const auto& r : rows)
    table.push_back({static_cast<std::int64_t>(r.n), sim.experiment.arm, r.delta, r.estimator, sim.misspec.describe(),
                     r.oracle, r.mean_estimate, r.bias, r.mc_se, r.rmse, r.coverage, static_cast<std::int64_t>(r.reps),
                     static_cast<std::int64_t>(r.failures)});
  w.table("simulation",
          {"n", "arm", "delta", "estimator", "correct", "oracle", "mean_estimate", "bias", "mc_se", "rmse", "coverage",
           "reps", "failures"},
          table);
}

int run_command(std::string_view command, const std::filesystem::path& config_path, const Overrides& overrides,
                std::ostream& err) {
  try {
    RunConfig cfg = load_config(config_path);
    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.output) cfg.output = *overrides.output;
    const unsigned threads = overrides.threads ? std::max(1u, *overrides.threads) : default_threads();
    if (command == "estimate")
      cmd_estimate(std::move(cfg), threads);
    else if (command == "mc")
      cmd_mc(std::move(cfg), threads);
    else if (command == "bounds")
      cmd_bounds(std::move(cfg), threads);
    else if (command == "simulate")
      cmd_simulate(std::move(cfg), threads);
    else
      throw ConfigError("unknown command '" + std::string(command) + "'");
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FitError& e) {
    err << "fit error: " << e.what() << '\n';
    return kExitFit;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace transport::cli
