#include "transport/cli/config.hpp"

#include <fstream>
#include <set>

#include "transport/errors.hpp"

namespace transport::cli {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

double number(const json& v, const std::string& what) {
  if (!v.is_number()) throw ConfigError(what + " must be a number");
  return v.get<double>();
}

std::size_t count(const json& v, const std::string& what) {
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(what + " must be a non-negative integer");
  return v.get<std::size_t>();
}

std::string text(const json& v, const std::string& what) {
  if (!v.is_string()) throw ConfigError(what + " must be a string");
  return v.get<std::string>();
}

std::vector<double> numbers(const json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError(what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(number(e, what));
  return out;
}

std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

CovariateSchema parse_schema(const json& v) {
  if (!v.is_array()) throw ConfigError("schema must be an array of covariates");
  std::vector<Covariate> covs;
  for (const auto& c : v) {
    check_keys(c, "schema entry", {"name", "kind", "levels"});
    if (!c.contains("name")) throw ConfigError("schema entry lacks a name");
    Covariate cov;
    cov.name = text(c["name"], "covariate name");
    cov.kind = parse_covariate_kind(c.contains("kind") ? text(c["kind"], "covariate kind") : "continuous");
    if (c.contains("levels")) {
      if (cov.kind != CovariateKind::categorical) throw ConfigError("levels are only allowed for categorical covariates");
      for (const auto& l : c["levels"]) cov.levels.push_back(text(l, "covariate level"));
    }
    covs.push_back(std::move(cov));
  }
  return CovariateSchema(std::move(covs));
}

json schema_json(const CovariateSchema& schema) {
  json out = json::array();
  for (const auto& c : schema.covariates()) {
    json e{{"name", c.name}, {"kind", std::string(to_string(c.kind))}};
    if (c.kind == CovariateKind::categorical) e["levels"] = c.levels;
    out.push_back(e);
  }
  return out;
}

DeltaRule parse_rule(const json& v, const std::string& arm) {
  if (v.is_number()) return DeltaRule::constant(v.get<double>());
  check_keys(v, "delta for arm '" + arm + "'", {"covariate", "levels"});
  DeltaRule r;
  r.covariate = text(v.value("covariate", json()), "delta covariate");
  if (!v.contains("levels") || !v["levels"].is_object()) throw ConfigError("stratified delta needs a levels object");
  for (const auto& [level, value] : v["levels"].items()) r.by_level[level] = number(value, "delta value");
  return r;
}

json rule_json(const DeltaRule& r) {
  if (r.is_constant()) return r.value;
  return json{{"covariate", r.covariate}, {"levels", r.by_level}};
}

DeltaRange parse_range(const json& v, const std::string& what) {
  const auto xs = numbers(v, what);
  if (xs.size() != 2) throw ConfigError(what + " must be [lower, upper]");
  if (!(xs[0] <= xs[1])) throw ConfigError(what + " needs lower <= upper");
  if (xs[0] < 0.0) throw DeltaError(what + " has a negative lower end");
  return DeltaRange{xs[0], xs[1]};
}

ArmDeltaSpec parse_distribution(const json& v, const std::string& what) {
  if (v.is_number()) return v.get<double>();
  const auto xs = numbers(v, what);
  if (xs.size() == 1) return xs[0];
  if (xs.size() == 2) return parse_range(v, what);
  if (xs.size() == 4) {
    if (xs[0] < 0.0) throw DeltaError(what + " has a negative lower end");
    return TrapezoidDist(xs[0], xs[1], xs[2], xs[3]);
  }
  throw ConfigError(what + " must be a constant, [lower, upper] or [min, mode_low, mode_high, max]");
}

json distribution_json(const ArmDeltaSpec& s) {
  if (const auto* c = std::get_if<double>(&s)) return *c;
  if (const auto* r = std::get_if<DeltaRange>(&s)) return json::array({r->lower, r->upper});
  const auto& t = std::get<TrapezoidDist>(s);
  return json::array({t.a(), t.b(), t.c(), t.d()});
}

std::vector<std::vector<double>> matrix(const json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError(what + " must be an array of arrays");
  std::vector<std::vector<double>> out;
  for (const auto& row : v) out.push_back(numbers(row, what));
  return out;
}

DgpSpec parse_dgp(const json& v) {
  check_keys(v, "simulate.dgp", {"covariates", "cells", "p_trial", "p_target", "arms", "assign", "adherence",
                                 "outcome_adherent", "outcome_nonadherent"});
  DgpSpec s;
  for (const char* key : {"covariates", "cells", "p_trial", "p_target", "arms", "assign", "adherence",
                          "outcome_adherent", "outcome_nonadherent"})
    if (!v.contains(key)) throw ConfigError(std::string("simulate.dgp lacks '") + key + "'");
  s.schema = parse_schema(v["covariates"]);
  for (const auto& cell : v["cells"]) {
    if (!cell.is_array() || cell.size() != s.schema.size())
      throw ConfigError("simulate.dgp cells need one value per covariate");
    std::vector<double> w;
    for (std::size_t j = 0; j < cell.size(); ++j)
      w.push_back(cell[j].is_string() ? s.schema.parse_value(j, cell[j].get<std::string>())
                                      : number(cell[j], "cell value"));
    s.cells.push_back(std::move(w));
  }
  s.p_trial = numbers(v["p_trial"], "p_trial");
  s.p_target = numbers(v["p_target"], "p_target");
  for (const auto& a : v["arms"]) s.arms.push_back(text(a, "arm label"));
  s.assign = matrix(v["assign"], "assign");
  s.adherence = matrix(v["adherence"], "adherence");
  s.outcome_adherent = matrix(v["outcome_adherent"], "outcome_adherent");
  s.outcome_nonadherent = matrix(v["outcome_nonadherent"], "outcome_nonadherent");
  return s;
}

json dgp_json(const DgpSpec& s) {
  json cells = json::array();
  for (const auto& c : s.cells) cells.push_back(c);
  return json{{"covariates", schema_json(s.schema)},
              {"cells", cells},
              {"p_trial", s.p_trial},
              {"p_target", s.p_target},
              {"arms", s.arms},
              {"assign", s.assign},
              {"adherence", s.adherence},
              {"outcome_adherent", s.outcome_adherent},
              {"outcome_nonadherent", s.outcome_nonadherent}};
}

SimulateConfig parse_simulate(const json& v, const std::filesystem::path& base) {
  check_keys(v, "simulate", {"dgp", "n1", "n0", "correct", "sizes", "reps", "deltas", "arm", "gcomp", "level",
                             "emit_dataset"});
  SimulateConfig s;
  if (v.contains("dgp")) {
    if (v["dgp"].is_string()) {
      s.dgp_name = v["dgp"].get<std::string>();
      if (s.dgp_name != "toy") throw ConfigError("unknown DGP preset '" + s.dgp_name + "' (only 'toy' is built in)");
    } else {
      s.dgp_name = "custom";
      s.dgp = parse_dgp(v["dgp"]);
    }
  }
  s.dgp.n1 = v.contains("n1") ? count(v["n1"], "simulate.n1") : 1000;
  s.dgp.n0 = v.contains("n0") ? count(v["n0"], "simulate.n0") : 1000;
  s.dgp.validate();
  s.misspec = MisspecConfig::parse(v.contains("correct") ? text(v["correct"], "simulate.correct") : "all");
  if (v.contains("sizes")) {
    s.experiment.sizes.clear();
    for (const auto& n : v["sizes"]) s.experiment.sizes.push_back(count(n, "simulate.sizes"));
  } else {
    s.experiment.sizes = {s.dgp.n1 + s.dgp.n0};
  }
  if (v.contains("reps")) s.experiment.reps = count(v["reps"], "simulate.reps");
  if (s.experiment.reps == 0) throw ConfigError("simulate.reps must be at least 1");
  if (v.contains("deltas")) s.experiment.deltas = numbers(v["deltas"], "simulate.deltas");
  s.experiment.arm = v.contains("arm") ? text(v["arm"], "simulate.arm") : s.dgp.arms.back();
  s.dgp.arm_index(s.experiment.arm);
  if (v.contains("gcomp")) {
    if (!v["gcomp"].is_boolean()) throw ConfigError("simulate.gcomp must be true or false");
    s.experiment.include_gcomp = v["gcomp"].get<bool>();
  }
  if (v.contains("level")) s.experiment.level = number(v["level"], "simulate.level");
  if (v.contains("emit_dataset")) s.emit_dataset = resolve_path(text(v["emit_dataset"], "simulate.emit_dataset"), base).string();
  for (double d : s.experiment.deltas) oracle_psi(s.dgp, s.experiment.arm, d);
  return s;
}

void parse_delta(const json& v, RunConfig& cfg) {
  if (!v.contains("mode")) throw ConfigError("delta block needs a mode (constant, grid, range or trapezoid)");
  const std::string mode = text(v["mode"], "delta.mode");
  if (mode == "constant") {
    check_keys(v, "delta", {"mode", "arms"});
    cfg.delta_mode = DeltaMode::constant;
    if (v.contains("arms"))
      for (const auto& [arm, rule] : v["arms"].items()) cfg.constants[arm] = parse_rule(rule, arm);
  } else if (mode == "grid") {
    check_keys(v, "delta", {"mode", "points", "reference"});
    cfg.delta_mode = DeltaMode::grid;
    if (!v.contains("points") || !v["points"].is_array() || v["points"].empty())
      throw ConfigError("grid mode needs a non-empty points array of [arm delta, referent delta]");
    for (const auto& p : v["points"]) {
      const auto xy = numbers(p, "grid point");
      if (xy.size() != 2) throw ConfigError("grid points must be [arm delta, referent delta]");
      cfg.grid.push_back(GridPoint{xy[0], xy[1]});
    }
    if (v.contains("reference")) {
      if (!v["reference"].is_boolean()) throw ConfigError("delta.reference must be true or false");
      cfg.grid_reference = v["reference"].get<bool>();
    }
  } else if (mode == "range") {
    check_keys(v, "delta", {"mode", "arms"});
    cfg.delta_mode = DeltaMode::range;
    if (!v.contains("arms")) throw ConfigError("range mode needs per-arm [lower, upper]");
    for (const auto& [arm, r] : v["arms"].items()) cfg.ranges[arm] = parse_range(r, "delta range for arm '" + arm + "'");
  } else if (mode == "trapezoid") {
    check_keys(v, "delta", {"mode", "arms", "draws", "constraint"});
    cfg.delta_mode = DeltaMode::trapezoid;
    if (!v.contains("arms")) throw ConfigError("trapezoid mode needs per-arm distributions");
    for (const auto& [arm, d] : v["arms"].items())
      cfg.distributions.emplace(arm, parse_distribution(d, "delta distribution for arm '" + arm + "'"));
    if (v.contains("draws")) cfg.draws = count(v["draws"], "delta.draws");
    if (cfg.draws < 100) throw ConfigError("delta.draws must be at least 100 (got " + std::to_string(cfg.draws) + ")");
    if (v.contains("constraint")) {
      const auto& c = v["constraint"];
      check_keys(c, "delta.constraint", {"lhs", "rhs"});
      cfg.constraint = DeltaConstraint{text(c.value("lhs", json()), "constraint lhs"), text(c.value("rhs", json()), "constraint rhs")};
    }
  } else {
    throw ConfigError("unknown delta mode '" + mode + "'");
  }
}

}  // namespace

std::string_view to_string(DeltaMode mode) {
  switch (mode) {
    case DeltaMode::constant:
      return "constant";
    case DeltaMode::grid:
      return "grid";
    case DeltaMode::range:
      return "range";
    case DeltaMode::trapezoid:
      return "trapezoid";
  }
  return "constant";
}

std::string_view to_string(OutputFormat format) { return format == OutputFormat::structured ? "structured" : "delimited"; }

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  try {
    check_keys(doc, "config", {"dataset", "schema", "arms", "referent", "estimator", "variance",
                               "bootstrap_replicates", "crossfit", "truncation", "level", "delta", "seed", "output",
                               "simulate"});
    RunConfig cfg;
    if (doc.contains("dataset")) {
      const auto& d = doc["dataset"];
      if (d.is_string()) {
        cfg.dataset = resolve_path(d.get<std::string>(), base_dir);
      } else {
        check_keys(d, "dataset", {"path", "delimiter"});
        cfg.dataset = resolve_path(text(d.value("path", json()), "dataset.path"), base_dir);
        if (d.contains("delimiter")) {
          const std::string delim = text(d["delimiter"], "dataset.delimiter");
          if (delim.size() != 1) throw ConfigError("dataset.delimiter must be a single character");
          cfg.delimiter = delim[0];
        }
      }
    }
    if (doc.contains("schema")) cfg.schema = parse_schema(doc["schema"]);
    if (!cfg.dataset.empty() && !doc.contains("schema")) throw ConfigError("a dataset needs a schema block");
    if (doc.contains("arms"))
      for (const auto& a : doc["arms"]) cfg.arms.push_back(text(a, "arm label"));
    if (doc.contains("referent")) cfg.referent = text(doc["referent"], "referent");
    if (!cfg.arms.empty() && !cfg.referent.empty() &&
        std::find(cfg.arms.begin(), cfg.arms.end(), cfg.referent) == cfg.arms.end())
      throw ConfigError("referent arm '" + cfg.referent + "' is not among the configured arms");
    if (doc.contains("estimator")) cfg.estimator = parse_estimator_kind(text(doc["estimator"], "estimator"));
    if (doc.contains("variance")) cfg.variance = parse_variance_method(text(doc["variance"], "variance"));
    if (doc.contains("bootstrap_replicates")) cfg.bootstrap_replicates = count(doc["bootstrap_replicates"], "bootstrap_replicates");
    if (doc.contains("crossfit")) {
      const auto& c = doc["crossfit"];
      check_keys(c, "crossfit", {"enabled", "folds"});
      const bool enabled = c.value("enabled", true);
      const std::size_t k = c.contains("folds") ? count(c["folds"], "crossfit.folds") : 5;
      cfg.crossfit_folds = enabled ? k : 0;
      if (enabled && k < 2) throw ConfigError("crossfit.folds must be at least 2");
    }
    if (doc.contains("truncation")) {
      const auto& t = doc["truncation"];
      check_keys(t, "truncation", {"lower", "upper"});
      if (t.contains("lower")) cfg.truncation.lower = number(t["lower"], "truncation.lower");
      if (t.contains("upper")) cfg.truncation.upper = number(t["upper"], "truncation.upper");
      if (!(cfg.truncation.lower > 0.0 && cfg.truncation.lower < cfg.truncation.upper && cfg.truncation.upper < 1.0))
        throw ConfigError("truncation bounds need 0 < lower < upper < 1");
    }
    if (doc.contains("level")) {
      cfg.level = number(doc["level"], "level");
      if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw ConfigError("level must lie in (0, 1)");
    }
    if (doc.contains("delta")) parse_delta(doc["delta"], cfg);
    if (doc.contains("seed")) {
      if (!doc["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
      cfg.seed = doc["seed"].get<std::uint64_t>();
    }
    if (doc.contains("output")) {
      const auto& o = doc["output"];
      check_keys(o, "output", {"path", "format"});
      if (o.contains("path")) cfg.output = resolve_path(text(o["path"], "output.path"), base_dir);
      if (o.contains("format")) {
        const std::string f = text(o["format"], "output.format");
        if (f == "structured")
          cfg.format = OutputFormat::structured;
        else if (f == "delimited")
          cfg.format = OutputFormat::delimited;
        else
          throw ConfigError("output.format must be 'structured' or 'delimited'");
      }
    }
    if (doc.contains("simulate")) cfg.simulate = parse_simulate(doc["simulate"], base_dir);
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

json RunConfig::resolved() const {
  json out;
  if (!dataset.empty()) out["dataset"] = {{"path", dataset.generic_string()}, {"delimiter", std::string(1, delimiter)}};
  out["schema"] = schema_json(schema);
  out["arms"] = arms;
  out["referent"] = referent;
  out["estimator"] = std::string(to_string(estimator));
  out["variance"] = std::string(to_string(variance));
  out["bootstrap_replicates"] = bootstrap_replicates;
  out["crossfit"] = {{"enabled", crossfit_folds > 0}, {"folds", crossfit_folds}};
  out["truncation"] = {{"lower", truncation.lower}, {"upper", truncation.upper}};
  out["level"] = level;

  json delta{{"mode", std::string(to_string(delta_mode))}};
  switch (delta_mode) {
    case DeltaMode::constant: {
      json arms_json = json::object();
      for (const auto& [arm, rule] : constants) arms_json[arm] = rule_json(rule);
      delta["arms"] = arms_json;
      break;
    }
    case DeltaMode::grid: {
      json pts = json::array();
      for (const auto& p : grid) pts.push_back({p.arm_delta, p.referent_delta});
      delta["points"] = pts;
      delta["reference"] = grid_reference;
      break;
    }
    case DeltaMode::range: {
      json arms_json = json::object();
      for (const auto& [arm, r] : ranges) arms_json[arm] = {r.lower, r.upper};
      delta["arms"] = arms_json;
      break;
    }
    case DeltaMode::trapezoid: {
      json arms_json = json::object();
      for (const auto& [arm, s] : distributions) arms_json[arm] = distribution_json(s);
      delta["arms"] = arms_json;
      delta["draws"] = draws;
      delta["constraint"] = constraint ? json{{"lhs", constraint->lhs}, {"rhs", constraint->rhs}} : json();
      break;
    }
  }
  out["delta"] = delta;
  out["seed"] = seed;
  out["output"] = {{"path", output.generic_string()}, {"format", std::string(to_string(format))}};
  if (simulate) {
    const auto& s = *simulate;
    out["simulate"] = {{"dgp", s.dgp_name == "toy" ? json("toy") : dgp_json(s.dgp)},
                       {"n1", s.dgp.n1},
                       {"n0", s.dgp.n0},
                       {"correct", s.misspec.describe()},
                       {"sizes", s.experiment.sizes},
                       {"reps", s.experiment.reps},
                       {"deltas", s.experiment.deltas},
                       {"arm", s.experiment.arm},
                       {"gcomp", s.experiment.include_gcomp},
                       {"level", s.experiment.level},
                       {"emit_dataset", s.emit_dataset}};
  }
  return out;
}

}  // namespace transport::cli
