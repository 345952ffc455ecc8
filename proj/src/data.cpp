#include "transport/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "transport/errors.hpp"

namespace transport {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delimiter) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::optional<double> parse_double(std::string_view text) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(CovariateKind kind) {
  switch (kind) {
    case CovariateKind::continuous:
      return "continuous";
    case CovariateKind::binary:
      return "binary";
    case CovariateKind::categorical:
      return "categorical";
  }
  return "continuous";
}

CovariateKind parse_covariate_kind(std::string_view text) {
  if (text == "continuous") return CovariateKind::continuous;
  if (text == "binary") return CovariateKind::binary;
  if (text == "categorical") return CovariateKind::categorical;
  throw ConfigError("unknown covariate kind '" + std::string(text) + "'");
}

CovariateSchema::CovariateSchema(std::vector<Covariate> covariates) : covariates_(std::move(covariates)) {
  std::set<std::string> seen;
  for (const auto& c : covariates_) {
    if (c.name.empty()) throw ConfigError("covariate names must be non-empty");
    if (c.name == "s" || c.name == "a" || c.name == "z" || c.name == "y")
      throw ConfigError("covariate name '" + c.name + "' collides with a reserved column");
    if (!seen.insert(c.name).second) throw ConfigError("duplicate covariate name '" + c.name + "'");
    if (c.kind == CovariateKind::categorical) {
      if (c.levels.size() < 2)
        throw ConfigError("categorical covariate '" + c.name + "' needs at least two levels");
      std::set<std::string> lv(c.levels.begin(), c.levels.end());
      if (lv.size() != c.levels.size())
        throw ConfigError("categorical covariate '" + c.name + "' repeats a level");
    } else if (!c.levels.empty()) {
      throw ConfigError("only categorical covariates may declare levels ('" + c.name + "')");
    }
  }
}

std::optional<std::size_t> CovariateSchema::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < covariates_.size(); ++j)
    if (covariates_[j].name == name) return j;
  return std::nullopt;
}

double CovariateSchema::parse_value(std::size_t j, std::string_view text) const {
  const Covariate& c = covariates_[j];
  if (text.empty()) throw DataError("missing value for covariate '" + c.name + "'");
  switch (c.kind) {
    case CovariateKind::continuous: {
      auto v = parse_double(text);
      if (!v) throw DataError("non-numeric value '" + std::string(text) + "' for covariate '" + c.name + "'");
      return *v;
    }
    case CovariateKind::binary: {
      auto v = parse_double(text);
      if (!v || (*v != 0.0 && *v != 1.0))
        throw DataError("value '" + std::string(text) + "' outside declared levels of binary covariate '" +
                        c.name + "'");
      return *v;
    }
    case CovariateKind::categorical: {
      auto it = std::find(c.levels.begin(), c.levels.end(), text);
      if (it == c.levels.end())
        throw DataError("value '" + std::string(text) + "' outside declared levels of covariate '" + c.name +
                        "'");
      return static_cast<double>(it - c.levels.begin());
    }
  }
  return 0.0;
}

std::string CovariateSchema::format_value(std::size_t j, double value) const {
  const Covariate& c = covariates_[j];
  switch (c.kind) {
    case CovariateKind::categorical:
      return c.levels.at(static_cast<std::size_t>(value));
    case CovariateKind::binary:
      return value != 0.0 ? "1" : "0";
    case CovariateKind::continuous:
      return format_double(value);
  }
  return format_double(value);
}

bool CovariateSchema::valid_value(std::size_t j, double value) const {
  const Covariate& c = covariates_[j];
  if (!std::isfinite(value)) return false;
  switch (c.kind) {
    case CovariateKind::continuous:
      return true;
    case CovariateKind::binary:
      return value == 0.0 || value == 1.0;
    case CovariateKind::categorical:
      return value >= 0.0 && value == std::floor(value) && value < static_cast<double>(c.levels.size());
  }
  return false;
}

std::size_t CovariateSchema::design_columns(std::size_t j) const {
  const Covariate& c = covariates_[j];
  return c.kind == CovariateKind::categorical ? c.levels.size() - 1 : 1;
}

StudyDataset::StudyDataset(CovariateSchema schema, std::vector<StudyRecord> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  std::set<std::string> arm_set;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const StudyRecord& r = records_[i];
    const std::string where = "record " + std::to_string(i + 1) + ": ";
    if (r.w.size() != schema_.size())
      throw DataError(where + "expected " + std::to_string(schema_.size()) + " covariate values, got " +
                      std::to_string(r.w.size()));
    for (std::size_t j = 0; j < schema_.size(); ++j)
      if (!schema_.valid_value(j, r.w[j]))
        throw DataError(where + "value outside declared levels of covariate '" + schema_[j].name + "'");
    if (r.trial) {
      if (!r.arm || r.arm->empty()) throw DataError(where + "trial record lacks arm");
      if (!r.z) throw DataError(where + "trial record lacks adherence indicator");
      if (!r.y) throw DataError(where + "trial record lacks outcome");
      if (*r.z != 0 && *r.z != 1) throw DataError(where + "adherence indicator must be 0 or 1");
      if (!(*r.y >= 0.0 && *r.y <= 1.0)) throw DataError(where + "outcome outside [0,1]");
      arm_set.insert(*r.arm);
      ++n1_;
    } else {
      if (r.arm || r.z || r.y) throw DataError(where + "target record carries trial-only field");
      ++n0_;
    }
  }
  if (n1_ == 0) throw DataError("dataset has no trial records (n1 = 0)");
  if (n0_ == 0) throw DataError("dataset has no target records (n0 = 0)");

  arms_.assign(arm_set.begin(), arm_set.end());
  arm_index_.assign(records_.size(), -1);
  std::vector<std::array<std::size_t, 2>> strata(arms_.size(), {0, 0});
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!records_[i].trial) continue;
    const auto idx = static_cast<int>(std::lower_bound(arms_.begin(), arms_.end(), *records_[i].arm) - arms_.begin());
    arm_index_[i] = idx;
    ++strata[static_cast<std::size_t>(idx)][static_cast<std::size_t>(*records_[i].z)];
  }
  for (std::size_t a = 0; a < arms_.size(); ++a) {
    if (strata[a][0] == 0 || strata[a][1] == 0)
      warnings_.push_back("arm '" + arms_[a] + "' lacks trial records with " +
                          (strata[a][1] == 0 ? "z=1" : "z=0") + "; adherence-stratified fits will fail");
  }
}

std::optional<std::size_t> StudyDataset::find_arm(std::string_view label) const {
  auto it = std::lower_bound(arms_.begin(), arms_.end(), label);
  if (it == arms_.end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - arms_.begin());
}

StudyDataset StudyDataset::select(std::span<const std::size_t> rows) const {
  std::vector<StudyRecord> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(records_.at(r));
  return StudyDataset(schema_, std::move(out));
}

StudyDataset load_dataset(const std::filesystem::path& path, const CovariateSchema& schema, char delimiter) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");
  return read_dataset(in, schema, delimiter);
}

StudyDataset read_dataset(std::istream& in, const CovariateSchema& schema, char delimiter) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("data file is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split(line, delimiter);
  std::map<std::string, std::size_t, std::less<>> column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!column.emplace(std::string(header[c]), c).second)
      throw DataError("header mismatch: duplicate column '" + std::string(header[c]) + "'");
  }
  std::vector<std::string> required;
  for (const auto& cov : schema.covariates()) required.push_back(cov.name);
  for (const char* fixed : {"s", "a", "z", "y"}) required.emplace_back(fixed);
  for (const auto& name : required)
    if (!column.count(name)) throw DataError("header mismatch: missing column '" + name + "'");
  if (column.size() != required.size()) {
    for (const auto& [name, _] : column)
      if (std::find(required.begin(), required.end(), name) == required.end())
        throw DataError("header mismatch: unexpected column '" + name + "'");
  }

  std::vector<std::size_t> cov_col;
  for (const auto& cov : schema.covariates()) cov_col.push_back(column.at(cov.name));
  const std::size_t s_col = column.at("s"), a_col = column.at("a"), z_col = column.at("z"),
                    y_col = column.at("y");

  std::vector<StudyRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto cells = split(line, delimiter);
    if (cells.size() != header.size())
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    try {
      StudyRecord r;
      const auto s = cells[s_col];
      if (s == "1")
        r.trial = true;
      else if (s != "0")
        throw DataError("sample indicator s must be 0 or 1");
      r.w.reserve(schema.size());
      for (std::size_t j = 0; j < schema.size(); ++j) r.w.push_back(schema.parse_value(j, cells[cov_col[j]]));

      const auto a = cells[a_col], z = cells[z_col], y = cells[y_col];
      if (r.trial) {
        if (a.empty()) throw DataError("trial record lacks arm");
        if (z.empty()) throw DataError("trial record lacks adherence indicator");
        if (y.empty()) throw DataError("trial record lacks outcome");
        r.arm = std::string(a);
        if (z == "1")
          r.z = 1;
        else if (z == "0")
          r.z = 0;
        else
          throw DataError("adherence indicator must be 0 or 1");
        auto yv = parse_double(y);
        if (!yv) throw DataError("non-numeric outcome '" + std::string(y) + "'");
        if (*yv < 0.0 || *yv > 1.0) throw DataError("outcome outside [0,1]");
        r.y = *yv;
      } else if (!a.empty() || !z.empty() || !y.empty()) {
        throw DataError("target record carries trial-only field");
      }
      records.push_back(std::move(r));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return StudyDataset(schema, std::move(records));
}

void write_dataset(const StudyDataset& ds, std::ostream& out, char delimiter) {
  const auto& schema = ds.schema();
  for (const auto& cov : schema.covariates()) out << cov.name << delimiter;
  out << 's' << delimiter << 'a' << delimiter << 'z' << delimiter << 'y' << '\n';
  for (const auto& r : ds.records()) {
    for (std::size_t j = 0; j < schema.size(); ++j) out << schema.format_value(j, r.w[j]) << delimiter;
    if (r.trial)
      out << '1' << delimiter << *r.arm << delimiter << *r.z << delimiter << format_double(*r.y) << '\n';
    else
      out << '0' << delimiter << delimiter << delimiter << '\n';
  }
}

namespace {

std::vector<std::size_t> resolve_selection(const CovariateSchema& schema, const CovariateSelection& covariates) {
  if (!covariates) {
    std::vector<std::size_t> all(schema.size());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
    return all;
  }
  std::vector<std::size_t> sel = *covariates;
  std::sort(sel.begin(), sel.end());
  sel.erase(std::unique(sel.begin(), sel.end()), sel.end());
  for (std::size_t j : sel)
    if (j >= schema.size()) throw ConfigError("covariate selection index out of range");
  return sel;
}

}  // namespace

std::size_t design_width(const CovariateSchema& schema, const CovariateSelection& covariates) {
  std::size_t width = 1;
  for (std::size_t j : resolve_selection(schema, covariates)) width += schema.design_columns(j);
  return width;
}

std::vector<std::string> design_column_names(const CovariateSchema& schema, const CovariateSelection& covariates) {
  std::vector<std::string> names{"(intercept)"};
  for (std::size_t j : resolve_selection(schema, covariates)) {
    const Covariate& c = schema[j];
    if (c.kind == CovariateKind::categorical) {
      for (std::size_t l = 1; l < c.levels.size(); ++l) names.push_back(c.name + "=" + c.levels[l]);
    } else {
      names.push_back(c.name);
    }
  }
  return names;
}

Eigen::MatrixXd design_rows(const StudyDataset& ds, std::span<const std::size_t> rows,
                            const CovariateSelection& covariates) {
  const auto& schema = ds.schema();
  const auto sel = resolve_selection(schema, covariates);
  const std::size_t width = design_width(schema, covariates);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& w = ds[rows[r]].w;
    const auto row = static_cast<Eigen::Index>(r);
    x(row, 0) = 1.0;
    Eigen::Index col = 1;
    for (std::size_t j : sel) {
      if (schema[j].kind == CovariateKind::categorical) {
        const auto level = static_cast<Eigen::Index>(w[j]);
        if (level > 0) x(row, col + level - 1) = 1.0;
        col += static_cast<Eigen::Index>(schema.design_columns(j));
      } else {
        x(row, col++) = w[j];
      }
    }
  }
  return x;
}

DesignMatrix design_matrix(const StudyDataset& ds, const std::function<bool(std::size_t)>& subset,
                           const CovariateSelection& covariates) {
  DesignMatrix dm;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (subset(i)) dm.rows.push_back(i);
  if (dm.rows.empty()) throw DataError("design matrix subset selects no records");
  dm.x = design_rows(ds, dm.rows, covariates);
  dm.columns = design_column_names(ds.schema(), covariates);
  return dm;
}

}  // namespace transport
