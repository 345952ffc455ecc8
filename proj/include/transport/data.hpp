#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace transport {

enum class CovariateKind { continuous, binary, categorical };

std::string_view to_string(CovariateKind kind);
CovariateKind parse_covariate_kind(std::string_view text);

struct Covariate {
  std::string name;
  CovariateKind kind = CovariateKind::continuous;
  std::vector<std::string> levels;  // categorical only; the first level is the reference

  bool operator==(const Covariate&) const = default;
};

/// Ordered covariate layout shared by trial and target records.
///
/// Values are stored as doubles: binary covariates as 0/1 and categorical covariates
/// as the zero-based index of their level.
class CovariateSchema {
 public:
  CovariateSchema() = default;
  explicit CovariateSchema(std::vector<Covariate> covariates);

  const std::vector<Covariate>& covariates() const { return covariates_; }
  std::size_t size() const { return covariates_.size(); }
  const Covariate& operator[](std::size_t j) const { return covariates_[j]; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  // Parses one cell of covariate j. Throws DataError on empty or invalid input.
  double parse_value(std::size_t j, std::string_view text) const;
  std::string format_value(std::size_t j, double value) const;
  // Checks a stored value against the declared kind and levels.
  bool valid_value(std::size_t j, double value) const;

  // Number of design columns contributed by covariate j (levels - 1 for categoricals).
  std::size_t design_columns(std::size_t j) const;

  bool operator==(const CovariateSchema&) const = default;

 private:
  std::vector<Covariate> covariates_;
};

struct StudyRecord {
  bool trial = false;
  std::vector<double> w;
  std::optional<std::string> arm;
  std::optional<int> z;
  std::optional<double> y;

  bool operator==(const StudyRecord&) const = default;
};

/// Combined trial (S=1) and target (S=0) sample. Immutable once built.
class StudyDataset {
 public:
  // Validates every record; throws DataError on any violation.
  StudyDataset(CovariateSchema schema, std::vector<StudyRecord> records);

  const CovariateSchema& schema() const { return schema_; }
  const std::vector<StudyRecord>& records() const { return records_; }
  const StudyRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  std::size_t n1() const { return n1_; }
  std::size_t n0() const { return n0_; }

  // Observed arm labels, sorted.
  const std::vector<std::string>& arms() const { return arms_; }
  std::optional<std::size_t> find_arm(std::string_view label) const;
  // Arm index of record i, or -1 for target records.
  int arm_index(std::size_t i) const { return arm_index_[i]; }

  // Non-fatal findings such as an arm without both adherence strata.
  const std::vector<std::string>& warnings() const { return warnings_; }

  // New dataset made of the given rows (repeats allowed).
  StudyDataset select(std::span<const std::size_t> rows) const;

  bool operator==(const StudyDataset& other) const {
    return schema_ == other.schema_ && records_ == other.records_;
  }

 private:
  CovariateSchema schema_;
  std::vector<StudyRecord> records_;
  std::size_t n1_ = 0;
  std::size_t n0_ = 0;
  std::vector<std::string> arms_;
  std::vector<int> arm_index_;
  std::vector<std::string> warnings_;
};

StudyDataset load_dataset(const std::filesystem::path& path, const CovariateSchema& schema,
                          char delimiter = ',');
StudyDataset read_dataset(std::istream& in, const CovariateSchema& schema, char delimiter = ',');
void write_dataset(const StudyDataset& ds, std::ostream& out, char delimiter = ',');

// Covariate indices used by a model; all covariates when empty optional.
using CovariateSelection = std::optional<std::vector<std::size_t>>;

struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<std::size_t> rows;     // dataset record index of each matrix row
  std::vector<std::string> columns;  // "(intercept)", then covariates in schema order
};

// Intercept plus reference-coded covariates for the records selected by `subset`.
DesignMatrix design_matrix(const StudyDataset& ds, const std::function<bool(std::size_t)>& subset,
                           const CovariateSelection& covariates = std::nullopt);

// Same encoding for an explicit list of rows.
Eigen::MatrixXd design_rows(const StudyDataset& ds, std::span<const std::size_t> rows,
                            const CovariateSelection& covariates = std::nullopt);

std::size_t design_width(const CovariateSchema& schema, const CovariateSelection& covariates);
std::vector<std::string> design_column_names(const CovariateSchema& schema,
                                             const CovariateSelection& covariates);

}  // namespace transport
