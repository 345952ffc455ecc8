#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "transport/cli/config.hpp"

namespace transport::cli {

inline constexpr int kSchemaVersion = 1;

using Cell = std::variant<std::string, double, std::int64_t, bool>;

// Numbers rounded to 10 significant digits, as printed everywhere.
std::string format_number(double value);
double round_significant(double value);

/// Writes named tables either as JSON lines (one object per row, each tagged with the
/// schema version and table name) or as delimited text blocks introduced by "# name".
class ReportWriter {
 public:
  ReportWriter(std::ostream& out, OutputFormat format);

  // Header: command, version, seed, timestamp and the resolved configuration.
  void header(const std::string& command, const nlohmann::json& resolved_config, std::uint64_t seed);
  void table(const std::string& name, const std::vector<std::string>& columns,
             const std::vector<std::vector<Cell>>& rows);

 private:
  std::ostream& out_;
  OutputFormat format_;
};

// Plain CSV with a header row.
void write_csv(std::ostream& out, const std::vector<std::string>& columns, const std::vector<std::vector<Cell>>& rows);

}  // namespace transport::cli
