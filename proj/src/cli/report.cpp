#include "transport/cli/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>

#include "transport/cli/commands.hpp"

namespace transport::cli {

using nlohmann::json;

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", value);
  return buf;
}

double round_significant(double value) {
  if (!std::isfinite(value)) return value;
  return std::strtod(format_number(value).c_str(), nullptr);
}

namespace {

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json cell_json(const Cell& c) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>)
          return std::isfinite(v) ? json(round_significant(v)) : json();
        else
          return json(v);
      },
      c);
}

std::string cell_text(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>)
          return format_number(v);
        else if constexpr (std::is_same_v<T, bool>)
          return v ? "true" : "false";
        else if constexpr (std::is_same_v<T, std::string>)
          return v.find_first_of(",\"\n") == std::string::npos ? v : "\"" + v + "\"";
        else
          return std::to_string(v);
      },
      c);
}

}  // namespace

ReportWriter::ReportWriter(std::ostream& out, OutputFormat format) : out_(out), format_(format) {}

void ReportWriter::header(const std::string& command, const json& resolved_config, std::uint64_t seed) {
  if (format_ == OutputFormat::structured) {
    json run{{"schema_version", kSchemaVersion}, {"record", "run"},       {"command", command},
             {"version", std::string(kVersion)}, {"seed", seed},          {"timestamp", timestamp()},
             {"config", resolved_config}};
    out_ << run.dump() << '\n';
  } else {
    out_ << "# schema_version " << kSchemaVersion << '\n'
         << "# command " << command << '\n'
         << "# version " << kVersion << '\n'
         << "# seed " << seed << '\n'
         << "# timestamp " << timestamp() << '\n'
         << "# config " << resolved_config.dump() << '\n';
  }
}

void ReportWriter::table(const std::string& name, const std::vector<std::string>& columns,
                         const std::vector<std::vector<Cell>>& rows) {
  if (format_ == OutputFormat::structured) {
    for (const auto& row : rows) {
      json rec{{"schema_version", kSchemaVersion}, {"record", name}};
      for (std::size_t j = 0; j < columns.size(); ++j) rec[columns[j]] = cell_json(row[j]);
      out_ << rec.dump() << '\n';
    }
  } else {
    out_ << "# " << name << '\n';
    write_csv(out_, columns, rows);
  }
}

void write_csv(std::ostream& out, const std::vector<std::string>& columns, const std::vector<std::vector<Cell>>& rows) {
  for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << columns[j];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << cell_text(row[j]);
    out << '\n';
  }
}

}  // namespace transport::cli
