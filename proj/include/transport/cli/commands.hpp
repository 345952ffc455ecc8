#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "transport/cli/config.hpp"

namespace transport::cli {

inline constexpr std::string_view kVersion = "0.1.0";

// Stable exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitFit = 4;

// Command-line overrides; only seed, output path and threads may override the config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output;
  std::optional<unsigned> threads;
};

void cmd_estimate(RunConfig cfg, unsigned threads);
void cmd_mc(RunConfig cfg, unsigned threads);
void cmd_bounds(RunConfig cfg, unsigned threads);
void cmd_simulate(RunConfig cfg, unsigned threads);

// Loads the config, applies overrides and runs the command. Errors are reported on
// `err` and mapped to the exit codes above.
int run_command(std::string_view command, const std::filesystem::path& config_path, const Overrides& overrides,
                std::ostream& err);

}  // namespace transport::cli
