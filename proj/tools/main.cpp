#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "transport/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace transport::cli;

  CLI::App app{"Transport trial means to a target population under adherence sensitivity parameters"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<unsigned> threads;

  for (const char* name : {"estimate", "mc", "bounds", "simulate"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("-o,--output", output, "override the configured output path");
    sub->add_option("--threads", threads, "worker threads (default: TRANSPORT_SA_THREADS or all cores)");
  }
  app.add_subcommand("version", "print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  if (command == "version") {
    std::cout << "transport-sa " << kVersion << '\n';
    return kExitOk;
  }
  Overrides overrides;
  overrides.seed = seed;
  if (output) overrides.output = *output;
  overrides.threads = threads;
  return run_command(command, config, overrides, std::cerr);
}
