#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dpfed/harness.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int repeats = 0;
  int threads = 0;
  long draws = 1'000'000;
  bool quiet = false;
};

CLI::App* add_command(CLI::App& app, const char* name, const char* help, Flags& flags,
                      bool with_draws) {
  CLI::App* cmd = app.add_subcommand(name, help);
  cmd->add_option("--config", flags.config, "experiment config file")->required();
  cmd->add_option("--out", flags.out, "output directory (overrides [output] dir)");
  cmd->add_option("--seed", flags.seed, "base seed (overrides [federation] seed)");
  cmd->add_option("--repeats", flags.repeats, "repeat count (overrides [federation] repeats)");
  cmd->add_option("--threads", flags.threads, "worker threads (overrides [federation] threads)");
  if (with_draws) cmd->add_option("--draws", flags.draws, "Monte-Carlo draws (at least 10000)");
  cmd->add_flag("--quiet", flags.quiet, "suppress progress output");
  return cmd;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic DP-FedAvg simulator"};
  app.require_subcommand(1);
  Flags flags;
  CLI::App* run = add_command(app, "run", "simulate repeats of one config", flags, false);
  CLI::App* sweep = add_command(app, "sweep", "simulate a grid over T, E, epsilon or E rules", flags, false);
  CLI::App* plan = add_command(app, "plan", "report calibration, E* and the bound curve", flags, false);
  CLI::App* validate =
      add_command(app, "validate", "Monte-Carlo check of the noise-variance closed form", flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? dpfed::kExitOk : dpfed::kExitValidation;
  }

  dpfed::CommandOptions options;
  options.config = flags.config;
  if (!flags.out.empty()) options.out_dir = flags.out;
  auto given = [&](const char* name) {
    return run->count(name) + sweep->count(name) + plan->count(name) + validate->count(name) > 0;
  };
  if (given("--seed")) options.seed = flags.seed;
  if (given("--repeats")) options.repeats = flags.repeats;
  if (given("--threads")) options.threads = flags.threads;
  options.draws = flags.draws;
  options.quiet = flags.quiet;

  if (run->parsed()) return dpfed::cmd_run(options, std::cout, std::cerr);
  if (sweep->parsed()) return dpfed::cmd_sweep(options, std::cout, std::cerr);
  if (plan->parsed()) return dpfed::cmd_plan(options, std::cout, std::cerr);
  return dpfed::cmd_validate(options, std::cout, std::cerr);
}
