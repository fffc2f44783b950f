#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedchs_app/commands.hpp"

int main(int argc, char** argv) {
  using namespace fedchs::app;
  CLI::App app{"Sequential federated learning over hierarchical clusters: simulator and bound checks"};
  app.require_subcommand(1);

  CommandOptions options;
  std::uint64_t seed = 0;
  std::string out_dir;
  double gamma = 0.0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", options.config_path, "Experiment config (key = value lines)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out-dir", out_dir, "Override the output directory");
    sub->add_flag("--quiet", options.quiet, "Suppress console output");
  };

  CLI::App* run = app.add_subcommand("run", "Run the configured algorithm and write its trace");
  add_common(run);
  CLI::App* verify = app.add_subcommand("verify-bounds", "Check a Fed-CHS run against the convergence bounds");
  add_common(verify);
  CLI::App* compare = app.add_subcommand("compare", "Compare algorithms by bits to an accuracy threshold");
  add_common(compare);
  compare->add_option("--algos", options.algorithms, "Algorithms: fedchs, fedavg, hfl, sfl-rw")
      ->delimiter(',')
      ->required();
  compare->add_option("--gamma", gamma, "Accuracy threshold (defaults to the config's gamma)");
  CLI::App* stats = app.add_subcommand("partition-stats", "Write the partition, clusters and topology");
  add_common(stats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  for (CLI::App* sub : {run, verify, compare, stats}) {
    if (sub->count("--seed") > 0) options.seed = seed;
    if (sub->count("--out-dir") > 0) options.out_dir = out_dir;
  }
  if (compare->count("--gamma") > 0) options.gamma = gamma;

  if (*run) return cmd_run(options, std::cout, std::cerr);
  if (*verify) return cmd_verify_bounds(options, std::cout, std::cerr);
  if (*compare) return cmd_compare(options, std::cout, std::cerr);
  return cmd_partition_stats(options, std::cout, std::cerr);
}
