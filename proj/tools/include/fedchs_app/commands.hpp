#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fedchs::app {

enum ExitCode : int {
  kExitOk = 0,
  // The command ran but an asserted check failed (bound violated).
  kExitCheckFailed = 1,
  kExitUsage = 2,
  // Infeasible partition, unsupported model/theorem pairing, numeric failure.
  kExitRuntime = 3,
};

struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool quiet = false;
  // compare only
  std::vector<std::string> algorithms;
  std::optional<double> gamma;
};

/// Writes trace.csv, ledger.json and summary.json.
int cmd_run(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Runs Fed-CHS and writes trace.csv and bound_report.json; exit 0 iff every
/// asserted bound holds.
int cmd_verify_bounds(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Runs each algorithm on the same data and seeds and writes comparison.csv
/// plus one trace_<algorithm>.csv per run.
int cmd_compare(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Writes partition.tsv, topology.edges and partition_stats.json.
int cmd_partition_stats(const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace fedchs::app
