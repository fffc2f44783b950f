#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "fedchs/data.hpp"
#include "fedchs/engine.hpp"
#include "fedchs/losses.hpp"

namespace fedchs::app {

// Bad configuration text; the message starts with "<source>:<line>:".
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TopologyKind { random, ring, path };
enum class BoundSelection { thm1, thm2, both };

struct ExperimentConfig {
  std::uint64_t seed = 1;
  Algorithm algorithm = Algorithm::fedchs;
  int rounds = 300;
  int steps = 10;
  ScheduleMode schedule = ScheduleMode::sqrt_decay;
  double schedule_q = 2.0;
  double schedule_q1 = 0.5;
  double schedule_q2 = 0.5;
  // L used by the schedule; unset means the estimated L.
  std::optional<double> smoothness;
  std::size_t batch_size = 0;
  std::uint64_t bits_per_vector = 0;
  int quantize_levels = 0;
  // SGD steps per round for FedAvg and per visit for the random walk. The
  // baselines run rounds * steps / local_steps rounds, matching the per-client
  // step budget of Fed-CHS.
  int local_steps = 1;

  DatasetSpec data;
  std::size_t clients = 20;
  double dirichlet_lambda = 0.6;
  std::size_t clusters = 4;
  ClusterPolicy cluster_policy = ClusterPolicy::contiguous;

  ModelKind model = ModelKind::logistic;
  double mu_reg = 0.01;
  std::size_t hidden = 8;

  TopologyKind topology = TopologyKind::random;
  std::size_t max_degree = 3;

  BoundSelection bound = BoundSelection::both;
  std::size_t probe_count = 32;
  double gamma = 0.9;

  std::string out_dir = "out";
};

/// Parses `key = value` lines; `#` starts a comment and blank lines are
/// ignored. Unknown keys, repeated keys and malformed values raise
/// ConfigError naming the line.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

Algorithm parse_algorithm(const std::string& name);
const char* to_string(TopologyKind kind);

}  // namespace fedchs::app
