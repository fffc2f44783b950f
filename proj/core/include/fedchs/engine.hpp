#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedchs/accounting.hpp"
#include "fedchs/data.hpp"
#include "fedchs/losses.hpp"
#include "fedchs/numerics.hpp"
#include "fedchs/topology.hpp"
#include "fedchs/trace.hpp"

namespace fedchs {

enum class ScheduleMode { sqrt_decay, power, constant };

const char* to_string(ScheduleMode mode);

/// In-cluster learning-rate schedule eta_0 .. eta_{K-1}.
///
///   sqrt_decay: eta_k = 1 / (2 L K sqrt(k+1))          (eta_k <= 1/(2LK))
///   power:      eta_k = 1 / (2 L K^q), q >= 2           (eta_k <= 1/(2LK))
///   constant:   K = ceil(T^q1), eta = 1 / (L T^q2) with q1 in (0,1),
///               q2 >= q1, 1 + q1 > q2                   (eta   <= 1/(LK))
class Schedule {
 public:
  Schedule() = default;
  static Schedule sqrt_decay(double smoothness, int steps);
  static Schedule power(double smoothness, int steps, double q);
  static Schedule constant(double smoothness, int rounds, double q1, double q2);

  ScheduleMode mode() const { return mode_; }
  double smoothness() const { return smoothness_; }
  int steps() const { return steps_; }
  double q() const { return q_; }
  double q1() const { return q1_; }
  double q2() const { return q2_; }
  int rounds() const { return rounds_; }

  // eta_k; throws ContractViolation unless 0 <= k < K.
  double rate(int k) const;
  std::vector<double> rates() const;
  // The step-size cap the mode guarantees (1/(2LK), or 1/(LK) for constant).
  double cap() const;

 private:
  ScheduleMode mode_ = ScheduleMode::sqrt_decay;
  double smoothness_ = 1.0;
  int steps_ = 1;
  double q_ = 2.0;
  double q1_ = 0.5;
  double q2_ = 0.5;
  int rounds_ = 0;
};

double schedule_rate(const Schedule& schedule, int k);

/// Mini-batch draws for xi_{n,k}: uniform without replacement, one dedicated
/// substream per (client, round, step). A batch size of 0, or one at least
/// the shard size, selects the full shard in index order.
class BatchSampler {
 public:
  BatchSampler(RandomStream base, std::size_t batch_size) : base_(base), batch_size_(batch_size) {}

  std::vector<std::size_t> draw(int client, int round, int step, std::size_t shard_size) const;
  std::size_t batch_size() const { return batch_size_; }

 private:
  RandomStream base_;
  std::size_t batch_size_;
};

enum class Algorithm { fedchs, fedavg, hfl, sfl_rw };

const char* to_string(Algorithm algorithm);

struct RunConfig {
  Algorithm algorithm = Algorithm::fedchs;
  int rounds = 1;
  Schedule schedule;
  std::size_t batch_size = 0;
  // Q, bits per transmitted vector. 0 selects 32 * d.
  std::uint64_t bits_per_vector = 0;
  // QSGD levels for the HFL edge-to-server uplink; 0 disables quantization.
  int quantize_levels = 0;
  // SGD steps per round for FedAvg and per visit for the random walk; 0 means K.
  // Step j of round t uses eta_{(t * local_steps + j) mod K}.
  int local_steps = 0;
  std::uint64_t seed = 0;
  // w^0; the zero vector when unset.
  std::optional<ModelVector> initial;
};

/// What the engines train on. `w_star`, when known, adds the optimality gap to
/// every trace row; `classification` adds per-round training accuracy.
struct Problem {
  const LossModel& model;
  const Partition& partition;
  std::span<const ClusterState> clusters;
  std::optional<ModelVector> w_star;
  bool classification = false;
};

struct RoundState {
  int t = 0;
  int cluster = 0;
  ModelVector w;
  int k = 0;
  std::vector<int> visit_counts;
  ModelVector last_grad;
};

/// Per-step drift diagnostic: ||w^t_0 - w^t_k||^2 against
/// k * sum_{j<k} eta_j^2 ||g_j||^2.
struct DriftSample {
  int round = 0;
  int step = 0;
  double drift_sq = 0.0;
  double bound = 0.0;
};

struct StepResult {
  ModelVector w;
  ModelVector grad;
};

struct RunResult {
  ModelVector final_w;
  std::vector<TraceRecord> trace;
  CostLedger ledger;
  // w^0 .. w^T.
  std::vector<ModelVector> iterates;
  // Fed-CHS visit counters c(m) after the last round.
  std::vector<int> visit_counts;
  std::vector<DriftSample> drift;
  // Accuracy of w^{t+1} (the model produced by round t), aligned with trace
  // rows; empty unless Problem::classification.
  std::vector<double> accuracy;
  double final_loss = 0.0;
  double final_grad_sq_norm = 0.0;
  std::optional<double> final_gap;
  std::optional<double> final_accuracy;
};

/// One aggregation step inside a cluster:
/// g_k = sum_n gamma_n^m grad f(w_k, xi_{n,k}) reduced in client order, then
/// w_{k+1} = w_k - eta_k g_k.
StepResult local_update_step(const ModelVector& w, const ClusterState& cluster,
                             const LossModel& model, const Partition& partition, double eta,
                             const BatchSampler& sampler, int round, int step);

/// K local steps for state.cluster starting at state.w (state.k must be 0).
/// Records K uploads and K broadcasts of |N_m| Q bits each, and appends one
/// DriftSample per step to `drift` when given.
void run_cluster_round(RoundState& state, const ClusterState& cluster, const LossModel& model,
                       const Partition& partition, const Schedule& schedule,
                       const BatchSampler& sampler, CostLedger& ledger,
                       std::uint64_t bits_per_vector, std::vector<DriftSample>* drift);

/// Two-step rule: least-visited neighbors first, then the largest dataset
/// mass, then the lowest index.
int select_next_cluster(int current, const EsGraph& graph, std::span<const int> visit_counts,
                        std::span<const std::size_t> masses);

RunResult run_fedchs(const RunConfig& config, const Problem& problem, const EsGraph& graph);
RunResult run_fedavg(const RunConfig& config, const Problem& problem);
RunResult run_hfl(const RunConfig& config, const Problem& problem);
RunResult run_sfl_randomwalk(const RunConfig& config, const Problem& problem,
                             const EsGraph& client_graph);

/// Unbiased stochastic level quantization with s levels, scaled by ||v||.
ModelVector qsgd_quantize(const ModelVector& v, int levels, RandomStream& stream);

// Resolves RunConfig::bits_per_vector for a model dimension.
std::uint64_t effective_bits_per_vector(const RunConfig& config, std::size_t dim);

}  // namespace fedchs
