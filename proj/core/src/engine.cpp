#include "fedchs/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedchs/errors.hpp"

namespace fedchs {

namespace {

// Substream tags under the run seed.
constexpr std::uint64_t kBatchTag = 1;
constexpr std::uint64_t kInitTag = 2;
constexpr std::uint64_t kQuantTag = 3;
constexpr std::uint64_t kWalkTag = 4;

struct GlobalEval {
  double loss = 0.0;
  double grad_sq_norm = 0.0;
  std::optional<double> gap;
};

// Evaluates F, ||grad F||^2 and the optimality gap against the pooled data.
class Evaluator {
 public:
  explicit Evaluator(const Problem& problem)
      : problem_(problem), weights_(problem.partition.global_weights()) {
    if (problem.w_star) optimum_ = evaluate_loss(*problem.w_star);
  }

  GlobalEval operator()(const ModelVector& w) const {
    const LossAndGrad lg =
        global_loss_and_grad(problem_.model, w, problem_.partition.shards, weights_);
    GlobalEval out{lg.loss, norm_sq(lg.grad), std::nullopt};
    if (optimum_) out.gap = lg.loss - *optimum_;
    return out;
  }

  double accuracy(const ModelVector& w) const {
    return classification_accuracy(problem_.model, w, problem_.partition.shards);
  }

 private:
  double evaluate_loss(const ModelVector& w) const {
    return global_loss_and_grad(problem_.model, w, problem_.partition.shards, weights_).loss;
  }

  const Problem& problem_;
  std::vector<double> weights_;
  std::optional<double> optimum_;
};

void validate(const RunConfig& config, const Problem& problem) {
  if (config.rounds < 1) throw ContractViolation("run: rounds (T) must be >= 1");
  if (config.schedule.steps() < 1) throw ContractViolation("run: steps (K) must be >= 1");
  if (config.local_steps < 0) throw ContractViolation("run: local_steps must be >= 0");
  if (config.quantize_levels < 0) throw ContractViolation("run: quantize_levels must be >= 0");
  if (problem.partition.clients() == 0) throw ContractViolation("run: empty partition");
  if (config.initial && config.initial->dim() != problem.model.dim()) {
    throw ContractViolation("run: initial model has the wrong dimension");
  }
}

ModelVector initial_model(const RunConfig& config, const LossModel& model) {
  return config.initial ? *config.initial : ModelVector(model.dim());
}

TraceRecord make_record(int t, std::optional<int> cluster, const GlobalEval& eval) {
  TraceRecord rec;
  rec.t = t;
  rec.cluster = cluster;
  rec.loss = eval.loss;
  rec.grad_sq_norm = eval.grad_sq_norm;
  rec.gap = eval.gap;
  return rec;
}

void close_round(RunResult& result, TraceRecord rec, const ModelVector& w, const Problem& problem,
                 const Evaluator& eval) {
  rec.bits = result.ledger.totals();
  result.trace.push_back(rec);
  result.iterates.push_back(w);
  if (problem.classification) result.accuracy.push_back(eval.accuracy(w));
}

void finish(RunResult& result, ModelVector w, const Problem& problem, const Evaluator& eval) {
  const GlobalEval last = eval(w);
  result.final_loss = last.loss;
  result.final_grad_sq_norm = last.grad_sq_norm;
  result.final_gap = last.gap;
  if (problem.classification) result.final_accuracy = eval.accuracy(w);
  result.final_w = std::move(w);
}

// Plain SGD on one client's shard, the building block of FedAvg and the walk.
ModelVector client_sgd(ModelVector w, const Problem& problem, int client, int round,
                       int local_steps, std::span<const double> rates, const BatchSampler& sampler) {
  const Shard& shard = problem.partition.shards[client];
  const int steps = static_cast<int>(rates.size());
  for (int j = 0; j < local_steps; ++j) {
    const double eta = rates[static_cast<std::size_t>((round * local_steps + j) % steps)];
    const auto batch = sampler.draw(client, round, j, shard.size());
    w.axpy(-eta, batch_grad(problem.model, w, shard, batch));
  }
  return w;
}

}  // namespace

const char* to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::sqrt_decay: return "sqrt";
    case ScheduleMode::power: return "power";
    case ScheduleMode::constant: return "constant";
  }
  return "unknown";
}

const char* to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::fedchs: return "fedchs";
    case Algorithm::fedavg: return "fedavg";
    case Algorithm::hfl: return "hfl";
    case Algorithm::sfl_rw: return "sfl-rw";
  }
  return "unknown";
}

Schedule Schedule::sqrt_decay(double smoothness, int steps) {
  if (!(smoothness > 0.0) || steps < 1) throw ContractViolation("schedule: need L > 0 and K >= 1");
  Schedule s;
  s.mode_ = ScheduleMode::sqrt_decay;
  s.smoothness_ = smoothness;
  s.steps_ = steps;
  return s;
}

Schedule Schedule::power(double smoothness, int steps, double q) {
  if (!(smoothness > 0.0) || steps < 1) throw ContractViolation("schedule: need L > 0 and K >= 1");
  if (!(q >= 2.0)) throw ContractViolation("schedule: power mode needs q >= 2");
  Schedule s;
  s.mode_ = ScheduleMode::power;
  s.smoothness_ = smoothness;
  s.steps_ = steps;
  s.q_ = q;
  return s;
}

Schedule Schedule::constant(double smoothness, int rounds, double q1, double q2) {
  if (!(smoothness > 0.0) || rounds < 1) throw ContractViolation("schedule: need L > 0 and T >= 1");
  if (!(q1 > 0.0 && q1 < 1.0)) throw ContractViolation("schedule: constant mode needs q1 in (0, 1)");
  if (!(q2 >= q1)) throw ContractViolation("schedule: constant mode needs q2 >= q1");
  if (!(1.0 + q1 > q2)) throw ContractViolation("schedule: constant mode needs 1 + q1 > q2");
  Schedule s;
  s.mode_ = ScheduleMode::constant;
  s.smoothness_ = smoothness;
  s.rounds_ = rounds;
  s.q1_ = q1;
  s.q2_ = q2;
  // Shave a few ulps so exact powers (16^0.5 = 4) do not round up to the next integer.
  const double k = std::pow(static_cast<double>(rounds), q1);
  s.steps_ = std::max(1, static_cast<int>(std::ceil(k * (1.0 - 1e-12))));
  return s;
}

double Schedule::rate(int k) const {
  if (k < 0 || k >= steps_) {
    throw ContractViolation("schedule: step " + std::to_string(k) + " outside [0, " +
                            std::to_string(steps_) + ")");
  }
  const double big_k = static_cast<double>(steps_);
  switch (mode_) {
    case ScheduleMode::sqrt_decay:
      return 1.0 / (2.0 * smoothness_ * big_k * std::sqrt(static_cast<double>(k + 1)));
    case ScheduleMode::power:
      return 1.0 / (2.0 * smoothness_ * std::pow(big_k, q_));
    case ScheduleMode::constant:
      return 1.0 / (smoothness_ * std::pow(static_cast<double>(rounds_), q2_));
  }
  return 0.0;
}

std::vector<double> Schedule::rates() const {
  std::vector<double> out(static_cast<std::size_t>(steps_));
  for (int k = 0; k < steps_; ++k) out[static_cast<std::size_t>(k)] = rate(k);
  return out;
}

double Schedule::cap() const {
  const double lk = smoothness_ * static_cast<double>(steps_);
  return mode_ == ScheduleMode::constant ? 1.0 / lk : 1.0 / (2.0 * lk);
}

double schedule_rate(const Schedule& schedule, int k) { return schedule.rate(k); }

std::vector<std::size_t> BatchSampler::draw(int client, int round, int step,
                                            std::size_t shard_size) const {
  if (batch_size_ == 0 || batch_size_ >= shard_size) {
    std::vector<std::size_t> all(shard_size);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  RandomStream stream = base_.substream({static_cast<std::uint64_t>(client),
                                         static_cast<std::uint64_t>(round),
                                         static_cast<std::uint64_t>(step)});
  return stream.sample_without_replacement(shard_size, batch_size_);
}

std::uint64_t effective_bits_per_vector(const RunConfig& config, std::size_t dim) {
  return config.bits_per_vector > 0 ? config.bits_per_vector : 32 * static_cast<std::uint64_t>(dim);
}

StepResult local_update_step(const ModelVector& w, const ClusterState& cluster,
                             const LossModel& model, const Partition& partition, double eta,
                             const BatchSampler& sampler, int round, int step) {
  if (cluster.clients.empty()) throw ContractViolation("local_update_step: empty cluster");
  if (cluster.weights.size() != cluster.clients.size()) {
    throw ContractViolation("local_update_step: weights and members differ in length");
  }
  if (!(eta > 0.0)) throw ContractViolation("local_update_step: eta must be positive");
  StepResult out{w, ModelVector(model.dim())};
  for (std::size_t j = 0; j < cluster.clients.size(); ++j) {
    const int n = cluster.clients[j];
    const Shard& shard = partition.shards.at(static_cast<std::size_t>(n));
    const auto batch = sampler.draw(n, round, step, shard.size());
    out.grad.axpy(cluster.weights[j], batch_grad(model, w, shard, batch));
  }
  out.w.axpy(-eta, out.grad);
  return out;
}

void run_cluster_round(RoundState& state, const ClusterState& cluster, const LossModel& model,
                       const Partition& partition, const Schedule& schedule,
                       const BatchSampler& sampler, CostLedger& ledger,
                       std::uint64_t bits_per_vector, std::vector<DriftSample>* drift) {
  if (state.k != 0) throw ContractViolation("run_cluster_round: round must start at k = 0");
  const auto members = static_cast<std::int64_t>(cluster.clients.size());
  const auto per_transfer = members * static_cast<std::int64_t>(bits_per_vector);
  const ModelVector start = state.w;
  double weighted_steps = 0.0;  // sum_{j<k} eta_j^2 ||g_j||^2
  for (int k = 0; k < schedule.steps(); ++k) {
    const double eta = schedule.rate(k);
    ledger.record_transfer(state.t, Channel::client_down, per_transfer);
    StepResult step = local_update_step(state.w, cluster, model, partition, eta, sampler, state.t, k);
    ledger.record_transfer(state.t, Channel::client_up, per_transfer);
    weighted_steps += eta * eta * norm_sq(step.grad);
    state.w = std::move(step.w);
    state.last_grad = std::move(step.grad);
    state.k = k + 1;
    if (drift) {
      drift->push_back({state.t, state.k, norm_sq(start - state.w),
                        static_cast<double>(state.k) * weighted_steps});
    }
  }
  state.k = 0;
}

int select_next_cluster(int current, const EsGraph& graph, std::span<const int> visit_counts,
                        std::span<const std::size_t> masses) {
  if (current < 0 || static_cast<std::size_t>(current) >= graph.size()) {
    throw ContractViolation("select_next_cluster: current cluster out of range");
  }
  const auto& neighbors = graph.neighbors(current);
  if (neighbors.empty()) throw ContractViolation("select_next_cluster: empty neighbor set");
  int least = visit_counts[static_cast<std::size_t>(neighbors.front())];
  for (int m : neighbors) least = std::min(least, visit_counts[static_cast<std::size_t>(m)]);
  // Neighbor lists are sorted, so the first strict improvement keeps the
  // lowest index among equal masses.
  int best = -1;
  for (int m : neighbors) {
    if (visit_counts[static_cast<std::size_t>(m)] != least) continue;
    if (best < 0 || masses[static_cast<std::size_t>(m)] > masses[static_cast<std::size_t>(best)]) {
      best = m;
    }
  }
  return best;
}

RunResult run_fedchs(const RunConfig& config, const Problem& problem, const EsGraph& graph) {
  validate(config, problem);
  const std::size_t cluster_count = problem.clusters.size();
  if (cluster_count == 0) throw ContractViolation("run_fedchs: no clusters");
  if (graph.size() != cluster_count) {
    throw ContractViolation("run_fedchs: graph has " + std::to_string(graph.size()) +
                            " nodes but there are " + std::to_string(cluster_count) + " clusters");
  }
  const std::uint64_t bits = effective_bits_per_vector(config, problem.model.dim());
  const RandomStream root(config.seed);
  const BatchSampler sampler(root.substream({kBatchTag}), config.batch_size);
  const Evaluator eval(problem);

  std::vector<std::size_t> masses;
  for (const ClusterState& c : problem.clusters) masses.push_back(c.mass);

  RunResult result;
  RoundState state;
  state.w = initial_model(config, problem.model);
  state.visit_counts.assign(cluster_count, 0);
  int current = static_cast<int>(root.substream({kInitTag}).uniform_index(cluster_count));
  result.iterates.push_back(state.w);

  for (int t = 0; t < config.rounds; ++t) {
    TraceRecord rec = make_record(t, current, eval(state.w));
    state.t = t;
    state.cluster = current;
    run_cluster_round(state, problem.clusters[static_cast<std::size_t>(current)], problem.model,
                      problem.partition, config.schedule, sampler, result.ledger, bits,
                      &result.drift);
    const int next = select_next_cluster(current, graph, state.visit_counts, masses);
    result.ledger.record_transfer(t, Channel::es_es, static_cast<std::int64_t>(bits));
    ++state.visit_counts[static_cast<std::size_t>(next)];
    close_round(result, rec, state.w, problem, eval);
    current = next;
  }
  result.visit_counts = state.visit_counts;
  finish(result, state.w, problem, eval);
  return result;
}

RunResult run_fedavg(const RunConfig& config, const Problem& problem) {
  validate(config, problem);
  const std::uint64_t bits = effective_bits_per_vector(config, problem.model.dim());
  const RandomStream root(config.seed);
  const BatchSampler sampler(root.substream({kBatchTag}), config.batch_size);
  const Evaluator eval(problem);
  const std::vector<double> rates = config.schedule.rates();
  const int local_steps = config.local_steps > 0 ? config.local_steps : config.schedule.steps();
  const std::vector<double> weights = problem.partition.global_weights();
  const auto clients = static_cast<std::int64_t>(problem.partition.clients());

  RunResult result;
  ModelVector w = initial_model(config, problem.model);
  result.iterates.push_back(w);
  for (int t = 0; t < config.rounds; ++t) {
    TraceRecord rec = make_record(t, std::nullopt, eval(w));
    ModelVector next(problem.model.dim());
    for (std::size_t n = 0; n < problem.partition.clients(); ++n) {
      const ModelVector local =
          client_sgd(w, problem, static_cast<int>(n), t, local_steps, rates, sampler);
      next.axpy(weights[n], local);
    }
    result.ledger.record_transfer(t, Channel::es_ps, clients * static_cast<std::int64_t>(bits));
    result.ledger.record_transfer(t, Channel::es_ps, clients * static_cast<std::int64_t>(bits));
    w = std::move(next);
    close_round(result, rec, w, problem, eval);
  }
  finish(result, w, problem, eval);
  return result;
}

RunResult run_hfl(const RunConfig& config, const Problem& problem) {
  validate(config, problem);
  if (problem.clusters.empty()) throw ContractViolation("run_hfl: no clusters");
  const std::uint64_t bits = effective_bits_per_vector(config, problem.model.dim());
  const RandomStream root(config.seed);
  const BatchSampler sampler(root.substream({kBatchTag}), config.batch_size);
  const Evaluator eval(problem);
  const double total_mass = static_cast<double>(problem.partition.total_size());
  const auto cluster_count = static_cast<std::int64_t>(problem.clusters.size());
  const std::uint64_t uplink_bits =
      config.quantize_levels > 0 ? quantized_vector_bits(problem.model.dim(), config.quantize_levels)
                                 : bits;

  RunResult result;
  ModelVector w = initial_model(config, problem.model);
  result.iterates.push_back(w);
  for (int t = 0; t < config.rounds; ++t) {
    TraceRecord rec = make_record(t, std::nullopt, eval(w));
    ModelVector next(problem.model.dim());
    for (const ClusterState& cluster : problem.clusters) {
      RoundState branch;
      branch.t = t;
      branch.cluster = cluster.id;
      branch.w = w;
      run_cluster_round(branch, cluster, problem.model, problem.partition, config.schedule, sampler,
                        result.ledger, bits, &result.drift);
      ModelVector edge_model = std::move(branch.w);
      if (config.quantize_levels > 0) {
        RandomStream q_stream = root.substream({kQuantTag, static_cast<std::uint64_t>(t),
                                                static_cast<std::uint64_t>(cluster.id)});
        edge_model = w + qsgd_quantize(edge_model - w, config.quantize_levels, q_stream);
      }
      result.ledger.record_transfer(t, Channel::es_ps, static_cast<std::int64_t>(uplink_bits));
      next.axpy(static_cast<double>(cluster.mass) / total_mass, edge_model);
    }
    result.ledger.record_transfer(t, Channel::es_ps, cluster_count * static_cast<std::int64_t>(bits));
    w = std::move(next);
    close_round(result, rec, w, problem, eval);
  }
  finish(result, w, problem, eval);
  return result;
}

RunResult run_sfl_randomwalk(const RunConfig& config, const Problem& problem,
                             const EsGraph& client_graph) {
  validate(config, problem);
  if (client_graph.size() != problem.partition.clients()) {
    throw ContractViolation("run_sfl_randomwalk: graph must have one node per client");
  }
  const std::uint64_t bits = effective_bits_per_vector(config, problem.model.dim());
  const RandomStream root(config.seed);
  const BatchSampler sampler(root.substream({kBatchTag}), config.batch_size);
  const Evaluator eval(problem);
  const std::vector<double> rates = config.schedule.rates();
  const int local_steps = config.local_steps > 0 ? config.local_steps : config.schedule.steps();

  RunResult result;
  ModelVector w = initial_model(config, problem.model);
  result.iterates.push_back(w);
  result.visit_counts.assign(problem.partition.clients(), 0);
  int client = static_cast<int>(root.substream({kInitTag}).uniform_index(client_graph.size()));
  for (int t = 0; t < config.rounds; ++t) {
    TraceRecord rec = make_record(t, client, eval(w));
    ++result.visit_counts[static_cast<std::size_t>(client)];
    w = client_sgd(std::move(w), problem, client, t, local_steps, rates, sampler);
    const auto& neighbors = client_graph.neighbors(client);
    RandomStream hop = root.substream({kWalkTag, static_cast<std::uint64_t>(t)});
    const int next = neighbors[hop.uniform_index(neighbors.size())];
    result.ledger.record_transfer(t, Channel::es_es, static_cast<std::int64_t>(bits));
    close_round(result, rec, w, problem, eval);
    client = next;
  }
  finish(result, w, problem, eval);
  return result;
}

ModelVector qsgd_quantize(const ModelVector& v, int levels, RandomStream& stream) {
  if (levels < 1) throw ContractViolation("qsgd_quantize: levels must be >= 1");
  const double scale = norm(v);
  ModelVector out(v.dim());
  if (scale == 0.0) return out;
  const double s = static_cast<double>(levels);
  for (std::size_t i = 0; i < v.dim(); ++i) {
    const double ratio = std::min(s * std::abs(v[i]) / scale, s);
    const double lower = std::floor(ratio);
    const double level = stream.uniform() < ratio - lower ? lower + 1.0 : lower;
    out[i] = std::copysign(scale * level / s, v[i]);
  }
  return out;
}

}  // namespace fedchs
