#include "fedchs_app/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "fedchs/accounting.hpp"
#include "fedchs/errors.hpp"

namespace fedchs::app {

namespace {

// Substream tags under the config seed. The engines key their own streams off
// the same seed with small tags, so these start well above them.
constexpr std::uint64_t kDataTag = 101;
constexpr std::uint64_t kPartitionTag = 102;
constexpr std::uint64_t kClusterTag = 103;
constexpr std::uint64_t kEstimateTag = 104;
constexpr std::uint64_t kTopologyTag = 105;
constexpr std::uint64_t kClientGraphTag = 106;
constexpr std::uint64_t kInitTag = 107;

LossModel make_model(const ExperimentConfig& c) {
  switch (c.model) {
    case ModelKind::quadratic: return LossModel::quadratic(c.data.input_dim);
    case ModelKind::logistic: return LossModel::logistic(c.data.input_dim, c.mu_reg);
    case ModelKind::mlp: return LossModel::mlp(c.data.input_dim, c.hidden);
  }
  throw ContractViolation("unknown model kind");
}

EsGraph make_graph(TopologyKind kind, std::size_t nodes, std::size_t max_degree, RandomStream stream) {
  switch (kind) {
    case TopologyKind::random: return random_connected_graph(nodes, max_degree, stream);
    case TopologyKind::ring: return nodes < 3 ? path_graph(nodes) : ring_graph(nodes);
    case TopologyKind::path: return path_graph(nodes);
  }
  throw ContractViolation("unknown topology");
}

// The mlp needs a symmetry-breaking start; the convex models start at zero.
ModelVector initial_weights(const LossModel& model, RandomStream stream) {
  ModelVector w(model.dim());
  if (model.kind() != ModelKind::mlp) return w;
  const double scale = 1.0 / std::sqrt(static_cast<double>(model.input_dim()));
  for (std::size_t i = 0; i < w.dim(); ++i) w[i] = scale * stream.normal();
  return w;
}

Schedule make_schedule(const ExperimentConfig& c, double smoothness) {
  switch (c.schedule) {
    case ScheduleMode::sqrt_decay: return Schedule::sqrt_decay(smoothness, c.steps);
    case ScheduleMode::power: return Schedule::power(smoothness, c.steps, c.schedule_q);
    case ScheduleMode::constant:
      return Schedule::constant(smoothness, c.rounds, c.schedule_q1, c.schedule_q2);
  }
  throw ContractViolation("unknown schedule");
}

}  // namespace

Problem Experiment::problem() const {
  return Problem{model, assignment.partition, assignment.clusters, estimates.w_star, classification()};
}

Experiment prepare(const ExperimentConfig& config) {
  const RandomStream root(config.seed);
  Dataset dataset = generate_dataset(config.data, root.substream({kDataTag}));
  Partition partition =
      dirichlet_partition(dataset, config.clients, config.dirichlet_lambda, root.substream({kPartitionTag}));
  ClusterAssignment assignment = assign_clusters(std::move(partition), config.clusters,
                                                 config.cluster_policy, root.substream({kClusterTag}));
  LossModel model = make_model(config);
  EsGraph graph = make_graph(config.topology, config.clusters, config.max_degree, root.substream({kTopologyTag}));
  EsGraph client_graph =
      make_graph(config.topology, config.clients, config.max_degree, root.substream({kClientGraphTag}));

  EstimationOptions options;
  options.probe_count = config.probe_count;
  options.batch_size = config.batch_size;
  options.w0 = initial_weights(model, root.substream({kInitTag}));
  ConstantEstimates estimates = estimate_constants(model, assignment.partition, assignment.clusters,
                                                   root.substream({kEstimateTag}), options);
  Schedule schedule = make_schedule(config, config.smoothness.value_or(estimates.L));
  estimates.beta = beta_of(estimates.mu, schedule.rates());
  return Experiment{config,      std::move(dataset),   std::move(assignment),
                    model,       std::move(graph),     std::move(client_graph),
                    std::move(estimates), schedule};
}

RunConfig run_config(const Experiment& experiment, Algorithm algorithm) {
  const ExperimentConfig& c = experiment.config;
  RunConfig run;
  run.algorithm = algorithm;
  run.rounds = c.rounds;
  run.schedule = experiment.schedule;
  run.batch_size = c.batch_size;
  run.bits_per_vector = c.bits_per_vector;
  run.quantize_levels = c.quantize_levels;
  run.seed = c.seed;
  run.initial = initial_weights(experiment.model, RandomStream(c.seed).substream({kInitTag}));
  if (algorithm == Algorithm::fedavg || algorithm == Algorithm::sfl_rw) {
    const long long budget = static_cast<long long>(c.rounds) * experiment.schedule.steps();
    run.local_steps = c.local_steps;
    run.rounds = static_cast<int>((budget + c.local_steps - 1) / c.local_steps);
  }
  return run;
}

RunResult execute(const Experiment& experiment, Algorithm algorithm) {
  const RunConfig run = run_config(experiment, algorithm);
  const Problem problem = experiment.problem();
  switch (algorithm) {
    case Algorithm::fedchs: return run_fedchs(run, problem, experiment.graph);
    case Algorithm::fedavg: return run_fedavg(run, problem);
    case Algorithm::hfl: return run_hfl(run, problem);
    case Algorithm::sfl_rw: return run_sfl_randomwalk(run, problem, experiment.client_graph);
  }
  throw ContractViolation("unknown algorithm");
}

ComparisonRow compare_row(Algorithm algorithm, const RunResult& run, double gamma) {
  ComparisonRow row;
  row.algorithm = algorithm;
  row.rounds_to_gamma = rounds_to_threshold(run.accuracy, gamma);
  if (row.rounds_to_gamma) row.bits_to_gamma = run.trace[*row.rounds_to_gamma].bits;
  row.final_accuracy = run.final_accuracy.value_or(0.0);
  row.final_loss = run.final_loss;
  row.total_bits = run.ledger.totals();
  return row;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << kComparisonCsvHeader << '\n';
  char buf[64];
  for (const ComparisonRow& row : rows) {
    out << to_string(row.algorithm) << ',' << (row.rounds_to_gamma ? 1 : 0) << ',';
    if (row.rounds_to_gamma) {
      // Rounds are counted from 1: the round whose output first reaches gamma.
      out << *row.rounds_to_gamma + 1;
      for (Channel ch : kAllChannels) out << ',' << (*row.bits_to_gamma)[ch];
      out << ',' << row.bits_to_gamma->total();
    } else {
      out << ",,,,,";
    }
    std::snprintf(buf, sizeof buf, ",%.17g", row.final_accuracy);
    out << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", row.final_loss);
    out << buf << ',' << row.total_bits.total() << '\n';
  }
  return out.str();
}

}  // namespace fedchs::app
