#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedchs/analysis.hpp"
#include "fedchs/data.hpp"
#include "fedchs/engine.hpp"
#include "fedchs/losses.hpp"
#include "fedchs/topology.hpp"
#include "fedchs_app/config.hpp"

namespace fedchs::app {

/// Everything a run needs, derived deterministically from the config. Each
/// ingredient draws from its own substream of the config seed.
struct Experiment {
  ExperimentConfig config;
  Dataset dataset;
  ClusterAssignment assignment;
  LossModel model;
  EsGraph graph;
  EsGraph client_graph;
  ConstantEstimates estimates;
  Schedule schedule;

  bool classification() const { return dataset.kind == DatasetKind::gaussian_blobs; }
  Problem problem() const;
};

Experiment prepare(const ExperimentConfig& config);

// Rounds and local steps for `algorithm` under the matched step budget.
RunConfig run_config(const Experiment& experiment, Algorithm algorithm);
RunResult execute(const Experiment& experiment, Algorithm algorithm);

/// Comparison row for one algorithm at accuracy threshold gamma.
struct ComparisonRow {
  Algorithm algorithm = Algorithm::fedchs;
  std::optional<std::size_t> rounds_to_gamma;
  std::optional<ChannelTotals> bits_to_gamma;
  double final_accuracy = 0.0;
  double final_loss = 0.0;
  ChannelTotals total_bits;
};

ComparisonRow compare_row(Algorithm algorithm, const RunResult& run, double gamma);

inline constexpr const char* kComparisonCsvHeader =
    "algorithm,reached,rounds_to_gamma,bits_client_up,bits_client_down,bits_es_es,bits_es_ps,"
    "bits_total,final_accuracy,final_loss,run_bits_total";

std::string comparison_csv(const std::vector<ComparisonRow>& rows);

}  // namespace fedchs::app
