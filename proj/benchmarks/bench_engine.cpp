#include <benchmark/benchmark.h>

#include "fedchs/analysis.hpp"
#include "fedchs/data.hpp"
#include "fedchs/engine.hpp"

using namespace fedchs;

namespace {

struct Fixture {
  LossModel model;
  ClusterAssignment assignment;

  Fixture(LossModel m, std::size_t samples, std::size_t clients)
      : model(std::move(m)),
        assignment(make(model, samples, clients)) {}

  static ClusterAssignment make(const LossModel& model, std::size_t samples, std::size_t clients) {
    DatasetSpec spec;
    spec.total_size = samples;
    spec.input_dim = model.input_dim();
    const Dataset data = generate_dataset(spec, RandomStream(1));
    return assign_clusters(dirichlet_partition(data, clients, 0.6, RandomStream(2)), 4, ClusterPolicy::contiguous,
                           RandomStream(3));
  }
};

LossModel model_for(int index) {
  switch (index) {
    case 0: return LossModel::quadratic(16);
    case 1: return LossModel::logistic(16, 0.01);
    default: return LossModel::mlp(16, 8);
  }
}

void BM_LocalStep(benchmark::State& state) {
  const Fixture f(model_for(static_cast<int>(state.range(0))), 4000, 20);
  const BatchSampler sampler(RandomStream(4), static_cast<std::size_t>(state.range(1)));
  ModelVector w(f.model.dim(), 0.1);
  int step = 0;
  for (auto _ : state) {
    StepResult r = local_update_step(w, f.assignment.clusters[0], f.model, f.assignment.partition, 1e-3, sampler, 0,
                                     step++);
    benchmark::DoNotOptimize(r.w);
  }
}
BENCHMARK(BM_LocalStep)->ArgsProduct({{0, 1, 2}, {0, 16}});

void BM_ClusterRound(benchmark::State& state) {
  const Fixture f(LossModel::logistic(16, 0.01), 4000, 20);
  const Schedule schedule = Schedule::sqrt_decay(10.0, static_cast<int>(state.range(0)));
  const BatchSampler sampler(RandomStream(4), 16);
  for (auto _ : state) {
    RoundState round;
    round.w = ModelVector(f.model.dim());
    CostLedger ledger;
    run_cluster_round(round, f.assignment.clusters[0], f.model, f.assignment.partition, schedule, sampler, ledger,
                      512, nullptr);
    benchmark::DoNotOptimize(round.w);
  }
}
BENCHMARK(BM_ClusterRound)->Arg(1)->Arg(10)->Arg(50);

void BM_EstimateConstants(benchmark::State& state) {
  const Fixture f(model_for(static_cast<int>(state.range(0))), 1000, 20);
  for (auto _ : state) {
    ConstantEstimates est = estimate_constants(f.model, f.assignment.partition, f.assignment.clusters,
                                               RandomStream(5));
    benchmark::DoNotOptimize(est.L);
  }
}
BENCHMARK(BM_EstimateConstants)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
