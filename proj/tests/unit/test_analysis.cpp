#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "fedchs/analysis.hpp"
#include "fedchs/errors.hpp"
#include "oracles.hpp"

using namespace fedchs;

namespace {

Sample point(double y) { return Sample{{1.0}, y, y >= 0 ? 1 : 0}; }

// Constants for formula tests: every cluster shares the same tau and theta^2.
ConstantEstimates flat_estimates(double L, double mu, double G, double tau, double theta_sq, std::size_t clusters) {
  ConstantEstimates est;
  est.kind = ModelKind::quadratic;
  est.L = L;
  est.mu = mu;
  est.G = G;
  est.tau_m.assign(clusters, tau);
  est.theta_m_sq.assign(clusters, theta_sq);
  est.w_star = ModelVector{0.0};
  est.f_star = 0.0;
  return est;
}

struct Pipeline {
  LossModel model;
  Dataset data;
  ClusterAssignment assignment;
  ConstantEstimates est;
  Schedule schedule;
  RunResult run;
  Problem problem() const {
    return Problem{model, assignment.partition, assignment.clusters, est.w_star, false};
  }
};

struct PipelineOptions {
  DatasetKind kind = DatasetKind::linear_regression;
  std::size_t samples = 400;
  double noise = 0.5;
  std::size_t clients = 8;
  std::size_t clusters = 4;
  double lambda = 1.0;
  ClusterPolicy policy = ClusterPolicy::contiguous;
  bool logistic = false;
  std::size_t batch = 0;
  int rounds = 40;
  int steps = 5;
};

Pipeline run_pipeline(std::uint64_t seed, const PipelineOptions& o) {
  const RandomStream root(seed);
  DatasetSpec spec;
  spec.kind = o.kind;
  spec.total_size = o.samples;
  spec.input_dim = 3;
  spec.noise = o.noise;
  Pipeline p{o.logistic ? LossModel::logistic(3, 0.05) : LossModel::quadratic(3),
             generate_dataset(spec, root.substream({1})), {}, {}, {}, {}};
  const Partition partition = dirichlet_partition(p.data, o.clients, o.lambda, root.substream({2}));
  p.assignment = assign_clusters(partition, o.clusters, o.policy, root.substream({3}));
  EstimationOptions eo;
  eo.batch_size = o.batch;
  p.est = estimate_constants(p.model, p.assignment.partition, p.assignment.clusters, root.substream({4}), eo);
  p.schedule = Schedule::sqrt_decay(p.est.L, o.steps);
  p.est.beta = beta_of(p.est.mu, p.schedule.rates());
  RunConfig config;
  config.rounds = o.rounds;
  config.schedule = p.schedule;
  config.batch_size = o.batch;
  config.seed = seed;
  const EsGraph graph = o.clusters >= 3 ? ring_graph(o.clusters) : path_graph(o.clusters);
  p.run = run_fedchs(config, p.problem(), graph);
  return p;
}

}  // namespace

TEST(EstimateConstants, UnitQuadratic) {
  const Partition p{{{point(2.0)}}, 2};
  const auto clusters = make_clusters(p, {{0}});
  const ConstantEstimates est = estimate_constants(LossModel::quadratic(1), p, clusters, RandomStream(1));
  EXPECT_NEAR(est.L, 1.0, 1e-12);
  EXPECT_NEAR(est.mu, 1.0, 1e-12);
  ASSERT_TRUE(est.w_star.has_value());
  EXPECT_NEAR((*est.w_star)[0], 2.0, 1e-12);
  EXPECT_NEAR(*est.f_star, 0.0, 1e-15);
}

TEST(EstimateConstants, TwoTargetTau) {
  const Partition p{{{point(0.0)}, {point(4.0)}}, 2};
  const auto clusters = make_clusters(p, {{0, 1}});
  const ConstantEstimates est = estimate_constants(LossModel::quadratic(1), p, clusters, RandomStream(1));
  EXPECT_NEAR((*est.w_star)[0], 2.0, 1e-12);
  ASSERT_EQ(est.tau_m.size(), 1u);
  EXPECT_NEAR(est.tau_m[0], 2.0, 1e-12);
  EXPECT_NEAR(est.f_n_star[0], 0.0, 1e-15);
  // Delta at w0 = 0: 1/2 (0 - 2) + 1/2 (8 - 2) = 2.
  EXPECT_NEAR(est.delta_m[0], 2.0, 1e-12);
}

TEST(EstimateConstants, FullBatchHasNoSamplingVariance) {
  RandomStream s(3);
  for (bool logistic : {false, true}) {
    const Partition p{gen::shards(s, 6, 5, 10, 3, true), 2};
    const auto clusters = make_clusters(p, {{0, 1, 2}, {3, 4, 5}});
    const LossModel model = logistic ? LossModel::logistic(3, 0.1) : LossModel::quadratic(3);
    const ConstantEstimates est = estimate_constants(model, p, clusters, RandomStream(2));
    for (double v : est.sigma_n_sq) EXPECT_EQ(v, 0.0);
    for (double v : est.theta_m_sq) EXPECT_EQ(v, 0.0);
    EstimationOptions mini;
    mini.batch_size = 2;
    const ConstantEstimates noisy = estimate_constants(model, p, clusters, RandomStream(2), mini);
    for (double v : noisy.theta_m_sq) EXPECT_GT(v, 0.0);
  }
}

TEST(EstimateConstants, ThetaIsWeightedSigma) {
  RandomStream s(4);
  const Partition p{gen::shards(s, 5, 3, 12, 2, false), 2};
  const auto clusters = make_clusters(p, {{0, 3}, {1, 2, 4}});
  EstimationOptions o;
  o.batch_size = 2;
  const ConstantEstimates est = estimate_constants(LossModel::quadratic(2), p, clusters, RandomStream(1), o);
  for (const ClusterState& c : clusters) {
    double theta = 0.0;
    for (std::size_t j = 0; j < c.clients.size(); ++j) {
      theta += c.weights[j] * est.sigma_n_sq[static_cast<std::size_t>(c.clients[j])];
    }
    EXPECT_NEAR(est.theta_m_sq[static_cast<std::size_t>(c.id)], theta, 1e-12 * theta);
  }
}

TEST(EstimateConstants, LogisticMinimizerIsStationary) {
  RandomStream s(5);
  const Partition p{gen::shards(s, 4, 10, 20, 3, true), 2};
  const auto clusters = make_clusters(p, {{0, 1}, {2, 3}});
  const LossModel model = LossModel::logistic(3, 0.1);
  const ConstantEstimates est = estimate_constants(model, p, clusters, RandomStream(1));
  EXPECT_EQ(est.mu, 0.1);
  const auto g = global_loss_and_grad(model, *est.w_star, p.shards, p.global_weights()).grad;
  EXPECT_LE(norm(g), 1e-9);
  for (std::size_t n = 0; n < 4; ++n) EXPECT_LE(est.f_n_star[n], client_loss(model, *est.w_star, p.shards[n]));
  for (double tau : est.tau_m) EXPECT_GE(tau, 0.0);
}

TEST(EstimateConstants, RejectsTooFewProbes) {
  const Partition p{{{point(2.0)}}, 2};
  EstimationOptions o;
  o.probe_count = 9;
  EXPECT_THROW(estimate_constants(LossModel::quadratic(1), p, make_clusters(p, {{0}}), RandomStream(1), o),
               ContractViolation);
}

TEST(EstimateConstants, MlpHasNoThm1Constants) {
  RandomStream s(6);
  const Partition p{gen::shards(s, 2, 5, 5, 2, false), 2};
  const auto clusters = make_clusters(p, {{0}, {1}});
  const ConstantEstimates est = estimate_constants(LossModel::mlp(2, 3), p, clusters, RandomStream(1));
  EXPECT_FALSE(est.w_star.has_value());
  EXPECT_GT(est.L, 0.0);
  EXPECT_GT(est.G, 0.0);
  const std::vector<double> rates{0.01};
  const std::vector<int> seq{0};
  const std::vector<double> deltas{0.0};
  EXPECT_THROW(theorem1_rhs(est, rates, seq, deltas, 1.0), UnsupportedModelError);
}

TEST(Theorem1, ZeroRoundsLeavesLeadingTerm) {
  const ConstantEstimates est = flat_estimates(3.0, 1.0, 5.0, 2.0, 1.0, 2);
  const std::vector<double> rates = Schedule::sqrt_decay(3.0, 4).rates();
  EXPECT_DOUBLE_EQ(theorem1_rhs(est, rates, {}, {}, 7.0), 1.5 * 7.0);
}

TEST(Theorem1, HomogeneousNoiselessDecaysLinearly) {
  const ConstantEstimates est = flat_estimates(2.0, 0.5, 0.0, 0.0, 0.0, 3);
  const std::vector<double> rates = Schedule::sqrt_decay(2.0, 5).rates();
  const double beta = beta_of(0.5, rates);
  const double at0 = theorem1_rhs(est, rates, {}, {}, 4.0);
  for (int T : {1, 5, 40}) {
    const std::vector<int> seq(static_cast<std::size_t>(T), 1);
    const std::vector<double> deltas(static_cast<std::size_t>(T), 0.0);
    const double ratio = theorem1_rhs(est, rates, seq, deltas, 4.0) / at0;
    EXPECT_NEAR(ratio, std::pow(1.0 - beta, T), 1e-15);
  }
}

TEST(Theorem1, MatchesIndependentEvaluation) {
  const ConstantEstimates est = flat_estimates(1.0, 1.0, 1.0, 1.0, 1.0, 2);
  const std::vector<double> rates = Schedule::sqrt_decay(1.0, 2).rates();
  const std::vector<int> seq{0, 1, 0};
  const std::vector<double> ones(3, 1.0);
  const double got = theorem1_rhs(est, rates, seq, ones, 1.0);
  const double want = oracle::theorem1(1.0, 1.0, 1.0, rates, ones, ones, ones, 1.0);
  EXPECT_NEAR(got, want, 1e-12 * std::abs(want));
}

TEST(Theorem1, MatchesIndependentEvaluationOnMixedSeries) {
  RandomStream s(8);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t M = 1 + s.uniform_index(4);
    ConstantEstimates est = flat_estimates(1.0 + 4 * s.uniform(), 0.0, 3 * s.uniform(), 0.0, 0.0, M);
    est.mu = est.L * (0.05 + 0.9 * s.uniform());
    for (std::size_t m = 0; m < M; ++m) {
      est.tau_m[m] = s.uniform();
      est.theta_m_sq[m] = s.uniform();
    }
    const Schedule schedule = Schedule::sqrt_decay(est.L, 1 + static_cast<int>(s.uniform_index(8)));
    const std::size_t T = s.uniform_index(30);
    std::vector<int> seq;
    std::vector<double> deltas, tau, theta;
    for (std::size_t t = 0; t < T; ++t) {
      seq.push_back(static_cast<int>(s.uniform_index(M)));
      deltas.push_back(2 * s.uniform() - 0.5);
      tau.push_back(est.tau_m[static_cast<std::size_t>(seq.back())]);
      theta.push_back(est.theta_m_sq[static_cast<std::size_t>(seq.back())]);
    }
    const double got = theorem1_rhs(est, schedule.rates(), seq, deltas, 2.5);
    const double want = oracle::theorem1(est.L, est.mu, est.G, schedule.rates(), tau, deltas, theta, 2.5);
    ASSERT_NEAR(got, want, 1e-12 * std::max(1.0, std::abs(want))) << "rep " << rep;
  }
}

TEST(Theorem1, Preconditions) {
  const ConstantEstimates est = flat_estimates(1.0, 1.0, 0.0, 0.0, 0.0, 1);
  // eta above 1/(2LK).
  EXPECT_THROW(theorem1_rhs(est, std::vector<double>{0.6}, {}, {}, 1.0), PreconditionError);
  // beta = 0 when mu = 0.
  ConstantEstimates flat = est;
  flat.mu = 0.0;
  try {
    theorem1_rhs(flat, std::vector<double>{0.5}, {}, {}, 1.0);
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
}

TEST(Theorem2, SingleStepNoiseless) {
  ConstantEstimates est = flat_estimates(2.0, 0.0, 0.0, 0.0, 0.0, 1);
  const std::vector<double> rates{0.5};
  const std::vector<int> seq(8, 0);
  EXPECT_NEAR(theorem2_rhs(est, rates, seq, 3.0), 4.0 * 2.0 * 3.0 / 8.0, 1e-15);
}

TEST(Theorem2, LeadingTermScalesAsOneOverT) {
  ConstantEstimates est = flat_estimates(1.0, 0.0, 0.0, 0.0, 0.0, 1);
  const std::vector<double> rates = Schedule::sqrt_decay(1.0, 4).rates();
  const double r10 = theorem2_rhs(est, rates, std::vector<int>(10, 0), 5.0);
  const double r100 = theorem2_rhs(est, rates, std::vector<int>(100, 0), 5.0);
  EXPECT_NEAR(r10 / r100, 10.0, 1e-12);
}

TEST(Theorem2, MatchesIndependentEvaluation) {
  ConstantEstimates est = flat_estimates(1.5, 0.0, 0.0, 0.0, 0.0, 3);
  est.theta_m_sq = {0.2, 1.7, 0.05};
  est.sigma_sq = 0.4;
  const std::vector<double> rates = Schedule::sqrt_decay(1.5, 16).rates();
  const std::vector<int> seq{0, 1, 2, 1, 0, 0, 2, 1, 1};
  std::vector<double> theta;
  for (int m : seq) theta.push_back(est.theta_m_sq[static_cast<std::size_t>(m)]);
  const double want = oracle::theorem2(1.5, 0.4, rates, theta, 2.25);
  EXPECT_NEAR(theorem2_rhs(est, rates, seq, 2.25), want, 1e-12 * want);
}

TEST(Theorem2, Precondition) {
  ConstantEstimates est = flat_estimates(1.0, 0.0, 0.0, 0.0, 0.0, 1);
  EXPECT_THROW(theorem2_rhs(est, std::vector<double>{0.3, 0.6}, std::vector<int>{0}, 1.0), PreconditionError);
  EXPECT_NO_THROW(theorem2_rhs(est, std::vector<double>{0.5, 0.5}, std::vector<int>{0}, 1.0));
}

// Raising any of G^2, theta^2, tau, sigma^2, F0 - F* never lowers a bound.
TEST(Bounds, MonotoneInEachConstant) {
  RandomStream s(9);
  for (int rep = 0; rep < 50; ++rep) {
    ConstantEstimates est = flat_estimates(1.0 + s.uniform(), 0.0, s.uniform(), s.uniform(), s.uniform(), 2);
    est.mu = 0.5 * est.L;
    est.sigma_sq = s.uniform();
    const std::vector<double> rates = Schedule::sqrt_decay(est.L, 3).rates();
    const std::vector<int> seq{0, 1, 1, 0, 1};
    const std::vector<double> deltas{0.3, 0.1, -0.05, 0.2, 0.0};
    const double b1 = theorem1_rhs(est, rates, seq, deltas, 1.0);
    const double b2 = theorem2_rhs(est, rates, seq, 1.0);
    const double bump = 0.1 + s.uniform();
    ConstantEstimates e = est;
    e.G = std::sqrt(est.G * est.G + bump);
    ASSERT_GE(theorem1_rhs(e, rates, seq, deltas, 1.0), b1);
    e = est;
    e.theta_m_sq[1] += bump;
    ASSERT_GE(theorem1_rhs(e, rates, seq, deltas, 1.0), b1);
    ASSERT_GE(theorem2_rhs(e, rates, seq, 1.0), b2);
    e = est;
    e.tau_m[0] += bump;
    ASSERT_GE(theorem1_rhs(e, rates, seq, deltas, 1.0), b1);
    e = est;
    e.sigma_sq += bump;
    ASSERT_GE(theorem2_rhs(e, rates, seq, 1.0), b2);
    ASSERT_GE(theorem2_rhs(est, rates, seq, 1.0 + bump), b2);
    ASSERT_GE(theorem1_rhs(est, rates, seq, deltas, 1.0 + bump), b1);
  }
}

TEST(FitLinearRate, Examples) {
  std::vector<double> geometric;
  for (int t = 0; t < 10; ++t) geometric.push_back(8.0 * std::pow(0.5, t));
  const RateFit fit = fit_linear_rate(geometric);
  EXPECT_NEAR(fit.rho, 0.5, 1e-10);
  EXPECT_NEAR(fit.C, 8.0, 1e-10);
  EXPECT_NEAR(fit.residual, 0.0, 1e-10);
  EXPECT_NEAR(fit_linear_rate(std::vector<double>(7, 3.0)).rho, 1.0, 1e-12);
  EXPECT_THROW(fit_linear_rate(std::vector<double>{1, 1, 1, 1}), ContractViolation);
  EXPECT_THROW(fit_linear_rate(std::vector<double>{1, 1, 0, 1, 1}), ContractViolation);
}

TEST(FitLinearRate, NoisyGeometricSeries) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RandomStream s(seed);
    const double rho = 0.6 + 0.35 * s.uniform();
    std::vector<double> gaps;
    for (int t = 0; t < 40; ++t) gaps.push_back(5.0 * std::pow(rho, t) * (1.0 + 0.05 * (2.0 * s.uniform() - 1.0)));
    EXPECT_NEAR(fit_linear_rate(gaps).rho, rho, 0.02) << "seed " << seed;
  }
}

TEST(CheckTrace, HomogeneousNoiselessQuadraticHolds) {
  PipelineOptions o;
  o.noise = 0.0;
  o.lambda = 1000.0;
  o.policy = ClusterPolicy::iid_clusters;
  const Pipeline p = run_pipeline(11, o);
  for (BoundKind kind : {BoundKind::thm1, BoundKind::thm2}) {
    const BoundReport r = check_trace_against_bound(p.run, kind, p.est, p.schedule, p.problem());
    EXPECT_TRUE(r.holds) << to_string(kind);
    EXPECT_GT(r.min_margin, 0.0) << to_string(kind);
    EXPECT_EQ(r.rows.size(), kind == BoundKind::thm1 ? 41u : 40u);
  }
}

TEST(CheckTrace, InitialRowIsSmoothnessBound) {
  const Pipeline p = run_pipeline(12, PipelineOptions{});
  const BoundReport r = check_trace_against_bound(p.run, BoundKind::thm1, p.est, p.schedule, p.problem());
  const BoundRow& first = r.rows.front();
  EXPECT_EQ(first.T, 0);
  EXPECT_DOUBLE_EQ(first.bound, 0.5 * p.est.L * norm_sq(p.run.iterates.front() - *p.est.w_star));
  EXPECT_LE(first.measured, first.bound);
}

TEST(CheckTrace, FullBatchIidThm2ReducesToLeadingTerm) {
  PipelineOptions o;
  o.policy = ClusterPolicy::iid_clusters;
  o.lambda = 1000.0;
  const Pipeline p = run_pipeline(13, o);
  for (double th : p.est.theta_m_sq) EXPECT_EQ(th, 0.0);
  const BoundReport r = check_trace_against_bound(p.run, BoundKind::thm2, p.est, p.schedule, p.problem());
  EXPECT_TRUE(r.holds);
  const double f0 = p.run.trace.front().loss - *p.est.f_star;
  double sum = 0.0;
  for (double eta : p.schedule.rates()) sum += eta;
  const BoundRow& last = r.rows.back();
  EXPECT_NEAR(last.bound, 4.0 * f0 / (40.0 * sum) + 2.0 * p.est.sigma_sq, 1e-12 * last.bound);
}

TEST(CheckTrace, MlpThm1IsUnsupported) {
  RandomStream s(14);
  const Partition partition{gen::shards(s, 2, 5, 5, 2, false), 2};
  const auto clusters = make_clusters(partition, {{0}, {1}});
  const LossModel model = LossModel::mlp(2, 3);
  const ConstantEstimates est = estimate_constants(model, partition, clusters, RandomStream(1));
  RunConfig config;
  config.rounds = 3;
  config.schedule = Schedule::sqrt_decay(est.L, 2);
  config.initial = gen::vector(s, model.dim(), 0.3);
  const Problem problem{model, partition, clusters, std::nullopt, false};
  const RunResult run = run_fedchs(config, problem, path_graph(2));
  EXPECT_THROW(check_trace_against_bound(run, BoundKind::thm1, est, config.schedule, problem),
               UnsupportedModelError);
  EXPECT_NO_THROW(check_trace_against_bound(run, BoundKind::thm2, est, config.schedule, problem));
}

// Measured traces stay under both bounds across seeded configurations of the
// strongly convex models.
TEST(CheckTrace, PropertyOverSeededConfigurations) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomStream s(seed + 500);
    PipelineOptions o;
    o.logistic = seed % 2 == 1;
    o.kind = o.logistic ? DatasetKind::gaussian_blobs : DatasetKind::linear_regression;
    o.lambda = std::pow(10.0, -1.0 + 3.0 * s.uniform());
    o.clients = 6 + s.uniform_index(5);
    o.clusters = 2 + s.uniform_index(3);
    o.policy = static_cast<ClusterPolicy>(s.uniform_index(3));
    o.batch = s.uniform_index(2) == 0 ? 0 : 8;
    o.rounds = 30;
    o.steps = 2 + static_cast<int>(s.uniform_index(6));
    const Pipeline p = run_pipeline(seed, o);
    for (BoundKind kind : {BoundKind::thm1, BoundKind::thm2}) {
      const BoundReport r = check_trace_against_bound(p.run, kind, p.est, p.schedule, p.problem());
      EXPECT_TRUE(r.holds) << "seed " << seed << " " << to_string(kind) << " margin " << r.min_margin;
    }
  }
}

TEST(Json, ReportCarriesRowsAndConstants) {
  const Pipeline p = run_pipeline(15, PipelineOptions{});
  const BoundReport r = check_trace_against_bound(p.run, BoundKind::thm1, p.est, p.schedule, p.problem());
  const auto j = to_json(r);
  EXPECT_EQ(j["rows"].size(), r.rows.size());
  const auto c = to_json(p.est);
  EXPECT_DOUBLE_EQ(c["L"].get<double>(), p.est.L);
}
