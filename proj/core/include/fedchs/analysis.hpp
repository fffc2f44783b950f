#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedchs/data.hpp"
#include "fedchs/engine.hpp"
#include "fedchs/losses.hpp"
#include "fedchs/numerics.hpp"

namespace fedchs {

/// Problem constants behind the convergence bounds.
///
/// theta_m_sq[m] = sum_n gamma_n^m sigma_n_sq[n], and tau_m[m] =
/// sum_n gamma_n^m (f_n(w*) - f_n*). `delta_m` is evaluated at the probe
/// centre (w^0 when given). mu, w_star, f_star, f_n_star and tau_m are
/// absent (zero / empty) for the mlp model.
struct ConstantEstimates {
  ModelKind kind = ModelKind::quadratic;
  double L = 0.0;
  double mu = 0.0;
  double G = 0.0;
  std::vector<double> sigma_n_sq;
  std::vector<double> theta_m_sq;
  double sigma_sq = 0.0;
  std::optional<ModelVector> w_star;
  std::optional<double> f_star;
  std::vector<double> f_n_star;
  std::vector<double> delta_m;
  std::vector<double> tau_m;
  // (mu/2) sum_k eta_k for EstimationOptions::rates; 0 when no rates were given.
  double beta = 0.0;
  // Probe ball used for the sampled maxima.
  double probe_radius = 0.0;
};

struct EstimationOptions {
  std::size_t probe_count = 32;
  // Mini-batch size the run will use; 0 (or >= the shard) means full batches
  // and zero sampling variance.
  std::size_t batch_size = 0;
  // w^0; the zero vector when unset.
  std::optional<ModelVector> w0;
  // Step sizes for the beta field.
  std::vector<double> rates;
  // Gradient-norm tolerance of the inner solves for w* and f_n* (logistic).
  double solve_tolerance = 1e-9;
  int max_solve_iterations = 200000;
};

/// Quadratic: L is the largest client-Hessian eigenvalue, mu the smallest
/// eigenvalue of the weighted global Hessian, w* and f_n* exact, and G the
/// supremum of ||grad f_n|| over the probe ball. Logistic: mu = mu_reg, L from
/// secant ratios along power-iterated directions at the probes (w = 0, where
/// the Hessian peaks, is always a probe), w* and f_n* by gradient descent to
/// `solve_tolerance`. MLP: L and G from probes only.
///
/// sigma_n_sq is the largest per-sample deviation ||grad f_n - grad f(., z)||^2
/// over the probes, which bounds the deviation of every mini-batch mean.
/// sigma_sq is the largest ||grad F - grad F_m||^2 over the probes.
ConstantEstimates estimate_constants(const LossModel& model, const Partition& partition,
                                     std::span<const ClusterState> clusters, RandomStream stream,
                                     const EstimationOptions& options = {});

// Largest directional curvature of `loss` near `w`, by power iteration on
// finite-difference Hessian-vector products.
double local_curvature(const std::function<ModelVector(const ModelVector&)>& grad,
                       const ModelVector& w, RandomStream& stream, int iterations = 30);

/// Delta_m(w) = sum_n gamma_n^m (f_n(w) - f_n(w*)).
double cluster_delta(const LossModel& model, const Partition& partition,
                     const ClusterState& cluster, const ModelVector& w, const ModelVector& w_star);

/// Delta_{m(t)} at w^t for t = 0 .. sequence.size()-1.
std::vector<double> delta_series(const LossModel& model, const Partition& partition,
                                 std::span<const ClusterState> clusters,
                                 std::span<const int> sequence, std::span<const ModelVector> iterates,
                                 const ModelVector& w_star);

double beta_of(double mu, std::span<const double> rates);

/// Optimality-gap bound after T = sequence.size() rounds:
///
///   L/2 (1-b)^T ||w0-w*||^2
/// + L/2 sum_k 6 L K eta_k^2                                sum_t (1-b)^t tau_{m(t)}
/// + L/2 sum_k 2 eta_k (1 - 2 L K eta_k)(L K eta_k - 1)      sum_t (1-b)^t Delta_t
/// + L/2 sum_k (2k/K) sum_{j<k} eta_j^2                      sum_t (1-b)^t G^2
/// + L/2 sum_k (K eta_k^2 + (2k/K) sum_{j<k} eta_j^2)        sum_t (1-b)^t theta_{m(t)}^2
///
/// with b = (mu/2) sum_k eta_k. Throws PreconditionError unless 0 < b < 1 and
/// every eta_k <= 1/(2LK), and UnsupportedModelError for mlp estimates.
double theorem1_rhs(const ConstantEstimates& est, std::span<const double> rates,
                    std::span<const int> sequence, std::span<const double> deltas,
                    double w0_gap_sq);

/// Stationarity bound after T = sequence.size() >= 1 rounds:
///
///   4 (F0 - F*) / (T sum eta) + (2 L K sum eta^2 / sum eta + 4) mean_t theta_{m(t)}^2
/// + 2 sigma^2
///
/// Throws PreconditionError unless every eta_k <= 1/(LK).
double theorem2_rhs(const ConstantEstimates& est, std::span<const double> rates,
                    std::span<const int> sequence, double f0_minus_fstar);

struct RateFit {
  double rho = 1.0;
  double C = 0.0;
  // Root-mean-square residual of the fit in log space.
  double residual = 0.0;
};

/// Least-squares fit of log gap_t = log C + t log rho. Needs at least five
/// positive entries.
RateFit fit_linear_rate(std::span<const double> gaps);

enum class BoundKind { thm1, thm2 };

const char* to_string(BoundKind kind);

struct BoundRow {
  int T = 0;
  double measured = 0.0;
  double bound = 0.0;
  double margin = 0.0;
};

struct BoundReport {
  BoundKind kind = BoundKind::thm1;
  std::vector<BoundRow> rows;
  bool holds = true;
  double min_margin = 0.0;
  // Trace maxima of |Delta_{m(t)}|, theta_{m(t)} and tau_{m(t)}.
  double delta_max = 0.0;
  double theta_max = 0.0;
  double tau_max = 0.0;
};

/// Checks a Fed-CHS run against a bound at every prefix. thm1 compares
/// F(w^T') - F(w*) with theorem1_rhs for T' = 0 .. T; thm2 compares
/// (1/T') sum_{t<T'} ||grad F(w^t)||^2 with theorem2_rhs for T' = 1 .. T.
/// Without a known F* (mlp), thm2 uses F* >= 0, which can only loosen the bound.
BoundReport check_trace_against_bound(const RunResult& run, BoundKind kind,
                                      const ConstantEstimates& est, const Schedule& schedule,
                                      const Problem& problem);

nlohmann::json to_json(const ConstantEstimates& est);
nlohmann::json to_json(const BoundReport& report);

}  // namespace fedchs
