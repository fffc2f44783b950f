#include "fedchs/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "fedchs/errors.hpp"

namespace fedchs {

namespace {

using GradFn = std::function<ModelVector(const ModelVector&)>;

struct ClientMoments {
  Eigen::MatrixXd hessian;  // mean of x x^T
  Eigen::VectorXd moment;   // mean of x y
};

ClientMoments client_moments(const Shard& shard, std::size_t dim) {
  ClientMoments out{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)),
                    Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim))};
  for (const Sample& z : shard) {
    const Eigen::Map<const Eigen::VectorXd> x(z.x.data(), static_cast<Eigen::Index>(z.x.size()));
    out.hessian.noalias() += x * x.transpose();
    out.moment += z.y * x;
  }
  const double scale = 1.0 / static_cast<double>(shard.size());
  out.hessian *= scale;
  out.moment *= scale;
  return out;
}

double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::VectorXd as_eigen(const ModelVector& w) {
  return Eigen::Map<const Eigen::VectorXd>(w.raw().data(), static_cast<Eigen::Index>(w.dim()));
}

ModelVector as_model(const Eigen::VectorXd& v) {
  return ModelVector(std::vector<double>(v.data(), v.data() + v.size()));
}

// Uniform draw from the ball of radius `radius` around `centre`.
ModelVector ball_point(const ModelVector& centre, double radius, RandomStream& stream) {
  ModelVector u(centre.dim());
  for (std::size_t i = 0; i < u.dim(); ++i) u[i] = stream.normal();
  const double length = norm(u);
  if (length == 0.0) return centre;
  const double r = radius * std::pow(stream.uniform(), 1.0 / static_cast<double>(centre.dim()));
  ModelVector out = centre;
  out.axpy(r / length, u);
  return out;
}

// Gradient descent with step 1/L until ||grad|| <= tol.
ModelVector descend(const GradFn& grad, ModelVector w, double smoothness, double tol,
                    int max_iterations, const char* what) {
  const double step = 1.0 / smoothness;
  for (int it = 0; it < max_iterations; ++it) {
    const ModelVector g = grad(w);
    if (norm(g) <= tol) return w;
    w.axpy(-step, g);
  }
  throw EvaluationError(std::string("estimate_constants: ") + what + " did not reach tolerance in " +
                        std::to_string(max_iterations) + " iterations");
}

std::vector<double> cluster_values(std::span<const ClusterState> clusters,
                                   std::span<const double> per_client) {
  std::vector<double> out;
  for (const ClusterState& c : clusters) {
    double v = 0.0;
    for (std::size_t j = 0; j < c.clients.size(); ++j) {
      v += c.weights[j] * per_client[static_cast<std::size_t>(c.clients[j])];
    }
    out.push_back(v);
  }
  return out;
}

struct StepCoefficients {
  double tau = 0.0;
  double delta = 0.0;
  double g = 0.0;
  double theta = 0.0;
};

StepCoefficients step_coefficients(double L, std::span<const double> rates) {
  const double K = static_cast<double>(rates.size());
  StepCoefficients c;
  double prefix = 0.0;  // sum_{j<k} eta_j^2
  for (std::size_t k = 0; k < rates.size(); ++k) {
    const double eta = rates[k];
    const double drift = 2.0 * static_cast<double>(k) / K * prefix;
    c.tau += 6.0 * L * K * eta * eta;
    c.delta += 2.0 * eta * (1.0 - 2.0 * L * K * eta) * (L * K * eta - 1.0);
    c.g += drift;
    c.theta += K * eta * eta + drift;
    prefix += eta * eta;
  }
  return c;
}

void require_rates(std::span<const double> rates, const char* where) {
  if (rates.empty()) throw ContractViolation(std::string(where) + ": empty step-size schedule");
  for (double eta : rates) {
    if (!(eta > 0.0)) throw ContractViolation(std::string(where) + ": step sizes must be positive");
  }
}

}  // namespace

double local_curvature(const GradFn& grad, const ModelVector& w, RandomStream& stream,
                       int iterations) {
  ModelVector v(w.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) v[i] = stream.normal();
  double length = norm(v);
  if (length == 0.0) return 0.0;
  v *= 1.0 / length;
  const double eps = 1e-4 * std::max(1.0, norm(w));
  double ratio = 0.0;
  for (int it = 0; it < iterations; ++it) {
    ModelVector plus = w;
    plus.axpy(eps, v);
    ModelVector minus = w;
    minus.axpy(-eps, v);
    ModelVector hv = grad(plus) - grad(minus);
    hv *= 1.0 / (2.0 * eps);
    length = norm(hv);
    ratio = std::max(ratio, length);
    if (length == 0.0) break;
    v = (1.0 / length) * hv;
  }
  return ratio;
}

ConstantEstimates estimate_constants(const LossModel& model, const Partition& partition,
                                     std::span<const ClusterState> clusters, RandomStream stream,
                                     const EstimationOptions& options) {
  if (options.probe_count < 10) throw ContractViolation("estimate_constants: probe_count must be >= 10");
  if (partition.clients() == 0) throw ContractViolation("estimate_constants: empty partition");
  const std::size_t dim = model.dim();
  const std::size_t clients = partition.clients();
  const ModelVector w0 = options.w0 ? *options.w0 : ModelVector(dim);
  if (w0.dim() != dim) throw ContractViolation("estimate_constants: w0 has the wrong dimension");
  const std::vector<double> weights = partition.global_weights();

  ConstantEstimates est;
  est.kind = model.kind();

  auto client_grad = [&](std::size_t n) {
    return GradFn([&, n](const ModelVector& w) {
      return client_loss_and_grad(model, w, partition.shards[n]).grad;
    });
  };
  const GradFn global_grad = [&](const ModelVector& w) {
    return global_loss_and_grad(model, w, partition.shards, weights).grad;
  };

  std::vector<ClientMoments> moments;
  Eigen::MatrixXd global_hessian;
  Eigen::VectorXd global_moment;
  if (model.kind() == ModelKind::quadratic) {
    global_hessian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    global_moment = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t n = 0; n < clients; ++n) {
      moments.push_back(client_moments(partition.shards[n], dim));
      global_hessian += weights[n] * moments.back().hessian;
      global_moment += weights[n] * moments.back().moment;
    }
    for (const ClientMoments& m : moments) est.L = std::max(est.L, spectral_norm(m.hessian));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(global_hessian, Eigen::EigenvaluesOnly);
    est.mu = std::max(0.0, solver.eigenvalues().minCoeff());
    est.w_star = quadratic_minimizer(model, partition.shards, weights);
    for (std::size_t n = 0; n < clients; ++n) {
      const Shard& shard = partition.shards[n];
      Eigen::MatrixXd x(static_cast<Eigen::Index>(shard.size()), static_cast<Eigen::Index>(dim));
      Eigen::VectorXd y(static_cast<Eigen::Index>(shard.size()));
      for (std::size_t i = 0; i < shard.size(); ++i) {
        for (std::size_t j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = shard[i].x[j];
        y(static_cast<Eigen::Index>(i)) = shard[i].y;
      }
      const Eigen::VectorXd local = x.completeOrthogonalDecomposition().solve(y);
      est.f_n_star.push_back(client_loss(model, as_model(local), shard));
    }
  } else {
    // The logistic Hessian is largest at w = 0 (every margin at the sigmoid's
    // steepest point); the mlp has no such point, so every probe contributes.
    RandomStream curvature = stream.substream({1});
    const ModelVector origin(dim);
    est.L = local_curvature(global_grad, origin, curvature);
    for (std::size_t n = 0; n < clients; ++n) {
      est.L = std::max(est.L, local_curvature(client_grad(n), origin, curvature));
    }
    if (model.kind() == ModelKind::logistic) {
      est.mu = model.mu_reg();
      if (!(est.mu > 0.0)) {
        throw PreconditionError("estimate_constants: logistic model needs mu_reg > 0");
      }
      est.w_star = descend(global_grad, w0, est.L, options.solve_tolerance,
                           options.max_solve_iterations, "global minimizer");
      for (std::size_t n = 0; n < clients; ++n) {
        const ModelVector local = descend(client_grad(n), *est.w_star, est.L, options.solve_tolerance,
                                          options.max_solve_iterations, "client minimizer");
        est.f_n_star.push_back(client_loss(model, local, partition.shards[n]));
      }
    }
  }
  if (est.w_star) {
    est.f_star = global_loss_and_grad(model, *est.w_star, partition.shards, weights).loss;
  }

  const ModelVector centre = est.w_star ? *est.w_star : w0;
  double radius = est.w_star ? 2.0 * norm(w0 - *est.w_star) : 2.0;
  if (radius == 0.0) radius = 1.0;
  est.probe_radius = radius;

  std::vector<ModelVector> probes = {centre, w0};
  if (model.kind() == ModelKind::logistic) probes.push_back(ModelVector(dim));
  RandomStream probe_stream = stream.substream({2});
  while (probes.size() < options.probe_count + 2) probes.push_back(ball_point(centre, radius, probe_stream));

  if (model.kind() == ModelKind::mlp) {
    RandomStream curvature = stream.substream({3});
    for (const ModelVector& p : probes) {
      est.L = std::max(est.L, local_curvature(global_grad, p, curvature));
      for (std::size_t n = 0; n < clients; ++n) {
        est.L = std::max(est.L, local_curvature(client_grad(n), p, curvature));
      }
    }
  }

  // Sampled maxima over the probes.
  est.sigma_n_sq.assign(clients, 0.0);
  std::vector<LossAndGrad> at_probe(clients);
  for (const ModelVector& p : probes) {
    ModelVector global(dim);
    for (std::size_t n = 0; n < clients; ++n) {
      at_probe[n] = client_loss_and_grad(model, p, partition.shards[n]);
      global.axpy(weights[n], at_probe[n].grad);
      est.G = std::max(est.G, norm(at_probe[n].grad));
      const Shard& shard = partition.shards[n];
      if (options.batch_size == 0 || options.batch_size >= shard.size()) continue;
      for (const Sample& z : shard) {
        const double dev = norm_sq(at_probe[n].grad - sample_loss_and_grad(model, p, z).grad);
        est.sigma_n_sq[n] = std::max(est.sigma_n_sq[n], dev);
      }
    }
    for (const ClusterState& c : clusters) {
      ModelVector local(dim);
      for (std::size_t j = 0; j < c.clients.size(); ++j) {
        local.axpy(c.weights[j], at_probe[static_cast<std::size_t>(c.clients[j])].grad);
      }
      est.sigma_sq = std::max(est.sigma_sq, norm_sq(global - local));
    }
  }

  // Closed-form suprema over the probe ball where the gradients are affine
  // (quadratic) or L-Lipschitz (logistic).
  if (model.kind() == ModelKind::quadratic) {
    const Eigen::VectorXd c = as_eigen(centre);
    for (std::size_t n = 0; n < clients; ++n) {
      const ClientMoments& m = moments[n];
      const double at_centre = (m.hessian * c - m.moment).norm();
      est.G = std::max(est.G, at_centre + spectral_norm(m.hessian) * radius);
      const Shard& shard = partition.shards[n];
      if (options.batch_size == 0 || options.batch_size >= shard.size()) continue;
      for (const Sample& z : shard) {
        const Eigen::Map<const Eigen::VectorXd> x(z.x.data(), static_cast<Eigen::Index>(dim));
        const Eigen::MatrixXd a = x * x.transpose() - m.hessian;
        const Eigen::VectorXd b = z.y * x - m.moment;
        const double sup = (a * c - b).norm() + spectral_norm(a) * radius;
        est.sigma_n_sq[n] = std::max(est.sigma_n_sq[n], sup * sup);
      }
    }
    for (const ClusterState& cl : clusters) {
      Eigen::MatrixXd h = global_hessian;
      Eigen::VectorXd b = global_moment;
      for (std::size_t j = 0; j < cl.clients.size(); ++j) {
        const ClientMoments& m = moments[static_cast<std::size_t>(cl.clients[j])];
        h -= cl.weights[j] * m.hessian;
        b -= cl.weights[j] * m.moment;
      }
      const double sup = (h * c - b).norm() + spectral_norm(h) * radius;
      est.sigma_sq = std::max(est.sigma_sq, sup * sup);
    }
  } else if (model.kind() == ModelKind::logistic) {
    for (std::size_t n = 0; n < clients; ++n) {
      const double at_centre = norm(client_loss_and_grad(model, centre, partition.shards[n]).grad);
      est.G = std::max(est.G, at_centre + est.L * radius);
    }
  }

  est.theta_m_sq = cluster_values(clusters, est.sigma_n_sq);
  if (est.w_star) {
    std::vector<double> excess(clients);
    for (std::size_t n = 0; n < clients; ++n) {
      excess[n] = client_loss(model, *est.w_star, partition.shards[n]) - est.f_n_star[n];
    }
    est.tau_m = cluster_values(clusters, excess);
    for (const ClusterState& c : clusters) {
      est.delta_m.push_back(cluster_delta(model, partition, c, w0, *est.w_star));
    }
  }
  if (!options.rates.empty()) est.beta = beta_of(est.mu, options.rates);
  return est;
}

double cluster_delta(const LossModel& model, const Partition& partition,
                     const ClusterState& cluster, const ModelVector& w, const ModelVector& w_star) {
  double delta = 0.0;
  for (std::size_t j = 0; j < cluster.clients.size(); ++j) {
    const Shard& shard = partition.shards[static_cast<std::size_t>(cluster.clients[j])];
    delta += cluster.weights[j] * (client_loss(model, w, shard) - client_loss(model, w_star, shard));
  }
  return delta;
}

std::vector<double> delta_series(const LossModel& model, const Partition& partition,
                                 std::span<const ClusterState> clusters,
                                 std::span<const int> sequence, std::span<const ModelVector> iterates,
                                 const ModelVector& w_star) {
  if (iterates.size() < sequence.size()) {
    throw ContractViolation("delta_series: fewer iterates than rounds");
  }
  std::vector<double> out;
  out.reserve(sequence.size());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const ClusterState& c = clusters[static_cast<std::size_t>(sequence[t])];
    out.push_back(cluster_delta(model, partition, c, iterates[t], w_star));
  }
  return out;
}

double beta_of(double mu, std::span<const double> rates) {
  double sum = 0.0;
  for (double eta : rates) sum += eta;
  return 0.5 * mu * sum;
}

double theorem1_rhs(const ConstantEstimates& est, std::span<const double> rates,
                    std::span<const int> sequence, std::span<const double> deltas,
                    double w0_gap_sq) {
  if (est.kind == ModelKind::mlp || !est.w_star) {
    throw UnsupportedModelError("theorem1_rhs: unsupported model (needs strong convexity and w*)");
  }
  require_rates(rates, "theorem1_rhs");
  if (deltas.size() != sequence.size()) {
    throw ContractViolation("theorem1_rhs: one Delta value per round is required");
  }
  const double L = est.L;
  const double K = static_cast<double>(rates.size());
  const double beta = beta_of(est.mu, rates);
  if (!(beta > 0.0 && beta < 1.0)) {
    throw PreconditionError("theorem1_rhs: beta = " + std::to_string(beta) + " is outside (0, 1)");
  }
  const double cap = 1.0 / (2.0 * L * K);
  for (double eta : rates) {
    if (eta > cap * (1.0 + 1e-12)) {
      throw PreconditionError("theorem1_rhs: step size " + std::to_string(eta) +
                              " exceeds 1/(2LK) = " + std::to_string(cap));
    }
  }
  const StepCoefficients c = step_coefficients(L, rates);
  double s_tau = 0.0, s_delta = 0.0, s_one = 0.0, s_theta = 0.0;
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const auto m = static_cast<std::size_t>(sequence[t]);
    const double weight = std::pow(1.0 - beta, static_cast<double>(t));
    s_tau += weight * est.tau_m.at(m);
    s_delta += weight * deltas[t];
    s_one += weight;
    s_theta += weight * est.theta_m_sq.at(m);
  }
  const double T = static_cast<double>(sequence.size());
  return 0.5 * L *
         (std::pow(1.0 - beta, T) * w0_gap_sq + c.tau * s_tau + c.delta * s_delta +
          c.g * s_one * est.G * est.G + c.theta * s_theta);
}

double theorem2_rhs(const ConstantEstimates& est, std::span<const double> rates,
                    std::span<const int> sequence, double f0_minus_fstar) {
  require_rates(rates, "theorem2_rhs");
  if (sequence.empty()) throw ContractViolation("theorem2_rhs: needs T >= 1");
  const double L = est.L;
  const double K = static_cast<double>(rates.size());
  const double cap = 1.0 / (L * K);
  double sum = 0.0, sum_sq = 0.0;
  for (double eta : rates) {
    if (eta > cap * (1.0 + 1e-12)) {
      throw PreconditionError("theorem2_rhs: step size " + std::to_string(eta) +
                              " exceeds 1/(LK) = " + std::to_string(cap));
    }
    sum += eta;
    sum_sq += eta * eta;
  }
  const double T = static_cast<double>(sequence.size());
  double theta_sum = 0.0;
  for (int m : sequence) theta_sum += est.theta_m_sq.at(static_cast<std::size_t>(m));
  return 4.0 * f0_minus_fstar / (T * sum) + (2.0 * L * K * sum_sq / sum + 4.0) * theta_sum / T +
         2.0 * est.sigma_sq;
}

RateFit fit_linear_rate(std::span<const double> gaps) {
  if (gaps.size() < 5) throw ContractViolation("fit_linear_rate: needs at least 5 points");
  const double n = static_cast<double>(gaps.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t t = 0; t < gaps.size(); ++t) {
    if (!(gaps[t] > 0.0)) throw ContractViolation("fit_linear_rate: entries must be positive");
    sx += static_cast<double>(t);
    sy += std::log(gaps[t]);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t t = 0; t < gaps.size(); ++t) {
    const double dx = static_cast<double>(t) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(gaps[t]) - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double rss = 0.0;
  for (std::size_t t = 0; t < gaps.size(); ++t) {
    const double r = std::log(gaps[t]) - (intercept + slope * static_cast<double>(t));
    rss += r * r;
  }
  return {std::exp(slope), std::exp(intercept), std::sqrt(rss / n)};
}

const char* to_string(BoundKind kind) {
  return kind == BoundKind::thm1 ? "thm1" : "thm2";
}

BoundReport check_trace_against_bound(const RunResult& run, BoundKind kind,
                                      const ConstantEstimates& est, const Schedule& schedule,
                                      const Problem& problem) {
  const std::size_t T = run.trace.size();
  if (run.iterates.size() != T + 1) {
    throw ContractViolation("check_trace_against_bound: iterates must hold w^0 .. w^T");
  }
  std::vector<int> sequence;
  for (const TraceRecord& row : run.trace) {
    if (!row.cluster) throw ContractViolation("check_trace_against_bound: trace has no cluster sequence");
    sequence.push_back(*row.cluster);
  }
  const std::vector<double> rates = schedule.rates();
  const std::vector<double> weights = problem.partition.global_weights();
  auto loss_at = [&](const ModelVector& w) {
    return global_loss_and_grad(problem.model, w, problem.partition.shards, weights).loss;
  };

  BoundReport report;
  report.kind = kind;
  for (int m : sequence) {
    const auto idx = static_cast<std::size_t>(m);
    report.theta_max = std::max(report.theta_max, std::sqrt(est.theta_m_sq.at(idx)));
    if (!est.tau_m.empty()) report.tau_max = std::max(report.tau_max, est.tau_m.at(idx));
  }

  if (kind == BoundKind::thm1) {
    if (!est.w_star || !est.f_star) {
      throw UnsupportedModelError("check_trace_against_bound: unsupported model for thm1");
    }
    const std::vector<double> deltas = delta_series(problem.model, problem.partition,
                                                    problem.clusters, sequence, run.iterates,
                                                    *est.w_star);
    for (double d : deltas) report.delta_max = std::max(report.delta_max, std::abs(d));
    const double w0_gap = norm_sq(run.iterates.front() - *est.w_star);
    for (std::size_t t = 0; t <= T; ++t) {
      const double measured = loss_at(run.iterates[t]) - *est.f_star;
      const double bound = theorem1_rhs(est, rates, std::span(sequence).first(t),
                                        std::span(deltas).first(t), w0_gap);
      report.rows.push_back({static_cast<int>(t), measured, bound, bound - measured});
    }
  } else {
    if (T == 0) throw ContractViolation("check_trace_against_bound: thm2 needs T >= 1");
    const double f0_gap = loss_at(run.iterates.front()) - est.f_star.value_or(0.0);
    double grad_sum = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
      grad_sum += run.trace[t - 1].grad_sq_norm;
      const double measured = grad_sum / static_cast<double>(t);
      const double bound = theorem2_rhs(est, rates, std::span(sequence).first(t), f0_gap);
      report.rows.push_back({static_cast<int>(t), measured, bound, bound - measured});
    }
  }
  report.min_margin = report.rows.front().margin;
  for (const BoundRow& row : report.rows) {
    report.min_margin = std::min(report.min_margin, row.margin);
    if (row.measured > row.bound) report.holds = false;
  }
  return report;
}

nlohmann::json to_json(const ConstantEstimates& est) {
  nlohmann::json j;
  j["model"] = to_string(est.kind);
  j["L"] = est.L;
  j["mu"] = est.mu;
  j["G"] = est.G;
  j["sigma_sq"] = est.sigma_sq;
  j["beta"] = est.beta;
  j["probe_radius"] = est.probe_radius;
  j["sigma_n_sq"] = est.sigma_n_sq;
  j["theta_m_sq"] = est.theta_m_sq;
  j["tau_m"] = est.tau_m;
  j["delta_m"] = est.delta_m;
  j["f_n_star"] = est.f_n_star;
  if (est.f_star) j["f_star"] = *est.f_star;
  if (est.w_star) j["w_star"] = est.w_star->raw();
  return j;
}

nlohmann::json to_json(const BoundReport& report) {
  nlohmann::json j;
  j["kind"] = to_string(report.kind);
  j["holds"] = report.holds;
  j["min_margin"] = report.min_margin;
  j["delta_max"] = report.delta_max;
  j["theta_max"] = report.theta_max;
  j["tau_max"] = report.tau_max;
  nlohmann::json rows = nlohmann::json::array();
  for (const BoundRow& row : report.rows) {
    rows.push_back({{"T", row.T}, {"measured", row.measured}, {"bound", row.bound}, {"margin", row.margin}});
  }
  j["rows"] = std::move(rows);
  return j;
}

}  // namespace fedchs
