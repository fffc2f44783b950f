#include "fedchs/losses.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "fedchs/errors.hpp"

namespace fedchs {

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double linear_output(std::span<const double> w, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * x[i];
  return acc;
}

void check_sample(const LossModel& model, const ModelVector& w, const Sample& z) {
  if (w.dim() != model.dim()) {
    throw ContractViolation("loss evaluation: parameter dimension " + std::to_string(w.dim()) +
                            " does not match model dimension " + std::to_string(model.dim()));
  }
  if (z.x.size() != model.input_dim()) {
    throw ContractViolation("loss evaluation: feature length " + std::to_string(z.x.size()) +
                            " does not match model input dimension " +
                            std::to_string(model.input_dim()));
  }
}

void check_weights(std::span<const double> weights, std::size_t clients) {
  if (weights.size() != clients) throw ContractViolation("weights and shards differ in length");
  double total = 0.0;
  for (double g : weights) {
    if (!(g >= 0.0)) throw ContractViolation("weights must be nonnegative");
    total += g;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ContractViolation("weights must sum to 1 (got " + std::to_string(total) + ")");
  }
}

}  // namespace

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::quadratic: return "quadratic";
    case ModelKind::logistic: return "logistic";
    case ModelKind::mlp: return "mlp";
  }
  return "unknown";
}

LossModel::LossModel(ModelKind kind, std::size_t input_dim, std::size_t hidden, double mu_reg)
    : kind_(kind), input_dim_(input_dim), hidden_(hidden), mu_reg_(mu_reg) {
  if (input_dim == 0) throw ContractViolation("LossModel: input dimension must be positive");
  dim_ = kind == ModelKind::mlp ? hidden * input_dim + 2 * hidden + 1 : input_dim;
}

LossModel LossModel::quadratic(std::size_t input_dim) {
  return LossModel(ModelKind::quadratic, input_dim, 0, 0.0);
}

LossModel LossModel::logistic(std::size_t input_dim, double mu_reg) {
  if (!(mu_reg >= 0.0)) throw ContractViolation("logistic: mu_reg must be nonnegative");
  return LossModel(ModelKind::logistic, input_dim, 0, mu_reg);
}

LossModel LossModel::mlp(std::size_t input_dim, std::size_t hidden) {
  if (hidden == 0) throw ContractViolation("mlp: hidden width must be positive");
  return LossModel(ModelKind::mlp, input_dim, hidden, 0.0);
}

double LossModel::predict(const ModelVector& w, std::span<const double> x) const {
  const auto p = w.values();
  if (kind_ != ModelKind::mlp) return linear_output(p, x);
  const std::size_t h_count = hidden_;
  const auto bias = p.subspan(h_count * input_dim_, h_count);
  const auto out_w = p.subspan(h_count * input_dim_ + h_count, h_count);
  double out = p[dim_ - 1];
  for (std::size_t j = 0; j < h_count; ++j) {
    const double a = linear_output(p.subspan(j * input_dim_, input_dim_), x) + bias[j];
    out += out_w[j] * std::tanh(a);
  }
  return out;
}

int LossModel::classify(const ModelVector& w, std::span<const double> x) const {
  const double out = predict(w, x);
  if (kind_ == ModelKind::logistic) return out >= 0.0 ? 1 : 0;
  return out >= 0.5 ? 1 : 0;
}

double accumulate_sample(const LossModel& model, const ModelVector& w, const Sample& z,
                         double scale, ModelVector& grad) {
  const auto p = w.values();
  auto g = grad.values();
  const std::span<const double> x = z.x;
  switch (model.kind()) {
    case ModelKind::quadratic: {
      const double r = linear_output(p, x) - z.y;
      for (std::size_t i = 0; i < x.size(); ++i) g[i] += scale * r * x[i];
      return 0.5 * r * r;
    }
    case ModelKind::logistic: {
      const double m = linear_output(p, x);
      const double mu = model.mu_reg();
      const double coef = sigmoid(m) - z.y;
      double reg = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        g[i] += scale * (coef * x[i] + mu * p[i]);
        reg += p[i] * p[i];
      }
      return softplus(m) - z.y * m + 0.5 * mu * reg;
    }
    case ModelKind::mlp: {
      const std::size_t d_in = model.input_dim();
      const std::size_t h_count = model.hidden();
      const std::size_t bias_off = h_count * d_in;
      const std::size_t out_off = bias_off + h_count;
      const std::size_t c_off = out_off + h_count;
      // Forward pass; hidden activations are kept for back-propagation.
      std::vector<double> act(h_count);
      double out = p[c_off];
      for (std::size_t j = 0; j < h_count; ++j) {
        act[j] = std::tanh(linear_output(p.subspan(j * d_in, d_in), x) + p[bias_off + j]);
        out += p[out_off + j] * act[j];
      }
      const double r = out - z.y;
      g[c_off] += scale * r;
      for (std::size_t j = 0; j < h_count; ++j) {
        g[out_off + j] += scale * r * act[j];
        const double delta = r * p[out_off + j] * (1.0 - act[j] * act[j]);
        g[bias_off + j] += scale * delta;
        for (std::size_t i = 0; i < d_in; ++i) g[j * d_in + i] += scale * delta * x[i];
      }
      return 0.5 * r * r;
    }
  }
  return 0.0;
}

LossAndGrad sample_loss_and_grad(const LossModel& model, const ModelVector& w, const Sample& z) {
  check_sample(model, w, z);
  LossAndGrad out{0.0, ModelVector(model.dim())};
  out.loss = accumulate_sample(model, w, z, 1.0, out.grad);
  return out;
}

double sample_loss(const LossModel& model, const ModelVector& w, const Sample& z) {
  check_sample(model, w, z);
  const auto p = w.values();
  switch (model.kind()) {
    case ModelKind::quadratic: {
      const double r = linear_output(p, z.x) - z.y;
      return 0.5 * r * r;
    }
    case ModelKind::logistic: {
      const double m = linear_output(p, z.x);
      double reg = 0.0;
      for (double v : p) reg += v * v;
      return softplus(m) - z.y * m + 0.5 * model.mu_reg() * reg;
    }
    case ModelKind::mlp: {
      const double r = model.predict(w, z.x) - z.y;
      return 0.5 * r * r;
    }
  }
  return 0.0;
}

LossAndGrad client_loss_and_grad(const LossModel& model, const ModelVector& w,
                                 std::span<const Sample> shard) {
  if (shard.empty()) throw EmptyShardError("client_loss_and_grad: empty shard");
  LossAndGrad out{0.0, ModelVector(model.dim())};
  const double scale = 1.0 / static_cast<double>(shard.size());
  double total = 0.0;
  for (const Sample& z : shard) {
    check_sample(model, w, z);
    total += accumulate_sample(model, w, z, scale, out.grad);
  }
  out.loss = total * scale;
  return out;
}

double client_loss(const LossModel& model, const ModelVector& w, std::span<const Sample> shard) {
  if (shard.empty()) throw EmptyShardError("client_loss: empty shard");
  double total = 0.0;
  for (const Sample& z : shard) total += sample_loss(model, w, z);
  return total / static_cast<double>(shard.size());
}

ModelVector batch_grad(const LossModel& model, const ModelVector& w, std::span<const Sample> shard,
                       std::span<const std::size_t> batch) {
  if (batch.empty()) throw ContractViolation("batch_grad: empty batch");
  ModelVector grad(model.dim());
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t idx : batch) {
    if (idx >= shard.size()) throw ContractViolation("batch_grad: batch index out of range");
    check_sample(model, w, shard[idx]);
    accumulate_sample(model, w, shard[idx], scale, grad);
  }
  return grad;
}

LossAndGrad global_loss_and_grad(const LossModel& model, const ModelVector& w,
                                 std::span<const Shard> shards, std::span<const double> weights) {
  check_weights(weights, shards.size());
  LossAndGrad out{0.0, ModelVector(model.dim())};
  for (std::size_t n = 0; n < shards.size(); ++n) {
    if (weights[n] == 0.0) continue;
    const LossAndGrad local = client_loss_and_grad(model, w, shards[n]);
    out.loss += weights[n] * local.loss;
    out.grad.axpy(weights[n], local.grad);
  }
  return out;
}

ModelVector quadratic_minimizer(const LossModel& model, std::span<const Shard> shards,
                                std::span<const double> weights) {
  if (model.kind() != ModelKind::quadratic) {
    throw ContractViolation("quadratic_minimizer: model is not quadratic");
  }
  check_weights(weights, shards.size());
  const auto d = static_cast<Eigen::Index>(model.dim());
  Eigen::MatrixXd second_moment = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (std::size_t n = 0; n < shards.size(); ++n) {
    if (weights[n] == 0.0) continue;
    if (shards[n].empty()) throw EmptyShardError("quadratic_minimizer: empty shard");
    const double scale = weights[n] / static_cast<double>(shards[n].size());
    for (const Sample& z : shards[n]) {
      if (z.x.size() != model.input_dim()) throw ContractViolation("quadratic_minimizer: bad sample");
      const Eigen::Map<const Eigen::VectorXd> x(z.x.data(), d);
      second_moment.noalias() += scale * x * x.transpose();
      rhs.noalias() += scale * z.y * x;
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(second_moment, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || lo <= 1e-12 * hi) {
    throw SingularSystemError("quadratic_minimizer: weighted second-moment matrix is singular");
  }
  const Eigen::VectorXd solution = second_moment.llt().solve(rhs);
  return ModelVector(std::vector<double>(solution.data(), solution.data() + d));
}

double classification_accuracy(const LossModel& model, const ModelVector& w,
                               std::span<const Shard> shards) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const Shard& shard : shards) {
    for (const Sample& z : shard) {
      correct += model.classify(w, z.x) == z.label ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace fedchs
