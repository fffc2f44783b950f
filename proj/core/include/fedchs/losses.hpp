#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedchs/numerics.hpp"

namespace fedchs {

/// One training example. `y` is the regression target or the class index;
/// `label` is the stratum used for partitioning (the class for
/// classification data, the sign bucket of y for regression data).
struct Sample {
  std::vector<double> x;
  double y = 0.0;
  int label = 0;
};

using Shard = std::vector<Sample>;

enum class ModelKind { quadratic, logistic, mlp };

const char* to_string(ModelKind kind);

/// Loss f(w, z) for one of three model families.
///
///  - quadratic: 1/2 (w.x - y)^2, d = d_in
///  - logistic:  softplus(w.x) - y w.x + mu_reg/2 ||w||^2 with y in {0, 1}, d = d_in
///  - mlp:       1/2 (v.tanh(W x + b) + c - y)^2, d = H d_in + 2H + 1
///
/// MLP parameters are packed as [W (row-major, H x d_in) | b (H) | v (H) | c].
class LossModel {
 public:
  static LossModel quadratic(std::size_t input_dim);
  static LossModel logistic(std::size_t input_dim, double mu_reg);
  static LossModel mlp(std::size_t input_dim, std::size_t hidden);

  ModelKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden() const { return hidden_; }
  double mu_reg() const { return mu_reg_; }

  // True for the families with a known positive strong-convexity constant.
  bool strongly_convex() const { return kind_ != ModelKind::mlp; }

  // Raw model output (w.x for the linear models, network output for mlp).
  double predict(const ModelVector& w, std::span<const double> x) const;
  // Binary decision: logistic thresholds w.x at 0, the squared-error models
  // threshold the output at 0.5.
  int classify(const ModelVector& w, std::span<const double> x) const;

 private:
  LossModel(ModelKind kind, std::size_t input_dim, std::size_t hidden, double mu_reg);

  ModelKind kind_;
  std::size_t input_dim_;
  std::size_t hidden_;
  double mu_reg_;
  std::size_t dim_;
};

struct LossAndGrad {
  double loss = 0.0;
  ModelVector grad;
};

LossAndGrad sample_loss_and_grad(const LossModel& model, const ModelVector& w, const Sample& z);

// Adds scale * grad f(w, z) into `grad` and returns f(w, z). Allocation-free
// hot path behind the shard and batch reductions.
double accumulate_sample(const LossModel& model, const ModelVector& w, const Sample& z,
                         double scale, ModelVector& grad);

double sample_loss(const LossModel& model, const ModelVector& w, const Sample& z);

/// f_n(w) and its gradient: exact mean over the shard in index order.
LossAndGrad client_loss_and_grad(const LossModel& model, const ModelVector& w,
                                 std::span<const Sample> shard);
double client_loss(const LossModel& model, const ModelVector& w, std::span<const Sample> shard);

/// Mean gradient over the shard members selected by `batch` (in the given order).
ModelVector batch_grad(const LossModel& model, const ModelVector& w, std::span<const Sample> shard,
                       std::span<const std::size_t> batch);

/// F(w) = sum_n weights[n] f_n(w); weights must be nonnegative and sum to 1
/// within 1e-12. Clients with zero weight are skipped.
LossAndGrad global_loss_and_grad(const LossModel& model, const ModelVector& w,
                                 std::span<const Shard> shards, std::span<const double> weights);

/// Minimizer of the weighted quadratic objective via the normal equations.
/// Throws SingularSystemError when the weighted second-moment matrix is
/// (numerically) singular.
ModelVector quadratic_minimizer(const LossModel& model, std::span<const Shard> shards,
                                std::span<const double> weights);

/// Fraction of samples whose classify() matches the label.
double classification_accuracy(const LossModel& model, const ModelVector& w,
                               std::span<const Shard> shards);

}  // namespace fedchs
