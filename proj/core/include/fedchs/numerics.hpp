#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace fedchs {

/// Dense parameter vector in double precision.
///
/// All reductions (dot, norm) run left to right over the index range so the
/// same inputs always give the same bits.
class ModelVector {
 public:
  ModelVector() = default;
  explicit ModelVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit ModelVector(std::vector<double> values) : values_(std::move(values)) {}
  ModelVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t dim() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& raw() const { return values_; }

  ModelVector& operator+=(const ModelVector& other);
  ModelVector& operator-=(const ModelVector& other);
  ModelVector& operator*=(double scale);

  // this += scale * x
  void axpy(double scale, const ModelVector& x);
  void set_zero();

  bool all_finite() const;

  friend bool operator==(const ModelVector&, const ModelVector&) = default;

 private:
  std::vector<double> values_;
};

ModelVector operator+(ModelVector a, const ModelVector& b);
ModelVector operator-(ModelVector a, const ModelVector& b);
ModelVector operator*(double scale, ModelVector v);

double dot(const ModelVector& a, const ModelVector& b);
double norm_sq(const ModelVector& v);
double norm(const ModelVector& v);

// Throws ContractViolation when the dimensions differ.
void require_same_dim(const ModelVector& a, const ModelVector& b, const char* where);

/// Counter-based random stream (SplitMix64 over a keyed counter).
///
/// Draw i of a stream depends only on (key, i), so results are identical on
/// every platform and substreams never interfere with each other. The
/// distributions are implemented here rather than taken from <random>, whose
/// normal/gamma algorithms are implementation-defined.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  // Independent stream keyed by this stream's key and the given tags. Does not
  // advance this stream.
  RandomStream substream(std::initializer_list<std::uint64_t> tags) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1).
  double uniform_open();
  // Uniform on {0, ..., n-1}; n must be positive.
  std::size_t uniform_index(std::size_t n);
  double normal();
  double gamma(double shape);
  std::vector<double> dirichlet(std::size_t n, double concentration);

  // `count` distinct indices from [0, population), in draw order (partial
  // Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  RandomStream(std::uint64_t seed, std::uint64_t key) : seed_(seed), key_(key) {}

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

using ScalarField = std::function<double(const ModelVector&)>;

inline constexpr double kDefaultFiniteDiffStep = 1e-5;

/// Central-difference gradient of `loss` at `w`.
///
/// Throws EvaluationError naming the coordinate when an evaluation is not
/// finite, and ContractViolation when eps is outside [1e-8, 1e-3].
ModelVector finite_diff_grad(const ScalarField& loss, const ModelVector& w,
                             double eps = kDefaultFiniteDiffStep);

/// ||a - b|| / max(||a||, ||b||, 1e-12).
double relative_error(const ModelVector& a, const ModelVector& b);

}  // namespace fedchs
