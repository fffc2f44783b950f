#include "fedchs/numerics.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "fedchs/errors.hpp"

namespace fedchs {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

ModelVector& ModelVector::operator+=(const ModelVector& other) {
  require_same_dim(*this, other, "ModelVector::operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ModelVector& ModelVector::operator-=(const ModelVector& other) {
  require_same_dim(*this, other, "ModelVector::operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ModelVector& ModelVector::operator*=(double scale) {
  for (double& v : values_) v *= scale;
  return *this;
}

void ModelVector::axpy(double scale, const ModelVector& x) {
  require_same_dim(*this, x, "ModelVector::axpy");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * x.values_[i];
}

void ModelVector::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

bool ModelVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ModelVector operator+(ModelVector a, const ModelVector& b) { return a += b; }
ModelVector operator-(ModelVector a, const ModelVector& b) { return a -= b; }
ModelVector operator*(double scale, ModelVector v) { return v *= scale; }

double dot(const ModelVector& a, const ModelVector& b) {
  require_same_dim(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm_sq(const ModelVector& v) { return dot(v, v); }
double norm(const ModelVector& v) { return std::sqrt(norm_sq(v)); }

void require_same_dim(const ModelVector& a, const ModelVector& b, const char* where) {
  if (a.dim() != b.dim()) {
    throw ContractViolation(std::string(where) + ": dimension mismatch (" +
                            std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  }
}

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed), key_(mix64(seed + kGolden)) {}

RandomStream RandomStream::substream(std::initializer_list<std::uint64_t> tags) const {
  std::uint64_t key = key_;
  for (std::uint64_t tag : tags) key = mix64(key ^ mix64(tag + kGolden));
  return RandomStream(seed_, key);
}

std::uint64_t RandomStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RandomStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RandomStream::uniform_open() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::size_t RandomStream::uniform_index(std::size_t n) {
  if (n == 0) throw ContractViolation("uniform_index: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % bound);
}

double RandomStream::normal() {
  // Box-Muller, one output per pair of uniforms.
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RandomStream::gamma(double shape) {
  if (!(shape > 0.0)) throw ContractViolation("gamma: shape must be positive");
  if (shape < 1.0) {
    const double boosted = gamma(shape + 1.0);
    return boosted * std::pow(uniform_open(), 1.0 / shape);
  }
  // Marsaglia-Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> RandomStream::dirichlet(std::size_t n, double concentration) {
  std::vector<double> draws(n);
  double total = 0.0;
  for (double& g : draws) {
    g = gamma(concentration);
    total += g;
  }
  if (!(total > 0.0)) {
    // Every gamma draw underflowed (tiny concentration); put all mass on one
    // uniformly chosen coordinate, the limiting distribution.
    std::fill(draws.begin(), draws.end(), 0.0);
    draws[uniform_index(n)] = 1.0;
    return draws;
  }
  for (double& g : draws) g /= total;
  return draws;
}

std::vector<std::size_t> RandomStream::sample_without_replacement(std::size_t population,
                                                                  std::size_t count) {
  if (count > population) throw ContractViolation("sample_without_replacement: count > population");
  std::vector<std::size_t> pool(population);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + uniform_index(population - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

ModelVector finite_diff_grad(const ScalarField& loss, const ModelVector& w, double eps) {
  if (!(eps >= 1e-8 && eps <= 1e-3)) {
    throw ContractViolation("finite_diff_grad: eps must lie in [1e-8, 1e-3]");
  }
  ModelVector grad(w.dim());
  ModelVector probe = w;
  for (std::size_t i = 0; i < w.dim(); ++i) {
    const double original = probe[i];
    probe[i] = original + eps;
    const double up = loss(probe);
    probe[i] = original - eps;
    const double down = loss(probe);
    probe[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw EvaluationError("finite_diff_grad: non-finite loss when perturbing component " +
                            std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(const ModelVector& a, const ModelVector& b) {
  require_same_dim(a, b, "relative_error");
  const double denom = std::max({norm(a), norm(b), 1e-12});
  return norm(a - b) / denom;
}

}  // namespace fedchs
