#include <cmath>
#include <limits>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "fedchs/errors.hpp"
#include "fedchs/numerics.hpp"
#include "oracles.hpp"

using namespace fedchs;

TEST(FiniteDiff, HalfSquaredNormGivesIdentity) {
  const ScalarField f = [](const ModelVector& w) { return 0.5 * norm_sq(w); };
  const ModelVector g = finite_diff_grad(f, ModelVector{3.0}, 1e-5);
  EXPECT_NEAR(g[0], 3.0, 1e-8);
}

TEST(FiniteDiff, ConstantFieldIsFlat) {
  const ScalarField f = [](const ModelVector&) { return 7.5; };
  const ModelVector g = finite_diff_grad(f, ModelVector{1.0, -2.0, 4.0});
  for (std::size_t i = 0; i < g.dim(); ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(FiniteDiff, RejectsStepOutsideRange) {
  const ScalarField f = [](const ModelVector& w) { return norm_sq(w); };
  EXPECT_THROW(finite_diff_grad(f, ModelVector{1.0}, 1e-9), ContractViolation);
  EXPECT_THROW(finite_diff_grad(f, ModelVector{1.0}, 1e-2), ContractViolation);
  EXPECT_NO_THROW(finite_diff_grad(f, ModelVector{1.0}, 1e-8));
  EXPECT_NO_THROW(finite_diff_grad(f, ModelVector{1.0}, 1e-3));
}

TEST(FiniteDiff, NonFiniteEvaluationNamesComponent) {
  const ScalarField f = [](const ModelVector& w) {
    return w[2] > 0.5 ? std::numeric_limits<double>::infinity() : w[0];
  };
  try {
    finite_diff_grad(f, ModelVector{0.0, 0.0, 0.5});
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
}

TEST(RelativeError, Examples) {
  EXPECT_EQ(relative_error(ModelVector{1.0, 2.0}, ModelVector{1.0, 2.0}), 0.0);
  EXPECT_NEAR(relative_error(ModelVector{1.0, 0.0}, ModelVector{0.0, 1.0}), std::sqrt(2.0), 1e-12);
  EXPECT_EQ(relative_error(ModelVector{0.0}, ModelVector{0.0}), 0.0);
  EXPECT_THROW(relative_error(ModelVector{1.0}, ModelVector{1.0, 2.0}), ContractViolation);
}

TEST(ModelVector, ArithmeticAndFiniteness) {
  ModelVector a{1.0, 2.0, 3.0};
  const ModelVector b{0.5, -1.0, 2.0};
  EXPECT_EQ(a + b, (ModelVector{1.5, 1.0, 5.0}));
  EXPECT_EQ(a - b, (ModelVector{0.5, 3.0, 1.0}));
  EXPECT_EQ(2.0 * b, (ModelVector{1.0, -2.0, 4.0}));
  EXPECT_DOUBLE_EQ(dot(a, b), 0.5 - 2.0 + 6.0);
  a.axpy(-2.0, b);
  EXPECT_EQ(a, (ModelVector{0.0, 4.0, -1.0}));
  EXPECT_TRUE(a.all_finite());
  a[1] = std::nan("");
  EXPECT_FALSE(a.all_finite());
  EXPECT_THROW(a += ModelVector{1.0}, ContractViolation);
}

TEST(RandomStream, ReplayIsIdentical) {
  RandomStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  RandomStream c(42), d(42);
  for (int i = 0; i < 200; ++i) {
    ASSERT_EQ(c.normal(), d.normal());
    ASSERT_EQ(c.gamma(0.3), d.gamma(0.3));
  }
}

TEST(RandomStream, SubstreamsDoNotAdvanceParent) {
  RandomStream a(7), b(7);
  (void)a.substream({1, 2, 3}).next_u64();
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(a.substream({1, 2}).next_u64(), a.substream({2, 1}).next_u64());
  EXPECT_EQ(a.substream({5}).next_u64(), b.substream({5}).next_u64());
}

TEST(RandomStream, UniformAndIndexRanges) {
  RandomStream s(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double o = s.uniform_open();
    ASSERT_GT(o, 0.0);
    ASSERT_LT(o, 1.0);
    ASSERT_LT(s.uniform_index(7), 7u);
  }
  EXPECT_THROW(s.uniform_index(0), ContractViolation);
}

TEST(RandomStream, NormalAndGammaMoments) {
  RandomStream s(11);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = s.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n, 1.0, 0.02);
  for (double shape : {0.1, 0.6, 1.0, 3.5}) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += s.gamma(shape);
    // Var(Gamma(k, 1)) = k, so the mean has standard error sqrt(k / n).
    EXPECT_NEAR(m / n, shape, 4.0 * std::sqrt(shape / n)) << "shape " << shape;
  }
}

TEST(RandomStream, DirichletIsOnSimplex) {
  RandomStream s(5);
  for (double conc : {0.01, 0.1, 1.0, 1000.0}) {
    for (int rep = 0; rep < 50; ++rep) {
      const auto p = s.dirichlet(6, conc);
      double total = 0.0;
      for (double v : p) {
        ASSERT_GE(v, 0.0);
        total += v;
      }
      ASSERT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(RandomStream, SampleWithoutReplacementIsDistinct) {
  RandomStream s(9);
  for (int rep = 0; rep < 100; ++rep) {
    const auto pick = s.sample_without_replacement(20, 7);
    ASSERT_EQ(pick.size(), 7u);
    std::set<std::size_t> unique(pick.begin(), pick.end());
    ASSERT_EQ(unique.size(), 7u);
    for (std::size_t v : pick) ASSERT_LT(v, 20u);
  }
  EXPECT_THROW(s.sample_without_replacement(3, 4), ContractViolation);
}

TEST(RandomStream, SampleWithoutReplacementIsUniform) {
  RandomStream s(13);
  const int draws = 100000;
  std::vector<int> hits(10, 0);
  for (int i = 0; i < draws; ++i) {
    for (std::size_t v : s.sample_without_replacement(10, 3)) ++hits[v];
  }
  // Each index is included with probability 3/10.
  const double p = 0.3, sd = std::sqrt(draws * p * (1 - p));
  for (int h : hits) EXPECT_NEAR(h, draws * p, 4 * sd);
}
