#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "sixo/adam.hpp"
#include "sixo/errors.hpp"
#include "sixo/ops.hpp"
#include "sixo/parallel.hpp"
#include "sixo/quadrature.hpp"
#include "sixo/random.hpp"
#include "testing.hpp"

using namespace sixo;
using sixo::testkit::max_abs_diff;
using sixo::testkit::numeric_gradient;
using sixo::testkit::tape_gradient;

namespace {

void expect_gradient(const std::function<Tensor(const Tensor&)>& f, const Matrix& x,
                     double tol = 1e-6) {
  const Matrix analytic = tape_gradient(f, x);
  const Matrix numeric = numeric_gradient([&](const Matrix& m) { return f(Tensor(m)).item(); }, x);
  EXPECT_LT(max_abs_diff(analytic, numeric), tol) << "analytic\n" << analytic << "\nnumeric\n"
                                                  << numeric;
}

Matrix fixed(Index r, Index c, std::uint64_t seed) { return RngStream(seed).normal(r, c); }

}  // namespace

TEST(Tape, ConstantsStayOffTape) {
  Tensor a = Tensor(fixed(2, 3, 1));
  Tensor b = exp(a) * 2.0 + a;
  EXPECT_FALSE(b.on_tape());
}

TEST(Tape, GradientOfDetachedOutputIsZero) {
  Tape tape;
  Parameters p(ParameterSet{{"w", fixed(2, 2, 3)}});
  Parameters tracked = p.tracked(tape);
  Tensor out = sum(tracked["w"].detach());
  Gradient g = grad(out, tracked);
  EXPECT_TRUE(g.detached);
  EXPECT_EQ(g.values.at("w").cwiseAbs().maxCoeff(), 0.0);
}

TEST(Tape, NonScalarBackwardThrows) {
  Tape tape;
  Tensor v = tape.variable(fixed(2, 2, 4));
  EXPECT_THROW(tape.backward(v), ContractViolation);
}

TEST(Ops, ElementwiseGradients) {
  const Matrix x = fixed(3, 4, 7);
  const Tensor row_c = Tensor(fixed(1, 4, 8));
  const Tensor col_c = Tensor(fixed(3, 1, 9));
  expect_gradient([&](const Tensor& v) { return sum(v * row_c + col_c - v); }, x);
  expect_gradient([&](const Tensor& v) { return sum(tanh(v) * exp(v * 0.3)); }, x);
  expect_gradient([&](const Tensor& v) { return sum(log_sigmoid(v) + softplus(v) * sigmoid(v)); },
                  x);
  expect_gradient([&](const Tensor& v) { return sum(v / (square(v) + 1.0)); }, x);
  expect_gradient([&](const Tensor& v) { return sum(sqrt(exp(v)) + log(square(v) + 0.5)); }, x);
  expect_gradient([&](const Tensor& v) { return sum(1.0 - v / 3.0 - (2.0 * -v)); }, x);
}

TEST(Ops, BroadcastOperandGradients) {
  const Tensor big = Tensor(fixed(3, 4, 11));
  expect_gradient([&](const Tensor& r) { return sum(square(big - r)); }, fixed(1, 4, 12));
  expect_gradient([&](const Tensor& c) { return sum(big * c); }, fixed(3, 1, 13));
  expect_gradient([&](const Tensor& s) { return sum(big / exp(s)); }, fixed(1, 1, 14));
  expect_gradient([&](const Tensor& s) { return sum(broadcast_to(s, 3, 4) * big); },
                  fixed(3, 1, 15));
}

TEST(Ops, ReductionGradients) {
  const Matrix x = fixed(3, 5, 17);
  const Tensor w = Tensor(fixed(3, 1, 18));
  const Tensor u = Tensor(fixed(1, 5, 19));
  expect_gradient([&](const Tensor& v) { return logsumexp(v); }, x);
  expect_gradient([&](const Tensor& v) { return sum(logsumexp(v, Axis::kCols) * w); }, x);
  expect_gradient([&](const Tensor& v) { return sum(logsumexp(v, Axis::kRows) * u); }, x);
  expect_gradient([&](const Tensor& v) { return sum(square(row_sum(v))) + mean(col_sum(v)); }, x);
}

TEST(Ops, StructuralGradients) {
  const Matrix x = fixed(4, 3, 21);
  const Tensor m = Tensor(fixed(3, 2, 22));
  const std::vector<int> idx = {3, 0, 0, 2, 3};
  expect_gradient([&](const Tensor& v) { return sum(square(matmul(v, m))); }, x);
  expect_gradient([&](const Tensor& v) { return sum(tanh(matmul(transpose(m), transpose(v)))); },
                  x);
  expect_gradient([&](const Tensor& v) { return sum(square(gather_rows(v, idx))); }, x);
  expect_gradient(
      [&](const Tensor& v) {
        return sum(square(concat_cols({col(v, 2), v, middle_cols(v, 0, 2)}))) +
               sum(exp(concat_rows({row(v, 1), v})));
      },
      x);
  expect_gradient([&](const Tensor& v) { return sum(square(lerp(v, exp(v), 0.25))); }, x);
}

TEST(Ops, GaussianLogpdfMatchesClosedForm) {
  const double v = gaussian_logpdf(0.3, -1.2, 2.5);
  const double expected = -0.5 * std::log(2 * M_PI * 2.5) - (1.5 * 1.5) / (2 * 2.5);
  EXPECT_NEAR(v, expected, 1e-14);
  Tensor t = gaussian_logpdf(Tensor::scalar(0.3), Tensor::scalar(-1.2), Tensor::scalar(2.5));
  EXPECT_NEAR(t.item(), expected, 1e-14);
}

TEST(Ops, GaussianLogpdfGradients) {
  const Matrix x = fixed(3, 2, 31);
  const Tensor mean = Tensor(fixed(1, 2, 32));
  const Tensor var = Tensor(Matrix::Constant(3, 1, 0.7));
  expect_gradient([&](const Tensor& v) { return sum(gaussian_logpdf(v, mean, var)); }, x);
  expect_gradient([&](const Tensor& m) { return sum(gaussian_logpdf(Tensor(x), m, var)); },
                  fixed(1, 2, 33));
  expect_gradient(
      [&](const Tensor& lv) { return sum(gaussian_logpdf(Tensor(x), mean, exp(lv))); },
      fixed(3, 1, 34));
}

TEST(Ops, GaussianLogpdfRejectsNonPositiveVariance) {
  EXPECT_THROW(gaussian_logpdf(0.0, 0.0, 0.0), DomainError);
  EXPECT_THROW(gaussian_logpdf(Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(-1)),
               DomainError);
}

TEST(Ops, LogsumexpIsStable) {
  Vector v(3);
  v << 1000.0, 1000.0, -1e300;
  EXPECT_NEAR(logsumexp(v), 1000.0 + std::log(2.0), 1e-12);
  Vector all_neg_inf = Vector::Constant(4, -INFINITY);
  EXPECT_EQ(logsumexp(all_neg_inf), -INFINITY);
  Tensor t = logsumexp(Tensor(Matrix(v.transpose())), Axis::kCols);
  EXPECT_NEAR(t.item(), 1000.0 + std::log(2.0), 1e-12);
}

TEST(Ops, ShapeMismatchThrows) {
  EXPECT_THROW(Tensor(Matrix::Zero(2, 3)) + Tensor(Matrix::Zero(3, 2)), ContractViolation);
  EXPECT_THROW(matmul(Tensor(Matrix::Zero(2, 3)), Tensor(Matrix::Zero(2, 3))), ContractViolation);
}

TEST(Philox, KnownAnswerVectors) {
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}),
            (PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                       {0xffffffffu, 0xffffffffu}),
            (PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                       {0xa4093822u, 0x299f31d0u}),
            (PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Random, StreamsAreReproducibleAndIndependent) {
  RngStream a(42), b(42);
  EXPECT_EQ(max_abs_diff(a.normal(5, 5), b.normal(5, 5)), 0.0);
  RngStream root(42);
  RngStream s1 = root.split("noise").split(3);
  RngStream s2 = root.split("noise").split(4);
  EXPECT_NE(s1.stream(), s2.stream());
  EXPECT_NE(s1.uniform(), s2.uniform());
  // Splitting does not depend on draws already taken from the parent.
  RngStream used(42);
  used.normal(10, 10);
  EXPECT_EQ(used.split("x").uniform(), RngStream(42).split("x").uniform());
}

TEST(Random, MomentsAndRanges) {
  RngStream rng(7);
  const int n = 200000;
  double sum = 0, sum2 = 0, usum = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    usum += u;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum2 / n, 1.0, 0.01);
  EXPECT_NEAR(usum / n, 0.5, 0.005);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto k = rng.below(7);
    ASSERT_LT(k, 7u);
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Quadrature, ExactForPolynomialMoments) {
  for (int degree = 1; degree <= 12; ++degree) {
    const GaussHermiteRule rule = gauss_hermite(degree);
    EXPECT_NEAR(rule.weights.sum(), 1.0, 1e-13);
    // E[Z^k] = (k-1)!! for even k, exact up to k = 2 degree - 1.
    double double_factorial = 1.0;
    for (int k = 0; k <= 2 * degree - 1; ++k) {
      if (k >= 2 && k % 2 == 0) double_factorial *= (k - 1);
      const double expected = k % 2 == 0 ? double_factorial : 0.0;
      const double got = (rule.weights.array() * rule.nodes.array().pow(k)).sum();
      const double scale = (rule.weights.array() * rule.nodes.array().abs().pow(k)).sum();
      EXPECT_NEAR(got, expected, 1e-12 * std::max(1.0, scale)) << degree << " " << k;
    }
  }
  EXPECT_THROW(gauss_hermite(0), ContractViolation);
}

TEST(Quadrature, DegreeFiveNodes) {
  const GaussHermiteRule rule = gauss_hermite(5);
  const double a = std::sqrt(5.0 - std::sqrt(10.0));
  const double b = std::sqrt(5.0 + std::sqrt(10.0));
  EXPECT_NEAR(rule.nodes(0), -b, 1e-12);
  EXPECT_NEAR(rule.nodes(1), -a, 1e-12);
  EXPECT_NEAR(rule.nodes(2), 0.0, 1e-15);
  EXPECT_NEAR(rule.weights(2), 8.0 / 15.0, 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam opt(AdamOptions{.learning_rate = 0.1});
  ParameterSet p{{"x", Matrix::Constant(1, 2, 1.0)}};
  Matrix g(1, 2);
  g << 3.0, -0.5;
  opt.step(p, {{"x", g}});
  EXPECT_NEAR(p["x"](0, 0), 0.9, 1e-6);
  EXPECT_NEAR(p["x"](0, 1), 1.1, 1e-6);
}

TEST(Adam, MinimizesAndMaximizesQuadratic) {
  ParameterSet p{{"x", Matrix::Constant(1, 1, 5.0)}};
  Adam opt(AdamOptions{.learning_rate = 0.05});
  for (int i = 0; i < 2000; ++i) opt.step(p, {{"x", 2.0 * (p["x"].array() - 1.0).matrix()}});
  EXPECT_NEAR(p["x"](0, 0), 1.0, 1e-3);
  Adam up(AdamOptions{.learning_rate = 0.05, .maximize = true});
  for (int i = 0; i < 2000; ++i) up.step(p, {{"x", -2.0 * (p["x"].array() + 2.0).matrix()}});
  EXPECT_NEAR(p["x"](0, 0), -2.0, 1e-3);
}

TEST(Parallel, EveryIndexRunsOnceAndErrorsPropagate) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10,
                            [](std::size_t i) {
                              if (i == 5) throw ConfigError("boom");
                            }),
               ConfigError);
}
