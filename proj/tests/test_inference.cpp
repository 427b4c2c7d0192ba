#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "sixo/bounds.hpp"
#include "sixo/errors.hpp"
#include "sixo/ops.hpp"
#include "testing.hpp"

using namespace sixo;
using testkit::max_abs_diff;

namespace {

Observations gdd_obs(int T, double y) {
  std::vector<Matrix> v(static_cast<std::size_t>(T));
  std::vector<char> mask(static_cast<std::size_t>(T), 0);
  v.back() = Matrix::Constant(1, 1, y);
  mask.back() = 1;
  return Observations(v, mask);
}

Tensor scalar_row(double v) { return Tensor(Matrix::Constant(1, 1, v)); }

double trapezoid(const std::function<double(double)>& f, double lo, double hi, int n = 40000) {
  const double h = (hi - lo) / n;
  double s = 0.5 * (f(lo) + f(hi));
  for (int i = 1; i < n; ++i) s += f(lo + i * h);
  return s * h;
}

// Adds a fixed constant to the wrapped twist at every t < T.
class ShiftedTwist : public Twist {
 public:
  ShiftedTwist(const Twist& inner, std::vector<double> shifts) : inner_(inner.clone()), shifts_(std::move(shifts)) {}
  ShiftedTwist(const ShiftedTwist& o) : Twist(o), inner_(o.inner_->clone()), shifts_(o.shifts_) {}
  std::string kind() const override { return "shifted"; }
  std::unique_ptr<Twist> clone() const override { return std::make_unique<ShiftedTwist>(*this); }
  TwistContext encode(const StateSpaceModel& m, const Observations& o) const override {
    return inner_->encode(m, o);
  }

 protected:
  Tensor value(const StateSpaceModel& m, const TwistContext& ctx, int t, const Tensor& x) const override {
    return inner_->log_twist(m, ctx, t, x) + shifts_[static_cast<std::size_t>(t - 1)];
  }

 private:
  std::unique_ptr<Twist> inner_;
  std::vector<double> shifts_;
};

class NegInfTwist : public Twist {
 public:
  std::string kind() const override { return "neg-inf"; }
  std::unique_ptr<Twist> clone() const override { return std::make_unique<NegInfTwist>(*this); }

 protected:
  Tensor value(const StateSpaceModel&, const TwistContext&, int t, const Tensor& x) const override {
    return Tensor::constant(x.rows(), 1, t == 3 ? -INFINITY : 0.0);
  }
};

// GDD whose transition has zero variance, for the degenerate-scale lookahead check.
class FrozenGdd : public GddModel {
 public:
  using GddModel::GddModel;
  DiagonalGaussian transition(const Tensor& x_prev, int t) const override {
    return {GddModel::transition(x_prev, t).mean, Tensor::scalar(0.0)};
  }
};

}  // namespace

// ---------------------------------------------------------------- proposals

TEST(Proposals, BootstrapLogQIsTransitionDensity) {
  GddModel m(5, 0.7);
  BootstrapProposal q;
  const Observations obs = gdd_obs(5, 3.0);
  const Tensor prev(RngStream(1).normal(4, 1));
  Proposed p = q.propose(m, obs, 3, prev, RngStream(2).normal(4, 1));
  EXPECT_LT(max_abs_diff(p.log_q.value(), m.transition_logpdf(prev, p.x, 3).value()), 1e-14);
  EXPECT_EQ(p.log_prior_minus_q.value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Proposals, ZeroAffineIsStandardNormal) {
  GddModel m(5, 0.7);
  AffineGaussianProposal q(5);
  EXPECT_EQ(parameter_count(q.parameters().values()), 4 * 5 - 1);
  const Matrix eps = RngStream(3).normal(6, 1);
  Proposed p = q.propose(m, gdd_obs(5, 2.0), 2, Tensor(Matrix::Ones(6, 1)), eps);
  EXPECT_EQ(max_abs_diff(p.x.value(), eps), 0.0);
  for (Index k = 0; k < 6; ++k) EXPECT_NEAR(p.log_q(k, 0), oracle::normal_logpdf(eps(k), 0, 1), 1e-14);
}

TEST(Proposals, GaussianProductExamples) {
  GaussianProduct g = gaussian_product(scalar_row(0), scalar_row(1), scalar_row(2), scalar_row(1));
  EXPECT_NEAR(g.mean.item(), 1.0, 1e-15);
  EXPECT_NEAR(g.variance.item(), 0.5, 1e-15);
  GaussianProduct same = gaussian_product(scalar_row(1.5), scalar_row(3), scalar_row(1.5), scalar_row(3));
  EXPECT_NEAR(same.mean.item(), 1.5, 1e-15);
  EXPECT_NEAR(same.variance.item(), 1.5, 1e-15);
  const double m1 = 0.3, v1 = 0.7, m2 = -1.1, v2 = 2.2;
  g = gaussian_product(scalar_row(m1), scalar_row(v1), scalar_row(m2), scalar_row(v2));
  const double integral = trapezoid(
      [&](double x) { return std::exp(oracle::normal_logpdf(x, m1, v1) + oracle::normal_logpdf(x, m2, v2)); },
      -20, 20);
  EXPECT_NEAR(integral, std::exp(g.log_normalizer.item()), 1e-10);
  EXPECT_THROW(gaussian_product(scalar_row(0), scalar_row(0), scalar_row(0), scalar_row(1)), DomainError);
}

TEST(Proposals, PerturbationDegeneratesToPrior) {
  SvmModel m(1, 4);
  PerturbationProposal q(1, 4);
  ParameterSet p = q.parameters().values();
  p["log_var"].setConstant(std::log(1e6));
  q.set_values(p);
  const Observations obs = observations_from_matrix(Matrix::Zero(4, 1));
  const Tensor prev(RngStream(1).normal(5, 1));
  const Tensor x(RngStream(2).normal(5, 1));
  const Tensor lq = q.log_density(m, obs, 2, prev, x);
  EXPECT_LT(max_abs_diff(lq.value(), m.transition_logpdf(prev, x, 2).value()), 1e-3);
}

TEST(Proposals, PerturbationMatchesNormalizedProduct) {
  SvmModel m(1, 4);
  ParameterSet mp = m.parameters().values();
  mp["phi_raw"].setConstant(0.8);
  mp["log_q"].setConstant(-0.4);
  m.set_values(mp);
  PerturbationProposal q(1, 4);
  ParameterSet p = q.parameters().values();
  p["mu"] = RngStream(5).normal(4, 1);
  p["log_var"] = RngStream(6).normal(4, 1) * 0.5;
  q.set_values(p);
  const Observations obs = observations_from_matrix(Matrix::Zero(4, 1));
  const double prev = 0.4;
  const int t = 3;
  auto prior = [&](double x) {
    return m.transition_logpdf(scalar_row(prev), scalar_row(x), t).item();
  };
  const double mu = p["mu"](t - 1, 0), var = std::exp(p["log_var"](t - 1, 0));
  const double z = std::log(trapezoid(
      [&](double x) { return std::exp(prior(x) + oracle::normal_logpdf(x, mu, var)); }, -30, 30));
  Proposed out = q.propose(m, obs, t, scalar_row(prev), Matrix::Constant(1, 1, 0.37));
  const double x = out.x.item();
  EXPECT_NEAR(out.log_q.item(), prior(x) + oracle::normal_logpdf(x, mu, var) - z, 1e-10);
  EXPECT_NEAR(out.log_prior_minus_q.item(), prior(x) - out.log_q.item(), 1e-10);
  // q integrates to one
  EXPECT_NEAR(trapezoid([&](double v) { return std::exp(q.log_density(m, obs, t, scalar_row(prev), scalar_row(v)).item()); },
                        -30, 30),
              1.0, 1e-6);
}

TEST(Proposals, AffineDensityIntegratesAndReparameterizationGradient) {
  GddModel m(4, 0.3);
  AffineGaussianProposal q(4);
  ParameterSet p;
  p["a"] = RngStream(1).normal(3, 1);
  p["b"] = RngStream(2).normal(4, 1);
  p["c"] = RngStream(3).normal(4, 1);
  p["log_var"] = RngStream(4).normal(4, 1) * 0.3;
  q.set_values(p);
  const Observations obs = gdd_obs(4, 2.5);
  EXPECT_NEAR(trapezoid([&](double v) { return std::exp(q.log_density(m, obs, 3, scalar_row(0.2), scalar_row(v)).item()); },
                        -30, 30),
              1.0, 1e-6);
  const Matrix eps = RngStream(9).normal(3, 1);
  const Tensor prev(RngStream(10).normal(3, 1));
  auto objective = [&](const ParameterSet& values) {
    AffineGaussianProposal qq(4);
    qq.set_values(values);
    Proposed out = qq.propose(m, obs, 3, prev, eps);
    return sum(square(out.x)).item();
  };
  Tape tape;
  AffineGaussianProposal tracked = q;
  tracked.set_parameters(q.parameters().tracked(tape));
  Gradient g = grad(sum(square(tracked.propose(m, obs, 3, prev, eps).x)), tracked.parameters());
  for (const auto& [name, value] : p) {
    const Matrix fd = testkit::numeric_gradient(
        [&](const Matrix& v) {
          ParameterSet pp = p;
          pp[name] = v;
          return objective(pp);
        },
        value, 1e-6);
    EXPECT_LT(max_abs_diff(g.values[name], fd), 1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff())) << name;
  }
}

// ---------------------------------------------------------------- twists

TEST(Twists, ZeroAtFinalStepAndUnit) {
  GddModel m(5, 0.5);
  const Observations obs = gdd_obs(5, 3.0);
  const Tensor x(RngStream(1).normal(3, 1));
  UnitTwist unit;
  GaussianTwist gauss(5);
  GddOptimalTwist opt;
  EXPECT_EQ(unit.log_twist(m, unit.encode(m, obs), 2, x).value().cwiseAbs().maxCoeff(), 0.0);
  for (const Twist* tw : std::initializer_list<const Twist*>{&unit, &gauss, &opt}) {
    EXPECT_EQ(tw->log_twist(m, tw->encode(m, obs), 5, x).value().cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Twists, GaussianTwistAtOptimumEqualsAnalytic) {
  const int T = 8;
  const double alpha = 0.6, y = 4.2;
  GddModel m(T, alpha);
  GaussianTwist tw(T);
  ParameterSet p = tw.parameters().values();
  for (int t = 1; t < T; ++t) {
    p["weight"](t - 1, 0) = 1.0;
    p["bias"](t - 1, 0) = alpha * (T - t + 1);
    p["log_var"](t - 1, 0) = std::log(T - t + 1.0);
  }
  tw.set_values(p);
  const Observations obs = gdd_obs(T, y);
  const TwistContext ctx = tw.encode(m, obs);
  GddOptimalTwist opt;
  const TwistContext octx = opt.encode(m, obs);
  const Tensor x(RngStream(3).normal(5, 1) * 2.0);
  for (int t = 1; t < T; ++t) {
    const Matrix a = tw.log_twist(m, ctx, t, x).value();
    const Matrix b = opt.log_twist(m, octx, t, x).value();
    EXPECT_LT(max_abs_diff(a, b), 1e-12);
    for (Index k = 0; k < x.rows(); ++k) EXPECT_NEAR(b(k, 0), gdd_optimal_twist(m, t, x(k, 0), y), 1e-12);
  }
}

TEST(Twists, OneStepLookaheadAccuracy) {
  GddModel m(10, 0.0);
  const double exact = oracle::normal_logpdf(0, 0, 2);
  EXPECT_NEAR(exact, -1.2655121, 1e-7);
  const Tensor x = scalar_row(0.0), y = scalar_row(0.0);
  EXPECT_NEAR(one_step_lookahead(m, gauss_hermite(5), x, y, 9).item(), exact, 1e-2);
  // Monotone improvement with degree on a state away from the observation.
  const Tensor x2 = scalar_row(1.5), y2 = scalar_row(-1.0);
  const double exact2 = oracle::normal_logpdf(-1.0, 1.5, 2);
  double prev = INFINITY;
  for (int degree : {3, 5, 9}) {
    const double err = std::abs(one_step_lookahead(m, gauss_hermite(degree), x2, y2, 9).item() - exact2);
    EXPECT_LT(err, prev);
    prev = err;
  }
  FrozenGdd frozen(10, 0.4);
  const double collapsed = one_step_lookahead(frozen, gauss_hermite(5), x2, y2, 9).item();
  EXPECT_NEAR(collapsed, oracle::normal_logpdf(-1.0, 1.5 + 0.8, 1.0), 1e-12);
}

TEST(Twists, QuadratureTwistZeroWithoutNextObservation) {
  GddModel m(6, 0.0);
  QuadratureTwist tw(5);
  const Observations obs = gdd_obs(6, 1.0);
  const TwistContext ctx = tw.encode(m, obs);
  const Tensor x(RngStream(1).normal(3, 1));
  EXPECT_EQ(tw.log_twist(m, ctx, 3, x).value().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(tw.log_twist(m, ctx, 5, x).value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Twists, QuadraticHeadRepresentsTargetQuadratic) {
  const int T = 6;
  GddModel m(T, 0.0);
  QuadraticHeadTwist tw(T, 8, RngStream(1));
  const double a = -0.3, b = 1.7, c = -2.2;
  ParameterSet p = tw.parameters().values();
  p["w3"].setZero();
  p["b3"] << -std::log(std::exp(-a - 1e-6) - 1.0), b, c;
  tw.set_values(p);
  const TwistContext ctx = tw.encode(m, gdd_obs(T, 3.0));
  const Tensor x(RngStream(2).normal(7, 1) * 3.0);
  for (int t = 1; t < T; ++t) {
    const Matrix v = tw.log_twist(m, ctx, t, x).value();
    for (Index k = 0; k < x.rows(); ++k) {
      const double xv = x(k, 0);
      EXPECT_NEAR(v(k, 0), a * xv * xv + b * xv + c, 1e-9);
    }
  }
}

TEST(Twists, QuadraticHeadIsIntegrable) {
  const int T = 6;
  GddModel m(T, 0.0);
  QuadraticHeadTwist tw(T, 8, RngStream(1));
  ParameterSet p = tw.parameters().values();
  p["b3"](0, 0) = 50.0;  // pushes the leading coefficient towards zero from below
  tw.set_values(p);
  const TwistContext ctx = tw.encode(m, gdd_obs(T, 3.0));
  for (int t = 1; t < T; ++t) EXPECT_LT(ctx.per_t[static_cast<std::size_t>(t - 1)](0, 0), -1e-6 + 1e-12);
}

namespace {

template <class TwistT>
void expect_twist_gradients(const TwistT& tw, const StateSpaceModel& m, const Observations& obs,
                            int t, const Matrix& x) {
  auto objective = [&](const ParameterSet& values, const Matrix& xs) {
    TwistT copy = tw;
    copy.set_values(values);
    return sum(copy.log_twist(m, copy.encode(m, obs), t, Tensor(xs))).item();
  };
  Tape tape;
  TwistT tracked = tw;
  tracked.set_parameters(tw.parameters().tracked(tape));
  Tensor xv = tape.variable(x);
  Tensor out = sum(tracked.log_twist(m, tracked.encode(m, obs), t, xv));
  Gradient g = grad(out, tracked.parameters());
  const Matrix gx = tape.adjoint(xv);
  const ParameterSet base = tw.parameters().values();
  for (const auto& [name, value] : base) {
    const Matrix fd = testkit::numeric_gradient(
        [&](const Matrix& v) {
          ParameterSet pp = base;
          pp[name] = v;
          return objective(pp, x);
        },
        value, 1e-6);
    EXPECT_LT(max_abs_diff(g.values[name], fd), 1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff())) << name;
  }
  const Matrix fdx = testkit::numeric_gradient([&](const Matrix& xs) { return objective(base, xs); }, x, 1e-6);
  EXPECT_LT(max_abs_diff(gx, fdx), 1e-5 * std::max(1.0, fdx.cwiseAbs().maxCoeff()));
}

}  // namespace

TEST(Twists, GradientsMatchFiniteDifferences) {
  GddModel gdd(5, 0.3);
  expect_twist_gradients(QuadraticHeadTwist(5, 6, RngStream(4), 0.3), gdd, gdd_obs(5, 2.0), 2,
                         RngStream(5).normal(3, 1));
  GaussianTwist gt(5);
  ParameterSet gp = gt.parameters().values();
  gp["weight"] = RngStream(6).normal(4, 1);
  gt.set_values(gp);
  expect_twist_gradients(gt, gdd, gdd_obs(5, 2.0), 3, RngStream(7).normal(3, 1));
  SvmModel svm(2, 5);
  Dataset d = simulate(svm, 1, RngStream(8));
  expect_twist_gradients(BackwardRnnTwist(2, 2, 5, RngStream(9)), svm, d.observations, 2,
                         RngStream(10).normal(3, 2));
}

TEST(Twists, BackwardRnnIsCausal) {
  const int T = 6;
  SvmModel m(2, T);
  BackwardRnnTwist tw(2, 2, 7, RngStream(3));
  Dataset d = simulate(m, 1, RngStream(4));
  const Tensor x(RngStream(5).normal(3, 2));
  const TwistContext base = tw.encode(m, d.observations);
  EXPECT_EQ(base.per_t.size(), static_cast<std::size_t>(T));
  for (int t = 1; t < T; ++t) {
    const Matrix ref = tw.log_twist(m, base, t, x).value();
    for (int s = 1; s <= t; ++s) {
      std::vector<Matrix> vals;
      for (int u = 1; u <= T; ++u) vals.push_back(d.observations.at(u));
      vals[static_cast<std::size_t>(s - 1)].array() += 3.7;
      Observations changed(vals, d.observations.mask());
      const Matrix v = tw.log_twist(m, tw.encode(m, changed), t, x).value();
      EXPECT_EQ(max_abs_diff(ref, v), 0.0) << "t=" << t << " s=" << s;
    }
    // and it does depend on the future
    std::vector<Matrix> vals;
    for (int u = 1; u <= T; ++u) vals.push_back(d.observations.at(u));
    vals[static_cast<std::size_t>(t)].array() += 3.7;
    Observations changed(vals, d.observations.mask());
    EXPECT_GT(max_abs_diff(ref, tw.log_twist(m, tw.encode(m, changed), t, x).value()), 0.0);
  }
}

TEST(Twists, SparseEncodingsInterpolate) {
  HhModel m(6, 10.0, 2);  // observations at 2, 4, 6
  Dataset d = simulate(m, 1, RngStream(2));
  BackwardRnnTwist tw(1, 4, 5, RngStream(3));
  const std::vector<Tensor> e = tw.encodings(d.observations);
  EXPECT_LT(max_abs_diff(e[2].value(), 0.5 * (e[1].value() + e[3].value())), 1e-15);
  EXPECT_EQ(e[5].value().cwiseAbs().maxCoeff(), 0.0);  // nothing left after the last observation
  EXPECT_GT(max_abs_diff(e[1].value(), e[3].value()), 0.0);
}

// ---------------------------------------------------------------- smc

TEST(Smc, EssExamples) {
  EXPECT_NEAR(ess(Vector::Zero(7)), 7.0, 1e-12);
  Vector one = Vector::Constant(4, -INFINITY);
  one(2) = 0.3;
  EXPECT_NEAR(ess(one), 1.0, 1e-12);
  Vector two(2);
  two << 0.0, std::log(3.0);
  EXPECT_NEAR(ess(two), 1.6, 1e-12);
  EXPECT_THROW(ess(Vector::Constant(3, -INFINITY)), DegenerateSweep);
}

TEST(Smc, ResamplingExamples) {
  RngStream rng(5);
  for (int i = 0; i < 100; ++i) {
    auto a = resample(Vector::Constant(8, 1.3), ResamplingScheme::kSystematic, rng);
    for (int k = 0; k < 8; ++k) ASSERT_EQ(a[static_cast<std::size_t>(k)], k);
  }
  Vector dominant = Vector::Constant(5, -INFINITY);
  dominant(3) = 0;
  for (auto scheme : {ResamplingScheme::kSystematic, ResamplingScheme::kMultinomial}) {
    auto a = resample(dominant, scheme, rng);
    for (int v : a) EXPECT_EQ(v, 3);
  }
}

TEST(Smc, ExpectedOffspringCounts) {
  Vector w(4);
  w << 0.1, 0.2, 0.3, 0.4;
  const Vector lw = w.array().log();
  const int trials = 100000;
  RngStream rng(6);
  for (auto scheme : {ResamplingScheme::kMultinomial, ResamplingScheme::kSystematic}) {
    Vector counts = Vector::Zero(4);
    for (int i = 0; i < trials; ++i)
      for (int a : resample(lw, scheme, rng)) counts(a) += 1;
    for (int i = 0; i < 4; ++i) {
      const double expected = 4 * w(i);
      const double se = std::sqrt(4 * w(i) * (1 - w(i)) / trials);
      EXPECT_NEAR(counts(i) / trials, expected, 4 * se) << to_string(scheme) << " " << i;
    }
  }
}

TEST(Smc, IncrementalWeightReductions) {
  GddModel m(5, 0.4);
  BootstrapProposal q;
  UnitTwist unit;
  const Observations obs = gdd_obs(5, 2.0);
  const TwistContext ctx = unit.encode(m, obs);
  const Tensor prev(RngStream(1).normal(3, 1));
  Proposed p = q.propose(m, obs, 5, prev, RngStream(2).normal(3, 1));
  Tensor lw = incremental_log_weight(m, unit, ctx, 5, prev, p.x, obs, p.log_q);
  EXPECT_LT(max_abs_diff(lw.value(), m.observation_logpdf(p.x, Tensor(obs.at(5)), 5).value()), 1e-12);
  Proposed p3 = q.propose(m, obs, 3, prev, RngStream(2).normal(3, 1));
  EXPECT_LT(incremental_log_weight(m, unit, ctx, 3, prev, p3.x, obs, p3.log_q).value().cwiseAbs().maxCoeff(), 1e-12);
  // Optimal proposal and twist at t = 1 give the log marginal for every particle.
  GddOptimalProposal oq;
  GddOptimalTwist ot;
  const TwistContext octx = ot.encode(m, obs);
  Proposed p1 = oq.propose(m, obs, 1, Tensor(), RngStream(3).normal(4, 1));
  Tensor lw1 = incremental_log_weight(m, ot, octx, 1, Tensor(), p1.x, obs, p1.log_q);
  for (Index k = 0; k < 4; ++k) EXPECT_NEAR(lw1(k, 0), gdd_log_marginal(m, 2.0), 1e-10);
}

TEST(Smc, SingleParticleSumsIncrements) {
  GddModel m(6, 0.2);
  SweepConfig cfg;
  cfg.particles = 1;
  cfg.schedule = ResamplingSchedule::never();
  BootstrapProposal q;
  GaussianTwist tw(6);
  const Observations obs = gdd_obs(6, 1.0);
  SweepResult r = smc_sweep(m, q, tw, tw.encode(m, obs), obs, cfg, RngStream(3));
  double total = 0;
  for (const auto& inc : r.log_increments) total += inc(0);
  EXPECT_NEAR(r.log_z.item(), total, 1e-12);
}

TEST(Smc, OptimalProposalAndTwistAreExact) {
  for (double alpha : {0.0, 1.0}) {
    GddModel m(10, alpha);
    const double y = 10.0;
    const Observations obs = gdd_obs(10, y);
    GddOptimalProposal q;
    GddOptimalTwist tw;
    const TwistContext ctx = tw.encode(m, obs);
    for (int K : {1, 4, 16}) {
      for (auto sched : {ResamplingSchedule::always(), ResamplingSchedule::never(),
                         ResamplingSchedule::ess_below(0.5)}) {
        SweepConfig cfg;
        cfg.particles = K;
        cfg.schedule = sched;
        SweepResult r = smc_sweep(m, q, tw, ctx, obs, cfg, RngStream(K * 7 + 1));
        EXPECT_NEAR(r.log_z.item(), gdd_log_marginal(m, y), 1e-8);
        if (sched.adaptive()) EXPECT_TRUE(r.resampling_steps.empty());
        for (const auto& inc : r.log_increments) {
          const double mean = inc.mean();
          EXPECT_LT(std::sqrt((inc.array() - mean).square().mean()), 1e-10);
        }
      }
    }
  }
}

TEST(Smc, AffineProposalAtOptimumIsExact) {
  GddModel m(10, 1.0);
  AffineGaussianProposal q(10);
  q.set_values(gdd_optimal_affine_parameters(10));
  GddOptimalTwist tw;
  const Observations obs = gdd_obs(10, 7.0);
  SweepConfig cfg;
  cfg.particles = 4;
  SweepResult r = smc_sweep(m, q, tw, tw.encode(m, obs), obs, cfg, RngStream(1));
  EXPECT_NEAR(r.log_z.item(), gdd_log_marginal(m, 7.0), 1e-8);
}

TEST(Smc, TwistConstantsDoNotChangeAncestry) {
  GddModel m(8, 0.3);
  const Observations obs = gdd_obs(8, 5.0);
  GaussianTwist tw(8);
  ParameterSet p = tw.parameters().values();
  p["weight"].setConstant(0.8);
  p["log_var"].setConstant(1.0);
  tw.set_values(p);
  ShiftedTwist shifted(tw, {3.0, -2.0, 10.0, 0.5, 7.0, -4.0, 1.0, 0.0});
  BootstrapProposal q;
  SweepConfig cfg;
  cfg.particles = 8;
  cfg.schedule = ResamplingSchedule::always();
  SweepResult a = smc_sweep(m, q, tw, tw.encode(m, obs), obs, cfg, RngStream(4));
  SweepResult b = smc_sweep(m, q, shifted, shifted.encode(m, obs), obs, cfg, RngStream(4));
  EXPECT_EQ(a.ancestors, b.ancestors);
  EXPECT_LT(max_abs_diff(a.normalized_log_weights, b.normalized_log_weights), 1e-12);
  EXPECT_NEAR(a.log_z.item(), b.log_z.item(), 1e-10);
}

TEST(Smc, DeterministicAndSeedSensitive) {
  SvmModel m(2, 10);
  Dataset d = simulate(m, 1, RngStream(1));
  BootstrapProposal q;
  UnitTwist tw;
  SweepConfig cfg;
  cfg.particles = 6;
  cfg.record_lineage = true;
  auto run = [&](std::uint64_t seed) {
    return smc_sweep(m, q, tw, tw.encode(m, d.observations), d.observations, cfg, RngStream(seed));
  };
  SweepResult a = run(3), b = run(3), c = run(4);
  EXPECT_EQ(a.log_z.item(), b.log_z.item());
  EXPECT_EQ(a.ancestors, b.ancestors);
  EXPECT_EQ(max_abs_diff(a.particles, b.particles), 0.0);
  EXPECT_NE(a.log_z.item(), c.log_z.item());
  EXPECT_NEAR(ess(Vector::Zero(6)), 6.0, 1e-12);
}

TEST(Smc, DegenerateWeightsReportTimestep) {
  GddModel m(5, 0.0);
  const Observations obs = gdd_obs(5, 1.0);
  NegInfTwist tw;
  BootstrapProposal q;
  SweepConfig cfg;
  try {
    smc_sweep(m, q, tw, tw.encode(m, obs), obs, cfg, RngStream(1));
    FAIL() << "expected DegenerateSweep";
  } catch (const DegenerateSweep& e) {
    EXPECT_EQ(e.timestep(), 3);
  }
}

TEST(Smc, LineageExportAndTrajectories) {
  GddModel m(5, 1.0);
  const Observations obs = gdd_obs(5, 6.0);
  BootstrapProposal q;
  UnitTwist tw;
  SweepConfig cfg;
  cfg.particles = 4;
  cfg.schedule = ResamplingSchedule::always();
  cfg.record_lineage = true;
  SweepResult r = smc_sweep(m, q, tw, tw.encode(m, obs), obs, cfg, RngStream(2));
  std::ostringstream out;
  write_lineage_csv(r, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,k,ancestor,x1,log_w");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5 * 4);
  const auto traj = r.trajectories();
  EXPECT_EQ(max_abs_diff(traj.back(), r.lineage_x.back()), 0.0);
  for (int k = 0; k < 4; ++k) {
    // the parent recorded at t = 2 is the ancestor drawn at t = 1
    EXPECT_EQ(r.parents[1][static_cast<std::size_t>(k)], r.ancestors[0][static_cast<std::size_t>(k)]);
    EXPECT_EQ(traj[3](k, 0), r.lineage_x[3](r.parents[4][static_cast<std::size_t>(k)], 0));
  }
}

TEST(Smc, NoResamplingEstimateIsPermutationInvariant) {
  GddModel m(4, 0.5);
  const Observations obs = gdd_obs(4, 2.0);
  BootstrapProposal q;
  UnitTwist tw;
  std::vector<Matrix> noise, permuted;
  const std::vector<int> perm = {2, 0, 3, 1};
  for (int t = 1; t <= 4; ++t) {
    noise.push_back(RngStream(9).split(t).normal(4, 1));
    permuted.push_back(gather_rows(Tensor(noise.back()), perm).value());
  }
  SweepConfig cfg;
  cfg.particles = 4;
  cfg.schedule = ResamplingSchedule::never();
  cfg.fixed_noise = &noise;
  const double a = smc_sweep(m, q, tw, tw.encode(m, obs), obs, cfg, RngStream(1)).log_z.item();
  cfg.fixed_noise = &permuted;
  const double b = smc_sweep(m, q, tw, tw.encode(m, obs), obs, cfg, RngStream(1)).log_z.item();
  EXPECT_NEAR(a, b, 1e-12);
}

// ---------------------------------------------------------------- bounds

TEST(Bounds, ValidationRejectsInconsistentSpecs) {
  GddModel m(5, 0.0);
  const Observations obs = gdd_obs(5, 1.0);
  BootstrapProposal boot;
  AffineGaussianProposal affine(5);
  UnitTwist unit;
  GaussianTwist gauss(5);
  BoundSpec spec;
  spec.kind = BoundKind::kSixo;
  EXPECT_THROW(bound_estimate(spec, m, boot, unit, obs, RngStream(1)), ConfigError);
  spec.kind = BoundKind::kBpf;
  EXPECT_THROW(bound_estimate(spec, m, affine, unit, obs, RngStream(1)), ConfigError);
  EXPECT_THROW(bound_estimate(spec, m, boot, gauss, obs, RngStream(1)), ConfigError);
  spec.kind = BoundKind::kFivo;
  EXPECT_THROW(bound_estimate(spec, m, affine, gauss, obs, RngStream(1)), ConfigError);
  spec.kind = BoundKind::kIwae;
  spec.schedule = ResamplingSchedule::always();
  EXPECT_THROW(bound_estimate(spec, m, affine, unit, obs, RngStream(1)), ConfigError);
  EXPECT_EQ(parse_bound_kind("SIXO"), BoundKind::kSixo);
  EXPECT_THROW(parse_bound_kind("elbo"), ConfigError);
}

TEST(Bounds, SingleParticleIwaeIsElbo) {
  GddModel m(4, 0.5);
  const Observations obs = gdd_obs(4, 3.0);
  AffineGaussianProposal q(4);
  UnitTwist tw;
  BoundSpec spec;
  spec.kind = BoundKind::kIwae;
  spec.particles = 1;
  SweepConfig cfg = spec.sweep_config();
  cfg.record_lineage = true;
  SweepResult r = smc_sweep(m, q, tw, tw.encode(m, obs), obs, cfg, RngStream(8));
  // log p(x, y) - log q(x) along the single trajectory
  double elbo = 0;
  Tensor prev;
  for (int t = 1; t <= 4; ++t) {
    const Tensor x(r.lineage_x[static_cast<std::size_t>(t - 1)]);
    elbo += (t == 1 ? m.initial_logpdf(x) : m.transition_logpdf(prev, x, t)).item();
    elbo -= q.log_density(m, obs, t, prev, x).item();
    prev = x;
  }
  elbo += m.observation_logpdf(prev, Tensor(obs.at(4)), 4).item();
  EXPECT_NEAR(r.log_z.item(), elbo, 1e-12);
  const BoundEstimate e = bound_estimate(spec, m, q, tw, obs, RngStream(8));
  EXPECT_NEAR(e.mean, smc_sweep(m, q, tw, tw.encode(m, obs), obs, spec.sweep_config(), RngStream(8).split(0)).log_z.item(), 1e-12);
}

TEST(Bounds, OptimalSixoIsExactWithZeroError) {
  GddModel m(10, 1.0);
  const Observations obs = gdd_obs(10, 9.0);
  GddOptimalProposal q;
  GddOptimalTwist tw;
  BoundSpec spec;
  spec.particles = 1;
  spec.sweeps = 20;
  const BoundEstimate e = bound_estimate(spec, m, q, tw, obs, RngStream(2));
  EXPECT_NEAR(e.mean, gdd_log_marginal(m, 9.0), 1e-10);
  EXPECT_LT(e.se, 1e-10);
}

TEST(Bounds, BpfIsBelowMarginalAndImprovesWithParticles) {
  GddModel m(10, 0.0);
  const Observations obs = gdd_obs(10, 5.0);
  BootstrapProposal q;
  UnitTwist tw;
  BoundSpec spec;
  spec.kind = BoundKind::kBpf;
  spec.sweeps = 10000;
  spec.particles = 4;
  const BoundEstimate k4 = bound_estimate(spec, m, q, tw, obs, RngStream(1));
  spec.particles = 16;
  const BoundEstimate k16 = bound_estimate(spec, m, q, tw, obs, RngStream(2));
  const double truth = gdd_log_marginal(m, 5.0);
  EXPECT_LT(k4.mean, truth);
  EXPECT_LT(k16.mean, truth);
  EXPECT_GE(k16.mean, k4.mean - 3 * std::hypot(k4.se, k16.se));
}

namespace {

struct GddSystem {
  GddModel model{5, 0.4};
  AffineGaussianProposal proposal{5};
  GaussianTwist twist{5};
  Observations obs = gdd_obs(5, 3.0);

  explicit GddSystem(std::uint64_t seed) {
    RngStream r(seed);
    ParameterSet p;
    p["a"] = Matrix::Constant(4, 1, 0.5) + 0.2 * r.normal(4, 1);
    p["b"] = Matrix::Constant(5, 1, 0.2) + 0.1 * r.normal(5, 1);
    p["c"] = 0.2 * r.normal(5, 1);
    p["log_var"] = (0.2 * r.normal(5, 1)).array() - 0.3;
    proposal.set_values(p);
    ParameterSet t;
    t["weight"] = Matrix::Constant(4, 1, 1.0) + 0.1 * r.normal(4, 1);
    t["bias"] = 0.3 * r.normal(4, 1);
    t["log_var"] = Matrix::Constant(4, 1, 1.0) + 0.2 * r.normal(4, 1);
    twist.set_values(t);
  }
};

}  // namespace

TEST(Bounds, BiasedGradientMatchesFrozenFiniteDifferences) {
  GddSystem s(3);
  BoundSpec spec;
  spec.particles = 4;
  spec.schedule = ResamplingSchedule::always();
  GradientEstimate g = biased_gradient(spec, s.model, s.proposal, s.twist, s.obs, RngStream(7));
  const auto ancestry = g.sweep.ancestors;
  SweepConfig cfg = spec.sweep_config();
  cfg.fixed_ancestry = &ancestry;
  auto log_z = [&](const ParameterSet& all) {
    GddModel m = s.model;
    m.set_values(unprefixed("model", all));
    AffineGaussianProposal q = s.proposal;
    q.set_values(unprefixed("proposal", all));
    GaussianTwist tw = s.twist;
    tw.set_values(unprefixed("twist", all));
    return smc_sweep(m, q, tw, tw.encode(m, s.obs), s.obs, cfg, RngStream(7)).log_z.item();
  };
  ParameterSet all = prefixed("model", s.model.parameters().values());
  for (const auto& [k, v] : prefixed("proposal", s.proposal.parameters().values())) all[k] = v;
  for (const auto& [k, v] : prefixed("twist", s.twist.parameters().values())) all[k] = v;
  ASSERT_EQ(g.gradients.size(), all.size());
  for (const auto& [name, value] : all) {
    const Matrix fd = testkit::numeric_gradient(
        [&](const Matrix& v) {
          ParameterSet p = all;
          p[name] = v;
          return log_z(p);
        },
        value, 1e-5);
    const Matrix& an = g.gradients.at(name);
    for (Index i = 0; i < fd.size(); ++i) {
      EXPECT_LE(std::abs(an(i) - fd(i)), 1e-4 * std::max(1.0, std::abs(fd(i)))) << name << " " << i;
    }
  }
}

TEST(Bounds, UnbiasedEstimatorStructure) {
  GddSystem s(4);
  BoundSpec spec;
  spec.particles = 3;
  spec.schedule = ResamplingSchedule::never();
  GradientEstimate b = biased_gradient(spec, s.model, s.proposal, s.twist, s.obs, RngStream(2));
  GradientEstimate u = unbiased_gradient(spec, s.model, s.proposal, s.twist, s.obs, RngStream(2));
  for (const auto& [name, m] : b.gradients) EXPECT_EQ(max_abs_diff(m, u.gradients.at(name)), 0.0);
  EXPECT_EQ(u.score_magnitude, 0.0);

  spec.schedule = ResamplingSchedule::always();
  spec.scheme = ResamplingScheme::kMultinomial;
  u = unbiased_gradient(spec, s.model, s.proposal, s.twist, s.obs, RngStream(3));
  b = biased_gradient(spec, s.model, s.proposal, s.twist, s.obs, RngStream(3));
  EXPECT_GT(u.score_magnitude, 0.0);
  for (const auto& [name, m] : u.gradients) {
    EXPECT_EQ(max_abs_diff(u.biased_part.at(name), b.gradients.at(name)), 0.0);
    EXPECT_EQ(max_abs_diff(m, u.biased_part.at(name) + u.score_part.at(name)), 0.0);
  }

  spec.schedule = ResamplingSchedule::ess_below(0.5);
  EXPECT_THROW(unbiased_gradient(spec, s.model, s.proposal, s.twist, s.obs, RngStream(3)), ConfigError);
  spec.schedule = ResamplingSchedule::always();
  spec.scheme = ResamplingScheme::kSystematic;
  EXPECT_THROW(unbiased_gradient(spec, s.model, s.proposal, s.twist, s.obs, RngStream(3)), ConfigError);
}

TEST(Bounds, ScoreTermVanishesForParameterFreeWeights) {
  // Bootstrap proposal and unit twist before the only observation: every
  // resampling step sees equal, parameter-independent weights.
  GddModel m(4, 0.3);
  BootstrapProposal q;
  UnitTwist tw;
  BoundSpec spec;
  spec.kind = BoundKind::kBpf;
  spec.particles = 3;
  spec.schedule = ResamplingSchedule::always();
  spec.scheme = ResamplingScheme::kMultinomial;
  GradientEstimate u = unbiased_gradient(spec, m, q, tw, gdd_obs(4, 2.0), RngStream(5));
  EXPECT_EQ(u.score_magnitude, 0.0);
}
