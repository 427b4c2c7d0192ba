#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include <array>
#include <cmath>

#include "sixo/errors.hpp"
#include "sixo/model.hpp"
#include "sixo/ops.hpp"

namespace sixo {

namespace {

using Jet = Eigen::AutoDiffScalar<Eigen::Matrix<double, 5, 1>>;

double value_of(double x) { return x; }
double value_of(const Jet& x) { return x.value(); }

constexpr double kGateFloor = 1e-10;

// u / (1 - exp(-u)), continuous at u = 0.
template <class S>
S ratio(const S& u) {
  using std::exp;
  if (std::abs(value_of(u)) < 1e-7) return S(1.0) + u * 0.5;
  return u / (1.0 - exp(-u));
}

template <class S>
struct Rates {
  S an, bn, am, bm, ah, bh;
};

template <class S>
Rates<S> rates(const S& v) {
  using std::exp;
  Rates<S> r;
  r.an = 0.1 * ratio<S>(0.1 * (v + 55.0));
  r.bn = 0.125 * exp(-0.0125 * (v + 65.0));
  r.am = ratio<S>(0.1 * (v + 40.0));
  r.bm = 4.0 * exp(-0.0556 * (v + 65.0));
  r.ah = 0.07 * exp(-0.05 * (v + 65.0));
  r.bh = 1.0 / (1.0 + exp(-0.1 * (v + 35.0)));
  return r;
}

template <class S>
std::array<S, 4> drift(const std::array<S, 4>& s, const S& i_ext, const HhConstants& k) {
  const S& v = s[0];
  const S& n = s[1];
  const S& m = s[2];
  const S& h = s[3];
  const Rates<S> r = rates(v);
  const S n2 = n * n;
  const S current = i_ext - k.g_l * (v - k.e_l) - k.g_k * n2 * n2 * (v - k.e_k) -
                    k.g_na * m * m * m * h * (v - k.e_na);
  return {current / k.c_m, r.an * (1.0 - n) - r.bn * n, r.am * (1.0 - m) - r.bm * m,
          r.ah * (1.0 - h) - r.bh * h};
}

template <class S>
S clamp_gate(const S& x) {
  if (value_of(x) < kGateFloor) return S(kGateFloor);
  if (value_of(x) > 1.0 - kGateFloor) return S(1.0 - kGateFloor);
  return x;
}

template <class S>
S sigmoid_of(const S& u) {
  using std::exp;
  return 1.0 / (1.0 + exp(-u));
}

template <class S>
S logit_of(const S& x) {
  using std::log;
  return log(x / (1.0 - x));
}

// One model step: unconstrained (v, logit n, logit m, logit h) -> unconstrained mean.
template <class S>
std::array<S, 4> integrate(const std::array<S, 4>& u, const S& i_ext, const HhConstants& k) {
  std::array<S, 4> s = {u[0], clamp_gate(sigmoid_of(u[1])), clamp_gate(sigmoid_of(u[2])),
                        clamp_gate(sigmoid_of(u[3]))};
  for (int step = 0; step < k.substeps; ++step) {
    const std::array<S, 4> d = drift(s, i_ext, k);
    s[0] = s[0] + k.dt * d[0];
    for (int g = 1; g < 4; ++g) s[g] = clamp_gate(S(s[g] + k.dt * d[g]));
  }
  return {s[0], logit_of(s[1]), logit_of(s[2]), logit_of(s[3])};
}

}  // namespace

Eigen::Vector4d hh_drift(const Eigen::Vector4d& state, double i_ext, const HhConstants& k) {
  const auto d = drift<double>({state(0), state(1), state(2), state(3)}, i_ext, k);
  return {d[0], d[1], d[2], d[3]};
}

Eigen::Vector4d hh_steady_state(double v, const HhConstants&) {
  const Rates<double> r = rates(v);
  return {v, r.an / (r.an + r.bn), r.am / (r.am + r.bm), r.ah / (r.ah + r.bh)};
}

HhModel::HhModel(int T, double i_ext, int observation_every, HhConstants constants)
    : T_(T), every_(observation_every), k_(constants) {
  if (T < 1) throw ConfigError("HH length must be positive");
  if (observation_every < 1) throw ConfigError("observation_every must be positive");
  declare("i_ext", Matrix::Constant(1, 1, i_ext));
}

std::vector<char> HhModel::observation_mask() const {
  std::vector<char> mask(static_cast<std::size_t>(T_), 0);
  for (int t = every_; t <= T_; t += every_) mask[static_cast<std::size_t>(t - 1)] = 1;
  return mask;
}

std::unique_ptr<StateSpaceModel> HhModel::clone() const { return std::make_unique<HhModel>(*this); }

DiagonalGaussian HhModel::initial(Index) const {
  const Eigen::Vector4d ss = hh_steady_state(k_.v0_mean, k_);
  Matrix mean(1, 4), var(1, 4);
  mean << k_.v0_mean, std::log(ss(1) / (1 - ss(1))), std::log(ss(2) / (1 - ss(2))),
      std::log(ss(3) / (1 - ss(3)));
  var << k_.v0_var, k_.var_gate, k_.var_gate, k_.var_gate;
  return {Tensor(mean), Tensor(var)};
}

Tensor HhModel::propagate(const Tensor& x_prev) const {
  if (x_prev.cols() != 4) throw ContractViolation("HH state has four components");
  const Tensor& i_ext = param("i_ext");
  const Matrix& x = x_prev.value();
  const Index K = x.rows();
  Matrix out(K, 4);
  Tape* tape = common_tape({&x_prev, &i_ext});
  if (tape == nullptr) {
    const double current = i_ext.item();
    for (Index r = 0; r < K; ++r) {
      const auto y = integrate<double>({x(r, 0), x(r, 1), x(r, 2), x(r, 3)}, current, k_);
      for (int c = 0; c < 4; ++c) out(r, c) = y[static_cast<std::size_t>(c)];
    }
    return Tensor(std::move(out));
  }
  // Per-particle Jacobian d(out)/d(x_prev, i_ext), stored row-major as 4x5 blocks.
  Matrix jac(K, 20);
  for (Index r = 0; r < K; ++r) {
    std::array<Jet, 4> u;
    for (int c = 0; c < 4; ++c) u[static_cast<std::size_t>(c)] = Jet(x(r, c), 5, c);
    const Jet current(i_ext.item(), 5, 4);
    const auto y = integrate<Jet>(u, current, k_);
    for (int c = 0; c < 4; ++c) {
      out(r, c) = y[static_cast<std::size_t>(c)].value();
      for (int j = 0; j < 5; ++j) jac(r, c * 5 + j) = y[static_cast<std::size_t>(c)].derivatives()(j);
    }
  }
  return tape->record(std::move(out), [x_prev, i_ext, jac = std::move(jac)](const Matrix& g,
                                                                           Tape& t) {
    Matrix dx = Matrix::Zero(g.rows(), 4);
    double di = 0.0;
    for (Index r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < 4; ++c) {
        for (int j = 0; j < 4; ++j) dx(r, j) += g(r, c) * jac(r, c * 5 + j);
        di += g(r, c) * jac(r, c * 5 + 4);
      }
    }
    t.accumulate(x_prev, dx);
    t.accumulate(i_ext, Matrix::Constant(1, 1, di));
  });
}

DiagonalGaussian HhModel::transition(const Tensor& x_prev, int t) const {
  check_step(t, 2);
  Matrix var(1, 4);
  var << k_.var_v, k_.var_gate, k_.var_gate, k_.var_gate;
  return {propagate(x_prev), Tensor(var)};
}

Tensor HhModel::observation_component_logpdf(int d, const Tensor& x_state, const Tensor& y_d,
                                             int t) const {
  if (d != 0) throw ContractViolation("HH observations are scalar");
  check_step(t, 1);
  return gaussian_logpdf(y_d, x_state, Tensor::scalar(k_.obs_var));
}

Matrix HhModel::sample_observation(const Matrix& x, int, RngStream& rng) const {
  return (x.col(0).array() + std::sqrt(k_.obs_var) * rng.normal(x.rows(), 1).array()).matrix();
}

}  // namespace sixo
