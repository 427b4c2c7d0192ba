#include <cmath>

#include "sixo/errors.hpp"
#include "sixo/model.hpp"
#include "sixo/ops.hpp"

namespace sixo {

GddModel::GddModel(int T, double alpha) : T_(T) {
  if (T < 1) throw ConfigError("GDD length must be positive");
  declare("alpha", Matrix::Constant(1, 1, alpha));
}

std::vector<char> GddModel::observation_mask() const {
  std::vector<char> mask(static_cast<std::size_t>(T_), 0);
  mask.back() = 1;
  return mask;
}

std::unique_ptr<StateSpaceModel> GddModel::clone() const { return std::make_unique<GddModel>(*this); }

DiagonalGaussian GddModel::initial(Index) const {
  return {alpha_tensor(), Tensor::scalar(1.0)};
}

DiagonalGaussian GddModel::transition(const Tensor& x_prev, int t) const {
  check_step(t, 2);
  return {x_prev + alpha_tensor(), Tensor::scalar(1.0)};
}

Tensor GddModel::observation_component_logpdf(int d, const Tensor& x_state, const Tensor& y_d,
                                              int t) const {
  if (d != 0) throw ContractViolation("GDD observations are scalar");
  check_step(t, T_);
  return gaussian_logpdf(y_d, x_state + alpha_tensor(), Tensor::scalar(1.0));
}

Matrix GddModel::sample_observation(const Matrix& x, int t, RngStream& rng) const {
  check_step(t, T_);
  return (x.array() + alpha() + rng.normal(x.rows(), 1).array()).matrix();
}

double gdd_log_marginal(const GddModel& model, double y_T) {
  const int T = model.length();
  return gaussian_logpdf(y_T, (T + 1) * model.alpha(), T + 1.0);
}

// The smoothing and proposal means carry no alpha offset: conditioning on y_T removes
// the drift exactly because both x_t and y_T accumulate it linearly.
GaussianMoments gdd_smoothing_marginal(const GddModel& model, double y_T, int t) {
  const int T = model.length();
  if (t < 1 || t > T) throw ContractViolation("timestep out of range");
  return {t * y_T / (T + 1.0), t * (T - t + 1.0) / (T + 1.0)};
}

GaussianMoments gdd_optimal_proposal(const GddModel& model, int t, double x_prev, double y_T) {
  const int T = model.length();
  if (t < 1 || t > T) throw ContractViolation("timestep out of range");
  if (t == 1) return {y_T / (T + 1.0), T / (T + 1.0)};
  const double s = T - t + 1.0;
  return {(s * x_prev + y_T) / (s + 1.0), s / (s + 1.0)};
}

double gdd_optimal_twist(const GddModel& model, int t, double x_t, double y_T) {
  const int T = model.length();
  if (t < 1 || t >= T) throw ContractViolation("optimal twist is defined for t in [1, T-1]");
  const double s = T - t + 1.0;
  return gaussian_logpdf(y_T, x_t + model.alpha() * s, s);
}

}  // namespace sixo
