#include "sixo/model.hpp"

#include <cmath>

#include "sixo/errors.hpp"
#include "sixo/ops.hpp"

namespace sixo {

Observations::Observations(std::vector<Matrix> values, std::vector<char> mask)
    : values_(std::move(values)), mask_(std::move(mask)) {
  if (values_.size() != mask_.size()) {
    throw ContractViolation("observation values and mask differ in length");
  }
  Index rows = -1, cols = -1;
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    if (!mask_[i]) {
      values_[i].resize(0, 0);
      continue;
    }
    if (values_[i].size() == 0) throw ContractViolation("missing value for a masked-in timestep");
    if (rows < 0) {
      rows = values_[i].rows();
      cols = values_[i].cols();
    } else if (values_[i].rows() != rows || values_[i].cols() != cols) {
      throw ContractViolation("observation shapes differ across timesteps");
    }
  }
}

Index Observations::batch() const {
  for (std::size_t i = 0; i < mask_.size(); ++i)
    if (mask_[i]) return values_[i].rows();
  return 0;
}

Index Observations::dim() const {
  for (std::size_t i = 0; i < mask_.size(); ++i)
    if (mask_[i]) return values_[i].cols();
  return 0;
}

bool Observations::present(int t) const {
  return t >= 1 && t <= length() && mask_[static_cast<std::size_t>(t - 1)];
}

const Matrix& Observations::at(int t) const {
  if (!present(t)) {
    throw ContractViolation("no observation at timestep " + std::to_string(t));
  }
  return values_[static_cast<std::size_t>(t - 1)];
}

int Observations::last_observed() const {
  for (int t = length(); t >= 1; --t)
    if (present(t)) return t;
  return 0;
}

Observations Observations::item(Index b) const {
  std::vector<Matrix> values(values_.size());
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    if (!mask_[i]) continue;
    if (b < 0 || b >= values_[i].rows()) throw ContractViolation("batch index out of range");
    values[i] = values_[i].row(b);
  }
  return Observations(std::move(values), mask_);
}

Observations Observations::stack(const std::vector<Observations>& items) {
  if (items.empty()) return {};
  const auto& mask = items.front().mask();
  std::vector<Matrix> values(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    Index rows = 0;
    for (const auto& it : items) {
      if (it.mask() != mask) throw ContractViolation("cannot stack observations with different masks");
      rows += it.values_[i].rows();
    }
    values[i].resize(rows, items.front().values_[i].cols());
    Index r = 0;
    for (const auto& it : items) {
      values[i].middleRows(r, it.values_[i].rows()) = it.values_[i];
      r += it.values_[i].rows();
    }
  }
  return Observations(std::move(values), mask);
}

Tensor diagonal_gaussian_logpdf(const Tensor& x, const DiagonalGaussian& dist) {
  return row_sum(gaussian_logpdf(x, dist.mean, dist.variance));
}

void StateSpaceModel::check_step(int t, int lo) const {
  if (t < lo || t > length()) {
    throw ContractViolation("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                            ", " + std::to_string(length()) + "]");
  }
}

Tensor StateSpaceModel::initial_logpdf(const Tensor& x1) const {
  if (x1.cols() != state_dim()) throw ContractViolation("state dimension mismatch");
  return diagonal_gaussian_logpdf(x1, initial(x1.rows()));
}

Tensor StateSpaceModel::transition_logpdf(const Tensor& x_prev, const Tensor& x, int t) const {
  check_step(t, 2);
  if (x.cols() != state_dim() || x_prev.cols() != state_dim()) {
    throw ContractViolation("state dimension mismatch");
  }
  return diagonal_gaussian_logpdf(x, transition(x_prev, t));
}

Tensor StateSpaceModel::observation_logpdf(const Tensor& x, const Tensor& y, int t) const {
  check_step(t, 1);
  if (!observation_mask()[static_cast<std::size_t>(t - 1)]) {
    throw ContractViolation("no observation is defined at timestep " + std::to_string(t));
  }
  Tensor total;
  for (int d = 0; d < obs_dim(); ++d) {
    Tensor term = observation_component_logpdf(d, col(x, observed_state(d)), col(y, d), t);
    total = total.empty() ? term : total + term;
  }
  return total;
}

namespace {

Matrix sample_gaussian(const DiagonalGaussian& dist, Index rows, Index cols, RngStream& rng) {
  const Matrix eps = rng.normal(rows, cols);
  Tensor x = dist.mean + sqrt(dist.variance) * Tensor(eps);
  return broadcast_to(x, rows, cols).value();
}

}  // namespace

Dataset simulate(const StateSpaceModel& model, Index count, RngStream rng, bool with_observations) {
  const int T = model.length();
  const int D = model.state_dim();
  const auto mask = model.observation_mask();
  Dataset data;
  data.latents.reserve(static_cast<std::size_t>(T));
  std::vector<Matrix> ys(static_cast<std::size_t>(T));
  RngStream latent_rng = rng.split("latent");
  RngStream obs_rng = rng.split("observation");
  for (int t = 1; t <= T; ++t) {
    RngStream step = latent_rng.split(static_cast<std::uint64_t>(t));
    DiagonalGaussian dist =
        t == 1 ? model.initial(count) : model.transition(Tensor(data.latents.back()), t);
    data.latents.push_back(sample_gaussian(dist, count, D, step));
    if (with_observations && mask[static_cast<std::size_t>(t - 1)]) {
      RngStream ystep = obs_rng.split(static_cast<std::uint64_t>(t));
      ys[static_cast<std::size_t>(t - 1)] = model.sample_observation(data.latents.back(), t, ystep);
    }
  }
  if (with_observations) data.observations = Observations(std::move(ys), mask);
  return data;
}

}  // namespace sixo
