#include "sixo/proposal.hpp"

#include "sixo/errors.hpp"
#include "sixo/ops.hpp"

namespace sixo {

namespace {

DiagonalGaussian prior_step(const StateSpaceModel& model, int t, const Tensor& x_prev,
                            Index particles) {
  return t == 1 ? model.initial(particles) : model.transition(x_prev, t);
}

Tensor reparameterize(const DiagonalGaussian& d, const Matrix& noise) {
  return broadcast_to(d.mean + sqrt(d.variance) * Tensor(noise), noise.rows(), noise.cols());
}

void check_t(const StateSpaceModel& model, int t) {
  if (t < 1 || t > model.length()) throw ContractViolation("proposal timestep out of range");
}

}  // namespace

Proposed Proposal::propose(const StateSpaceModel& model, const Observations& obs, int t,
                           const Tensor& x_prev, const Matrix& noise) const {
  check_t(model, t);
  const DiagonalGaussian d = distribution(model, obs, t, x_prev, noise.rows());
  Proposed out;
  out.x = reparameterize(d, noise);
  out.log_q = diagonal_gaussian_logpdf(out.x, d);
  return out;
}

Tensor Proposal::log_density(const StateSpaceModel& model, const Observations& obs, int t,
                             const Tensor& x_prev, const Tensor& x) const {
  return diagonal_gaussian_logpdf(x, distribution(model, obs, t, x_prev, x.rows()));
}

DiagonalGaussian BootstrapProposal::distribution(const StateSpaceModel& model, const Observations&,
                                                 int t, const Tensor& x_prev,
                                                 Index particles) const {
  check_t(model, t);
  return prior_step(model, t, x_prev, particles);
}

Proposed BootstrapProposal::propose(const StateSpaceModel& model, const Observations& obs, int t,
                                    const Tensor& x_prev, const Matrix& noise) const {
  Proposed out = Proposal::propose(model, obs, t, x_prev, noise);
  out.log_prior_minus_q = Tensor::zeros(noise.rows(), 1);
  return out;
}

AffineGaussianProposal::AffineGaussianProposal(int T) : T_(T) {
  if (T < 1) throw ConfigError("proposal length must be positive");
  declare("a", Matrix::Zero(std::max(T - 1, 0), 1));
  declare("b", Matrix::Zero(T, 1));
  declare("c", Matrix::Zero(T, 1));
  declare("log_var", Matrix::Zero(T, 1));
}

DiagonalGaussian AffineGaussianProposal::distribution(const StateSpaceModel& model,
                                                      const Observations& obs, int t,
                                                      const Tensor& x_prev, Index) const {
  check_t(model, t);
  if (model.length() != T_ || model.state_dim() != 1) {
    throw UnsupportedModel("affine proposal expects a scalar-state model of length " +
                           std::to_string(T_));
  }
  const int last = obs.last_observed();
  if (last == 0) throw ContractViolation("affine proposal needs an observation");
  const Tensor y(obs.at(last));
  Tensor mean = row(param("b"), t - 1) * y + row(param("c"), t - 1);
  if (t > 1) mean = mean + row(param("a"), t - 2) * x_prev;
  return {mean, exp(row(param("log_var"), t - 1))};
}

ParameterSet gdd_optimal_affine_parameters(int T) {
  ParameterSet p;
  p["a"] = Matrix::Zero(std::max(T - 1, 0), 1);
  p["b"] = Matrix::Zero(T, 1);
  p["c"] = Matrix::Zero(T, 1);
  p["log_var"] = Matrix::Zero(T, 1);
  p["b"](0, 0) = 1.0 / (T + 1.0);
  p["log_var"](0, 0) = std::log(T / (T + 1.0));
  for (int t = 2; t <= T; ++t) {
    const double s = T - t + 1.0;
    p["a"](t - 2, 0) = s / (s + 1.0);
    p["b"](t - 1, 0) = 1.0 / (s + 1.0);
    p["log_var"](t - 1, 0) = std::log(s / (s + 1.0));
  }
  return p;
}

DiagonalGaussian GddOptimalProposal::distribution(const StateSpaceModel& model,
                                                  const Observations& obs, int t,
                                                  const Tensor& x_prev, Index) const {
  check_t(model, t);
  if (model.kind() != "gdd") throw UnsupportedModel("optimal proposal is defined for GDD only");
  const int T = model.length();
  const Tensor y(obs.at(T));
  if (t == 1) return {y / (T + 1.0), Tensor::scalar(T / (T + 1.0))};
  const double s = T - t + 1.0;
  return {(x_prev * s + y) / (s + 1.0), Tensor::scalar(s / (s + 1.0))};
}

GaussianProduct gaussian_product(const Tensor& mean1, const Tensor& var1, const Tensor& mean2,
                                 const Tensor& var2) {
  if ((var1.value().array() <= 0).any() || (var2.value().array() <= 0).any()) {
    throw DomainError("gaussian_product: variances must be strictly positive");
  }
  const Tensor total = var1 + var2;
  GaussianProduct out;
  out.mean = (var2 * mean1 + var1 * mean2) / total;
  out.variance = var1 * var2 / total;
  out.log_normalizer = gaussian_logpdf(mean1, mean2, total);
  return out;
}

PerturbationProposal::PerturbationProposal(int dim, int T) : N_(dim), T_(T) {
  if (dim < 1 || T < 1) throw ConfigError("perturbation proposal shape must be positive");
  declare("mu", Matrix::Zero(T, dim));
  declare("log_var", Matrix::Zero(T, dim));
}

DiagonalGaussian PerturbationProposal::prior(const StateSpaceModel& model, int t,
                                             const Tensor& x_prev, Index particles) const {
  check_t(model, t);
  if (model.length() != T_ || model.state_dim() != N_) {
    throw UnsupportedModel("perturbation proposal shape does not match the model");
  }
  return prior_step(model, t, x_prev, particles);
}

DiagonalGaussian PerturbationProposal::distribution(const StateSpaceModel& model,
                                                    const Observations&, int t,
                                                    const Tensor& x_prev, Index particles) const {
  const DiagonalGaussian p = prior(model, t, x_prev, particles);
  const GaussianProduct g = gaussian_product(p.mean, p.variance, row(param("mu"), t - 1),
                                             exp(row(param("log_var"), t - 1)));
  return {g.mean, g.variance};
}

Proposed PerturbationProposal::propose(const StateSpaceModel& model, const Observations&, int t,
                                       const Tensor& x_prev, const Matrix& noise) const {
  const DiagonalGaussian p = prior(model, t, x_prev, noise.rows());
  const Tensor mu = row(param("mu"), t - 1);
  const Tensor var = exp(row(param("log_var"), t - 1));
  const GaussianProduct g = gaussian_product(p.mean, p.variance, mu, var);
  Proposed out;
  out.x = reparameterize({g.mean, g.variance}, noise);
  out.log_q = row_sum(gaussian_logpdf(out.x, g.mean, g.variance));
  // p(x) N(x; mu, var) = Z q(x), so log p - log q = log Z - log N(x; mu, var).
  out.log_prior_minus_q = row_sum(broadcast_to(g.log_normalizer, noise.rows(), noise.cols()) -
                                  gaussian_logpdf(out.x, mu, var));
  return out;
}

}  // namespace sixo
