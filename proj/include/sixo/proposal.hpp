#pragma once

#include <memory>
#include <string>

#include "sixo/component.hpp"
#include "sixo/model.hpp"

namespace sixo {

struct Proposed {
  Tensor x;      // K x D, a differentiable function of the parameters and the noise
  Tensor log_q;  // K x 1
  // log p(x_t | x_{t-1}) - log q(x_t), when the proposal can form it without
  // cancellation; empty otherwise.
  Tensor log_prior_minus_q;
};

// Gaussian proposals q_t(x_t | x_{t-1}, y) sampled by reparameterization.
class Proposal : public Parameterized {
 public:
  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Proposal> clone() const = 0;
  virtual bool is_bootstrap() const { return false; }

  // `x_prev` is ignored (and may be empty) at t = 1.
  virtual DiagonalGaussian distribution(const StateSpaceModel& model, const Observations& obs,
                                        int t, const Tensor& x_prev, Index particles) const = 0;

  // `noise` holds K x D standard normal draws.
  virtual Proposed propose(const StateSpaceModel& model, const Observations& obs, int t,
                           const Tensor& x_prev, const Matrix& noise) const;

  Tensor log_density(const StateSpaceModel& model, const Observations& obs, int t,
                     const Tensor& x_prev, const Tensor& x) const;
};

// q = prior transition; the weight ratio p/q is exactly zero in log space.
class BootstrapProposal : public Proposal {
 public:
  std::string kind() const override { return "bootstrap"; }
  std::unique_ptr<Proposal> clone() const override { return std::make_unique<BootstrapProposal>(*this); }
  bool is_bootstrap() const override { return true; }
  DiagonalGaussian distribution(const StateSpaceModel& model, const Observations& obs, int t,
                                const Tensor& x_prev, Index particles) const override;
  Proposed propose(const StateSpaceModel& model, const Observations& obs, int t,
                   const Tensor& x_prev, const Matrix& noise) const override;
};

// GDD: q_t = N(a_t x_{t-1} + b_t y_T + c_t, exp(log_var_t)), no a_1; 4T - 1 parameters.
class AffineGaussianProposal : public Proposal {
 public:
  explicit AffineGaussianProposal(int T);
  std::string kind() const override { return "affine"; }
  std::unique_ptr<Proposal> clone() const override {
    return std::make_unique<AffineGaussianProposal>(*this);
  }
  DiagonalGaussian distribution(const StateSpaceModel& model, const Observations& obs, int t,
                                const Tensor& x_prev, Index particles) const override;

 private:
  int T_;
};

// Parameters of AffineGaussianProposal reproducing the exact GDD smoothing conditionals.
ParameterSet gdd_optimal_affine_parameters(int T);

// Analytic GDD optimal proposal p(x_t | x_{t-1}, y_T) tied to the model's drift.
class GddOptimalProposal : public Proposal {
 public:
  std::string kind() const override { return "gdd-optimal"; }
  std::unique_ptr<Proposal> clone() const override { return std::make_unique<GddOptimalProposal>(*this); }
  DiagonalGaussian distribution(const StateSpaceModel& model, const Observations& obs, int t,
                                const Tensor& x_prev, Index particles) const override;
};

struct GaussianProduct {
  Tensor mean;
  Tensor variance;
  Tensor log_normalizer;  // log N(mean1; mean2, var1 + var2)
};

// N(x; m1, v1) N(x; m2, v2) = exp(log_normalizer) N(x; mean, variance), elementwise.
GaussianProduct gaussian_product(const Tensor& mean1, const Tensor& var1, const Tensor& mean2,
                                 const Tensor& var2);

// SVM: q_t proportional to p(x_t | x_{t-1}) N(x_t; mu_t, exp(log_var_t)); 2NT parameters.
class PerturbationProposal : public Proposal {
 public:
  PerturbationProposal(int dim, int T);
  std::string kind() const override { return "perturbation"; }
  std::unique_ptr<Proposal> clone() const override {
    return std::make_unique<PerturbationProposal>(*this);
  }
  DiagonalGaussian distribution(const StateSpaceModel& model, const Observations& obs, int t,
                                const Tensor& x_prev, Index particles) const override;
  Proposed propose(const StateSpaceModel& model, const Observations& obs, int t,
                   const Tensor& x_prev, const Matrix& noise) const override;

 private:
  DiagonalGaussian prior(const StateSpaceModel& model, int t, const Tensor& x_prev,
                         Index particles) const;
  int N_;
  int T_;
};

}  // namespace sixo
