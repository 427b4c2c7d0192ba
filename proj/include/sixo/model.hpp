#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sixo/component.hpp"
#include "sixo/random.hpp"
#include "sixo/tensor.hpp"

namespace sixo {

// Observations y_{1:T} for a batch of B sequences sharing one mask. Timesteps in
// every public accessor are 1-based.
class Observations {
 public:
  Observations() = default;
  Observations(std::vector<Matrix> values, std::vector<char> mask);

  int length() const { return static_cast<int>(mask_.size()); }
  Index batch() const;
  Index dim() const;
  bool present(int t) const;
  const Matrix& at(int t) const;  // B x dim; throws when absent
  int last_observed() const;      // largest t with an observation, 0 if none
  const std::vector<char>& mask() const { return mask_; }

  Observations item(Index b) const;
  static Observations stack(const std::vector<Observations>& items);

 private:
  std::vector<Matrix> values_;  // empty matrix where the mask is false
  std::vector<char> mask_;
};

// Gaussian with diagonal covariance, one row per particle (rows may broadcast).
struct DiagonalGaussian {
  Tensor mean;
  Tensor variance;
};

Tensor diagonal_gaussian_logpdf(const Tensor& x, const DiagonalGaussian& dist);  // K x 1

// Markovian state-space model p(x_1) prod p(x_t | x_{t-1}) prod p(y_t | x_t) whose
// prior transitions are Gaussian in the (unconstrained) state space.
class StateSpaceModel : public Parameterized {
 public:
  virtual std::string kind() const = 0;
  virtual int length() const = 0;
  virtual int state_dim() const = 0;
  virtual int obs_dim() const = 0;
  virtual std::vector<char> observation_mask() const = 0;
  virtual std::unique_ptr<StateSpaceModel> clone() const = 0;

  virtual DiagonalGaussian initial(Index particles) const = 0;
  virtual DiagonalGaussian transition(const Tensor& x_prev, int t) const = 0;

  // log p(y_d | x_{s(d)}) for observation component d, where s is observed_state.
  virtual Tensor observation_component_logpdf(int d, const Tensor& x_state, const Tensor& y_d,
                                              int t) const = 0;
  virtual int observed_state(int d) const = 0;
  virtual Matrix sample_observation(const Matrix& x, int t, RngStream& rng) const = 0;

  Tensor initial_logpdf(const Tensor& x1) const;
  Tensor transition_logpdf(const Tensor& x_prev, const Tensor& x, int t) const;
  // Sums the components; `y` is 1 x dim or K x dim.
  virtual Tensor observation_logpdf(const Tensor& x, const Tensor& y, int t) const;

 protected:
  void check_step(int t, int lo) const;
};

struct Dataset {
  std::vector<Matrix> latents;  // T entries, count x state_dim
  Observations observations;    // batch = count
};

// Ancestral sampling of `count` independent trajectories. With observations off,
// the latents are prior draws and the observation batch is empty.
Dataset simulate(const StateSpaceModel& model, Index count, RngStream rng,
                 bool with_observations = true);

// Gaussian drift diffusion: x_1 ~ N(alpha, 1), x_t ~ N(x_{t-1} + alpha, 1),
// a single observation y_T ~ N(x_T + alpha, 1).
class GddModel : public StateSpaceModel {
 public:
  explicit GddModel(int T, double alpha = 0.0);

  std::string kind() const override { return "gdd"; }
  int length() const override { return T_; }
  int state_dim() const override { return 1; }
  int obs_dim() const override { return 1; }
  std::vector<char> observation_mask() const override;
  std::unique_ptr<StateSpaceModel> clone() const override;

  DiagonalGaussian initial(Index particles) const override;
  DiagonalGaussian transition(const Tensor& x_prev, int t) const override;
  Tensor observation_component_logpdf(int d, const Tensor& x_state, const Tensor& y_d,
                                      int t) const override;
  int observed_state(int) const override { return 0; }
  Matrix sample_observation(const Matrix& x, int t, RngStream& rng) const override;

  double alpha() const { return param("alpha").item(); }
  const Tensor& alpha_tensor() const { return param("alpha"); }

 private:
  int T_;
};

// Closed-form GDD quantities.
struct GaussianMoments {
  double mean;
  double variance;
};
double gdd_log_marginal(const GddModel& model, double y_T);
GaussianMoments gdd_smoothing_marginal(const GddModel& model, double y_T, int t);
GaussianMoments gdd_optimal_proposal(const GddModel& model, int t, double x_prev, double y_T);
double gdd_optimal_twist(const GddModel& model, int t, double x_t, double y_T);

// Stochastic volatility: x_1 ~ N(0, Q), x_t ~ N(mu + phi (x_{t-1} - mu), Q),
// y_t ~ N(0, beta^2 exp(x_t)), all diagonal. phi = tanh(phi_raw).
class SvmModel : public StateSpaceModel {
 public:
  SvmModel(int dim, int T);

  std::string kind() const override { return "svm"; }
  int length() const override { return T_; }
  int state_dim() const override { return N_; }
  int obs_dim() const override { return N_; }
  std::vector<char> observation_mask() const override;
  std::unique_ptr<StateSpaceModel> clone() const override;

  DiagonalGaussian initial(Index particles) const override;
  DiagonalGaussian transition(const Tensor& x_prev, int t) const override;
  Tensor observation_component_logpdf(int d, const Tensor& x_state, const Tensor& y_d,
                                      int t) const override;
  int observed_state(int d) const override { return d; }
  Matrix sample_observation(const Matrix& x, int t, RngStream& rng) const override;
  Tensor observation_logpdf(const Tensor& x, const Tensor& y, int t) const override;

  Tensor phi() const;
  Tensor q() const;
  Tensor beta() const;

 private:
  int N_;
  int T_;
};

// Log-returns loader: T rows x N columns, optional header row.
Matrix load_returns_csv(const std::string& path);
Observations observations_from_matrix(const Matrix& values);

struct HhConstants {
  double g_na = 120.0, g_k = 36.0, g_l = 0.3;
  double e_na = 50.0, e_k = -77.0, e_l = -54.387;
  double c_m = 1.0;
  double dt = 0.02;
  int substeps = 50;
  double var_v = 0.18, var_gate = 0.002;
  double obs_var = 25.0;
  double v0_mean = -65.0, v0_var = 625.0;
};

// Hodgkin-Huxley neuron with state (v, logit n, logit m, logit h). One model step
// integrates `substeps` Euler steps of the squid-axon equations (Dayan & Abbott
// 5.6 rate functions) and adds Gaussian noise in the unconstrained space.
class HhModel : public StateSpaceModel {
 public:
  HhModel(int T, double i_ext, int observation_every = 1, HhConstants constants = {});

  std::string kind() const override { return "hh"; }
  int length() const override { return T_; }
  int state_dim() const override { return 4; }
  int obs_dim() const override { return 1; }
  std::vector<char> observation_mask() const override;
  std::unique_ptr<StateSpaceModel> clone() const override;

  DiagonalGaussian initial(Index particles) const override;
  DiagonalGaussian transition(const Tensor& x_prev, int t) const override;
  Tensor observation_component_logpdf(int d, const Tensor& x_state, const Tensor& y_d,
                                      int t) const override;
  int observed_state(int) const override { return 0; }
  Matrix sample_observation(const Matrix& x, int t, RngStream& rng) const override;

  const HhConstants& constants() const { return k_; }
  int observation_every() const { return every_; }
  double i_ext() const { return param("i_ext").item(); }

  // Deterministic part of one model step applied to each row of x.
  Tensor propagate(const Tensor& x_prev) const;

 private:
  int T_;
  int every_;
  HhConstants k_;
};

// Time derivative of constrained (v, n, m, h).
Eigen::Vector4d hh_drift(const Eigen::Vector4d& state, double i_ext, const HhConstants& k = {});
Eigen::Vector4d hh_steady_state(double v, const HhConstants& k = {});  // (v, n_inf, m_inf, h_inf)

}  // namespace sixo
