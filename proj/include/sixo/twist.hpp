#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sixo/component.hpp"
#include "sixo/model.hpp"
#include "sixo/quadrature.hpp"

namespace sixo {

// Observation-dependent quantities computed once per (observations, parameters).
struct TwistContext {
  Observations observations;
  std::vector<Tensor> per_t;  // index t - 1; rows = observation batch
};

// Twisting function r(y_{t+1:T}, x_t) evaluated in log space. The value at t = T
// is 0 for every family.
class Twist : public Parameterized {
 public:
  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Twist> clone() const = 0;
  virtual bool is_unit() const { return false; }

  virtual TwistContext encode(const StateSpaceModel& model, const Observations& obs) const;

  // K x 1. Rows of the context broadcast against the rows of x.
  Tensor log_twist(const StateSpaceModel& model, const TwistContext& ctx, int t,
                   const Tensor& x) const;

 protected:
  virtual Tensor value(const StateSpaceModel& model, const TwistContext& ctx, int t,
                       const Tensor& x) const = 0;
};

class UnitTwist : public Twist {
 public:
  std::string kind() const override { return "unit"; }
  std::unique_ptr<Twist> clone() const override { return std::make_unique<UnitTwist>(*this); }
  bool is_unit() const override { return true; }

 protected:
  Tensor value(const StateSpaceModel&, const TwistContext&, int, const Tensor& x) const override;
};

// log N(y_T; x_t + alpha (T - t + 1), T - t + 1) using the model's drift.
class GddOptimalTwist : public Twist {
 public:
  std::string kind() const override { return "gdd-optimal"; }
  std::unique_ptr<Twist> clone() const override { return std::make_unique<GddOptimalTwist>(*this); }

 protected:
  Tensor value(const StateSpaceModel& model, const TwistContext& ctx, int t,
               const Tensor& x) const override;
};

// log N(y_T; w_t x_t + b_t, exp(log_var_t)) for t < T.
class GaussianTwist : public Twist {
 public:
  explicit GaussianTwist(int T);
  std::string kind() const override { return "gaussian"; }
  std::unique_ptr<Twist> clone() const override { return std::make_unique<GaussianTwist>(*this); }

 protected:
  Tensor value(const StateSpaceModel& model, const TwistContext& ctx, int t,
               const Tensor& x) const override;
};

// Gauss-Hermite estimate of log p(y_{t+1} | x_t); zero when y_{t+1} is absent.
class QuadratureTwist : public Twist {
 public:
  explicit QuadratureTwist(int degree = 5);
  std::string kind() const override { return "quadrature"; }
  std::unique_ptr<Twist> clone() const override { return std::make_unique<QuadratureTwist>(*this); }
  int degree() const { return static_cast<int>(rule_.nodes.size()); }

 protected:
  Tensor value(const StateSpaceModel& model, const TwistContext& ctx, int t,
               const Tensor& x) const override;

 private:
  GaussHermiteRule rule_;
};

// log sum_i w_i p(y_{t+1} | mean + scale z_i) under the transition at (x_t, t + 1).
Tensor one_step_lookahead(const StateSpaceModel& model, const GaussHermiteRule& rule,
                          const Tensor& x_t, const Tensor& y_next, int t);

// log r = a x^2 + b x + c where an MLP maps (y_T, t / T) to (a, b, c). The leading
// coefficient is kept below -1e-6 by a = -1e-6 - softplus(-raw_a).
class QuadraticHeadTwist : public Twist {
 public:
  QuadraticHeadTwist(int T, int hidden, RngStream rng, double y_scale = 1.0);
  std::string kind() const override { return "quadratic"; }
  std::unique_ptr<Twist> clone() const override {
    return std::make_unique<QuadraticHeadTwist>(*this);
  }
  TwistContext encode(const StateSpaceModel& model, const Observations& obs) const override;
  int hidden() const { return hidden_; }
  double y_scale() const { return y_scale_; }

 protected:
  Tensor value(const StateSpaceModel& model, const TwistContext& ctx, int t,
               const Tensor& x) const override;

 private:
  int T_;
  int hidden_;
  double y_scale_;
};

// Fixed affine standardization applied before a network sees a value.
struct InputScaling {
  RowVector shift;
  RowVector scale;
};

// Backward tanh RNN over the present observations; the encoding at t summarizes
// only observations after t, interpolating linearly between observation times.
// A one-hidden-layer MLP on [encoding, x_t] gives the log twist.
class BackwardRnnTwist : public Twist {
 public:
  BackwardRnnTwist(int obs_dim, int state_dim, int hidden, RngStream rng,
                   InputScaling obs_scaling = {}, InputScaling state_scaling = {});
  std::string kind() const override { return "rnn"; }
  std::unique_ptr<Twist> clone() const override { return std::make_unique<BackwardRnnTwist>(*this); }
  TwistContext encode(const StateSpaceModel& model, const Observations& obs) const override;

  // Encodings e_1..e_T (B x hidden) before the head.
  std::vector<Tensor> encodings(const Observations& obs) const;
  int hidden() const { return hidden_; }
  const InputScaling& obs_scaling() const { return obs_scaling_; }
  const InputScaling& state_scaling() const { return state_scaling_; }

 protected:
  Tensor value(const StateSpaceModel& model, const TwistContext& ctx, int t,
               const Tensor& x) const override;

 private:
  int obs_dim_;
  int state_dim_;
  int hidden_;
  InputScaling obs_scaling_;
  InputScaling state_scaling_;
};

}  // namespace sixo
