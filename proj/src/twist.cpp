#include "sixo/twist.hpp"

#include <cmath>

#include "sixo/errors.hpp"
#include "sixo/ops.hpp"

namespace sixo {

namespace {

Matrix init_weights(Index rows, Index cols, double fan_in, RngStream& rng) {
  return rng.normal(rows, cols) / std::sqrt(fan_in);
}

Tensor scaled(const Tensor& v, const InputScaling& s) {
  if (s.shift.size() == 0) return v;
  return (v - Tensor(Matrix(s.shift))) * Tensor(Matrix(s.scale));
}

InputScaling identity_scaling(int dim, InputScaling s) {
  if (s.shift.size() == 0) {
    s.shift = RowVector::Zero(dim);
    s.scale = RowVector::Ones(dim);
  }
  if (s.shift.size() != dim || s.scale.size() != dim) {
    throw ConfigError("input scaling has the wrong dimension");
  }
  return s;
}

const Tensor& final_observation(const TwistContext& ctx) {
  const int last = ctx.observations.last_observed();
  if (last == 0) throw ContractViolation("twist needs at least one observation");
  return ctx.per_t.at(static_cast<std::size_t>(last - 1));
}

// Context holding y at its own timestep, used by twists that read y_T directly.
TwistContext raw_context(const Observations& obs) {
  TwistContext ctx{obs, std::vector<Tensor>(static_cast<std::size_t>(obs.length()))};
  for (int t = 1; t <= obs.length(); ++t)
    if (obs.present(t)) ctx.per_t[static_cast<std::size_t>(t - 1)] = Tensor(obs.at(t));
  return ctx;
}

}  // namespace

TwistContext Twist::encode(const StateSpaceModel&, const Observations& obs) const {
  return raw_context(obs);
}

Tensor Twist::log_twist(const StateSpaceModel& model, const TwistContext& ctx, int t,
                        const Tensor& x) const {
  if (t < 1 || t > model.length()) throw ContractViolation("twist timestep out of range");
  if (t == model.length() || is_unit()) return Tensor::zeros(x.rows(), 1);
  Tensor v = value(model, ctx, t, x);
  if (v.rows() != x.rows()) v = broadcast_to(v, x.rows(), 1);
  return v;
}

Tensor UnitTwist::value(const StateSpaceModel&, const TwistContext&, int, const Tensor& x) const {
  return Tensor::zeros(x.rows(), 1);
}

Tensor GddOptimalTwist::value(const StateSpaceModel& model, const TwistContext& ctx, int t,
                              const Tensor& x) const {
  const auto* gdd = dynamic_cast<const GddModel*>(&model);
  if (gdd == nullptr) throw UnsupportedModel("optimal twist is defined for GDD only");
  const double s = model.length() - t + 1.0;
  return gaussian_logpdf(final_observation(ctx), x + gdd->alpha_tensor() * s, Tensor::scalar(s));
}

GaussianTwist::GaussianTwist(int T) {
  if (T < 1) throw ConfigError("twist length must be positive");
  declare("weight", Matrix::Zero(std::max(T - 1, 0), 1));
  declare("bias", Matrix::Zero(std::max(T - 1, 0), 1));
  declare("log_var", Matrix::Zero(std::max(T - 1, 0), 1));
}

Tensor GaussianTwist::value(const StateSpaceModel& model, const TwistContext& ctx, int t,
                            const Tensor& x) const {
  if (param("weight").rows() != model.length() - 1) {
    throw UnsupportedModel("Gaussian twist length does not match the model");
  }
  const Tensor mean = row(param("weight"), t - 1) * x + row(param("bias"), t - 1);
  return gaussian_logpdf(final_observation(ctx), mean, exp(row(param("log_var"), t - 1)));
}

QuadratureTwist::QuadratureTwist(int degree) : rule_(gauss_hermite(degree)) {}

Tensor one_step_lookahead(const StateSpaceModel& model, const GaussHermiteRule& rule,
                          const Tensor& x_t, const Tensor& y_next, int t) {
  const DiagonalGaussian next = model.transition(x_t, t + 1);
  Tensor total;
  for (int d = 0; d < model.obs_dim(); ++d) {
    const int s = model.observed_state(d);
    const Tensor mean = col(next.mean, s);
    const Tensor scale = sqrt(col(next.variance, s));
    const Tensor y = col(y_next, d);
    std::vector<Tensor> terms;
    terms.reserve(static_cast<std::size_t>(rule.nodes.size()));
    for (Index i = 0; i < rule.nodes.size(); ++i) {
      terms.push_back(
          model.observation_component_logpdf(d, mean + scale * rule.nodes(i), y, t + 1) +
          std::log(rule.weights(i)));
    }
    Tensor term = logsumexp(concat_cols(terms), Axis::kCols);
    total = total.empty() ? term : total + term;
  }
  return total;
}

Tensor QuadratureTwist::value(const StateSpaceModel& model, const TwistContext& ctx, int t,
                              const Tensor& x) const {
  if (!ctx.observations.present(t + 1)) return Tensor::zeros(x.rows(), 1);
  return one_step_lookahead(model, rule_, x, ctx.per_t[static_cast<std::size_t>(t)], t);
}

QuadraticHeadTwist::QuadraticHeadTwist(int T, int hidden, RngStream rng, double y_scale)
    : T_(T), hidden_(hidden), y_scale_(y_scale) {
  if (T < 1 || hidden < 1) throw ConfigError("quadratic head needs positive length and width");
  declare("w1", init_weights(2, hidden, 2, rng));
  declare("b1", Matrix::Zero(1, hidden));
  declare("w2", init_weights(hidden, hidden, hidden, rng));
  declare("b2", Matrix::Zero(1, hidden));
  declare("w3", init_weights(hidden, 3, hidden, rng));
  declare("b3", Matrix::Zero(1, 3));
}

TwistContext QuadraticHeadTwist::encode(const StateSpaceModel& model, const Observations& obs) const {
  if (model.length() != T_ || model.state_dim() != 1) {
    throw UnsupportedModel("quadratic head expects a scalar-state model of length " +
                           std::to_string(T_));
  }
  const int last = obs.last_observed();
  if (last == 0) throw ContractViolation("quadratic head needs an observation");
  const Matrix& y = obs.at(last);
  const Index B = y.rows();
  // All timesteps go through the network as one (B (T-1)) x 2 batch.
  const int steps = T_ - 1;
  TwistContext ctx{obs, std::vector<Tensor>(static_cast<std::size_t>(T_))};
  if (steps == 0) return ctx;
  Matrix input(B * steps, 2);
  for (int t = 1; t <= steps; ++t) {
    input.middleRows(B * (t - 1), B).col(0) = y.col(0) * y_scale_;
    input.middleRows(B * (t - 1), B).col(1).setConstant(static_cast<double>(t) / T_);
  }
  Tensor h = tanh(matmul(Tensor(input), param("w1")) + param("b1"));
  h = tanh(matmul(h, param("w2")) + param("b2"));
  const Tensor raw = matmul(h, param("w3")) + param("b3");
  const Tensor a = -softplus(-col(raw, 0)) - 1e-6;
  const Tensor coef = concat_cols({a, middle_cols(raw, 1, 2)});
  const Tensor coef_t = transpose(coef);  // 3 x (B steps), sliced per timestep below
  for (int t = 1; t <= steps; ++t) {
    ctx.per_t[static_cast<std::size_t>(t - 1)] =
        transpose(middle_cols(coef_t, B * (t - 1), B));
  }
  return ctx;
}

Tensor QuadraticHeadTwist::value(const StateSpaceModel&, const TwistContext& ctx, int t,
                                 const Tensor& x) const {
  const Tensor& coef = ctx.per_t.at(static_cast<std::size_t>(t - 1));
  return col(coef, 0) * square(x) + col(coef, 1) * x + col(coef, 2);
}

BackwardRnnTwist::BackwardRnnTwist(int obs_dim, int state_dim, int hidden, RngStream rng,
                                   InputScaling obs_scaling, InputScaling state_scaling)
    : obs_dim_(obs_dim),
      state_dim_(state_dim),
      hidden_(hidden),
      obs_scaling_(identity_scaling(obs_dim, std::move(obs_scaling))),
      state_scaling_(identity_scaling(state_dim, std::move(state_scaling))) {
  if (obs_dim < 1 || state_dim < 1 || hidden < 1) throw ConfigError("RNN twist sizes must be positive");
  const double rnn_fan_in = hidden + obs_dim;
  const double head_fan_in = hidden + state_dim;
  declare("rnn_wh", init_weights(hidden, hidden, rnn_fan_in, rng));
  declare("rnn_wy", init_weights(obs_dim, hidden, rnn_fan_in, rng));
  declare("rnn_b", Matrix::Zero(1, hidden));
  declare("head_we", init_weights(hidden, hidden, head_fan_in, rng));
  declare("head_wx", init_weights(state_dim, hidden, head_fan_in, rng));
  declare("head_b1", Matrix::Zero(1, hidden));
  declare("head_w2", init_weights(hidden, 1, hidden, rng));
  declare("head_b2", Matrix::Zero(1, 1));
}

std::vector<Tensor> BackwardRnnTwist::encodings(const Observations& obs) const {
  const int T = obs.length();
  std::vector<int> times;
  for (int t = 1; t <= T; ++t)
    if (obs.present(t)) times.push_back(t);
  const Index B = std::max<Index>(obs.batch(), 1);
  if (!times.empty() && obs.dim() != obs_dim_) throw ContractViolation("observation dimension mismatch");
  // summary[j] encodes observations times[j..]; summary[n] is the empty summary.
  const std::size_t n = times.size();
  std::vector<Tensor> summary(n + 1);
  summary[n] = Tensor::zeros(B, hidden_);
  for (std::size_t j = n; j-- > 0;) {
    const Tensor y = scaled(Tensor(obs.at(times[j])), obs_scaling_);
    summary[j] = tanh(matmul(summary[j + 1], param("rnn_wh")) + matmul(y, param("rnn_wy")) +
                      param("rnn_b"));
  }
  // Anchors: at time 0 everything lies ahead (summary[0]); at times[j] only
  // observations after it (summary[j + 1]).
  std::vector<int> anchor_t = {0};
  std::vector<Tensor> anchor_e = {summary[0]};
  for (std::size_t j = 0; j < n; ++j) {
    anchor_t.push_back(times[j]);
    anchor_e.push_back(summary[j + 1]);
  }
  std::vector<Tensor> out(static_cast<std::size_t>(T));
  std::size_t seg = 0;
  for (int t = 1; t <= T; ++t) {
    while (seg + 1 < anchor_t.size() && anchor_t[seg + 1] <= t) ++seg;
    if (seg + 1 == anchor_t.size()) {
      out[static_cast<std::size_t>(t - 1)] = anchor_e.back();
      continue;
    }
    const double w = static_cast<double>(t - anchor_t[seg]) / (anchor_t[seg + 1] - anchor_t[seg]);
    out[static_cast<std::size_t>(t - 1)] = lerp(anchor_e[seg], anchor_e[seg + 1], w);
  }
  return out;
}

TwistContext BackwardRnnTwist::encode(const StateSpaceModel& model, const Observations& obs) const {
  if (model.state_dim() != state_dim_ || model.obs_dim() != obs_dim_) {
    throw UnsupportedModel("RNN twist dimensions do not match the model");
  }
  std::vector<Tensor> e = encodings(obs);
  TwistContext ctx{obs, std::vector<Tensor>(e.size())};
  for (std::size_t i = 0; i + 1 < e.size(); ++i) {
    ctx.per_t[i] = matmul(e[i], param("head_we")) + param("head_b1");
  }
  return ctx;
}

Tensor BackwardRnnTwist::value(const StateSpaceModel&, const TwistContext& ctx, int t,
                               const Tensor& x) const {
  const Tensor& pre = ctx.per_t.at(static_cast<std::size_t>(t - 1));
  const Tensor h = tanh(pre + matmul(scaled(x, state_scaling_), param("head_wx")));
  return matmul(h, param("head_w2")) + param("head_b2");
}

}  // namespace sixo
