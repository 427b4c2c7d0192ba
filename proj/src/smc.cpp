#include "sixo/smc.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "sixo/errors.hpp"
#include "sixo/ops.hpp"

namespace sixo {

std::string to_string(ResamplingScheme scheme) {
  return scheme == ResamplingScheme::kSystematic ? "systematic" : "multinomial";
}

ResamplingScheme parse_resampling_scheme(const std::string& text) {
  if (text == "systematic") return ResamplingScheme::kSystematic;
  if (text == "multinomial") return ResamplingScheme::kMultinomial;
  throw ConfigError("unknown resampling scheme '" + text + "'");
}

std::string to_string(const ResamplingSchedule& s) {
  switch (s.kind) {
    case ResamplingSchedule::Kind::kAlways:
      return "always";
    case ResamplingSchedule::Kind::kNever:
      return "never";
    case ResamplingSchedule::Kind::kEveryN:
      return "every:" + std::to_string(s.every);
    case ResamplingSchedule::Kind::kEssBelow: {
      std::ostringstream out;
      out << "ess:" << std::setprecision(17) << s.fraction;
      return out.str();
    }
  }
  return "";
}

ResamplingSchedule parse_schedule(const std::string& text) {
  if (text == "always") return ResamplingSchedule::always();
  if (text == "never") return ResamplingSchedule::never();
  try {
    if (text.rfind("every:", 0) == 0) return ResamplingSchedule::every_n(std::stoi(text.substr(6)));
    if (text.rfind("ess:", 0) == 0) return ResamplingSchedule::ess_below(std::stod(text.substr(4)));
  } catch (const std::exception&) {
  }
  throw ConfigError("unknown resampling schedule '" + text + "'");
}

void SweepConfig::validate() const {
  if (particles < 1) throw ConfigError("particle count must be at least 1");
  if (schedule.kind == ResamplingSchedule::Kind::kEssBelow &&
      !(schedule.fraction > 0.0 && schedule.fraction <= 1.0)) {
    throw ConfigError("ESS fraction must lie in (0, 1]");
  }
  if (schedule.kind == ResamplingSchedule::Kind::kEveryN && schedule.every < 1) {
    throw ConfigError("resampling period must be positive");
  }
}

double ess(const Vector& log_weights) {
  const double m = log_weights.maxCoeff();
  if (!std::isfinite(m)) throw DegenerateSweep(0, "ESS of degenerate weights");
  const Eigen::ArrayXd w = (log_weights.array() - m).exp();
  const double s = w.sum();
  return s * s / w.square().sum();
}

std::vector<int> resample(const Vector& log_weights, ResamplingScheme scheme, RngStream& rng) {
  const Index K = log_weights.size();
  const double m = log_weights.maxCoeff();
  if (K == 0 || !std::isfinite(m) || log_weights.hasNaN()) {
    throw DegenerateSweep(0, "cannot resample degenerate weights");
  }
  // Cumulative weights scaled to [0, K].
  Vector cum(K);
  double total = 0;
  for (Index i = 0; i < K; ++i) {
    total += std::exp(log_weights(i) - m);
    cum(i) = total;
  }
  cum *= static_cast<double>(K) / total;
  cum(K - 1) = static_cast<double>(K);
  std::vector<int> out(static_cast<std::size_t>(K));
  if (scheme == ResamplingScheme::kSystematic) {
    const double u = rng.uniform();
    Index j = 0;
    for (Index k = 0; k < K; ++k) {
      const double pos = static_cast<double>(k) + u;
      while (j < K - 1 && cum(j) <= pos) ++j;
      out[static_cast<std::size_t>(k)] = static_cast<int>(j);
    }
  } else {
    for (Index k = 0; k < K; ++k) {
      const double pos = rng.uniform() * static_cast<double>(K);
      const auto it = std::upper_bound(cum.data(), cum.data() + K, pos);
      out[static_cast<std::size_t>(k)] = static_cast<int>(std::min<Index>(it - cum.data(), K - 1));
    }
  }
  return out;
}

namespace {

Tensor prior_term(const StateSpaceModel& model, int t, const Tensor& x_prev, const Tensor& x) {
  return t == 1 ? model.initial_logpdf(x) : model.transition_logpdf(x_prev, x, t);
}

Tensor observation_term(const StateSpaceModel& model, const Observations& obs, int t,
                        const Tensor& x) {
  if (!obs.present(t)) return Tensor::zeros(x.rows(), 1);
  return model.observation_logpdf(x, Tensor(obs.at(t)), t);
}

}  // namespace

Tensor incremental_log_weight(const StateSpaceModel& model, const Twist& twist,
                              const TwistContext& ctx, int t, const Tensor& x_prev,
                              const Tensor& x_t, const Observations& obs, const Tensor& log_q) {
  Tensor out = prior_term(model, t, x_prev, x_t) - log_q + observation_term(model, obs, t, x_t) +
               twist.log_twist(model, ctx, t, x_t);
  if (t > 1) out = out - twist.log_twist(model, ctx, t - 1, x_prev);
  return out;
}

SweepResult smc_sweep(const StateSpaceModel& model, const Proposal& proposal, const Twist& twist,
                      const TwistContext& ctx, const Observations& obs, const SweepConfig& config,
                      RngStream rng) {
  config.validate();
  const int T = model.length();
  const int D = model.state_dim();
  const Index K = config.particles;
  if (obs.length() != T) throw ContractViolation("observation length does not match the model");
  if (config.fixed_ancestry != nullptr && config.fixed_ancestry->size() != static_cast<std::size_t>(T)) {
    throw ContractViolation("fixed ancestry must have one entry per timestep");
  }
  const RngStream noise_rng = rng.split("noise");
  const RngStream resample_rng = rng.split("resample");

  SweepResult res;
  res.ancestors.resize(static_cast<std::size_t>(T));
  Tensor log_w = Tensor::zeros(K, 1);
  Tensor x_prev, prev_twist;
  Tensor log_z = Tensor::scalar(0.0);
  Tensor score = Tensor::scalar(0.0);
  std::vector<int> last_ancestors;

  for (int t = 1; t <= T; ++t) {
    const Matrix noise = config.fixed_noise != nullptr
                             ? config.fixed_noise->at(static_cast<std::size_t>(t - 1))
                             : noise_rng.split(static_cast<std::uint64_t>(t)).normal(K, D);
    if (noise.rows() != K || noise.cols() != D) throw ContractViolation("noise has the wrong shape");
    Proposed p = proposal.propose(model, obs, t, x_prev, noise);
    Tensor log_alpha = p.log_prior_minus_q.empty() ? prior_term(model, t, x_prev, p.x) - p.log_q
                                                   : p.log_prior_minus_q;
    if (obs.present(t)) log_alpha = log_alpha + observation_term(model, obs, t, p.x);
    Tensor tw = twist.log_twist(model, ctx, t, p.x);
    if (!twist.is_unit()) {
      log_alpha = log_alpha + tw;
      if (t > 1) log_alpha = log_alpha - prev_twist;
    }
    const Tensor new_log_w = log_w + log_alpha;
    const Matrix& lw = new_log_w.value();
    if (lw.hasNaN() || (lw.array() == INFINITY).any() || !std::isfinite(lw.maxCoeff())) {
      throw DegenerateSweep(t, "particle weights are degenerate at timestep " + std::to_string(t));
    }
    const Tensor step_z = logsumexp(new_log_w) - logsumexp(log_w);
    log_z = log_z + step_z;
    res.log_z_steps.push_back(step_z.item());
    const Vector lw_vec = lw.col(0);
    res.ess.push_back(ess(lw_vec));
    res.log_increments.push_back(log_alpha.value().col(0));
    if (config.record_lineage) {
      res.lineage_x.push_back(p.x.value());
      res.lineage_log_w.push_back(lw_vec);
      std::vector<int> parent(static_cast<std::size_t>(K));
      for (Index k = 0; k < K; ++k) {
        parent[static_cast<std::size_t>(k)] =
            t == 1 ? -1 : (last_ancestors.empty() ? static_cast<int>(k) : last_ancestors[static_cast<std::size_t>(k)]);
      }
      res.parents.push_back(std::move(parent));
    }

    bool do_resample = false;
    std::vector<int> ancestors;
    if (t < T) {
      if (config.fixed_ancestry != nullptr) {
        ancestors = (*config.fixed_ancestry)[static_cast<std::size_t>(t - 1)];
        do_resample = !ancestors.empty();
        if (do_resample && ancestors.size() != static_cast<std::size_t>(K)) {
          throw ContractViolation("fixed ancestry has the wrong particle count");
        }
      } else {
        switch (config.schedule.kind) {
          case ResamplingSchedule::Kind::kAlways:
            do_resample = true;
            break;
          case ResamplingSchedule::Kind::kNever:
            break;
          case ResamplingSchedule::Kind::kEveryN:
            do_resample = t % config.schedule.every == 0;
            break;
          case ResamplingSchedule::Kind::kEssBelow:
            do_resample = res.ess.back() < config.schedule.fraction * static_cast<double>(K);
            break;
        }
        if (do_resample) {
          RngStream r = resample_rng.split(static_cast<std::uint64_t>(t));
          ancestors = resample(lw_vec, config.scheme, r);
        }
      }
    }

    Tensor x = p.x;
    if (do_resample) {
      const Tensor term = sum(gather_rows(new_log_w, ancestors)) - logsumexp(new_log_w) * static_cast<double>(K);
      score = score + term;
      res.score_terms.push_back(term);
      x = gather_rows(x, ancestors);
      tw = gather_rows(tw, ancestors);
      log_w = Tensor::zeros(K, 1);
      res.resampling_steps.push_back(t);
      res.ancestors[static_cast<std::size_t>(t - 1)] = ancestors;
      last_ancestors = std::move(ancestors);
    } else {
      log_w = new_log_w;
      last_ancestors.clear();
    }
    x_prev = x;
    prev_twist = tw;
  }
  res.log_z = log_z;
  res.score = score;
  res.particles = x_prev.value();
  res.normalized_log_weights = (log_w.value().array() - logsumexp(Vector(log_w.value().col(0)))).matrix();
  return res;
}

std::vector<Matrix> SweepResult::trajectories() const {
  if (lineage_x.empty()) throw ContractViolation("trajectories require lineage recording");
  const std::size_t T = lineage_x.size();
  const Index K = lineage_x.back().rows();
  std::vector<Matrix> out(T, Matrix(K, lineage_x.back().cols()));
  std::vector<int> idx(static_cast<std::size_t>(K));
  for (Index k = 0; k < K; ++k) idx[static_cast<std::size_t>(k)] = static_cast<int>(k);
  for (std::size_t t = T; t-- > 0;) {
    for (Index k = 0; k < K; ++k) {
      int& i = idx[static_cast<std::size_t>(k)];
      out[t].row(k) = lineage_x[t].row(i);
      if (t > 0) i = parents[t][static_cast<std::size_t>(i)];
    }
  }
  return out;
}

void write_lineage_csv(const SweepResult& result, std::ostream& out) {
  if (result.lineage_x.empty()) throw ContractViolation("sweep was run without lineage recording");
  const Index D = result.lineage_x.front().cols();
  out << "t,k,ancestor";
  for (Index d = 1; d <= D; ++d) out << ",x" << d;
  out << ",log_w\n";
  out << std::setprecision(17);
  for (std::size_t t = 0; t < result.lineage_x.size(); ++t) {
    const Matrix& x = result.lineage_x[t];
    for (Index k = 0; k < x.rows(); ++k) {
      out << (t + 1) << ',' << (k + 1) << ',' << (result.parents[t][static_cast<std::size_t>(k)] + 1);
      for (Index d = 0; d < D; ++d) out << ',' << x(k, d);
      out << ',' << result.lineage_log_w[t](k) << '\n';
    }
  }
}

}  // namespace sixo
