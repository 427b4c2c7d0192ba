#include "sixo/bounds.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "sixo/errors.hpp"
#include "sixo/ops.hpp"
#include "sixo/parallel.hpp"

namespace sixo {

std::string to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::kFivo:
      return "fivo";
    case BoundKind::kSixo:
      return "sixo";
    case BoundKind::kIwae:
      return "iwae";
    case BoundKind::kBpf:
      return "bpf";
  }
  return "";
}

BoundKind parse_bound_kind(const std::string& text) {
  std::string s = text;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "fivo") return BoundKind::kFivo;
  if (s == "sixo") return BoundKind::kSixo;
  if (s == "iwae") return BoundKind::kIwae;
  if (s == "bpf") return BoundKind::kBpf;
  throw ConfigError("unknown bound kind '" + text + "'");
}

SweepConfig BoundSpec::sweep_config() const {
  SweepConfig c;
  c.particles = particles;
  c.scheme = scheme;
  if (kind == BoundKind::kIwae) {
    c.schedule = ResamplingSchedule::never();
  } else {
    c.schedule = schedule.value_or(ResamplingSchedule::ess_below(0.5));
  }
  return c;
}

void validate_bound(const BoundSpec& spec, const Proposal& proposal, const Twist& twist) {
  if (spec.particles < 1) throw ConfigError("particle count must be at least 1");
  if (spec.sweeps < 1) throw ConfigError("sweep count must be at least 1");
  switch (spec.kind) {
    case BoundKind::kBpf:
      if (!proposal.is_bootstrap()) throw ConfigError("BPF bound requires the bootstrap proposal");
      if (!twist.is_unit()) throw ConfigError("BPF bound requires the unit twist");
      break;
    case BoundKind::kFivo:
      if (!twist.is_unit()) throw ConfigError("FIVO bound requires the unit twist");
      break;
    case BoundKind::kSixo:
      if (twist.is_unit()) throw ConfigError("SIXO bound requires a twist");
      break;
    case BoundKind::kIwae:
      if (spec.schedule && spec.schedule->kind != ResamplingSchedule::Kind::kNever) {
        throw ConfigError("IWAE bound never resamples");
      }
      break;
  }
}

BoundEstimate bound_estimate(const BoundSpec& spec, const StateSpaceModel& model,
                             const Proposal& proposal, const Twist& twist, const Observations& obs,
                             RngStream rng) {
  validate_bound(spec, proposal, twist);
  const SweepConfig config = spec.sweep_config();
  const TwistContext ctx = twist.encode(model, obs);
  const auto n = static_cast<std::size_t>(spec.sweeps);
  std::vector<double> values(n), ess_means(n), rates(n);
  parallel_for(n, [&](std::size_t i) {
    const SweepResult r = smc_sweep(model, proposal, twist, ctx, obs, config, rng.split(i));
    values[i] = r.log_z.item();
    double e = 0;
    for (double v : r.ess) e += v;
    ess_means[i] = e / static_cast<double>(r.ess.size());
    const int eligible = std::max(model.length() - 1, 1);
    rates[i] = static_cast<double>(r.resampling_steps.size()) / eligible;
  });
  BoundEstimate out;
  out.samples = values;
  const double count = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.mean += values[i] / count;
    out.mean_ess += ess_means[i] / count;
    out.resampling_rate += rates[i] / count;
  }
  if (n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(ss / (count - 1)) / std::sqrt(count);
  }
  return out;
}

double global_norm(const ParameterSet& values) {
  double s = 0;
  for (const auto& [name, m] : values) s += m.squaredNorm();
  return std::sqrt(s);
}

namespace {

struct TrackedSystem {
  std::unique_ptr<StateSpaceModel> model;
  std::unique_ptr<Proposal> proposal;
  std::unique_ptr<Twist> twist;
  Parameters all;
};

TrackedSystem track(Tape& tape, const StateSpaceModel& model, const Proposal& proposal,
                    const Twist& twist) {
  TrackedSystem s{model.clone(), proposal.clone(), twist.clone(), {}};
  s.model->set_parameters(model.parameters().tracked(tape));
  s.proposal->set_parameters(proposal.parameters().tracked(tape));
  s.twist->set_parameters(twist.parameters().tracked(tape));
  for (const auto& [name, t] : s.model->parameters()) s.all.set("model/" + name, t);
  for (const auto& [name, t] : s.proposal->parameters()) s.all.set("proposal/" + name, t);
  for (const auto& [name, t] : s.twist->parameters()) s.all.set("twist/" + name, t);
  return s;
}

void add_scaled(ParameterSet& acc, const ParameterSet& g, double scale) {
  for (const auto& [name, m] : g) {
    auto it = acc.find(name);
    if (it == acc.end()) {
      acc[name] = m * scale;
    } else {
      it->second += m * scale;
    }
  }
}

// Reward multiplying the score of each executed resampling: log Z-hat, or with
// `causal` only the increments after the resampling time.
std::vector<double> future_rewards(const SweepResult& r, bool causal) {
  std::vector<double> out;
  const double total = r.log_z.item();
  for (int t : r.resampling_steps) {
    double v = total;
    if (causal) {
      v = 0;
      for (std::size_t s = static_cast<std::size_t>(t); s < r.log_z_steps.size(); ++s) v += r.log_z_steps[s];
    }
    out.push_back(v);
  }
  return out;
}

GradientEstimate estimate(const BoundSpec& spec, const StateSpaceModel& model,
                          const Proposal& proposal, const Twist& twist, const Observations& obs,
                          RngStream rng, bool unbiased,
                          const std::vector<std::vector<int>>* fixed_ancestry, ScoreControl control = {}) {
  validate_bound(spec, proposal, twist);
  SweepConfig config = spec.sweep_config();
  config.fixed_ancestry = fixed_ancestry;
  GradientEstimate out;
  out.unbiased = unbiased;
  const double inv = 1.0 / spec.sweeps;
  for (int i = 0; i < spec.sweeps; ++i) {
    Tape tape;
    TrackedSystem s = track(tape, model, proposal, twist);
    const TwistContext ctx = s.twist->encode(*s.model, obs);
    RngStream sweep_rng = spec.sweeps == 1 ? rng : rng.split(static_cast<std::uint64_t>(i));
    SweepResult r = smc_sweep(*s.model, *s.proposal, *s.twist, ctx, obs, config, sweep_rng);
    const double log_z = r.log_z.item();
    if (!std::isfinite(log_z)) throw DegenerateSweep(model.length(), "non-finite log Z-hat");
    const Gradient gb = grad(r.log_z, s.all);
    add_scaled(out.biased_part, gb.values, inv);
    if (unbiased && !control.causal && !control.baseline) {
      const Gradient gs = grad(r.score, s.all);
      add_scaled(out.score_part, gs.values, log_z * inv);
    } else if (unbiased && !r.score_terms.empty()) {
      std::vector<double> reward = future_rewards(r, control.causal);
      if (control.baseline) {
        const SweepResult b = smc_sweep(model, proposal, twist, twist.encode(model, obs), obs, config,
                                        sweep_rng.split("baseline"));
        const std::vector<double> base = future_rewards(b, control.causal);
        for (std::size_t j = 0; j < reward.size(); ++j) reward[j] -= base[j];
      }
      Tensor surrogate = r.score_terms.front() * reward.front();
      for (std::size_t j = 1; j < reward.size(); ++j) surrogate = surrogate + r.score_terms[j] * reward[j];
      const Gradient gs = grad(surrogate, s.all);
      add_scaled(out.score_part, gs.values, inv);
    }
    out.objective += log_z * inv;
    out.sweep = std::move(r);
  }
  for (const auto& [name, m] : out.biased_part) {
    if (out.score_part.count(name) == 0) out.score_part[name] = Matrix::Zero(m.rows(), m.cols());
  }
  out.gradients = out.biased_part;
  add_scaled(out.gradients, out.score_part, 1.0);
  out.score_magnitude = global_norm(out.score_part);
  return out;
}

}  // namespace

GradientEstimate biased_gradient(const BoundSpec& spec, const StateSpaceModel& model,
                                 const Proposal& proposal, const Twist& twist,
                                 const Observations& obs, RngStream rng,
                                 const std::vector<std::vector<int>>* fixed_ancestry) {
  return estimate(spec, model, proposal, twist, obs, rng, false, fixed_ancestry);
}

GradientEstimate unbiased_gradient(const BoundSpec& spec, const StateSpaceModel& model,
                                   const Proposal& proposal, const Twist& twist,
                                   const Observations& obs, RngStream rng, ScoreControl control) {
  const SweepConfig config = spec.sweep_config();
  if (config.schedule.adaptive()) {
    throw ConfigError("unbiased gradients need a fixed resampling schedule");
  }
  if (config.schedule.kind != ResamplingSchedule::Kind::kNever &&
      config.scheme != ResamplingScheme::kMultinomial) {
    throw ConfigError("unbiased gradients need multinomial resampling");
  }
  return estimate(spec, model, proposal, twist, obs, rng, true, nullptr, control);
}

}  // namespace sixo
