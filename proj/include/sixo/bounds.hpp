#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sixo/smc.hpp"

namespace sixo {

enum class BoundKind { kFivo, kSixo, kIwae, kBpf };

std::string to_string(BoundKind kind);
BoundKind parse_bound_kind(const std::string& text);  // case-insensitive

struct BoundSpec {
  BoundKind kind = BoundKind::kSixo;
  int particles = 4;
  int sweeps = 1;
  std::optional<ResamplingSchedule> schedule;  // default: never for IWAE, ess_below(0.5) otherwise
  ResamplingScheme scheme = ResamplingScheme::kSystematic;

  SweepConfig sweep_config() const;
};

// Throws ConfigError when the proposal or twist does not fit the bound kind.
void validate_bound(const BoundSpec& spec, const Proposal& proposal, const Twist& twist);

struct BoundEstimate {
  double mean = 0;
  double se = 0;  // sample standard deviation over sweeps / sqrt(sweeps)
  std::vector<double> samples;
  double mean_ess = 0;
  double resampling_rate = 0;  // executed resamplings per eligible timestep
};

BoundEstimate bound_estimate(const BoundSpec& spec, const StateSpaceModel& model,
                             const Proposal& proposal, const Twist& twist, const Observations& obs,
                             RngStream rng);

struct GradientEstimate {
  // Keys "model/<name>", "proposal/<name>", "twist/<name>".
  ParameterSet gradients;
  double objective = 0;  // realized log Z-hat (mean over sweeps)
  bool unbiased = false;
  ParameterSet biased_part;
  ParameterSet score_part;      // reward * grad(score), zero for the biased estimator
  double score_magnitude = 0;   // Frobenius norm of score_part
  SweepResult sweep;            // last sweep
};

// Pathwise gradient of log Z-hat with ancestors held constant. With spec.sweeps > 1
// the gradients of independent sweeps are averaged.
GradientEstimate biased_gradient(const BoundSpec& spec, const StateSpaceModel& model,
                                 const Proposal& proposal, const Twist& twist,
                                 const Observations& obs, RngStream rng,
                                 const std::vector<std::vector<int>>* fixed_ancestry = nullptr);

// Control variates for the score-function term; both keep the estimator unbiased.
// `causal` credits the ancestors drawn at t only with the log Z-hat increments
// after t. `baseline` subtracts the same reward computed on an independent,
// untracked sweep.
struct ScoreControl {
  bool causal = false;
  bool baseline = false;
};

// Adds log Z-hat times the gradient of the log probability of the sampled
// ancestors. Needs a fixed schedule and multinomial resampling.
GradientEstimate unbiased_gradient(const BoundSpec& spec, const StateSpaceModel& model,
                                   const Proposal& proposal, const Twist& twist,
                                   const Observations& obs, RngStream rng,
                                   ScoreControl control = {});

double global_norm(const ParameterSet& values);

}  // namespace sixo
