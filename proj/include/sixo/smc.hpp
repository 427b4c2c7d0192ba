#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sixo/model.hpp"
#include "sixo/proposal.hpp"
#include "sixo/random.hpp"
#include "sixo/twist.hpp"

namespace sixo {

enum class ResamplingScheme { kMultinomial, kSystematic };

std::string to_string(ResamplingScheme scheme);
ResamplingScheme parse_resampling_scheme(const std::string& text);

struct ResamplingSchedule {
  enum class Kind { kAlways, kNever, kEveryN, kEssBelow };
  Kind kind = Kind::kEssBelow;
  int every = 1;
  double fraction = 0.5;

  static ResamplingSchedule always() { return {Kind::kAlways, 1, 0.5}; }
  static ResamplingSchedule never() { return {Kind::kNever, 1, 0.5}; }
  static ResamplingSchedule every_n(int n) { return {Kind::kEveryN, n, 0.5}; }
  static ResamplingSchedule ess_below(double f) { return {Kind::kEssBelow, 1, f}; }

  bool adaptive() const { return kind == Kind::kEssBelow; }
  bool operator==(const ResamplingSchedule&) const = default;
};

// "always", "never", "every:N" or "ess:F".
std::string to_string(const ResamplingSchedule& schedule);
ResamplingSchedule parse_schedule(const std::string& text);

struct SweepConfig {
  int particles = 4;
  ResamplingScheme scheme = ResamplingScheme::kSystematic;
  ResamplingSchedule schedule = ResamplingSchedule::ess_below(0.5);
  bool record_lineage = false;
  // Replays recorded resampling decisions: entry t - 1 holds the ancestors drawn
  // at t (empty for no resampling). Used to freeze A for finite differences.
  const std::vector<std::vector<int>>* fixed_ancestry = nullptr;
  // Replaces the proposal noise: entry t - 1 is the K x D standard normal draw at t.
  const std::vector<Matrix>* fixed_noise = nullptr;

  void validate() const;
};

struct SweepResult {
  Tensor log_z;  // 1x1, on the tape when any input was tracked
  // Sum over executed resamplings of the log normalized weights of the chosen
  // ancestors; its gradient is the score-function part of the unbiased estimator.
  Tensor score;
  Matrix particles;              // x_T, K x D
  Vector normalized_log_weights; // final weights, logsumexp = 0
  std::vector<int> resampling_steps;         // 1-based timesteps
  std::vector<double> ess;                   // per timestep, before resampling
  std::vector<std::vector<int>> ancestors;   // per timestep; empty when not resampled
  std::vector<Vector> log_increments;        // log alpha_t per particle
  std::vector<double> log_z_steps;           // per timestep contribution to log Z-hat
  std::vector<Tensor> score_terms;           // per executed resampling, aligned with resampling_steps
  // Lineage (record_lineage): particles and log weights at every t before resampling,
  // and parents[t - 1][k] = index at t - 1 that particle k at t descends from.
  std::vector<Matrix> lineage_x;
  std::vector<Vector> lineage_log_w;
  std::vector<std::vector<int>> parents;

  // Trajectories of the final particles traced back through the parents;
  // entry t - 1 is K x D.
  std::vector<Matrix> trajectories() const;
};

double ess(const Vector& log_weights);
std::vector<int> resample(const Vector& log_weights, ResamplingScheme scheme, RngStream& rng);

// log gamma_t(x_{1:t}) - log gamma_{t-1}(x_{1:t-1}) - log q_t(x_t): prior or
// transition term, observation term when present, log r_t(x_t) - log r_{t-1}(x_{t-1}).
Tensor incremental_log_weight(const StateSpaceModel& model, const Twist& twist,
                              const TwistContext& ctx, int t, const Tensor& x_prev,
                              const Tensor& x_t, const Observations& obs, const Tensor& log_q);

SweepResult smc_sweep(const StateSpaceModel& model, const Proposal& proposal, const Twist& twist,
                      const TwistContext& ctx, const Observations& obs, const SweepConfig& config,
                      RngStream rng);

// Row per (t, k): t, k, ancestor, x_1..x_D, log_w; indices 1-based, ancestor 0 at t = 1.
void write_lineage_csv(const SweepResult& result, std::ostream& out);

}  // namespace sixo
