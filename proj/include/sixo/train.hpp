#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sixo/adam.hpp"
#include "sixo/bounds.hpp"
#include "sixo/dre.hpp"

namespace sixo {

enum class Method { kFivo, kFivoClip, kSixoQ, kSixoDre, kSixoU, kSixoB, kIwae };

std::string to_string(Method method);  // "FIVO", "FIVO-clip", "SIXO-q", ...
Method parse_method(const std::string& text);  // case-insensitive

struct TrainConfig {
  Method method = Method::kFivo;
  int steps = 1000;        // gradient steps of the single-loop methods
  int rounds = 50;         // SIXO-DRE outer rounds
  int twist_steps = 200;   // per round
  int model_steps = 200;   // per round
  int particles = 4;
  int datasets_per_update = 1;
  double lr_model = 1e-2;  // model and proposal
  double lr_twist = 1e-3;
  std::optional<double> clip;  // global gradient norm bound for model and proposal
  Index dre_pool = 1024;
  Index dre_batch = 64;
  bool learn_model = true;
  bool learn_proposal = true;
  std::optional<ResamplingSchedule> schedule;  // training sweeps; method default when empty
  std::optional<ResamplingScheme> scheme;
  ScoreControl score_control{true, true};  // SIXO-u only
  std::uint64_t seed = 0;
  int eval_every = 0;       // in steps (rounds for SIXO-DRE); 0 evaluates only at both ends
  int eval_particles = 4;
  int eval_sweeps = 100;
  int eval_sequences = 0;   // 0: every training sequence
  int bpf_particles = 0;    // extra bootstrap evaluation; 0 disables
  bool record_wall_clock = false;

  void validate() const;
  BoundKind bound() const;
  BoundSpec training_spec() const;
  DreConfig dre() const;
  long total() const;  // steps, or rounds for SIXO-DRE
};

struct MetricsRow {
  long step = 0;
  long model_steps = 0;
  long twist_steps = 0;
  std::string method;
  std::string bound;
  double value = 0;
  double se = 0;
  double resampling_rate = 0;
  double mean_ess = 0;
  std::optional<double> bpf_value;
  std::optional<double> bpf_se;
  std::optional<double> log_marginal;  // exact value when the model admits one
  std::optional<double> wall_clock;
  std::map<std::string, double> scalars;  // small model parameters, e.g. alpha or i_ext
};

nlohmann::json to_json(const MetricsRow& row);

struct Checkpoint {
  std::string fingerprint;
  nlohmann::json config;
  long step = 0;
  long model_steps = 0;
  long twist_steps = 0;
  std::string model_kind;
  std::string proposal_kind;
  std::string twist_kind;
  ParameterSet model;
  ParameterSet proposal;
  ParameterSet twist;
  AdamState theta_optimizer;
  AdamState twist_optimizer;
};

nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& document);
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
// Checks component kinds, parameter names and shapes, then copies the values.
// Errors name the divergent parameter as "<component>/<name>".
void apply_checkpoint(const Checkpoint& checkpoint, StateSpaceModel& model, Proposal& proposal,
                      Twist& twist);

// Rescales `gradients` so their joint Frobenius norm is at most `bound`.
void clip_global_norm(ParameterSet& gradients, double bound);

// Hex digest of a JSON document, stable across runs.
std::string fingerprint(const nlohmann::json& document);

// Mean over sequences of log p(y) when the model has a closed form (GDD).
std::optional<double> exact_log_marginal(const StateSpaceModel& model, const Observations& data);

// N Adam ascent steps on log Z-hat for model and proposal with the twist frozen.
// Step i draws its randomness from rng.split(first_step + i). Returns the objectives.
std::vector<double> model_update(const Observations& data, StateSpaceModel& model,
                                 Proposal& proposal, const Twist& twist, const TrainConfig& config,
                                 RngStream rng, Adam& optimizer, int steps, long first_step = 0);

class Trainer {
 public:
  using MetricsSink = std::function<void(const MetricsRow&)>;
  using CheckpointSink = std::function<void(const Trainer&)>;

  Trainer(TrainConfig config, Observations data, std::unique_ptr<StateSpaceModel> model,
          std::unique_ptr<Proposal> proposal, std::unique_ptr<Twist> twist);

  // Trains to completion. Emits metrics at the configured cadence (including the
  // starting point when nothing has been done yet) and checkpoints every
  // `checkpoint_every` units. A non-negative `stop_at` halts once progress reaches
  // it, evaluating and checkpointing there as if it were the end.
  void run(const MetricsSink& metrics = {}, const CheckpointSink& on_checkpoint = {},
           int checkpoint_every = 0, long stop_at = -1);
  // One step (one round for SIXO-DRE); false once finished.
  bool advance();
  MetricsRow evaluate() const;

  long progress() const { return step_; }
  bool finished() const { return step_ >= config_.total(); }
  const TrainConfig& config() const { return config_; }
  const Observations& data() const { return data_; }
  const StateSpaceModel& model() const { return *model_; }
  const Proposal& proposal() const { return *proposal_; }
  const Twist& twist() const { return *twist_; }
  const std::vector<double>& last_twist_losses() const { return twist_losses_; }

  Checkpoint checkpoint(const nlohmann::json& experiment = {}) const;
  void restore(const Checkpoint& checkpoint);

 private:
  TrainConfig config_;
  Observations data_;
  std::unique_ptr<StateSpaceModel> model_;
  std::unique_ptr<Proposal> proposal_;
  std::unique_ptr<Twist> twist_;
  RngStream master_;
  Adam theta_optimizer_;
  Adam twist_optimizer_;
  long step_ = 0;
  long model_steps_ = 0;
  long twist_steps_ = 0;
  std::vector<double> twist_losses_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct TrainResult {
  ParameterSet model;
  ParameterSet proposal;
  ParameterSet twist;
  std::vector<MetricsRow> metrics;
};

// Alternates DRE twist updates and model updates for config.rounds rounds.
TrainResult sixo_dre_train(const Observations& data, const StateSpaceModel& model,
                           const Proposal& proposal, const Twist& twist, const TrainConfig& config);
// Single gradient-ascent loop for the other methods.
TrainResult unified_train(const Observations& data, const StateSpaceModel& model,
                          const Proposal& proposal, const Twist& twist, const TrainConfig& config);

// i_ext starting values spread uniformly over relative errors [-0.9, 1.9].
std::vector<double> hh_initial_grid(double truth, int count);

}  // namespace sixo
