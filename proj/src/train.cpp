#include "sixo/train.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "sixo/errors.hpp"
#include "sixo/parallel.hpp"

namespace sixo {

namespace {

using nlohmann::json;

constexpr const char* kMethodNames[] = {"FIVO", "FIVO-clip", "SIXO-q", "SIXO-DRE",
                                        "SIXO-u", "SIXO-b",    "IWAE"};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool learns_twist_by_gradient(Method m) { return m == Method::kSixoU || m == Method::kSixoB; }

Observations head(const Observations& data, Index n) {
  if (n >= data.batch()) return data;
  std::vector<Observations> items;
  for (Index i = 0; i < n; ++i) items.push_back(data.item(i));
  return Observations::stack(items);
}

bool all_finite(const ParameterSet& g) {
  for (const auto& [name, m] : g) {
    if (!m.allFinite()) return false;
  }
  return true;
}

// One Adam ascent step on the configured bound. The twist is updated only when
// `learned_twist` is given.
double ascend(const Observations& data, StateSpaceModel& model, Proposal& proposal,
              const Twist& twist, const TrainConfig& config, RngStream rng, Adam& theta_optimizer,
              long index, Twist* learned_twist, Adam* twist_optimizer) {
  const BoundSpec spec = config.training_spec();
  const bool unbiased = config.method == Method::kSixoU;
  const auto D = static_cast<std::size_t>(config.datasets_per_update);
  const Index B = data.batch();
  std::vector<GradientEstimate> estimates(D);
  try {
    parallel_for(D, [&](std::size_t j) {
      RngStream r = rng.split(j);
      const Index b = B == 1 ? 0 : static_cast<Index>(r.split("pick").below(static_cast<std::uint64_t>(B)));
      const Observations obs = data.item(b);
      estimates[j] = unbiased ? unbiased_gradient(spec, model, proposal, twist, obs, r.split("sweep"), config.score_control)
                              : biased_gradient(spec, model, proposal, twist, obs, r.split("sweep"));
    });
  } catch (const DegenerateSweep& e) {
    throw TrainingAborted(index, "degenerate sweep at training step " + std::to_string(index) +
                                     ", timestep " + std::to_string(e.timestep()) + ": " + e.what());
  }
  ParameterSet mean;
  double objective = 0;
  for (const GradientEstimate& e : estimates) {
    for (const auto& [name, m] : e.gradients) {
      auto it = mean.find(name);
      if (it == mean.end()) {
        mean[name] = m / static_cast<double>(D);
      } else {
        it->second += m / static_cast<double>(D);
      }
    }
    objective += e.objective / static_cast<double>(D);
  }
  if (!std::isfinite(objective) || !all_finite(mean)) {
    throw TrainingAborted(index, "non-finite objective or gradient at training step " +
                                     std::to_string(index) + " (objective " + std::to_string(objective) + ")");
  }

  ParameterSet theta, g;
  auto take = [&](const std::string& prefix, const Parameterized& part) {
    for (const auto& [name, value] : prefixed(prefix, part.parameters().values())) {
      theta[name] = value;
      g[name] = mean.at(name);
    }
  };
  if (config.learn_model) take("model", model);
  if (config.learn_proposal) take("proposal", proposal);
  if (!theta.empty()) {
    if (config.clip) clip_global_norm(g, *config.clip);
    theta_optimizer.step(theta, g);
    if (config.learn_model) model.set_values(unprefixed("model", theta));
    if (config.learn_proposal) proposal.set_values(unprefixed("proposal", theta));
  }
  if (learned_twist != nullptr && !learned_twist->parameters().empty()) {
    ParameterSet values = learned_twist->parameters().values();
    const ParameterSet tg = unprefixed("twist", mean);
    twist_optimizer->step(values, tg);
    learned_twist->set_values(values);
  }
  return objective;
}

json matrix_json(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return {{"shape", {m.rows(), m.cols()}}, {"values", flat}};
}

Matrix matrix_from_json(const json& j, const std::string& name) {
  const auto shape = j.at("shape").get<std::vector<Index>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<Index>(values.size()) != shape[0] * shape[1]) {
    throw ConfigError("malformed tensor '" + name + "' in checkpoint");
  }
  Matrix m(shape[0], shape[1]);
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = values[static_cast<std::size_t>(r * m.cols() + c)];
  return m;
}

json set_json(const ParameterSet& set) {
  json out = json::object();
  for (const auto& [name, m] : set) out[name] = matrix_json(m);
  return out;
}

ParameterSet set_from_json(const json& j) {
  ParameterSet out;
  for (const auto& [name, value] : j.items()) out[name] = matrix_from_json(value, name);
  return out;
}

json adam_json(const AdamState& s) {
  return {{"step", s.step}, {"first", set_json(s.first_moment)}, {"second", set_json(s.second_moment)}};
}

AdamState adam_from_json(const json& j) {
  AdamState s;
  s.step = j.at("step").get<long>();
  s.first_moment = set_from_json(j.at("first"));
  s.second_moment = set_from_json(j.at("second"));
  return s;
}

void assign(Parameterized& target, const ParameterSet& values, const std::string& label) {
  const ParameterSet current = target.parameters().values();
  for (const auto& [name, m] : current) {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("checkpoint lacks parameter '" + label + "/" + name + "'");
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw ConfigError("checkpoint parameter '" + label + "/" + name + "' has shape " +
                        std::to_string(it->second.rows()) + "x" + std::to_string(it->second.cols()) +
                        ", expected " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
  }
  for (const auto& [name, m] : values) {
    if (current.count(name) == 0) {
      throw ConfigError("checkpoint has unexpected parameter '" + label + "/" + name + "'");
    }
  }
  target.set_values(values);
}

}  // namespace

void clip_global_norm(ParameterSet& g, double bound) {
  const double norm = global_norm(g);
  if (norm <= bound) return;
  const double scale = bound / norm;
  for (auto& [name, m] : g) m *= scale;
}

std::string to_string(Method method) { return kMethodNames[static_cast<int>(method)]; }

Method parse_method(const std::string& text) {
  for (int i = 0; i < 7; ++i) {
    if (lower(kMethodNames[i]) == lower(text)) return static_cast<Method>(i);
  }
  throw ConfigError("unknown training method '" + text + "'");
}

void TrainConfig::validate() const {
  if (steps < 0 || rounds < 0 || twist_steps < 0 || model_steps < 0) {
    throw ConfigError("step counts must be non-negative");
  }
  if (particles < 1) throw ConfigError("particles must be at least 1");
  if (datasets_per_update < 1) throw ConfigError("datasets_per_update must be at least 1");
  if (!(lr_model >= 0) || !(lr_twist >= 0)) throw ConfigError("learning rates must be non-negative");
  if (clip && !(*clip > 0)) throw ConfigError("clip threshold must be positive");
  if (method == Method::kFivoClip && !clip) throw ConfigError("FIVO-clip needs a clip threshold");
  if (dre_pool < 1 || dre_batch < 1) throw ConfigError("DRE pool and batch sizes must be positive");
  if (eval_every < 0 || eval_particles < 1 || eval_sweeps < 1 || eval_sequences < 0 || bpf_particles < 0) {
    throw ConfigError("invalid evaluation settings");
  }
  if (method == Method::kSixoU) {
    if (schedule && schedule->adaptive()) throw ConfigError("SIXO-u needs a fixed resampling schedule");
    if (scheme == ResamplingScheme::kSystematic) throw ConfigError("SIXO-u needs multinomial resampling");
  }
  if (method == Method::kIwae && schedule && schedule->kind != ResamplingSchedule::Kind::kNever) {
    throw ConfigError("IWAE never resamples");
  }
}

BoundKind TrainConfig::bound() const {
  switch (method) {
    case Method::kFivo:
    case Method::kFivoClip:
      return BoundKind::kFivo;
    case Method::kIwae:
      return BoundKind::kIwae;
    default:
      return BoundKind::kSixo;
  }
}

BoundSpec TrainConfig::training_spec() const {
  BoundSpec spec;
  spec.kind = bound();
  spec.particles = particles;
  spec.sweeps = 1;
  spec.schedule = schedule;
  spec.scheme = scheme.value_or(ResamplingScheme::kSystematic);
  if (method == Method::kSixoU) {
    spec.schedule = schedule.value_or(ResamplingSchedule::always());
    spec.scheme = scheme.value_or(ResamplingScheme::kMultinomial);
  }
  return spec;
}

DreConfig TrainConfig::dre() const {
  DreConfig c;
  c.pool_size = dre_pool;
  c.batch_size = dre_batch;
  c.learning_rate = lr_twist;
  c.steps = twist_steps;
  return c;
}

long TrainConfig::total() const { return method == Method::kSixoDre ? rounds : steps; }

json to_json(const MetricsRow& row) {
  json j = {{"step", row.step},         {"model_steps", row.model_steps},
            {"twist_steps", row.twist_steps}, {"method", row.method},
            {"bound", row.bound},       {"value", row.value},
            {"se", row.se},             {"resampling_rate", row.resampling_rate},
            {"mean_ess", row.mean_ess}, {"parameters", row.scalars}};
  if (row.bpf_value) j["bpf_value"] = *row.bpf_value;
  if (row.bpf_se) j["bpf_se"] = *row.bpf_se;
  if (row.log_marginal) {
    j["log_marginal"] = *row.log_marginal;
    j["gap"] = *row.log_marginal - row.value;
  }
  if (row.wall_clock) j["wall_clock"] = *row.wall_clock;
  return j;
}

json checkpoint_to_json(const Checkpoint& c) {
  return {{"format", "sixo-checkpoint"},
          {"version", 1},
          {"fingerprint", c.fingerprint},
          {"config", c.config},
          {"progress", {{"step", c.step}, {"model_steps", c.model_steps}, {"twist_steps", c.twist_steps}}},
          {"components", {{"model", c.model_kind}, {"proposal", c.proposal_kind}, {"twist", c.twist_kind}}},
          {"parameters", {{"model", set_json(c.model)}, {"proposal", set_json(c.proposal)}, {"twist", set_json(c.twist)}}},
          {"optimizers", {{"theta", adam_json(c.theta_optimizer)}, {"twist", adam_json(c.twist_optimizer)}}}};
}

Checkpoint checkpoint_from_json(const json& d) {
  try {
    if (d.at("format") != "sixo-checkpoint") throw ConfigError("not a checkpoint document");
    if (d.at("version") != 1) throw ConfigError("unsupported checkpoint version");
    Checkpoint c;
    c.fingerprint = d.at("fingerprint").get<std::string>();
    c.config = d.at("config");
    const json& p = d.at("progress");
    c.step = p.at("step").get<long>();
    c.model_steps = p.at("model_steps").get<long>();
    c.twist_steps = p.at("twist_steps").get<long>();
    const json& k = d.at("components");
    c.model_kind = k.at("model").get<std::string>();
    c.proposal_kind = k.at("proposal").get<std::string>();
    c.twist_kind = k.at("twist").get<std::string>();
    const json& params = d.at("parameters");
    c.model = set_from_json(params.at("model"));
    c.proposal = set_from_json(params.at("proposal"));
    c.twist = set_from_json(params.at("twist"));
    c.theta_optimizer = adam_from_json(d.at("optimizers").at("theta"));
    c.twist_optimizer = adam_from_json(d.at("optimizers").at("twist"));
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
    out << checkpoint_to_json(checkpoint).dump(1) << '\n';
    if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ConfigError("cannot write checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint '" + path + "'");
  json d;
  try {
    in >> d;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(d);
}

std::string fingerprint(const json& document) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : document.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<double> exact_log_marginal(const StateSpaceModel& model, const Observations& data) {
  const auto* gdd = dynamic_cast<const GddModel*>(&model);
  if (gdd == nullptr || data.batch() == 0) return std::nullopt;
  const Matrix& y = data.at(model.length());
  double total = 0;
  for (Index b = 0; b < y.rows(); ++b) total += gdd_log_marginal(*gdd, y(b, 0));
  return total / static_cast<double>(y.rows());
}

std::vector<double> model_update(const Observations& data, StateSpaceModel& model,
                                 Proposal& proposal, const Twist& twist, const TrainConfig& config,
                                 RngStream rng, Adam& optimizer, int steps, long first_step) {
  std::vector<double> objectives;
  objectives.reserve(static_cast<std::size_t>(std::max(steps, 0)));
  for (int i = 0; i < steps; ++i) {
    const long index = first_step + i;
    objectives.push_back(ascend(data, model, proposal, twist, config,
                                rng.split(static_cast<std::uint64_t>(index)), optimizer, index,
                                nullptr, nullptr));
  }
  return objectives;
}

Trainer::Trainer(TrainConfig config, Observations data, std::unique_ptr<StateSpaceModel> model,
                 std::unique_ptr<Proposal> proposal, std::unique_ptr<Twist> twist)
    : config_(std::move(config)),
      data_(std::move(data)),
      model_(std::move(model)),
      proposal_(std::move(proposal)),
      twist_(std::move(twist)),
      master_(config_.seed),
      theta_optimizer_(AdamOptions{config_.lr_model, 0.9, 0.999, 1e-8, true}),
      twist_optimizer_(AdamOptions{config_.lr_twist, 0.9, 0.999, 1e-8, true}) {
  config_.validate();
  if (data_.batch() < 1) throw ConfigError("training needs at least one observation sequence");
  if (data_.length() != model_->length()) throw ConfigError("data length does not match the model");
  validate_bound(config_.training_spec(), *proposal_, *twist_);
}

bool Trainer::advance() {
  if (finished()) return false;
  if (config_.method == Method::kSixoDre) {
    twist_losses_ = twist_update(*twist_, *model_, config_.dre(),
                                 master_.split("dre").split(static_cast<std::uint64_t>(step_)),
                                 twist_optimizer_);
    twist_steps_ += config_.twist_steps;
    model_update(data_, *model_, *proposal_, *twist_, config_, master_.split("train"), theta_optimizer_,
                 config_.model_steps, model_steps_);
    model_steps_ += config_.model_steps;
  } else {
    const bool learn_twist = learns_twist_by_gradient(config_.method);
    ascend(data_, *model_, *proposal_, *twist_, config_,
           master_.split("train").split(static_cast<std::uint64_t>(step_)), theta_optimizer_, step_,
           learn_twist ? twist_.get() : nullptr, &twist_optimizer_);
    ++model_steps_;
    if (learn_twist) ++twist_steps_;
  }
  ++step_;
  return true;
}

MetricsRow Trainer::evaluate() const {
  MetricsRow row;
  row.step = step_;
  row.model_steps = model_steps_;
  row.twist_steps = twist_steps_;
  row.method = to_string(config_.method);
  row.bound = to_string(config_.bound());
  const Index n = config_.eval_sequences == 0 ? data_.batch()
                                              : std::min<Index>(config_.eval_sequences, data_.batch());
  BoundSpec spec = config_.training_spec();
  spec.particles = config_.eval_particles;
  spec.sweeps = config_.eval_sweeps;
  BoundSpec bpf;
  bpf.kind = BoundKind::kBpf;
  bpf.particles = std::max(config_.bpf_particles, 1);
  bpf.sweeps = config_.eval_sweeps;
  const BootstrapProposal bootstrap;
  const UnitTwist unit;
  const RngStream rng = master_.split("eval");
  double var = 0, bpf_mean = 0, bpf_var = 0;
  for (Index i = 0; i < n; ++i) {
    const Observations obs = data_.item(i);
    const auto u = static_cast<std::uint64_t>(i);
    try {
      const BoundEstimate e = bound_estimate(spec, *model_, *proposal_, *twist_, obs, rng.split(u));
      row.value += e.mean / static_cast<double>(n);
      var += e.se * e.se;
      row.resampling_rate += e.resampling_rate / static_cast<double>(n);
      row.mean_ess += e.mean_ess / static_cast<double>(n);
    } catch (const DegenerateSweep&) {
      row.value = -INFINITY;
      var = NAN;
    }
    if (config_.bpf_particles > 0) {
      try {
        const BoundEstimate e = bound_estimate(bpf, *model_, bootstrap, unit, obs, rng.split("bpf").split(u));
        bpf_mean += e.mean / static_cast<double>(n);
        bpf_var += e.se * e.se;
      } catch (const DegenerateSweep&) {
        bpf_mean = -INFINITY;
        bpf_var = NAN;
      }
    }
  }
  row.se = std::sqrt(var) / static_cast<double>(n);
  if (config_.bpf_particles > 0) {
    row.bpf_value = bpf_mean;
    row.bpf_se = std::sqrt(bpf_var) / static_cast<double>(n);
  }
  row.log_marginal = exact_log_marginal(*model_, head(data_, n));
  for (const auto& [name, m] : model_->parameters().values()) {
    if (m.size() == 1) {
      row.scalars[name] = m(0, 0);
    } else if (m.size() <= 8) {
      for (Index i = 0; i < m.size(); ++i) row.scalars[name + "[" + std::to_string(i) + "]"] = m(i);
    }
  }
  if (config_.record_wall_clock) {
    row.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  return row;
}

void Trainer::run(const MetricsSink& metrics, const CheckpointSink& on_checkpoint, int checkpoint_every,
                  long stop_at) {
  if (step_ == 0 && metrics) metrics(evaluate());
  while ((stop_at < 0 || step_ < stop_at) && advance()) {
    const bool last = finished() || step_ == stop_at;
    if (metrics && (last || (config_.eval_every > 0 && step_ % config_.eval_every == 0))) metrics(evaluate());
    if (on_checkpoint && (last || (checkpoint_every > 0 && step_ % checkpoint_every == 0))) on_checkpoint(*this);
  }
}

Checkpoint Trainer::checkpoint(const json& experiment) const {
  Checkpoint c;
  c.config = experiment;
  c.fingerprint = fingerprint(experiment);
  c.step = step_;
  c.model_steps = model_steps_;
  c.twist_steps = twist_steps_;
  c.model_kind = model_->kind();
  c.proposal_kind = proposal_->kind();
  c.twist_kind = twist_->kind();
  c.model = model_->parameters().values();
  c.proposal = proposal_->parameters().values();
  c.twist = twist_->parameters().values();
  c.theta_optimizer = theta_optimizer_.state();
  c.twist_optimizer = twist_optimizer_.state();
  return c;
}

void apply_checkpoint(const Checkpoint& c, StateSpaceModel& model, Proposal& proposal, Twist& twist) {
  auto check_kind = [](const std::string& label, const std::string& have, const std::string& want) {
    if (have != want) {
      throw ConfigError("checkpoint " + label + " is '" + have + "' but the configuration uses '" + want + "'");
    }
  };
  check_kind("model", c.model_kind, model.kind());
  check_kind("proposal", c.proposal_kind, proposal.kind());
  check_kind("twist", c.twist_kind, twist.kind());
  assign(model, c.model, "model");
  assign(proposal, c.proposal, "proposal");
  assign(twist, c.twist, "twist");
}

void Trainer::restore(const Checkpoint& c) {
  apply_checkpoint(c, *model_, *proposal_, *twist_);
  theta_optimizer_.set_state(c.theta_optimizer);
  twist_optimizer_.set_state(c.twist_optimizer);
  step_ = c.step;
  model_steps_ = c.model_steps;
  twist_steps_ = c.twist_steps;
}

namespace {

TrainResult train_with(const Observations& data, const StateSpaceModel& model, const Proposal& proposal,
                       const Twist& twist, const TrainConfig& config) {
  Trainer trainer(config, data, model.clone(), proposal.clone(), twist.clone());
  TrainResult result;
  trainer.run([&](const MetricsRow& row) { result.metrics.push_back(row); });
  result.model = trainer.model().parameters().values();
  result.proposal = trainer.proposal().parameters().values();
  result.twist = trainer.twist().parameters().values();
  return result;
}

}  // namespace

TrainResult sixo_dre_train(const Observations& data, const StateSpaceModel& model,
                           const Proposal& proposal, const Twist& twist, const TrainConfig& config) {
  if (config.method != Method::kSixoDre) throw ConfigError("sixo_dre_train needs method SIXO-DRE");
  return train_with(data, model, proposal, twist, config);
}

TrainResult unified_train(const Observations& data, const StateSpaceModel& model,
                          const Proposal& proposal, const Twist& twist, const TrainConfig& config) {
  if (config.method == Method::kSixoDre) throw ConfigError("SIXO-DRE trains through sixo_dre_train");
  return train_with(data, model, proposal, twist, config);
}

std::vector<double> hh_initial_grid(double truth, int count) {
  if (count < 1) throw ConfigError("grid needs at least one point");
  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    const double rel = count == 1 ? 0.5 : -0.9 + 2.8 * i / (count - 1);
    out.push_back(truth * (1 + rel));
  }
  return out;
}

}  // namespace sixo
