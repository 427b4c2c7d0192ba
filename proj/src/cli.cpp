#include "sixo/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "sixo/errors.hpp"

namespace sixo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << doc.dump(1) << '\n';
}

// The experiment identity: everything except where the artifacts go.
json identity(const ExperimentConfig& config) {
  json doc = config.to_json();
  doc.erase("output");
  return doc;
}

// Keeps the metric rows up to and including `step`.
void truncate_metrics(const fs::path& path, long step) {
  std::ifstream in(path);
  std::vector<std::string> kept;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    if (json::parse(line).at("step").get<long>() <= step) kept.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& line : kept) out << line << '\n';
}

struct Loaded {
  ExperimentConfig config;
  std::unique_ptr<StateSpaceModel> model;
  std::unique_ptr<Proposal> proposal;
  std::unique_ptr<Twist> twist;
};

Loaded load_trained(const std::string& path) {
  const Checkpoint checkpoint = load_checkpoint(path);
  Loaded l{ExperimentConfig::from_json(checkpoint.config), nullptr, nullptr, nullptr};
  l.model = build_model(l.config);
  l.proposal = build_proposal(l.config);
  l.twist = build_twist(l.config);
  apply_checkpoint(checkpoint, *l.model, *l.proposal, *l.twist);
  return l;
}

json matrix_value(const Matrix& m) {
  if (m.size() == 1) return m(0, 0);
  json values = json::array();
  for (Index i = 0; i < m.size(); ++i) values.push_back(m(i));
  return values;
}

}  // namespace

json training_summary(const ExperimentConfig& config, const Trainer& trainer, const MetricsRow& last) {
  json summary = {{"method", to_string(trainer.config().method)},
                  {"seed", trainer.config().seed},
                  {"step", trainer.progress()},
                  {"bound", last.bound},
                  {"bound_value", last.value},
                  {"bound_se", last.se},
                  {"final", to_json(last)}};
  if (last.log_marginal) {
    summary["log_marginal"] = *last.log_marginal;
    summary["bound_gap"] = *last.log_marginal - last.value;
  }
  if (last.bpf_value) {
    summary["bpf_value"] = *last.bpf_value;
    summary["bpf_se"] = *last.bpf_se;
  }
  const ParameterSet learned = trainer.model().parameters().values();
  json parameters = json::object();
  for (const auto& [name, m] : learned) {
    if (m.size() <= 64) parameters[name] = matrix_value(m);
  }
  summary["parameters"] = parameters;
  json errors = json::object();
  if (config.data["source"] == "synthetic") {
    const ParameterSet truth = build_truth_model(config)->parameters().values();
    for (const auto& [name, spec] : config.data["truth"].items()) {
      const Matrix& want = truth.at(name);
      const Matrix& have = learned.at(name);
      const double absolute = (have - want).cwiseAbs().maxCoeff();
      const double scale = want.cwiseAbs().maxCoeff();
      json e = {{"value", matrix_value(have)}, {"truth", matrix_value(want)}, {"absolute_error", absolute}};
      if (scale > 0) e["relative_error"] = absolute / scale;
      errors[name] = e;
    }
  }
  summary["parameter_errors"] = errors;
  return summary;
}

int run_train(const TrainCommand& command, std::ostream& log) {
  ExperimentConfig config;
  try {
    config = load_experiment(command.config);
    if (command.seed) config.training.seed = *command.seed;
    if (command.out) config.output = *command.out;
  } catch (const ConfigError& e) {
    log << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  }
  const fs::path out(config.output);
  const fs::path checkpoint_path = out / "checkpoint.json";
  const fs::path metrics_path = out / "metrics.jsonl";
  const json id = identity(config);
  std::unique_ptr<Trainer> trainer;
  bool resumed = false;
  try {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ConfigError("cannot create output directory '" + out.string() + "'");
    write_json(config.to_json(), out / "config.json");
    trainer = std::make_unique<Trainer>(config.training, load_data(config), build_model(config),
                                        build_proposal(config), build_twist(config));
    if (command.resume && fs::exists(checkpoint_path)) {
      const Checkpoint checkpoint = load_checkpoint(checkpoint_path.string());
      if (checkpoint.fingerprint != fingerprint(id)) {
        throw ConfigError("checkpoint '" + checkpoint_path.string() + "' belongs to a different configuration");
      }
      trainer->restore(checkpoint);
      truncate_metrics(metrics_path, checkpoint.step);
      resumed = true;
    }
  } catch (const ConfigError& e) {
    log << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  }
  std::ofstream metrics(metrics_path, resumed ? std::ios::app : std::ios::trunc);
  std::optional<MetricsRow> last;
  auto emit = [&](const MetricsRow& row) {
    metrics << to_json(row).dump() << '\n';
    metrics.flush();
    last = row;
  };
  auto save = [&](const Trainer& t) { save_checkpoint(t.checkpoint(id), checkpoint_path.string()); };
  try {
    trainer->run(emit, save, config.checkpoint_every, command.stop_after.value_or(-1));
    if (!last) last = trainer->evaluate();
    save(*trainer);
  } catch (const TrainingAborted& e) {
    json diagnostics = {{"error", "training aborted"}, {"message", e.what()}, {"step", e.step()},
                        {"progress", trainer->progress()}};
    if (last) diagnostics["last_metrics"] = to_json(*last);
    write_json(diagnostics, out / "diagnostics.json");
    log << "training aborted at step " << e.step() << ": " << e.what() << '\n';
    return kExitAborted;
  }
  json summary = training_summary(config, *trainer, *last);
  summary["finished"] = trainer->finished();
  write_json(summary, out / "summary.json");
  return kExitOk;
}

json run_eval(const EvalCommand& command) {
  Loaded l = load_trained(command.checkpoint);
  if (command.split != "train" && command.split != "test") {
    throw ConfigError("split must be 'train' or 'test', got '" + command.split + "'");
  }
  const Observations data = load_data(l.config, command.split == "train" ? Split::kTrain : Split::kTest);
  BoundSpec spec;
  spec.kind = parse_bound_kind(command.bound);
  spec.particles = command.particles;
  spec.sweeps = command.sweeps;
  const BootstrapProposal bootstrap;
  const UnitTwist unit;
  const Proposal& proposal = spec.kind == BoundKind::kBpf ? static_cast<const Proposal&>(bootstrap) : *l.proposal;
  const Twist& twist = spec.kind == BoundKind::kSixo ? *l.twist : static_cast<const Twist&>(unit);
  validate_bound(spec, proposal, twist);
  const RngStream rng(command.seed);
  const Index n = data.batch();
  double mean = 0, var = 0;
  json values = json::array();
  for (Index i = 0; i < n; ++i) {
    const BoundEstimate e =
        bound_estimate(spec, *l.model, proposal, twist, data.item(i), rng.split(static_cast<std::uint64_t>(i)));
    mean += e.mean / static_cast<double>(n);
    var += e.se * e.se;
    values.push_back(e.mean);
  }
  json summary = {{"checkpoint", command.checkpoint},
                  {"bound", to_string(spec.kind)},
                  {"particles", command.particles},
                  {"sweeps", command.sweeps},
                  {"split", command.split},
                  {"seed", command.seed},
                  {"sequences", n},
                  {"mean", mean},
                  {"se", std::sqrt(var) / static_cast<double>(n)},
                  {"values", values}};
  if (const auto exact = exact_log_marginal(*l.model, data)) summary["log_marginal"] = *exact;
  return summary;
}

SweepResult run_lineage(const LineageCommand& command) {
  Loaded l = load_trained(command.checkpoint);
  const Observations obs = load_data(l.config).item(0);
  const BoundKind kind = l.config.training.bound();
  const BootstrapProposal bootstrap;
  const UnitTwist unit;
  const Proposal& proposal = kind == BoundKind::kBpf ? static_cast<const Proposal&>(bootstrap) : *l.proposal;
  const Twist& twist = kind == BoundKind::kSixo ? *l.twist : static_cast<const Twist&>(unit);
  SweepConfig sweep;
  sweep.particles = command.particles.value_or(l.config.training.particles);
  sweep.scheme = ResamplingScheme::kSystematic;
  sweep.schedule = ResamplingSchedule::always();
  sweep.record_lineage = true;
  sweep.validate();
  const SweepResult result =
      smc_sweep(*l.model, proposal, twist, twist.encode(*l.model, obs), obs, sweep, RngStream(command.seed));
  std::ofstream out(command.out);
  if (!out) throw ConfigError("cannot write lineage to '" + command.out + "'");
  write_lineage_csv(result, out);
  return result;
}

void run_sample(const SampleCommand& command) {
  const ExperimentConfig config = load_experiment(command.config);
  if (command.count < 1) throw ConfigError("sample count must be positive");
  std::uint64_t seed = 0;
  if (command.seed) {
    seed = *command.seed;
  } else if (config.data.contains("seed")) {
    seed = config.data["seed"].get<std::uint64_t>();
  }
  write_samples(simulate(*build_truth_model(config), command.count, RngStream(seed)), command.out);
}

}  // namespace sixo
