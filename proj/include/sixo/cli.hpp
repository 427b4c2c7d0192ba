#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "sixo/experiment.hpp"

namespace sixo {

// Exit statuses of the command runners.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAborted = 3;
inline constexpr int kExitFailure = 4;

struct TrainCommand {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool resume = false;  // continue from <out>/checkpoint.json when present
  std::optional<long> stop_after;  // halt (with a checkpoint) once progress reaches this
};

// Writes config.json, metrics.jsonl, checkpoint.json and summary.json under the
// output directory, or diagnostics.json when training aborts.
int run_train(const TrainCommand& command, std::ostream& log);

struct EvalCommand {
  std::string checkpoint;
  std::string bound = "sixo";
  int particles = 4;
  int sweeps = 100;
  std::string split = "train";
  std::uint64_t seed = 0;
};

// Mean and SE of the bound averaged over the sequences of the split. Sequence i
// uses RngStream(seed).split(i).
nlohmann::json run_eval(const EvalCommand& command);

struct LineageCommand {
  std::string checkpoint;
  std::string out;
  std::uint64_t seed = 0;
  std::optional<int> particles;  // default: the training particle count
};

// One recorded sweep on the first training sequence, resampling at every step
// with the systematic scheme. Returns the sweep for inspection.
SweepResult run_lineage(const LineageCommand& command);

struct SampleCommand {
  std::string config;
  Index count = 1;
  std::string out;
  std::optional<std::uint64_t> seed;  // default: data.seed
};

void run_sample(const SampleCommand& command);

// Final bound, exact gap when known, and errors of parameters that have a
// synthetic ground truth.
nlohmann::json training_summary(const ExperimentConfig& config, const Trainer& trainer,
                                const MetricsRow& last);

}  // namespace sixo
