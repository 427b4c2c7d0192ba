#include <iostream>

#include <CLI11.hpp>

#include "sixo/cli.hpp"
#include "sixo/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Twisted sequential Monte Carlo experiments"};
  app.require_subcommand(1);

  sixo::TrainCommand train;
  auto* train_cmd = app.add_subcommand("train", "Train a model, proposal and twist");
  train_cmd->add_option("--config", train.config, "Experiment JSON")->required();
  train_cmd->add_option("--seed", train.seed, "Master seed override");
  train_cmd->add_option("--out", train.out, "Output directory override");
  train_cmd->add_flag("--resume", train.resume, "Continue from the checkpoint in the output directory");
  train_cmd->add_option("--stop-after", train.stop_after, "Halt with a checkpoint at this step")
      ->check(CLI::NonNegativeNumber);

  sixo::EvalCommand eval;
  auto* eval_cmd = app.add_subcommand("eval", "Estimate a bound with a trained checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--bound", eval.bound)->check(CLI::IsMember({"bpf", "fivo", "sixo", "iwae"}, CLI::ignore_case));
  eval_cmd->add_option("--particles", eval.particles)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--sweeps", eval.sweeps)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--split", eval.split)->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--seed", eval.seed);

  sixo::LineageCommand lineage;
  auto* lineage_cmd = app.add_subcommand("lineage", "Export particle genealogy of one sweep as CSV");
  lineage_cmd->add_option("--checkpoint", lineage.checkpoint)->required();
  lineage_cmd->add_option("--out", lineage.out)->required();
  lineage_cmd->add_option("--seed", lineage.seed);
  lineage_cmd->add_option("--particles", lineage.particles)->check(CLI::PositiveNumber);

  sixo::SampleCommand sample;
  auto* sample_cmd = app.add_subcommand("sample", "Simulate synthetic sequences from the true model");
  sample_cmd->add_option("--config", sample.config)->required();
  sample_cmd->add_option("--count", sample.count)->check(CLI::PositiveNumber);
  sample_cmd->add_option("--out", sample.out)->required();
  sample_cmd->add_option("--seed", sample.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return sixo::run_train(train, std::cerr);
    if (*eval_cmd) {
      std::cout << sixo::run_eval(eval).dump(1) << '\n';
    } else if (*lineage_cmd) {
      sixo::run_lineage(lineage);
    } else if (*sample_cmd) {
      sixo::run_sample(sample);
    }
  } catch (const sixo::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return sixo::kExitConfig;
  } catch (const sixo::DegenerateSweep& e) {
    std::cerr << "degenerate sweep at t=" << e.timestep() << ": " << e.what() << '\n';
    return sixo::kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return sixo::kExitFailure;
  }
  return sixo::kExitOk;
}
