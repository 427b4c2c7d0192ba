#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "sixo/train.hpp"

namespace sixo {

// A complete experiment description. Sections are kept as JSON objects with every
// default filled in, so serialization round-trips exactly.
struct ExperimentConfig {
  std::string preset;  // empty when none
  nlohmann::json model;
  nlohmann::json proposal;
  nlohmann::json twist;
  nlohmann::json data;
  TrainConfig training;
  int checkpoint_every = 0;
  std::string output = "out";

  // Expands `preset` (if any), overlays the remaining keys, fills defaults and
  // validates. Errors name the offending key.
  static ExperimentConfig from_json(const nlohmann::json& document);
  nlohmann::json to_json() const;
};

ExperimentConfig load_experiment(const std::string& path);

// The unexpanded document of a named preset: gdd-paper, svm-paper or hh-paper.
nlohmann::json preset_document(const std::string& name);

nlohmann::json training_to_json(const TrainConfig& config, int checkpoint_every);
TrainConfig training_from_json(const nlohmann::json& section, int* checkpoint_every = nullptr);

std::unique_ptr<StateSpaceModel> build_model(const ExperimentConfig& config);
// The data-generating model: build_model with data.truth overriding parameters.
std::unique_ptr<StateSpaceModel> build_truth_model(const ExperimentConfig& config);
std::unique_ptr<Proposal> build_proposal(const ExperimentConfig& config);
std::unique_ptr<Twist> build_twist(const ExperimentConfig& config);

enum class Split { kTrain, kTest };
Observations load_data(const ExperimentConfig& config, Split split = Split::kTrain);

// Writes sampled latents and observations as a JSON document readable by a
// `file` data source.
void write_samples(const Dataset& data, const std::string& path);
Observations read_samples(const std::string& path);

}  // namespace sixo
