#pragma once

#include <span>
#include <vector>

#include "sixo/adam.hpp"
#include "sixo/twist.hpp"

namespace sixo {

// Positive latents come from the joint together with `observations`; negatives
// are independent prior draws scored against the same-index observations.
struct DreBatch {
  std::vector<Matrix> positives;  // T entries, M x D
  std::vector<Matrix> negatives;  // T entries, M x D
  Observations observations;      // batch M

  Index size() const { return positives.empty() ? 0 : positives.front().rows(); }
  DreBatch select(std::span<const Index> items) const;
};

struct DreConfig {
  Index pool_size = 1024;
  Index batch_size = 64;
  double learning_rate = 1e-3;
  int steps = 100;
};

DreBatch generate_training_batch(const StateSpaceModel& model, RngStream rng, Index M);

// Mean over items and t = 1..T-1 of log sigma(pos logit) + log sigma(-neg logit),
// the logits being the twist's log values. Larger is better.
Tensor dre_loss(const Twist& twist, const StateSpaceModel& model, const DreBatch& batch);

// Adam ascent on dre_loss over minibatches of a pool drawn from the current model.
// The pool is visited in shuffled epochs. Returns the loss at every step.
std::vector<double> twist_update(Twist& twist, const StateSpaceModel& model,
                                 const DreConfig& config, RngStream rng, Adam& optimizer);
std::vector<double> twist_update(Twist& twist, const StateSpaceModel& model,
                                 const DreConfig& config, RngStream rng);

}  // namespace sixo
