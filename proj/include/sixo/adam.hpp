#pragma once

#include "sixo/tensor.hpp"

namespace sixo {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool maximize = false;
};

struct AdamState {
  ParameterSet first_moment;
  ParameterSet second_moment;
  long step = 0;
};

// Bias-corrected Adam over a named parameter set. Moments for names seen for the
// first time start at zero.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(ParameterSet& params, const ParameterSet& gradient);

  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  const AdamState& state() const { return state_; }
  void set_state(AdamState state) { state_ = std::move(state); }

 private:
  AdamOptions options_;
  AdamState state_;
};

}  // namespace sixo
