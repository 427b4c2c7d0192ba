#pragma once

#include <string>

#include "sixo/tensor.hpp"

namespace sixo {

// Anything that owns named learnable tensors: models, proposals and twists.
class Parameterized {
 public:
  virtual ~Parameterized() = default;

  const Parameters& parameters() const { return params_; }

  // Replaces the parameter tensors (possibly tape-tracked copies). Names and shapes
  // must match the current set.
  void set_parameters(Parameters params);
  void set_values(const ParameterSet& values);

 protected:
  void declare(const std::string& name, Matrix initial) { params_.set(name, Tensor(std::move(initial))); }
  const Tensor& param(const std::string& name) const { return params_.at(name); }

 private:
  Parameters params_;
};

// Prefixes every name with `prefix/`.
ParameterSet prefixed(const std::string& prefix, const ParameterSet& values);
// Selects the entries under `prefix/` and strips the prefix.
ParameterSet unprefixed(const std::string& prefix, const ParameterSet& values);

}  // namespace sixo
