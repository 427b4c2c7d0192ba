#include "sixo/component.hpp"

#include "sixo/errors.hpp"

namespace sixo {

void Parameterized::set_parameters(Parameters params) {
  if (params.size() != params_.size()) {
    throw ContractViolation("parameter set has " + std::to_string(params.size()) +
                            " entries, expected " + std::to_string(params_.size()));
  }
  for (const auto& [name, value] : params) {
    if (!params_.contains(name)) throw ContractViolation("unknown parameter '" + name + "'");
    const Tensor& old = params_.at(name);
    if (old.rows() != value.rows() || old.cols() != value.cols()) {
      throw ContractViolation("shape mismatch for parameter '" + name + "'");
    }
  }
  params_ = std::move(params);
}

void Parameterized::set_values(const ParameterSet& values) { set_parameters(Parameters(values)); }

ParameterSet prefixed(const std::string& prefix, const ParameterSet& values) {
  ParameterSet out;
  for (const auto& [name, value] : values) out[prefix + "/" + name] = value;
  return out;
}

ParameterSet unprefixed(const std::string& prefix, const ParameterSet& values) {
  ParameterSet out;
  const std::string head = prefix + "/";
  for (const auto& [name, value] : values) {
    if (name.compare(0, head.size(), head) == 0) out[name.substr(head.size())] = value;
  }
  return out;
}

}  // namespace sixo
