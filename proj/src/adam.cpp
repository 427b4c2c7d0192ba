#include "sixo/adam.hpp"

#include <cmath>

#include "sixo/errors.hpp"

namespace sixo {

void Adam::step(ParameterSet& params, const ParameterSet& gradient) {
  ++state_.step;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  const double sign = options_.maximize ? 1.0 : -1.0;
  for (auto& [name, value] : params) {
    auto g = gradient.find(name);
    if (g == gradient.end()) continue;
    if (g->second.rows() != value.rows() || g->second.cols() != value.cols()) {
      throw ContractViolation("gradient shape mismatch for '" + name + "'");
    }
    Matrix& m = state_.first_moment[name];
    Matrix& v = state_.second_moment[name];
    if (m.size() == 0) m = Matrix::Zero(value.rows(), value.cols());
    if (v.size() == 0) v = Matrix::Zero(value.rows(), value.cols());
    m = b1 * m + (1.0 - b1) * g->second;
    v = b2 * v + (1.0 - b2) * g->second.cwiseAbs2();
    const auto m_hat = m.array() / c1;
    const auto v_hat = v.array() / c2;
    value.array() += sign * options_.learning_rate * m_hat / (v_hat.sqrt() + options_.epsilon);
  }
}

}  // namespace sixo
