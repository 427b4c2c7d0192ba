#pragma once

#include <functional>

#include "sixo/tensor.hpp"

namespace sixo::testkit {

// Central finite differences of a scalar function of one matrix argument.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x,
                               double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double x0 = x(i);
    x(i) = x0 + h;
    const double up = f(x);
    x(i) = x0 - h;
    const double down = f(x);
    x(i) = x0;
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

// Reverse-mode gradient of a scalar-valued tensor function at x.
inline Matrix tape_gradient(const std::function<Tensor(const Tensor&)>& f, const Matrix& x) {
  Tape tape;
  Tensor v = tape.variable(x);
  Tensor out = f(v);
  tape.backward(out);
  return tape.adjoint(v);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace sixo::testkit
