#pragma once

#include "sixo/tensor.hpp"

namespace sixo {

// Gauss-Hermite rule for the standard normal weight: sum_i w_i f(z_i) approximates
// E[f(Z)], Z ~ N(0, 1). Weights sum to one.
struct GaussHermiteRule {
  Vector nodes;
  Vector weights;
};

GaussHermiteRule gauss_hermite(int degree);

}  // namespace sixo
