#include "sixo/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "sixo/errors.hpp"

namespace sixo {

GaussHermiteRule gauss_hermite(int degree) {
  if (degree < 1) throw ContractViolation("quadrature degree must be at least 1");
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
  Matrix jacobi = Matrix::Zero(degree, degree);
  for (int i = 1; i < degree; ++i) {
    jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(jacobi);
  GaussHermiteRule rule;
  rule.nodes = solver.eigenvalues();
  rule.weights = solver.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  // The rule is symmetric; remove the eigen-solver's rounding asymmetry.
  for (int i = 0; i < degree / 2; ++i) {
    const int j = degree - 1 - i;
    const double x = 0.5 * (rule.nodes(j) - rule.nodes(i));
    const double w = 0.5 * (rule.weights(i) + rule.weights(j));
    rule.nodes(i) = -x;
    rule.nodes(j) = x;
    rule.weights(i) = rule.weights(j) = w;
  }
  if (degree % 2 == 1) rule.nodes(degree / 2) = 0.0;
  return rule;
}

}  // namespace sixo
