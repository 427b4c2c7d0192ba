#pragma once

#include <span>
#include <vector>

#include "sixo/tensor.hpp"

// Differentiable primitives on Tensor. Elementwise binary operations broadcast
// 1x1, 1xC and Rx1 operands against the other shape.
namespace sixo {

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);

Tensor operator+(const Tensor& a, double b);
Tensor operator+(double a, const Tensor& b);
Tensor operator-(const Tensor& a, double b);
Tensor operator-(double a, const Tensor& b);
Tensor operator*(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);
Tensor operator/(const Tensor& a, double b);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
// log sigma(z) = -softplus(-z); log(1 - sigma(z)) is log_sigmoid(-z).
Tensor log_sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);       // 1x1
Tensor mean(const Tensor& a);      // 1x1
Tensor row_sum(const Tensor& a);   // Rx1, sums across columns
Tensor col_sum(const Tensor& a);   // 1xC, sums down rows

enum class Axis {
  kRows,  // reduce along rows: RxC -> 1xC
  kCols,  // reduce along columns: RxC -> Rx1
};

Tensor logsumexp(const Tensor& a);  // 1x1 over every entry
Tensor logsumexp(const Tensor& a, Axis axis);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor row(const Tensor& a, Index i);
Tensor col(const Tensor& a, Index j);
Tensor middle_cols(const Tensor& a, Index start, Index count);
Tensor gather_rows(const Tensor& a, std::span<const int> indices);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor broadcast_to(const Tensor& a, Index rows, Index cols);
// Convex combination (1 - weight) * a + weight * b for a constant weight.
Tensor lerp(const Tensor& a, const Tensor& b, double weight);

// -0.5 log(2 pi var) - (x - mean)^2 / (2 var), elementwise with broadcasting.
// Throws DomainError when any variance entry is not strictly positive.
Tensor gaussian_logpdf(const Tensor& x, const Tensor& mean, const Tensor& variance);

inline Tensor stop_gradient(const Tensor& a) { return a.detach(); }

// Plain-value helpers shared by the estimators.
double logsumexp(const Eigen::Ref<const Vector>& values);
double gaussian_logpdf(double x, double mean, double variance);

}  // namespace sixo
