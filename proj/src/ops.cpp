#include "sixo/ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "sixo/errors.hpp"

namespace sixo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

Index broadcast_dim(Index a, Index b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ContractViolation(std::string(op) + ": incompatible dimensions " + std::to_string(a) +
                          " and " + std::to_string(b));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.size() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1 && m.cols() == cols) return m.replicate(rows, 1);
  if (m.cols() == 1 && m.rows() == rows) return m.replicate(1, cols);
  throw ContractViolation("cannot broadcast " + shape_str(m.rows(), m.cols()) + " to " +
                          shape_str(rows, cols));
}

Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

double softplus_value(double z) {
  // log(1 + e^z) without overflow
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid_value(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <class Forward, class GradA, class GradB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Forward forward, GradA grad_a,
              GradB grad_b) {
  const Index r = broadcast_dim(a.rows(), b.rows(), name);
  const Index c = broadcast_dim(a.cols(), b.cols(), name);
  Matrix A = expand(a.value(), r, c);
  Matrix B = expand(b.value(), r, c);
  Matrix out = forward(A, B);
  Tape* tape = common_tape({&a, &b});
  if (tape == nullptr) return Tensor(std::move(out));
  return tape->record(std::move(out), [a, b, A = std::move(A), B = std::move(B), grad_a, grad_b](
                                          const Matrix& g, Tape& t) {
    if (a.on_tape()) t.accumulate(a, reduce_to(grad_a(g, A, B), a.rows(), a.cols()));
    if (b.on_tape()) t.accumulate(b, reduce_to(grad_b(g, A, B), b.rows(), b.cols()));
  });
}

// `grad` receives (upstream, input, output) and returns the input adjoint.
template <class Forward, class Grad>
Tensor unary(const Tensor& a, Forward forward, Grad grad) {
  Matrix out = forward(a.value());
  if (!a.on_tape()) return Tensor(std::move(out));
  Matrix y = out;
  return a.tape()->record(std::move(out), [a, y = std::move(y), grad](const Matrix& g, Tape& t) {
    t.accumulate(a, grad(g, a.value(), y));
  });
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](const Matrix& A, const Matrix& B) -> Matrix { return A + B; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g; });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](const Matrix& A, const Matrix& B) -> Matrix { return A - B; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return -g; });
}

Tensor operator*(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul",
      [](const Matrix& A, const Matrix& B) -> Matrix { return A.cwiseProduct(B); },
      [](const Matrix& g, const Matrix&, const Matrix& B) -> Matrix { return g.cwiseProduct(B); },
      [](const Matrix& g, const Matrix& A, const Matrix&) -> Matrix { return g.cwiseProduct(A); });
}

Tensor operator/(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div",
      [](const Matrix& A, const Matrix& B) -> Matrix { return A.cwiseQuotient(B); },
      [](const Matrix& g, const Matrix&, const Matrix& B) -> Matrix {
        return g.cwiseQuotient(B);
      },
      [](const Matrix& g, const Matrix& A, const Matrix& B) -> Matrix {
        return -(g.array() * A.array() / B.array().square()).matrix();
      });
}

Tensor operator-(const Tensor& a) {
  Matrix out = -a.value();
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out),
                          [a](const Matrix& g, Tape& t) { t.accumulate(a, -g); });
}

Tensor operator+(const Tensor& a, double b) {
  Matrix out = a.value().array() + b;
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out), [a](const Matrix& g, Tape& t) { t.accumulate(a, g); });
}
Tensor operator+(double a, const Tensor& b) { return b + a; }
Tensor operator-(const Tensor& a, double b) { return a + (-b); }
Tensor operator-(double a, const Tensor& b) { return (-b) + a; }

Tensor operator*(const Tensor& a, double b) {
  Matrix out = a.value() * b;
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out),
                          [a, b](const Matrix& g, Tape& t) { t.accumulate(a, g * b); });
}
Tensor operator*(double a, const Tensor& b) { return b * a; }
Tensor operator/(const Tensor& a, double b) { return a * (1.0 / b); }

Tensor exp(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().exp(); },
      [](const Matrix& g, const Matrix&, const Matrix& y) -> Matrix { return g.cwiseProduct(y); });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().log(); },
      [](const Matrix& g, const Matrix& x, const Matrix&) -> Matrix {
        return g.cwiseQuotient(x);
      });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().tanh(); },
      [](const Matrix& g, const Matrix&, const Matrix& y) -> Matrix {
        return (g.array() * (1.0 - y.array().square())).matrix();
      });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().sqrt(); },
      [](const Matrix& g, const Matrix&, const Matrix& y) -> Matrix {
        return (0.5 * g.array() / y.array()).matrix();
      });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().square(); },
      [](const Matrix& g, const Matrix& x, const Matrix&) -> Matrix {
        return (2.0 * g.array() * x.array()).matrix();
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.unaryExpr(&sigmoid_value); },
      [](const Matrix& g, const Matrix&, const Matrix& y) -> Matrix {
        return (g.array() * y.array() * (1.0 - y.array())).matrix();
      });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.unaryExpr(&softplus_value); },
      [](const Matrix& g, const Matrix& x, const Matrix&) -> Matrix {
        return g.cwiseProduct(x.unaryExpr(&sigmoid_value));
      });
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.unaryExpr([](double z) {
                                          return -softplus_value(-z);
                                        }); },
      [](const Matrix& g, const Matrix& x, const Matrix&) -> Matrix {
        // d/dz log sigma(z) = sigma(-z)
        return g.cwiseProduct(x.unaryExpr([](double z) { return sigmoid_value(-z); }));
      });
}

Tensor sum(const Tensor& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out), [a](const Matrix& g, Tape& t) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ContractViolation("mean of an empty tensor");
  return sum(a) * (1.0 / static_cast<double>(a.size()));
}

Tensor row_sum(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out), [a](const Matrix& g, Tape& t) {
    t.accumulate(a, g.replicate(1, a.cols()));
  });
}

Tensor col_sum(const Tensor& a) {
  Matrix out = a.value().colwise().sum();
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out), [a](const Matrix& g, Tape& t) {
    t.accumulate(a, g.replicate(a.rows(), 1));
  });
}

double logsumexp(const Eigen::Ref<const Vector>& values) {
  if (values.size() == 0) throw ContractViolation("logsumexp over an empty axis");
  const double m = values.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf, or +inf present
  return m + std::log((values.array() - m).exp().sum());
}

namespace {

// Returns lse along columns of each row (Rx1) and the softmax weights.
void lse_rowwise(const Matrix& x, Matrix& out, Matrix& soft) {
  out.resize(x.rows(), 1);
  soft.resize(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    if (!std::isfinite(m)) {
      out(i, 0) = m;
      soft.row(i).setZero();
      continue;
    }
    auto e = (x.row(i).array() - m).exp();
    const double s = e.sum();
    out(i, 0) = m + std::log(s);
    soft.row(i) = e / s;
  }
}

}  // namespace

Tensor logsumexp(const Tensor& a, Axis axis) {
  if ((axis == Axis::kCols && a.cols() == 0) || (axis == Axis::kRows && a.rows() == 0)) {
    throw ContractViolation("logsumexp over an empty axis");
  }
  Matrix out, soft;
  if (axis == Axis::kCols) {
    lse_rowwise(a.value(), out, soft);
  } else {
    lse_rowwise(a.value().transpose(), out, soft);
    out.transposeInPlace();
    soft.transposeInPlace();
  }
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out), [a, axis, soft = std::move(soft)](const Matrix& g,
                                                                            Tape& t) {
    if (axis == Axis::kCols) {
      t.accumulate(a, (soft.array().colwise() * g.col(0).array()).matrix());
    } else {
      t.accumulate(a, (soft.array().rowwise() * g.row(0).array()).matrix());
    }
  });
}

Tensor logsumexp(const Tensor& a) {
  if (a.size() == 0) throw ContractViolation("logsumexp over an empty axis");
  Matrix flat = a.value().reshaped(1, a.size());
  Matrix out, soft;
  lse_rowwise(flat, out, soft);
  if (!a.on_tape()) return Tensor(std::move(out));
  Matrix soft_shaped = soft.reshaped(a.rows(), a.cols());
  return a.tape()->record(std::move(out),
                          [a, soft = std::move(soft_shaped)](const Matrix& g, Tape& t) {
                            t.accumulate(a, soft * g(0, 0));
                          });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("matmul: shapes " + shape_str(a.rows(), a.cols()) + " and " +
                            shape_str(b.rows(), b.cols()));
  }
  Matrix out = a.value() * b.value();
  Tape* tape = common_tape({&a, &b});
  if (tape == nullptr) return Tensor(std::move(out));
  return tape->record(std::move(out), [a, b](const Matrix& g, Tape& t) {
    if (a.on_tape()) t.accumulate(a, g * b.value().transpose());
    if (b.on_tape()) t.accumulate(b, a.value().transpose() * g);
  });
}

Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out), [a](const Matrix& g, Tape& t) {
    t.accumulate(a, g.transpose());
  });
}

Tensor row(const Tensor& a, Index i) {
  if (i < 0 || i >= a.rows()) throw ContractViolation("row index out of range");
  Matrix out = a.value().row(i);
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out), [a, i](const Matrix& g, Tape& t) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.row(i) = g;
    t.accumulate(a, full);
  });
}

Tensor col(const Tensor& a, Index j) { return middle_cols(a, j, 1); }

Tensor middle_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ContractViolation("column range out of range");
  }
  Matrix out = a.value().middleCols(start, count);
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out), [a, start, count](const Matrix& g, Tape& t) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    t.accumulate(a, full);
  });
}

Tensor gather_rows(const Tensor& a, std::span<const int> indices) {
  Matrix out(static_cast<Index>(indices.size()), a.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= a.rows()) {
      throw ContractViolation("gather_rows index out of range");
    }
    out.row(static_cast<Index>(k)) = a.value().row(indices[k]);
  }
  if (!a.on_tape()) return Tensor(std::move(out));
  std::vector<int> idx(indices.begin(), indices.end());
  return a.tape()->record(std::move(out), [a, idx = std::move(idx)](const Matrix& g, Tape& t) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) full.row(idx[k]) += g.row(static_cast<Index>(k));
    t.accumulate(a, full);
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) return Tensor();
  const Index r = parts.front().rows();
  Index c = 0;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    if (p.rows() != r) throw ContractViolation("concat_cols: row counts differ");
    c += p.cols();
    Tape* pt = common_tape({&p});
    if (pt != nullptr) {
      if (tape != nullptr && tape != pt) throw ContractViolation("operands on different tapes");
      tape = pt;
    }
  }
  Matrix out(r, c);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  if (tape == nullptr) return Tensor(std::move(out));
  return tape->record(std::move(out), [parts](const Matrix& g, Tape& t) {
    Index off = 0;
    for (const auto& p : parts) {
      if (p.on_tape()) t.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) return Tensor();
  const Index c = parts.front().cols();
  Index r = 0;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ContractViolation("concat_rows: column counts differ");
    r += p.rows();
    if (p.tape() != nullptr) {
      if (tape != nullptr && tape != p.tape()) {
        throw ContractViolation("operands on different tapes");
      }
      tape = p.tape();
    }
  }
  Matrix out(r, c);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  if (tape == nullptr) return Tensor(std::move(out));
  return tape->record(std::move(out), [parts](const Matrix& g, Tape& t) {
    Index off = 0;
    for (const auto& p : parts) {
      if (p.on_tape()) t.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

Tensor broadcast_to(const Tensor& a, Index rows, Index cols) {
  if (a.rows() == rows && a.cols() == cols) return a;
  Matrix out = expand(a.value(), rows, cols);
  if (!a.on_tape()) return Tensor(std::move(out));
  return a.tape()->record(std::move(out), [a](const Matrix& g, Tape& t) {
    t.accumulate(a, reduce_to(g, a.rows(), a.cols()));
  });
}

Tensor lerp(const Tensor& a, const Tensor& b, double weight) {
  if (weight == 0.0) return a;
  if (weight == 1.0) return b;
  return a * (1.0 - weight) + b * weight;
}

Tensor gaussian_logpdf(const Tensor& x, const Tensor& mean, const Tensor& variance) {
  if ((variance.value().array() <= 0.0).any() || variance.value().hasNaN()) {
    throw DomainError("gaussian_logpdf: variance must be strictly positive");
  }
  const Index r = broadcast_dim(broadcast_dim(x.rows(), mean.rows(), "gaussian_logpdf"),
                                variance.rows(), "gaussian_logpdf");
  const Index c = broadcast_dim(broadcast_dim(x.cols(), mean.cols(), "gaussian_logpdf"),
                                variance.cols(), "gaussian_logpdf");
  const Matrix X = expand(x.value(), r, c);
  const Matrix M = expand(mean.value(), r, c);
  const Matrix V = expand(variance.value(), r, c);
  Matrix diff = X - M;
  Matrix out = -0.5 * (kLog2Pi + V.array().log() + diff.array().square() / V.array());
  Tape* tape = common_tape({&x, &mean, &variance});
  if (tape == nullptr) return Tensor(std::move(out));
  return tape->record(std::move(out), [x, mean, variance, diff = std::move(diff), V](
                                          const Matrix& g, Tape& t) {
    const Eigen::ArrayXXd z = diff.array() / V.array();
    if (x.on_tape()) t.accumulate(x, reduce_to((-g.array() * z).matrix(), x.rows(), x.cols()));
    if (mean.on_tape()) {
      t.accumulate(mean, reduce_to((g.array() * z).matrix(), mean.rows(), mean.cols()));
    }
    if (variance.on_tape()) {
      const Matrix dv = (g.array() * 0.5 * (z.square() - 1.0 / V.array())).matrix();
      t.accumulate(variance, reduce_to(dv, variance.rows(), variance.cols()));
    }
  });
}

double gaussian_logpdf(double x, double mean, double variance) {
  if (!(variance > 0.0)) throw DomainError("gaussian_logpdf: variance must be strictly positive");
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + d * d / variance);
}

}  // namespace sixo
