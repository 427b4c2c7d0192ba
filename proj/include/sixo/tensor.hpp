#pragma once

#include <Eigen/Core>

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace sixo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

class Tape;

// Dense 2-D array of doubles. Values are immutable once created; a tensor either
// is a constant or refers to a node of a recording Tape. Batches of particles are
// laid out as rows.
class Tensor {
 public:
  Tensor();
  Tensor(Matrix value);  // NOLINT: implicit constant construction is intended

  static Tensor scalar(double value);
  static Tensor constant(Index rows, Index cols, double value);
  static Tensor zeros(Index rows, Index cols) { return constant(rows, cols, 0.0); }

  const Matrix& value() const { return *value_; }
  Index rows() const { return value_->rows(); }
  Index cols() const { return value_->cols(); }
  Index size() const { return value_->size(); }
  bool empty() const { return value_->size() == 0; }
  double item() const;
  double operator()(Index r, Index c) const { return (*value_)(r, c); }

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  Tensor detach() const;

 private:
  friend class Tape;
  std::shared_ptr<const Matrix> value_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Append-only record of primitive operations. Nodes are created in evaluation
// order, so a reverse scan visits every consumer before its inputs.
class Tape {
 public:
  using Backward = std::function<void(const Matrix& adjoint, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor variable(Matrix value);
  Tensor record(Matrix value, Backward backward);

  // Adds `contribution` to the adjoint of `input`; ignored for constants and
  // tensors living on another tape.
  void accumulate(const Tensor& input, const Matrix& contribution);

  // Reverse sweep from a scalar output. Adjoints stay available until the next call.
  void backward(const Tensor& output);
  Matrix adjoint(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Index rows = 0;
    Index cols = 0;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::vector<Matrix> adjoints_;
};

// Finds the tape shared by a set of inputs (nullptr when all are constants).
Tape* common_tape(std::initializer_list<const Tensor*> inputs);

using ParameterSet = std::map<std::string, Matrix>;

// Named tensors; iteration order is the lexical order of the names.
class Parameters {
 public:
  Parameters() = default;
  explicit Parameters(const ParameterSet& values);

  void set(const std::string& name, Tensor value) { entries_[name] = std::move(value); }
  const Tensor& at(const std::string& name) const;
  const Tensor& operator[](const std::string& name) const { return at(name); }
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  ParameterSet values() const;
  Parameters tracked(Tape& tape) const;

 private:
  std::map<std::string, Tensor> entries_;
};

struct Gradient {
  ParameterSet values;
  bool detached = false;  // output did not depend on any tracked value
};

// Reverse-mode gradient of a scalar output with respect to named parameters.
// Parameters that did not participate receive zeros.
Gradient grad(const Tensor& output, const Parameters& params);

// Total number of scalar entries.
Index parameter_count(const ParameterSet& set);

}  // namespace sixo
