#include "sixo/tensor.hpp"

#include "sixo/errors.hpp"

namespace sixo {

namespace {
const std::shared_ptr<const Matrix>& empty_matrix() {
  static const auto kEmpty = std::make_shared<const Matrix>();
  return kEmpty;
}
}  // namespace

Tensor::Tensor() : value_(empty_matrix()) {}

Tensor::Tensor(Matrix value) : value_(std::make_shared<const Matrix>(std::move(value))) {}

Tensor Tensor::scalar(double value) { return Tensor(Matrix::Constant(1, 1, value)); }

Tensor Tensor::constant(Index rows, Index cols, double value) {
  return Tensor(Matrix::Constant(rows, cols, value));
}

double Tensor::item() const {
  if (value_->size() != 1) {
    throw ContractViolation("Tensor::item requires a 1x1 tensor");
  }
  return (*value_)(0, 0);
}

Tensor Tensor::detach() const {
  Tensor out;
  out.value_ = value_;
  return out;
}

Tensor Tape::variable(Matrix value) {
  return record(std::move(value), nullptr);
}

Tensor Tape::record(Matrix value, Backward backward) {
  Tensor out(std::move(value));
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{out.rows(), out.cols(), std::move(backward)});
  return out;
}

void Tape::accumulate(const Tensor& input, const Matrix& contribution) {
  if (input.tape_ != this) return;
  Matrix& slot = adjoints_[input.node_];
  if (slot.size() == 0) {
    slot = contribution;
  } else {
    slot += contribution;
  }
}

void Tape::backward(const Tensor& output) {
  if (output.size() != 1) {
    throw ContractViolation("backward requires a scalar output");
  }
  adjoints_.assign(nodes_.size(), Matrix());
  if (output.tape_ != this) return;
  adjoints_[output.node_] = Matrix::Ones(1, 1);
  for (int id = output.node_; id >= 0; --id) {
    const Node& node = nodes_[id];
    if (!node.backward || adjoints_[id].size() == 0) continue;
    node.backward(adjoints_[id], *this);
  }
}

Matrix Tape::adjoint(const Tensor& t) const {
  if (t.tape_ == this && t.node_ < static_cast<int>(adjoints_.size()) &&
      adjoints_[t.node_].size() != 0) {
    return adjoints_[t.node_];
  }
  return Matrix::Zero(t.rows(), t.cols());
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* found = nullptr;
  for (const Tensor* t : inputs) {
    if (t->tape() == nullptr) continue;
    if (found != nullptr && found != t->tape()) {
      throw ContractViolation("operands recorded on different tapes");
    }
    found = t->tape();
  }
  return found;
}

Parameters::Parameters(const ParameterSet& values) {
  for (const auto& [name, value] : values) entries_[name] = Tensor(value);
}

const Tensor& Parameters::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw ContractViolation("unknown parameter '" + name + "'");
  }
  return it->second;
}

ParameterSet Parameters::values() const {
  ParameterSet out;
  for (const auto& [name, t] : entries_) out[name] = t.value();
  return out;
}

Parameters Parameters::tracked(Tape& tape) const {
  Parameters out;
  for (const auto& [name, t] : entries_) out.entries_[name] = tape.variable(t.value());
  return out;
}

Gradient grad(const Tensor& output, const Parameters& params) {
  if (output.size() != 1) {
    throw ContractViolation("grad requires a scalar output");
  }
  Gradient result;
  Tape* tape = output.tape();
  if (tape == nullptr) {
    result.detached = true;
    for (const auto& [name, t] : params) result.values[name] = Matrix::Zero(t.rows(), t.cols());
    return result;
  }
  tape->backward(output);
  for (const auto& [name, t] : params) result.values[name] = tape->adjoint(t);
  return result;
}

Index parameter_count(const ParameterSet& set) {
  Index n = 0;
  for (const auto& [name, m] : set) n += m.size();
  return n;
}

}  // namespace sixo
