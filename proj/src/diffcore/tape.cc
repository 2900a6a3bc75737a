#include "rec4ad/diffcore/tape.h"

#include <string>

#include "rec4ad/common/error.h"
#include "rec4ad/diffcore/parameter_store.h"

namespace rec4ad::diffcore {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

void CheckFinite(const Matrix& m, const char* op, const char* stage) {
  if (m.allFinite()) return;
  Eigen::Index bad = 0;
  for (; bad < m.size(); ++bad) {
    if (!std::isfinite(m.data()[bad])) break;
  }
  throw NumericalError(std::string("non-finite ") + stage + " value in op '" +
                       op + "' at flat index " + std::to_string(bad) +
                       " of shape (" + std::to_string(m.rows()) + "," +
                       std::to_string(m.cols()) + ")");
}

Var Tape::constant(Matrix value) {
  CheckFinite(value, "constant", "forward");
  Node node;
  node.value = std::move(value);
  node.op = "constant";
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& param) {
  Node node;
  node.value = param.value;
  node.param = &param;
  node.requires_grad = param.trainable;
  node.op = "param";
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(const char* op, Matrix value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(op, std::move(value),
                std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(const char* op, Matrix value, std::span<const Var> inputs,
                 BackwardFn backward) {
  CheckFinite(value, op, "forward");
  Node node;
  node.value = std::move(value);
  node.op = op;
  for (const Var& in : inputs) {
    if (in.tape() != this) {
      throw ShapeError(std::string("op '") + op + "' mixes values from different tapes");
    }
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::mutable_grad(int id) {
  Node& node = nodes_[id];
  if (node.grad.size() == 0) {
    node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  }
  return node.grad;
}

void Tape::accumulate(int id, const Eigen::Ref<const Matrix>& delta) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (delta.rows() != node.value.rows() || delta.cols() != node.value.cols()) {
    throw ShapeError(std::string("gradient shape mismatch flowing into op '") +
                     node.op + "'");
  }
  if (node.grad.size() == 0) {
    node.grad = delta;
  } else {
    node.grad += delta;
  }
}

void Tape::backward(Var loss) {
  if (loss.tape() != this || loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("backward requires a 1x1 value recorded on this tape");
  }
  for (Node& node : nodes_) node.grad.resize(0, 0);
  const int root = loss.id();
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad = Matrix::Ones(1, 1);
  for (int id = root; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.size() == 0) continue;
    CheckFinite(node.grad, node.op, "gradient");
    if (node.backward) node.backward(*this, id);
  }
  for (Node& node : nodes_) {
    if (node.param == nullptr || node.grad.size() == 0) continue;
    Parameter& p = *node.param;
    if (p.grad.size() == 0) {
      p.grad = node.grad;
    } else {
      p.grad += node.grad;
    }
  }
}

}  // namespace rec4ad::diffcore
