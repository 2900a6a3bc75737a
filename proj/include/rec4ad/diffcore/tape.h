#ifndef REC4AD_DIFFCORE_TAPE_H_
#define REC4AD_DIFFCORE_TAPE_H_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rec4ad::diffcore {

// All values are 2-D, row-major, 64-bit. Batch is the leading axis; a
// scalar is a 1x1 matrix.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter;
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  // Gradient accumulated by the last backward pass; zero-sized when no
  // gradient reached this node.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records executed primitives and replays them in reverse to accumulate
// gradients. One tape per training step, confined to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Leaf bound to a parameter; backward() adds its gradient into param.grad.
  Var param(Parameter& param);

  // Appends a node. `op` names the primitive for diagnostics; the value is
  // checked for NaN/Inf. The backward closure is dropped when no input
  // requires a gradient.
  Var record(const char* op, Matrix value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var record(const char* op, Matrix value, std::span<const Var> inputs,
             BackwardFn backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Adds `delta` into the gradient of node `id` (allocating on first use).
  void accumulate(int id, const Eigen::Ref<const Matrix>& delta);
  // Direct access for ops that scatter into a gradient in place.
  Matrix& mutable_grad(int id);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward closure in
  // exact reverse order. `loss` must be 1x1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    const char* op = "";
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Throws NumericalError naming `op` when `m` holds a NaN or Inf.
void CheckFinite(const Matrix& m, const char* op, const char* stage);

}  // namespace rec4ad::diffcore

#endif  // REC4AD_DIFFCORE_TAPE_H_
