#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "gotham/common.hpp"

// Minimal reverse-mode differentiation over dense matrices. Only the operations
// the GNN, MLP and loss code need are provided.
namespace gotham::ad {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;  // value of a 1x1 node
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Receives the gradient flowing into the node and accumulates into inputs.
  using Backward = std::function<void(Tape&, const Matrix& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Matrix value);

  // Records an op result. `backward` runs only if some input requires grad.
  Var push(Matrix value, std::initializer_list<Var> inputs, Backward backward);

  // Seeds d(root)/d(root) = 1 and propagates to every parameter. Throws
  // NumericError if root is not a finite 1x1 value.
  void backward(Var root);

  // Gradient accumulated for v; zeros if nothing reached it.
  Matrix grad(Var v) const;

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  void accumulate(int id, const Matrix& g);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Element-wise and linear-algebra ops. Binary ops require both operands on the same tape.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                  // element-wise
Var div(Var a, Var b);                  // element-wise
Var safe_div(Var a, Var b);             // element-wise, 0 where b == 0
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var add_row(Var a, Var row);            // broadcast a 1 x d row over every row of a
Var leaky_relu(Var a, double slope);    // derivative at 0 taken from the positive side
Var spmm(std::shared_ptr<const SparseMatrix> m, Var a);  // constant sparse m times a
Var row_norms(Var a);                   // n x 1 Euclidean norms; zero rows get zero gradient
Var row_dot(Var a, Var b);              // n x 1
Var hinge(Var a, double margin);        // max(a - margin, 0)
Var log_clamped(Var a, double eps);     // log(max(a, eps))
Var square(Var a);
Var sum(Var a);                         // 1 x 1
Var vstack(Var a, Var b);

// Sparse helpers for building constant operators.
std::shared_ptr<const SparseMatrix> selection_matrix(std::size_t rows_out, std::size_t cols,
                                                     const std::vector<int>& pick);

}  // namespace gotham::ad
