#include "gotham/tape.hpp"

#include <cmath>

namespace gotham::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw NumericError("scalar() on a non-scalar node");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool rg = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw std::logic_error("tape: operand recorded on a different tape");
    rg = rg || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), rg, rg ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var root) {
  const Matrix& v = nodes_[root.id()].value;
  if (v.rows() != 1 || v.cols() != 1) throw NumericError("backward: loss must be a scalar");
  if (!std::isfinite(v(0, 0))) throw NumericError("backward: loss is not finite");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

void same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var div(Var a, Var b) {
  same_shape(a, b, "div");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseQuotient(b.value());
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    const Matrix& bv = t.value(ib);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseQuotient(bv));
    if (t.requires_grad(ib))
      t.accumulate(ib, -g.cwiseProduct(t.value(ia)).cwiseQuotient(bv.cwiseProduct(bv)));
  });
}

Var safe_div(Var a, Var b) {
  same_shape(a, b, "safe_div");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = bv.data()[i] == 0.0 ? 0.0 : out.data()[i] / bv.data()[i];
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(ia);
    const Matrix& bv = t.value(ib);
    Matrix ga = Matrix::Zero(g.rows(), g.cols());
    Matrix gb = Matrix::Zero(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      double d = bv.data()[i];
      if (d == 0.0) continue;
      ga.data()[i] = g.data()[i] / d;
      gb.data()[i] = -g.data()[i] * av.data()[i] / (d * d);
    }
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

Var scale(Var a, double c) {
  const int ia = a.id();
  return a.tape()->push(a.value() * c, {a}, [ia, c](Tape& t, const Matrix& g) { t.accumulate(ia, g * c); });
}

Var add_scalar(Var a, double c) {
  const int ia = a.id();
  Matrix out = a.value().array() + c;
  return a.tape()->push(std::move(out), {a}, [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: row must be 1 x cols");
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->push(std::move(out), {a, row}, [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var leaky_relu(Var a, double slope) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([slope](double x) { return x >= 0.0 ? x : slope * x; });
  return a.tape()->push(std::move(out), {a}, [ia, slope](Tape& t, const Matrix& g) {
    Matrix d = t.value(ia).unaryExpr([slope](double x) { return x >= 0.0 ? 1.0 : slope; });
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

Var spmm(std::shared_ptr<const SparseMatrix> m, Var a) {
  if (m->cols() != a.rows()) throw std::invalid_argument("spmm: dimension mismatch");
  const int ia = a.id();
  Matrix out = (*m) * a.value();
  return a.tape()->push(std::move(out), {a}, [ia, m](Tape& t, const Matrix& g) {
    t.accumulate(ia, m->transpose() * g);
  });
}

Var row_norms(Var a) {
  const int ia = a.id();
  Matrix out = a.value().rowwise().norm();
  return a.tape()->push(std::move(out), {a}, [ia](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(ia);
    Matrix ga = Matrix::Zero(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
      double n = av.row(i).norm();
      if (n > 0.0) ga.row(i) = av.row(i) * (g(i, 0) / n);
    }
    t.accumulate(ia, ga);
  });
}

Var row_dot(Var a, Var b) {
  same_shape(a, b, "row_dot");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, t.value(ib).array().colwise() * g.col(0).array());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).array().colwise() * g.col(0).array());
  });
}

Var hinge(Var a, double margin) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([margin](double x) { return x > margin ? x - margin : 0.0; });
  return a.tape()->push(std::move(out), {a}, [ia, margin](Tape& t, const Matrix& g) {
    Matrix d = t.value(ia).unaryExpr([margin](double x) { return x > margin ? 1.0 : 0.0; });
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

Var log_clamped(Var a, double eps) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([eps](double x) { return std::log(std::max(x, eps)); });
  return a.tape()->push(std::move(out), {a}, [ia, eps](Tape& t, const Matrix& g) {
    Matrix d = t.value(ia).unaryExpr([eps](double x) { return x > eps ? 1.0 / x : 0.0; });
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

Var square(Var a) {
  const int ia = a.id();
  Matrix out = a.value().cwiseProduct(a.value());
  return a.tape()->push(std::move(out), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, 2.0 * g.cwiseProduct(t.value(ia)));
  });
}

Var sum(Var a) {
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->push(std::move(out), {a}, [ia](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(ia);
    t.accumulate(ia, Matrix::Constant(av.rows(), av.cols(), g(0, 0)));
  });
}

Var vstack(Var a, Var b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("vstack: column mismatch");
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ra = a.rows();
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a.value();
  out.bottomRows(b.rows()) = b.value();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib, ra](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.topRows(ra));
    if (t.requires_grad(ib)) t.accumulate(ib, g.bottomRows(g.rows() - ra));
  });
}

std::shared_ptr<const SparseMatrix> selection_matrix(std::size_t rows_out, std::size_t cols,
                                                     const std::vector<int>& pick) {
  if (pick.size() != rows_out) throw std::invalid_argument("selection_matrix: size mismatch");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(pick.size());
  for (std::size_t r = 0; r < pick.size(); ++r) trip.emplace_back(r, pick[r], 1.0);
  auto m = std::make_shared<SparseMatrix>(rows_out, cols);
  m->setFromTriplets(trip.begin(), trip.end());
  return m;
}

}  // namespace gotham::ad
