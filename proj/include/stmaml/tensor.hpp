#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace stmaml {

using Shape = std::vector<std::size_t>;

class Tensor;
struct Node;

/// Dense row-major tensor of doubles. Copies share storage; values are
/// immutable after construction. A tensor participates in differentiation
/// only if it carries a node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> values);
  /// Tracked leaf: gradients may be requested with respect to it.
  static Tensor leaf(Shape shape, std::vector<double> values);

  const Shape& shape() const { return storage_->shape; }
  const std::vector<double>& values() const { return storage_->v; }
  std::size_t size() const { return storage_->v.size(); }
  bool defined() const { return storage_ != nullptr; }
  bool tracked() const { return node_ != nullptr; }

  /// Scalar value; throws if not a one-element tensor.
  double item() const;

  /// Same values, no node.
  Tensor detach() const;

  /// Tracked copy of the same values, as a fresh leaf.
  Tensor releaf() const;

  std::uint64_t node_id() const;

 private:
  struct Storage {
    Shape shape;
    std::vector<double> v;
  };
  std::shared_ptr<const Storage> storage_;
  std::shared_ptr<Node> node_;

  friend struct Node;
  friend class GradEngine;
  friend Tensor record(const char* op, Shape shape, std::vector<double> values,
                       std::vector<Tensor> inputs,
                       std::function<std::vector<Tensor>(const Tensor&, const Tensor&,
                                                         const std::vector<Tensor>&)>
                           vjp);
};

/// One primitive-operation record. Inputs precede the node on the tape
/// (ids are monotonically increasing), which makes reverse iteration a
/// valid topological order.
struct Node {
  std::uint64_t id = 0;
  const char* op = "";
  std::vector<Tensor> inputs;
  // vjp(adjoint, output, inputs) -> adjoint contribution per input.
  // Closures must not capture tensors, only plain data; tensor context is
  // passed in by the engine so the graph stays acyclic.
  std::function<std::vector<Tensor>(const Tensor&, const Tensor&, const std::vector<Tensor>&)> vjp;

  ~Node();
};

/// RAII guard that suspends tape recording on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_mode_enabled();

// ---- primitives ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
/// Concatenate along the last axis; shapes must agree elsewhere.
Tensor concat(const Tensor& a, const Tensor& b);
/// Stack two matrices along axis 0.
Tensor vstack(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& m, std::size_t start, std::size_t len);
Tensor slice_last(const Tensor& t, std::size_t start, std::size_t len);
Tensor reshape(const Tensor& t, Shape shape);
Tensor tile_rows(const Tensor& v, std::size_t n);
Tensor sum_axis0(const Tensor& m);
Tensor mean_axis0(const Tensor& m);
Tensor sum_all(const Tensor& t);
Tensor mean_all(const Tensor& t);
/// m [n x d] + v [d], added to every row.
Tensor add_rowwise(const Tensor& m, const Tensor& v);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);

/// m [n x d] times v [d] -> [n].
Tensor matvec(const Tensor& m, const Tensor& v);

/// d(output)/d(wrt). Output must be scalar, every wrt tensor tracked.
/// A wrt tensor unreachable from output yields zeros of its shape.
/// With create_graph, results are tape-recorded and differentiable again.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt,
                         bool create_graph = false);

/// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8).
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double eps = 1e-5);

}  // namespace stmaml
