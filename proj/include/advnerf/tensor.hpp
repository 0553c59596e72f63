#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "advnerf/common.hpp"

namespace advnerf {

// Reverse-mode automatic differentiation over dense double tensors of rank
// <= 3. Broadcasting exists only between a tensor and a rank-0 scalar; every
// other shape rule is exact. Gradients accumulate (+=) until zero_grad; the
// caller owns zeroing, which is what the two-phase use (maximize over the
// perturbations, then minimize over the weights) needs.
//
// Recording: ops record onto the thread-local active Tape (see TapeScope)
// whenever any operand requires grad. With no active tape ops compute values
// only, which is the cheap path for weight-frozen evaluation passes.

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= static_cast<size_t>(d);
  return n;
}

class Tensor;
class Tape;

namespace detail {

/// Flat double storage without value-initialization; intermediate op results
/// are always fully overwritten, so zero-filling them is pure cost.
class DBuffer {
 public:
  DBuffer() = default;
  static DBuffer uninit(size_t n) {
    DBuffer b;
    b.p_ = std::make_unique_for_overwrite<double[]>(n);
    b.n_ = n;
    return b;
  }
  static DBuffer zeros(size_t n) {
    DBuffer b = uninit(n);
    std::fill_n(b.p_.get(), n, 0.0);
    return b;
  }
  static DBuffer of(const std::vector<double>& v) {
    DBuffer b = uninit(v.size());
    std::copy(v.begin(), v.end(), b.p_.get());
    return b;
  }

  double* data() { return p_.get(); }
  const double* data() const { return p_.get(); }
  size_t size() const { return n_; }
  bool empty() const { return n_ == 0; }
  double& operator[](size_t i) { return p_[i]; }
  double operator[](size_t i) const { return p_[i]; }
  double* begin() { return p_.get(); }
  double* end() { return p_.get() + n_; }
  const double* begin() const { return p_.get(); }
  const double* end() const { return p_.get() + n_; }

 private:
  std::unique_ptr<double[]> p_;
  size_t n_ = 0;
};

struct Node {
  Shape shape;
  DBuffer values;
  DBuffer grad;  // lazily allocated, same length as values
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  size_t numel() const { return values.size(); }
  void ensure_grad() {
    if (grad.empty()) grad = DBuffer::zeros(values.size());
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(std::vector<double> values, Shape shape, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  size_t numel() const { return node_->values.size(); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }

  std::span<const double> values() const { return {node_->values.data(), node_->values.size()}; }
  std::span<double> values_mut() { return {node_->values.data(), node_->values.size()}; }

  /// Scalar convenience accessor; errors unless numel == 1.
  double value() const {
    if (numel() != 1) fail(ErrorCode::InvalidArgument, cat("Tensor::value: not a scalar, shape ", shape_str(shape())));
    return node_->values[0];
  }
  double at(size_t i) const { return node_->values[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; empty span when never touched by a backward pass.
  std::span<const double> grad() const { return {node_->grad.data(), node_->grad.size()}; }
  std::span<double> grad_mut() {
    node_->ensure_grad();
    return {node_->grad.data(), node_->grad.size()};
  }
  void clear_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  const char* op_name() const { return node_->op; }

  detail::Node* node() const { return node_.get(); }
  std::shared_ptr<detail::Node> node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of the operations of one forward pass. Nodes are appended
/// in execution order, so the record is already topologically sorted;
/// backward walks it once in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Accumulates d(loss)/d(t) into every requires-grad tensor reachable from
  /// loss. loss must be rank 0. Calling twice without zero_grad accumulates.
  void backward(const Tensor& loss);

  size_t size() const { return record_.size(); }
  void append(std::shared_ptr<detail::Node> n) { record_.push_back(std::move(n)); }

 private:
  std::vector<std::shared_ptr<detail::Node>> record_;
};

/// RAII activation of a tape on the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* active_tape();

void zero_grad(std::span<Tensor> tensors);
void zero_grad(std::initializer_list<Tensor> tensors);

// --- primitive operations ---------------------------------------------------
// Elementwise binary ops accept equal shapes or one rank-0 operand.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);  // ties take a's gradient
Tensor maximum(const Tensor& a, const Tensor& b);  // ties take a's gradient
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K]x[K,N] -> [M,N]

Tensor exp(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor rsqrt(const Tensor& a);

Tensor sum(const Tensor& a);   // -> rank 0
Tensor mean(const Tensor& a);  // -> rank 0
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor reshape(const Tensor& a, Shape shape);

/// Repeats each row of a [M,F] tensor `times` times consecutively -> [M*times, F].
Tensor repeat_rows(const Tensor& a, int times);
/// Row-wise scaling: out[m,f] = a[m,f] * s[m,0] for a [M,F] and s [M,1].
Tensor scale_rows(const Tensor& a, const Tensor& s);
/// Adds a [1,F] row vector to every row of a [M,F] tensor.
Tensor add_bias(const Tensor& a, const Tensor& b);

/// Value copy that detaches from the graph: gradient w.r.t. the input is
/// exactly zero, always.
Tensor stop_gradient(const Tensor& a);

// --- raw kernels (also used by non-graph code paths) -------------------------

namespace kernels {
/// c[M,N] += or = a[M,K] * b[K,N]; deterministic for any thread count.
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
}  // namespace kernels

}  // namespace advnerf
