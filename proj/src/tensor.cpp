#include "advnerf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif
#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace advnerf {

using detail::DBuffer;

namespace {

// Training allocates and frees hundreds of multi-hundred-KB buffers per
// iteration. Keep glibc from serving those via mmap/munmap, which would cost
// a page-fault storm on every forward pass.
struct MallocTuning {
  MallocTuning() {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  }
} g_malloc_tuning;

thread_local Tape* g_active_tape = nullptr;

constexpr size_t kParallelCutoff = 16384;  // elementwise OMP threshold

void check_rank(const Shape& s, const char* op) {
  if (s.size() > 3) fail(ErrorCode::ShapeMismatch, cat(op, ": rank ", s.size(), " exceeds 3"));
  for (int d : s)
    if (d <= 0) fail(ErrorCode::ShapeMismatch, cat(op, ": non-positive extent in ", shape_str(s)));
}

std::shared_ptr<detail::Node> make_leaf(Shape shape, DBuffer values, bool requires_grad) {
  check_rank(shape, "tensor");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

// Creates the result node of an op. Parents and the backward closure are only
// attached when a tape is active and some operand needs gradients; otherwise
// the result is a plain value (values-only mode).
Tensor make_result(const char* op, Shape shape, DBuffer values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backprop) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->op = op;
  bool any_grad = false;
  for (const auto& p : parents) any_grad = any_grad || p.requires_grad();
  if (g_active_tape != nullptr && any_grad) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backprop = std::move(backprop);
    g_active_tape->append(n);
  }
  return Tensor(std::move(n));
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace

Tensor Tensor::scalar(double v, bool requires_grad) {
  DBuffer b = DBuffer::uninit(1);
  b[0] = v;
  return Tensor(make_leaf({}, std::move(b), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  size_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), DBuffer::zeros(n), requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  size_t n = shape_numel(shape);
  DBuffer b = DBuffer::uninit(n);
  std::fill_n(b.data(), n, v);
  return Tensor(make_leaf(std::move(shape), std::move(b), requires_grad));
}

Tensor Tensor::from(std::vector<double> values, Shape shape, bool requires_grad) {
  if (values.size() != shape_numel(shape))
    fail(ErrorCode::ShapeMismatch,
         cat("Tensor::from: ", values.size(), " values for shape ", shape_str(shape)));
  return Tensor(make_leaf(std::move(shape), DBuffer::of(values), requires_grad));
}

// --- tape --------------------------------------------------------------------

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }
Tape* active_tape() { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) fail(ErrorCode::InvalidArgument, "backward: undefined loss");
  if (loss.rank() != 0)
    fail(ErrorCode::InvalidArgument, cat("backward: loss must be rank 0, got ", shape_str(loss.shape())));
  if (record_.empty()) fail(ErrorCode::InvalidArgument, "backward: empty tape");

  // Mark everything the loss depends on; the reverse record walk then visits
  // each contributing node exactly once.
  std::unordered_set<detail::Node*> reachable;
  std::vector<detail::Node*> stack{loss.node()};
  reachable.insert(loss.node());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    for (const auto& p : n->parents)
      if (reachable.insert(p.get()).second) stack.push_back(p.get());
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;

  for (auto it = record_.rbegin(); it != record_.rend(); ++it) {
    detail::Node* n = it->get();
    if (n->backprop && reachable.count(n) && !n->grad.empty()) n->backprop(*n);
  }
}

void zero_grad(std::span<Tensor> tensors) {
  for (auto& t : tensors) t.clear_grad();
}

void zero_grad(std::initializer_list<Tensor> tensors) {
  for (auto t : tensors) t.clear_grad();
}

// --- kernels -------------------------------------------------------------------

namespace kernels {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
  const int64_t work = static_cast<int64_t>(m) * k * n;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (work > (1 << 16))
#endif
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  (void)work;
}

}  // namespace kernels

namespace {

DBuffer transpose_copy(const DBuffer& a, int rows, int cols) {
  DBuffer t = DBuffer::uninit(a.size());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      t[static_cast<size_t>(j) * rows + i] = a[static_cast<size_t>(i) * cols + j];
  return t;
}

// --- elementwise helpers ------------------------------------------------------

enum class BinKind { Add, Sub, Mul, Min, Max };

const char* bin_name(BinKind k) {
  switch (k) {
    case BinKind::Add: return "add";
    case BinKind::Sub: return "sub";
    case BinKind::Mul: return "mul";
    case BinKind::Min: return "minimum";
    case BinKind::Max: return "maximum";
  }
  return "?";
}

Tensor binary_op(BinKind kind, const Tensor& a, const Tensor& b) {
  const char* name = bin_name(kind);
  const bool a_scalar = a.rank() == 0;
  const bool b_scalar = b.rank() == 0;
  if (!a_scalar && !b_scalar && !same_shape(a.shape(), b.shape()))
    fail(ErrorCode::ShapeMismatch,
         cat(name, ": shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));

  const Shape& out_shape = a_scalar ? b.shape() : a.shape();
  const size_t n = std::max(a.numel(), b.numel());
  DBuffer out = DBuffer::uninit(n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* o = out.data();
  switch (kind) {
    case BinKind::Add:
      for (size_t i = 0; i < n; ++i) o[i] = av[a_scalar ? 0 : i] + bv[b_scalar ? 0 : i];
      break;
    case BinKind::Sub:
      for (size_t i = 0; i < n; ++i) o[i] = av[a_scalar ? 0 : i] - bv[b_scalar ? 0 : i];
      break;
    case BinKind::Mul:
      for (size_t i = 0; i < n; ++i) o[i] = av[a_scalar ? 0 : i] * bv[b_scalar ? 0 : i];
      break;
    case BinKind::Min:
      for (size_t i = 0; i < n; ++i) {
        double x = av[a_scalar ? 0 : i], y = bv[b_scalar ? 0 : i];
        o[i] = x <= y ? x : y;
      }
      break;
    case BinKind::Max:
      for (size_t i = 0; i < n; ++i) {
        double x = av[a_scalar ? 0 : i], y = bv[b_scalar ? 0 : i];
        o[i] = x >= y ? x : y;
      }
      break;
  }

  return make_result(name, out_shape, std::move(out), {a, b}, [kind, a_scalar, b_scalar](detail::Node& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    const size_t n = nd.numel();
    const double* g = nd.grad.data();
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < n; ++i) {
        double d = 0.0;
        double x = pa.values[a_scalar ? 0 : i];
        double y = pb.values[b_scalar ? 0 : i];
        switch (kind) {
          case BinKind::Add: d = g[i]; break;
          case BinKind::Sub: d = g[i]; break;
          case BinKind::Mul: d = g[i] * y; break;
          case BinKind::Min: d = (x <= y) ? g[i] : 0.0; break;
          case BinKind::Max: d = (x >= y) ? g[i] : 0.0; break;
        }
        pa.grad[a_scalar ? 0 : i] += d;
      }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < n; ++i) {
        double d = 0.0;
        double x = pa.values[a_scalar ? 0 : i];
        double y = pb.values[b_scalar ? 0 : i];
        switch (kind) {
          case BinKind::Add: d = g[i]; break;
          case BinKind::Sub: d = -g[i]; break;
          case BinKind::Mul: d = g[i] * x; break;
          case BinKind::Min: d = (x <= y) ? 0.0 : g[i]; break;
          case BinKind::Max: d = (x >= y) ? 0.0 : g[i]; break;
        }
        pb.grad[b_scalar ? 0 : i] += d;
      }
    }
  });
}

template <typename F, typename DF>
Tensor unary_op(const char* name, const Tensor& a, F f, DF df) {
  const size_t n = a.numel();
  DBuffer out = DBuffer::uninit(n);
  const double* av = a.values().data();
  double* o = out.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
#endif
  for (size_t i = 0; i < n; ++i) o[i] = f(av[i]);
  return make_result(name, a.shape(), std::move(out), {a}, [df](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double* g = nd.grad.data();
    for (size_t i = 0; i < nd.numel(); ++i) p.grad[i] += g[i] * df(p.values[i], nd.values[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// --- public ops -----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Mul, a, b); }
Tensor minimum(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Min, a, b); }
Tensor maximum(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Max, a, b); }

Tensor neg(const Tensor& a) {
  return unary_op("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op("scale", a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor add_const(const Tensor& a, double c) {
  return unary_op("add_const", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    fail(ErrorCode::ShapeMismatch,
         cat("matmul: rank-2 operands required, got ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    fail(ErrorCode::ShapeMismatch,
         cat("matmul: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));

  DBuffer out = DBuffer::uninit(static_cast<size_t>(m) * n);
  kernels::matmul_nn(a.values().data(), b.values().data(), out.data(), m, k, n, false);

  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    // dA = G * B^T ; dB = A^T * G. Transposes are materialized so the single
    // nn kernel (contiguous inner loop) serves all three products.
    if (pa.requires_grad) {
      pa.ensure_grad();
      DBuffer bt = transpose_copy(pb.values, k, n);
      kernels::matmul_nn(nd.grad.data(), bt.data(), pa.grad.data(), m, n, k, true);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      DBuffer at = transpose_copy(pa.values, m, k);
      kernels::matmul_nn(at.data(), nd.grad.data(), pb.grad.data(), k, m, n, true);
    }
  });
}

Tensor exp(const Tensor& a) {
  return unary_op("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sin(const Tensor& a) {
  return unary_op("sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary_op("cos", a, [](double x) { return std::cos(x); },
                  [](double x, double) { return -std::sin(x); });
}

Tensor relu(const Tensor& a) {
  return unary_op("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op("sigmoid", a, [](double x) { return stable_sigmoid(x); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor sqrt(const Tensor& a) {
  return unary_op("sqrt", a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}

Tensor rsqrt(const Tensor& a) {
  return unary_op("rsqrt", a, [](double x) { return 1.0 / std::sqrt(x); },
                  [](double, double y) { return -0.5 * y * y * y; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  DBuffer out = DBuffer::uninit(1);
  out[0] = s;
  return make_result("sum", {}, std::move(out), {a}, [](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = nd.grad[0];
    for (size_t i = 0; i < p.values.size(); ++i) p.grad[i] += g;
  });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  DBuffer out = DBuffer::uninit(1);
  out[0] = s * inv;
  return make_result("mean", {}, std::move(out), {a}, [inv](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = nd.grad[0] * inv;
    for (size_t i = 0; i < p.values.size(); ++i) p.grad[i] += g;
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) fail(ErrorCode::InvalidArgument, cat("clamp: lo ", lo, " > hi ", hi));
  // gradient passes on the closed interval [lo, hi], zero outside
  return unary_op("clamp", a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
                  [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) fail(ErrorCode::InvalidArgument, "concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) fail(ErrorCode::InvalidArgument, cat("concat: axis ", axis, " out of range"));
  Shape out_shape = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      fail(ErrorCode::ShapeMismatch,
           cat("concat: shape mismatch ", shape_str(parts[0].shape()), " vs ", shape_str(p.shape())));
    for (int d = 0; d < rank; ++d)
      if (d != axis && p.dim(d) != out_shape[static_cast<size_t>(d)])
        fail(ErrorCode::ShapeMismatch,
             cat("concat: shape mismatch ", shape_str(parts[0].shape()), " vs ", shape_str(p.shape())));
    total += p.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;

  size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<size_t>(out_shape[static_cast<size_t>(d)]);
  for (int d = axis + 1; d < rank; ++d) inner *= static_cast<size_t>(out_shape[static_cast<size_t>(d)]);

  DBuffer out = DBuffer::uninit(shape_numel(out_shape));
  std::vector<int> extents;
  extents.reserve(parts.size());
  for (const auto& p : parts) extents.push_back(p.dim(axis));

  size_t offset_blocks = 0;
  const size_t out_row = static_cast<size_t>(total) * inner;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const double* src = parts[pi].values().data();
    const size_t blk = static_cast<size_t>(extents[pi]) * inner;
    for (size_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + o * out_row + offset_blocks, src + o * blk, blk * sizeof(double));
    offset_blocks += blk;
  }

  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result("concat", out_shape, std::move(out), std::move(parents),
                     [extents, outer, inner, total](detail::Node& nd) {
                       const size_t out_row = static_cast<size_t>(total) * inner;
                       size_t offset = 0;
                       for (size_t pi = 0; pi < nd.parents.size(); ++pi) {
                         auto& p = *nd.parents[pi];
                         const size_t blk = static_cast<size_t>(extents[pi]) * inner;
                         if (p.requires_grad) {
                           p.ensure_grad();
                           for (size_t o = 0; o < outer; ++o) {
                             const double* g = nd.grad.data() + o * out_row + offset;
                             double* pg = p.grad.data() + o * blk;
                             for (size_t i = 0; i < blk; ++i) pg[i] += g[i];
                           }
                         }
                         offset += blk;
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v), axis);
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  const int rank = a.rank();
  if (axis < 0 || axis >= rank) fail(ErrorCode::InvalidArgument, cat("slice: axis ", axis, " out of range"));
  if (start < 0 || len <= 0 || start + len > a.dim(axis))
    fail(ErrorCode::InvalidArgument,
         cat("slice: range [", start, ",", start + len, ") outside extent ", a.dim(axis)));

  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<size_t>(a.dim(d));
  for (int d = axis + 1; d < rank; ++d) inner *= static_cast<size_t>(a.dim(d));
  const size_t in_row = static_cast<size_t>(a.dim(axis)) * inner;
  const size_t out_blk = static_cast<size_t>(len) * inner;

  DBuffer out = DBuffer::uninit(shape_numel(out_shape));
  const double* src = a.values().data();
  for (size_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * out_blk, src + o * in_row + static_cast<size_t>(start) * inner,
                out_blk * sizeof(double));

  return make_result("slice", out_shape, std::move(out), {a},
                     [outer, inner, in_row, out_blk, start](detail::Node& nd) {
                       auto& p = *nd.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       for (size_t o = 0; o < outer; ++o) {
                         const double* g = nd.grad.data() + o * out_blk;
                         double* pg = p.grad.data() + o * in_row + static_cast<size_t>(start) * inner;
                         for (size_t i = 0; i < out_blk; ++i) pg[i] += g[i];
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    fail(ErrorCode::ShapeMismatch,
         cat("reshape: ", shape_str(a.shape()), " has ", a.numel(), " elements, target ", shape_str(shape)));
  check_rank(shape, "reshape");
  DBuffer out = DBuffer::uninit(a.numel());
  std::memcpy(out.data(), a.values().data(), a.numel() * sizeof(double));
  return make_result("reshape", std::move(shape), std::move(out), {a}, [](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double* g = nd.grad.data();
    for (size_t i = 0; i < nd.numel(); ++i) p.grad[i] += g[i];
  });
}

Tensor repeat_rows(const Tensor& a, int times) {
  if (a.rank() != 2)
    fail(ErrorCode::ShapeMismatch, cat("repeat_rows: rank-2 input required, got ", shape_str(a.shape())));
  if (times <= 0) fail(ErrorCode::InvalidArgument, "repeat_rows: times must be positive");
  const int m = a.dim(0), f = a.dim(1);
  DBuffer out = DBuffer::uninit(static_cast<size_t>(m) * times * f);
  const double* src = a.values().data();
  for (int i = 0; i < m; ++i)
    for (int r = 0; r < times; ++r)
      std::memcpy(out.data() + (static_cast<size_t>(i) * times + r) * f, src + static_cast<size_t>(i) * f,
                  static_cast<size_t>(f) * sizeof(double));
  return make_result("repeat_rows", {m * times, f}, std::move(out), {a}, [m, f, times](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int i = 0; i < m; ++i) {
      double* pg = p.grad.data() + static_cast<size_t>(i) * f;
      for (int r = 0; r < times; ++r) {
        const double* g = nd.grad.data() + (static_cast<size_t>(i) * times + r) * f;
        for (int j = 0; j < f; ++j) pg[j] += g[j];
      }
    }
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  if (a.rank() != 2 || s.rank() != 2 || s.dim(1) != 1 || s.dim(0) != a.dim(0))
    fail(ErrorCode::ShapeMismatch,
         cat("scale_rows: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(s.shape())));
  const int m = a.dim(0), f = a.dim(1);
  DBuffer out = DBuffer::uninit(a.numel());
  const double* av = a.values().data();
  const double* sv = s.values().data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < f; ++j)
      out[static_cast<size_t>(i) * f + j] = av[static_cast<size_t>(i) * f + j] * sv[i];
  return make_result("scale_rows", a.shape(), std::move(out), {a, s}, [m, f](detail::Node& nd) {
    auto& pa = *nd.parents[0];
    auto& ps = *nd.parents[1];
    const double* g = nd.grad.data();
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < f; ++j)
          pa.grad[static_cast<size_t>(i) * f + j] += g[static_cast<size_t>(i) * f + j] * ps.values[i];
    }
    if (ps.requires_grad) {
      ps.ensure_grad();
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < f; ++j)
          acc += g[static_cast<size_t>(i) * f + j] * pa.values[static_cast<size_t>(i) * f + j];
        ps.grad[i] += acc;
      }
    }
  });
}

Tensor add_bias(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || b.dim(0) != 1 || b.dim(1) != a.dim(1))
    fail(ErrorCode::ShapeMismatch,
         cat("add_bias: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  const int m = a.dim(0), f = a.dim(1);
  DBuffer out = DBuffer::uninit(a.numel());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < f; ++j)
      out[static_cast<size_t>(i) * f + j] = av[static_cast<size_t>(i) * f + j] + bv[j];
  return make_result("add_bias", a.shape(), std::move(out), {a, b}, [m, f](detail::Node& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    const double* g = nd.grad.data();
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < nd.numel(); ++i) pa.grad[i] += g[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < f; ++j) pb.grad[j] += g[static_cast<size_t>(i) * f + j];
    }
  });
}

Tensor stop_gradient(const Tensor& a) {
  auto n = std::make_shared<detail::Node>();
  n->shape = a.shape();
  n->values = DBuffer::uninit(a.numel());
  std::memcpy(n->values.data(), a.values().data(), a.numel() * sizeof(double));
  n->op = "stop_gradient";
  n->requires_grad = false;
  return Tensor(std::move(n));
}

}  // namespace advnerf
