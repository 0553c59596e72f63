#pragma once

// Test-only oracles. Everything here is deliberately independent of the
// library's implementation paths: straight-line reimplementations, finite
// differences, brute-force enumeration. Keep it that way.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "advnerf/common.hpp"
#include "advnerf/tensor.hpp"

namespace oracles {

using advnerf::Rng;
using advnerf::Shape;
using advnerf::Tensor;

struct FdReport {
  bool ok = true;
  std::string detail;
  double worst_abs_err = 0.0;
};

// Central-difference gradient check. `build` must construct the scalar loss
// from the given leaves on every call (values are mutated in place between
// calls). rtol/atol per the project-wide gradient tolerance.
inline FdReport check_gradients(std::vector<Tensor>& leaves,
                                const std::function<Tensor()>& build,
                                double h = 1e-5, double rtol = 1e-4, double atol = 1e-6) {
  FdReport rep;

  advnerf::Tape tape;
  std::vector<std::vector<double>> analytic;
  {
    advnerf::TapeScope scope(tape);
    Tensor loss = build();
    tape.backward(loss);
  }
  for (auto& t : leaves) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(t.numel(), 0.0);
    t.clear_grad();
  }

  for (size_t li = 0; li < leaves.size(); ++li) {
    auto vals = leaves[li].values_mut();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double fp = build().value();
      vals[i] = saved - h;
      const double fm = build().value();
      vals[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[li][i];
      const double err = std::abs(fd - an);
      rep.worst_abs_err = std::max(rep.worst_abs_err, err);
      if (err > atol + rtol * std::abs(fd)) {
        rep.ok = false;
        rep.detail = advnerf::cat("leaf ", li, " elem ", i, ": analytic ", an, " vs fd ", fd);
        return rep;
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Random graph programs: a replayable instruction list over a tensor pool, so
// the same graph can be evaluated repeatedly for finite differencing.

struct GraphOp {
  std::string kind;
  int a = -1, b = -1;
  double p0 = 0.0, p1 = 0.0;
  int i0 = 0, i1 = 0, i2 = 0;
};

inline Tensor apply_graph_op(const GraphOp& o, const std::vector<Tensor>& pool) {
  const Tensor& x = pool[static_cast<size_t>(o.a)];
  if (o.kind == "add") return advnerf::add(x, pool[static_cast<size_t>(o.b)]);
  if (o.kind == "sub") return advnerf::sub(x, pool[static_cast<size_t>(o.b)]);
  if (o.kind == "mul") return advnerf::mul(x, pool[static_cast<size_t>(o.b)]);
  if (o.kind == "min") return advnerf::minimum(x, pool[static_cast<size_t>(o.b)]);
  if (o.kind == "max") return advnerf::maximum(x, pool[static_cast<size_t>(o.b)]);
  if (o.kind == "matmul") return advnerf::matmul(x, pool[static_cast<size_t>(o.b)]);
  if (o.kind == "scale_rows") return advnerf::scale_rows(x, pool[static_cast<size_t>(o.b)]);
  if (o.kind == "concat") return advnerf::concat({x, pool[static_cast<size_t>(o.b)]}, o.i0);
  if (o.kind == "exp") return advnerf::exp(x);
  if (o.kind == "sin") return advnerf::sin(x);
  if (o.kind == "cos") return advnerf::cos(x);
  if (o.kind == "relu") return advnerf::relu(x);
  if (o.kind == "sigmoid") return advnerf::sigmoid(x);
  if (o.kind == "sqrt") return advnerf::sqrt(x);
  if (o.kind == "rsqrt") return advnerf::rsqrt(x);
  if (o.kind == "neg") return advnerf::neg(x);
  if (o.kind == "scale") return advnerf::scale(x, o.p0);
  if (o.kind == "add_const") return advnerf::add_const(x, o.p0);
  if (o.kind == "clamp") return advnerf::clamp(x, o.p0, o.p1);
  if (o.kind == "slice") return advnerf::slice(x, o.i0, o.i1, o.i2);
  if (o.kind == "reshape") return advnerf::reshape(x, {o.i0, o.i1});
  if (o.kind == "repeat_rows") return advnerf::repeat_rows(x, o.i0);
  advnerf::fail(advnerf::ErrorCode::Internal, "apply_graph_op: unknown op " + o.kind);
}

struct GraphProgram {
  std::vector<GraphOp> ops;

  Tensor run(const std::vector<Tensor>& leaves) const {
    std::vector<Tensor> pool(leaves.begin(), leaves.end());
    for (const auto& op : ops) pool.push_back(apply_graph_op(op, pool));
    // fold the last few results into one scalar so deep ops contribute
    Tensor loss = advnerf::mean(pool.back());
    size_t extra = std::min<size_t>(2, pool.size() - 1);
    for (size_t i = 0; i < extra; ++i)
      loss = advnerf::add(loss, advnerf::mean(pool[pool.size() - 2 - i]));
    return loss;
  }
};

// Builds a random program of `depth` ops over rank-2 leaves and returns the
// leaves. Inputs near relu/clamp/min/max kinks or outside safe domains
// (sqrt of negatives, large exp) are rejected during construction so finite
// differences stay meaningful.
inline GraphProgram random_program(Rng& rng, int depth, std::vector<Tensor>& leaves_out) {
  GraphProgram prog;
  const int n_leaves = 2 + static_cast<int>(rng.uniform_index(2));
  std::vector<Tensor> pool;
  for (int i = 0; i < n_leaves; ++i) {
    int r = 1 + static_cast<int>(rng.uniform_index(3));
    int c = 1 + static_cast<int>(rng.uniform_index(3));
    Shape s{r, c};
    std::vector<double> vals(advnerf::shape_numel(s));
    for (auto& v : vals) {
      v = rng.uniform(-1.5, 1.5);
      if (std::abs(v) < 0.08) v += v >= 0 ? 0.1 : -0.1;
    }
    pool.push_back(Tensor::from(vals, s, true));
  }
  leaves_out = pool;

  const std::vector<std::string> unary = {"exp", "sin", "cos", "relu", "sigmoid", "neg", "scale", "add_const"};
  int guard = 0;
  while (static_cast<int>(prog.ops.size()) < depth && guard++ < depth * 60) {
    GraphOp op;
    op.a = static_cast<int>(rng.uniform_index(pool.size()));
    const Tensor& x = pool[static_cast<size_t>(op.a)];
    double mx = 0.0, mn = 1e300;
    for (double v : x.values()) {
      mx = std::max(mx, std::abs(v));
      mn = std::min(mn, v);
    }

    const int pick = static_cast<int>(rng.uniform_index(10));
    if (pick < 4) {
      std::vector<int> cands;
      for (size_t i = 0; i < pool.size(); ++i)
        if (pool[i].shape() == x.shape() || pool[i].rank() == 0) cands.push_back(static_cast<int>(i));
      if (cands.empty()) continue;
      op.b = cands[rng.uniform_index(cands.size())];
      const char* kinds[] = {"add", "sub", "mul", "min", "max"};
      op.kind = kinds[rng.uniform_index(5)];
      if (op.kind == "min" || op.kind == "max") {
        bool tie = false;
        const auto& y = pool[static_cast<size_t>(op.b)];
        for (size_t i = 0; i < x.numel(); ++i) {
          double yy = y.rank() == 0 ? y.at(0) : y.at(i);
          if (std::abs(x.at(i) - yy) < 1e-3) tie = true;
        }
        if (tie) continue;
      }
      if (op.kind == "mul" && mx > 8.0) continue;
    } else if (pick == 4) {
      if (x.rank() != 2 || mx > 8.0) continue;
      std::vector<int> cands;
      for (size_t i = 0; i < pool.size(); ++i)
        if (pool[i].rank() == 2 && pool[i].dim(0) == x.dim(1)) cands.push_back(static_cast<int>(i));
      if (cands.empty()) continue;
      op.b = cands[rng.uniform_index(cands.size())];
      op.kind = "matmul";
    } else if (pick == 5) {
      if (x.rank() != 2) continue;
      const int which = static_cast<int>(rng.uniform_index(4));
      if (which == 0) {
        op.kind = "slice";
        op.i0 = static_cast<int>(rng.uniform_index(2));
        int extent = x.dim(op.i0);
        op.i2 = 1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(extent)));
        op.i1 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(extent - op.i2 + 1)));
      } else if (which == 1) {
        op.kind = "reshape";
        op.i0 = static_cast<int>(x.numel());
        op.i1 = 1;
      } else if (which == 2) {
        std::vector<int> cands;
        for (size_t i = 0; i < pool.size(); ++i)
          if (pool[i].rank() == 2 && pool[i].dim(1) == x.dim(1)) cands.push_back(static_cast<int>(i));
        if (cands.empty()) continue;
        op.kind = "concat";
        op.b = cands[rng.uniform_index(cands.size())];
        op.i0 = 0;
      } else {
        op.kind = "repeat_rows";
        op.i0 = 1 + static_cast<int>(rng.uniform_index(2));
      }
    } else if (pick == 6) {
      if (x.rank() != 2) continue;
      std::vector<int> cands;
      for (size_t i = 0; i < pool.size(); ++i)
        if (pool[i].rank() == 2 && pool[i].dim(0) == x.dim(0) && pool[i].dim(1) == 1)
          cands.push_back(static_cast<int>(i));
      if (cands.empty()) continue;
      op.b = cands[rng.uniform_index(cands.size())];
      op.kind = "scale_rows";
    } else if (pick == 7) {
      op.kind = "clamp";
      op.p0 = -2.5;
      op.p1 = 2.5;
      bool near = false;
      for (double v : x.values())
        if (std::abs(v - op.p0) < 1e-3 || std::abs(v - op.p1) < 1e-3) near = true;
      if (near) continue;
    } else if (pick == 8) {
      if (mn < 0.05) continue;
      op.kind = rng.uniform() < 0.5 ? "sqrt" : "rsqrt";
    } else {
      op.kind = unary[rng.uniform_index(unary.size())];
      if (op.kind == "exp" && mx > 2.5) continue;
      if (op.kind == "relu") {
        bool near = false;
        for (double v : x.values())
          if (std::abs(v) < 1e-3) near = true;
        if (near) continue;
      }
      if (op.kind == "scale") op.p0 = rng.uniform(-2.0, 2.0);
      if (op.kind == "add_const") op.p0 = rng.uniform(-1.0, 1.0);
    }

    Tensor out;
    try {
      out = apply_graph_op(op, pool);
    } catch (const advnerf::Error&) {
      continue;
    }
    double omax = 0.0;
    bool finite = true;
    for (double v : out.values()) {
      if (!std::isfinite(v)) finite = false;
      omax = std::max(omax, std::abs(v));
    }
    if (!finite || omax > 50.0) continue;

    prog.ops.push_back(op);
    pool.push_back(out);
  }
  return prog;
}

// Kolmogorov-Smirnov p-value (asymptotic) for a sample against a CDF.
inline double ks_pvalue(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace oracles
