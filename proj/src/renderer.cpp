#include "advnerf/renderer.hpp"

#include <algorithm>
#include <cmath>

namespace advnerf {

namespace {

double clamp_delta(double delta, double lo, double hi) {
  // window is widened to contain zero, so delta == 0 is always a no-op
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  return std::min(std::max(delta, lo), hi);
}

RenderValues composite_values_impl(std::span<const double> t, std::span<const double> dt,
                                   std::span<const FieldOutput> outputs, const Vec3& delta_c,
                                   double delta_sigma, const RenderOptions& opt) {
  const size_t k = t.size();
  RenderValues out;
  out.weights.resize(k);
  double transmittance = 1.0;
  double optical = 0.0;
  for (size_t i = 0; i < k; ++i) {
    const FieldOutput& fo = outputs[i];
    const double sigma = fo.sigma + clamp_delta(delta_sigma, -fo.sigma, opt.sigma_max - fo.sigma);
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch)
      c[ch] = fo.color[ch] + clamp_delta(delta_c[ch], -fo.color[ch], 1.0 - fo.color[ch]);
    transmittance = std::exp(-optical);
    const double alpha = 1.0 - std::exp(-sigma * dt[i]);
    const double w = transmittance * alpha;
    out.weights[i] = w;
    out.color += c * w;
    out.depth += w * t[i];
    out.opacity += w;
    optical += sigma * dt[i];
  }
  if (opt.background) {
    out.color += (1.0 - out.opacity) * (*opt.background);
  }
  return out;
}

}  // namespace

RenderValues composite_values(const DepthSamples& samples, std::span<const FieldOutput> outputs,
                              const RenderOptions& opt) {
  if (samples.size() != outputs.size() || samples.size() == 0)
    fail(ErrorCode::InvalidArgument,
         cat("composite: ", outputs.size(), " outputs for ", samples.size(), " samples"));
  return composite_values_impl(samples.t, samples.dt, outputs, {0, 0, 0}, 0.0, opt);
}

RenderValues composite_values_perturbed(const DepthSamples& samples, std::span<const FieldOutput> outputs,
                                        const Vec3& delta_c, double delta_sigma,
                                        std::span<const double> t_shifted, const RenderOptions& opt) {
  if (samples.size() != outputs.size() || samples.size() == 0)
    fail(ErrorCode::InvalidArgument,
         cat("composite_perturbed: ", outputs.size(), " outputs for ", samples.size(), " samples"));
  if (t_shifted.size() != samples.size())
    fail(ErrorCode::InvalidArgument, "composite_perturbed: shifted depth count mismatch");
  std::vector<double> dt(t_shifted.size());
  for (size_t i = 0; i + 1 < t_shifted.size(); ++i) {
    dt[i] = t_shifted[i + 1] - t_shifted[i];
    if (dt[i] < 0.0) fail(ErrorCode::InvalidArgument, "composite_perturbed: shifted depths are not monotone");
  }
  dt.back() = samples.dt.back();
  return composite_values_impl(t_shifted, dt, outputs, delta_c, delta_sigma, opt);
}

namespace {

// strictly upper-triangular ones: out[b,k] = sum_{l<k} a[b,l] via a * U
Tensor exclusive_cumsum_cols(const Tensor& a) {
  const int k = a.dim(1);
  std::vector<double> u(static_cast<size_t>(k) * k, 0.0);
  for (int l = 0; l < k; ++l)
    for (int j = l + 1; j < k; ++j) u[static_cast<size_t>(l) * k + j] = 1.0;
  return matmul(a, Tensor::from(std::move(u), {k, k}));
}

Tensor row_sum(const Tensor& a) {  // [B,K] -> [B,1]
  return matmul(a, Tensor::full({a.dim(1), 1}, 1.0));
}

}  // namespace

RenderOutput composite_tensors_perturbed(const CompositeBatch& in, const RenderPerturbation& delta,
                                         const RenderOptions& opt) {
  const int b = in.sigma.dim(0), k = in.sigma.dim(1);
  for (const auto& c : in.color)
    if (c.shape() != in.sigma.shape())
      fail(ErrorCode::ShapeMismatch, cat("composite: color shape ", shape_str(c.shape()), " vs sigma ",
                                         shape_str(in.sigma.shape())));
  if (in.t.shape() != in.sigma.shape())
    fail(ErrorCode::ShapeMismatch, "composite: t shape mismatch");
  if (in.terminal_gap <= 0.0) fail(ErrorCode::InvalidArgument, "composite: terminal gap must be positive");

  // shifted depths and intervals
  Tensor t_eff = delta.delta_t.defined() ? add(in.t, delta.delta_t) : in.t;
  {
    auto tv = t_eff.values();
    for (int i = 0; i < b; ++i)
      for (int j = 0; j + 1 < k; ++j)
        if (tv[static_cast<size_t>(i) * k + j + 1] < tv[static_cast<size_t>(i) * k + j])
          fail(ErrorCode::InvalidArgument, cat("composite: shifted depths not monotone at ray ", i));
  }
  Tensor dt;
  if (k > 1) {
    Tensor diffs = sub(slice(t_eff, 1, 1, k - 1), slice(t_eff, 1, 0, k - 1));
    dt = concat({diffs, Tensor::full({b, 1}, in.terminal_gap)}, 1);
  } else {
    dt = Tensor::full({b, 1}, in.terminal_gap);
  }

  // perturbed density, kept inside [0, max(sigma, sigma_max)]
  Tensor sigma_eff = in.sigma;
  if (delta.delta_sigma.defined()) {
    Tensor ds = repeat_rows(delta.delta_sigma, k);           // [B*K,1]
    ds = reshape(ds, {b, k});
    Tensor shifted = add(in.sigma, ds);
    Tensor upper = maximum(in.sigma, Tensor::scalar(opt.sigma_max));
    sigma_eff = minimum(maximum(shifted, Tensor::scalar(0.0)), upper);
  }

  // perturbed colors clamped to [0,1]
  std::array<Tensor, 3> color_eff = in.color;
  if (delta.delta_c.defined()) {
    for (int ch = 0; ch < 3; ++ch) {
      Tensor dc = reshape(repeat_rows(slice(delta.delta_c, 1, ch, 1), k), {b, k});
      color_eff[static_cast<size_t>(ch)] = clamp(add(in.color[static_cast<size_t>(ch)], dc), 0.0, 1.0);
    }
  }

  Tensor optical = mul(sigma_eff, dt);
  Tensor transmittance = exp(neg(exclusive_cumsum_cols(optical)));
  Tensor alpha = sub(Tensor::scalar(1.0), exp(neg(optical)));
  Tensor w = mul(transmittance, alpha);

  RenderOutput out;
  out.weights = w;
  out.opacity = row_sum(w);
  out.depth = row_sum(mul(w, t_eff));
  std::array<Tensor, 3> chans;
  for (int ch = 0; ch < 3; ++ch) chans[static_cast<size_t>(ch)] = row_sum(mul(w, color_eff[static_cast<size_t>(ch)]));
  if (opt.background) {
    Tensor vacancy = sub(Tensor::scalar(1.0), out.opacity);
    for (int ch = 0; ch < 3; ++ch)
      chans[static_cast<size_t>(ch)] =
          add(chans[static_cast<size_t>(ch)], scale(vacancy, (*opt.background)[ch]));
  }
  out.color = concat({chans[0], chans[1], chans[2]}, 1);
  return out;
}

RenderOutput composite_tensors(const CompositeBatch& in, const RenderOptions& opt) {
  return composite_tensors_perturbed(in, RenderPerturbation{}, opt);
}

}  // namespace advnerf
