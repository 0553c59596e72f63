#include "advnerf/adversary.hpp"

#include <algorithm>
#include <cmath>

namespace advnerf {

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void clamp_box(Tensor& t, double radius) {
  for (auto& v : t.values_mut()) v = std::min(std::max(v, -radius), radius);
}

// Projects each row of a [B,3] tensor onto the l2 ball of the given radius.
// The post-scale tighten loop makes the projection exactly idempotent.
void project_ball_rows(Tensor& t, double radius) {
  auto v = t.values_mut();
  const size_t rows = v.size() / 3;
  for (size_t i = 0; i < rows; ++i) {
    double* r = v.data() + i * 3;
    for (int guard = 0; guard < 8; ++guard) {
      const double n2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
      if (n2 <= radius * radius) break;
      const double s = radius / std::sqrt(n2);
      r[0] *= s;
      r[1] *= s;
      r[2] *= s;
    }
  }
}

void require_grad_for_step(const Tensor& t, const char* name) {
  if (!t.has_grad())
    fail(ErrorCode::InvalidArgument, cat("pgd_step: missing gradient for ", name));
}

void sign_step(Tensor& t, double alpha) {
  auto v = t.values_mut();
  auto g = t.grad();
  for (size_t i = 0; i < v.size(); ++i) v[i] += alpha * sgn(g[i]);
}

}  // namespace

void AttackConfig::validate() const {
  auto level = [](const LevelConfig& l, const char* name) {
    if (l.steps < 0) fail(ErrorCode::InvalidArgument, cat("AttackConfig: negative steps for ", name));
    if (l.alpha < 0.0) fail(ErrorCode::InvalidArgument, cat("AttackConfig: negative alpha for ", name));
  };
  level(coord, "coord");
  level(feature, "feature");
  level(output, "output");
  if (alpha_t < 0.0) fail(ErrorCode::InvalidArgument, "AttackConfig: alpha_t must be >= 0");
  if (eps_feature < 0.0) fail(ErrorCode::InvalidArgument, "AttackConfig: eps_feature must be >= 0");
  if (eps_color < 0.0) fail(ErrorCode::InvalidArgument, "AttackConfig: eps_color must be >= 0");
}

ConstraintRadii make_radii(const AttackConfig& cfg, const RayBatch& batch, double sigma_max) {
  ConstraintRadii r;
  const int b = batch.b, k = batch.k;
  r.t_radius.resize(static_cast<size_t>(b) * k);
  // min of the two adjacent gaps keeps shifted depths ordered for alpha_t <= 1/2
  for (int i = 0; i < b; ++i) {
    const double* dt = batch.dt.data() + static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double prev = j > 0 ? dt[j - 1] : dt[0];
      r.t_radius[static_cast<size_t>(i) * k + j] = cfg.alpha_t * std::min(prev, dt[j]);
    }
  }
  if (cfg.eps_ball >= 0.0) {
    r.ball_xyz = cfg.eps_ball;
  } else {
    double mean_dt = 0.0;
    for (double d : batch.dt) mean_dt += d;
    mean_dt /= static_cast<double>(batch.dt.size());
    r.ball_xyz = 0.5 * mean_dt;
  }
  r.theta_box = cfg.eps_theta >= 0.0 ? cfg.eps_theta : batch.pixel_size / (2.0 * batch.focal);
  r.feature_box = cfg.eps_feature;
  r.color_box = cfg.eps_color;
  r.sigma_box = cfg.eps_sigma >= 0.0 ? cfg.eps_sigma : 0.05 * sigma_max;
  return r;
}

void PerturbationSet::detach_all() {
  for (Tensor* t : {&delta_t, &delta_xyz, &delta_theta, &delta_f, &delta_c, &delta_sigma})
    if (t->defined()) t->set_requires_grad(false);
}

PerturbationSet init_perturbation(const AttackConfig& cfg, const ConstraintRadii& radii,
                                  int b, int k, int feature_dim, Rng& rng) {
  PerturbationSet d;
  d.delta_t = Tensor::zeros({b, k});
  d.delta_xyz = Tensor::zeros({b, 3});
  d.delta_theta = Tensor::zeros({b, 3});
  d.delta_f = Tensor::zeros({b, feature_dim});
  d.delta_c = Tensor::zeros({b, 3});
  d.delta_sigma = Tensor::zeros({b, 1});
  if (!cfg.enabled || !cfg.random_start) return d;

  if (cfg.coord.active()) {
    Rng s = rng.fork(1);
    auto t = d.delta_t.values_mut();
    for (size_t i = 0; i < t.size(); ++i) t[i] = s.uniform(-radii.t_radius[i], radii.t_radius[i]);
    auto xyz = d.delta_xyz.values_mut();
    for (int i = 0; i < b; ++i) {
      // uniform in the ball: gaussian direction, cube-root radial law
      Vec3 g{s.normal(), s.normal(), s.normal()};
      double n = g.norm();
      if (n == 0.0) n = 1.0;
      const double rad = radii.ball_xyz * std::cbrt(s.uniform());
      for (int c = 0; c < 3; ++c) xyz[static_cast<size_t>(i) * 3 + c] = g[c] / n * rad;
    }
    auto th = d.delta_theta.values_mut();
    for (auto& v : th) v = s.uniform(-radii.theta_box, radii.theta_box);
  }
  if (cfg.feature.active()) {
    Rng s = rng.fork(2);
    for (auto& v : d.delta_f.values_mut()) v = s.uniform(-radii.feature_box, radii.feature_box);
  }
  if (cfg.output.active()) {
    Rng s = rng.fork(3);
    for (auto& v : d.delta_c.values_mut()) v = s.uniform(-radii.color_box, radii.color_box);
    for (auto& v : d.delta_sigma.values_mut()) v = s.uniform(-radii.sigma_box, radii.sigma_box);
  }
  return d;
}

void project(PerturbationSet& delta, const ConstraintRadii& radii) {
  if (delta.delta_t.defined()) {
    auto v = delta.delta_t.values_mut();
    for (size_t i = 0; i < v.size(); ++i)
      v[i] = std::min(std::max(v[i], -radii.t_radius[i]), radii.t_radius[i]);
  }
  if (delta.delta_xyz.defined()) project_ball_rows(delta.delta_xyz, radii.ball_xyz);
  if (delta.delta_theta.defined()) clamp_box(delta.delta_theta, radii.theta_box);
  if (delta.delta_f.defined()) clamp_box(delta.delta_f, radii.feature_box);
  if (delta.delta_c.defined()) clamp_box(delta.delta_c, radii.color_box);
  if (delta.delta_sigma.defined()) clamp_box(delta.delta_sigma, radii.sigma_box);
}

void pgd_step(PerturbationSet& delta, const ConstraintRadii& radii, const AttackConfig& cfg,
              const LevelMask& mask) {
  if (mask.coord) {
    require_grad_for_step(delta.delta_t, "delta_t");
    require_grad_for_step(delta.delta_xyz, "delta_xyz");
    require_grad_for_step(delta.delta_theta, "delta_theta");
    sign_step(delta.delta_t, cfg.coord.alpha);
    sign_step(delta.delta_theta, cfg.coord.alpha);
    // l2 set: normalized-gradient ascent instead of the sign rule
    {
      auto v = delta.delta_xyz.values_mut();
      auto g = delta.delta_xyz.grad();
      const size_t rows = v.size() / 3;
      for (size_t i = 0; i < rows; ++i) {
        const double* gr = g.data() + i * 3;
        const double n = std::sqrt(gr[0] * gr[0] + gr[1] * gr[1] + gr[2] * gr[2]);
        if (n == 0.0) continue;
        for (int c = 0; c < 3; ++c) v[i * 3 + c] += cfg.coord.alpha * gr[c] / n;
      }
    }
  }
  if (mask.feature) {
    require_grad_for_step(delta.delta_f, "delta_f");
    sign_step(delta.delta_f, cfg.feature.alpha);
  }
  if (mask.output) {
    require_grad_for_step(delta.delta_c, "delta_c");
    require_grad_for_step(delta.delta_sigma, "delta_sigma");
    sign_step(delta.delta_c, cfg.output.alpha);
    sign_step(delta.delta_sigma, cfg.output.alpha);
  }
  project(delta, radii);
}

Tensor mse_loss(const Tensor& color, const Tensor& truth) {
  if (color.shape() != truth.shape())
    fail(ErrorCode::ShapeMismatch,
         cat("mse_loss: shape mismatch ", shape_str(color.shape()), " vs ", shape_str(truth.shape())));
  Tensor diff = sub(color, truth);
  Tensor per_ray = matmul(mul(diff, diff), Tensor::full({color.dim(1), 1}, 1.0));
  return mean(per_ray);
}

RenderOutput render_batch(const RadianceField& field, const RayBatch& batch,
                          const PerturbationSet* delta, const RenderOptions& opt,
                          bool freeze_params) {
  const int b = batch.b, k = batch.k;
  const int n = b * k;

  Tensor t = Tensor::from(batch.t, {b, k});
  Tensor t_eff = (delta && delta->delta_t.defined()) ? add(t, delta->delta_t) : t;

  Tensor o_rep = repeat_rows(Tensor::from(batch.origin, {b, 3}), k);
  Tensor d_rep = repeat_rows(Tensor::from(batch.dir, {b, 3}), k);
  Tensor pos = add(o_rep, scale_rows(d_rep, reshape(t_eff, {n, 1})));
  if (delta && delta->delta_xyz.defined()) pos = add(pos, repeat_rows(delta->delta_xyz, k));

  Tensor th = Tensor::from(batch.view_dir, {b, 3});
  if (delta && delta->delta_theta.defined()) {
    th = add(th, delta->delta_theta);
    Tensor norm2 = matmul(mul(th, th), Tensor::full({3, 1}, 1.0));
    th = scale_rows(th, rsqrt(norm2));
  }
  Tensor dir_rep = repeat_rows(th, k);

  Tensor df_rep;
  const Tensor* df = nullptr;
  if (delta && delta->delta_f.defined()) {
    df_rep = repeat_rows(delta->delta_f, k);
    df = &df_rep;
  }

  FieldForward ff = field.forward(pos, dir_rep, df, freeze_params);

  CompositeBatch cb;
  cb.sigma = reshape(ff.sigma, {b, k});
  for (int ch = 0; ch < 3; ++ch)
    cb.color[static_cast<size_t>(ch)] = reshape(slice(ff.color, 1, ch, 1), {b, k});
  cb.t = t_eff;
  cb.terminal_gap = batch.terminal_gap;

  RenderPerturbation rp;
  if (delta) {
    rp.delta_c = delta->delta_c;
    rp.delta_sigma = delta->delta_sigma;
  }
  return composite_tensors_perturbed(cb, rp, opt);
}

SearchResult search(const RadianceField& field, const RayBatch& batch, const AttackConfig& cfg,
                    const RenderOptions& opt, Rng rng, bool eval_final) {
  cfg.validate();
  ConstraintRadii radii = make_radii(cfg, batch, opt.sigma_max);
  PerturbationSet delta = init_perturbation(cfg, radii, batch.b, batch.k, field.feature_dim(), rng);
  project(delta, radii);

  int max_steps = 0;
  if (cfg.enabled) {
    if (cfg.coord.active()) max_steps = std::max(max_steps, cfg.coord.steps);
    if (cfg.feature.active()) max_steps = std::max(max_steps, cfg.feature.steps);
    if (cfg.output.active()) max_steps = std::max(max_steps, cfg.output.steps);
  }

  Tensor truth = Tensor::from(batch.truth, {batch.b, 3});
  for (int it = 0; it < max_steps; ++it) {
    LevelMask mask{cfg.coord.active() && it < cfg.coord.steps,
                   cfg.feature.active() && it < cfg.feature.steps,
                   cfg.output.active() && it < cfg.output.steps};
    delta.delta_t.set_requires_grad(mask.coord);
    delta.delta_xyz.set_requires_grad(mask.coord);
    delta.delta_theta.set_requires_grad(mask.coord);
    delta.delta_f.set_requires_grad(mask.feature);
    delta.delta_c.set_requires_grad(mask.output);
    delta.delta_sigma.set_requires_grad(mask.output);

    Tape tape;
    {
      TapeScope scope(tape);
      RenderOutput out = render_batch(field, batch, &delta, opt, /*freeze_params=*/true);
      Tensor loss = mse_loss(out.color, truth);
      tape.backward(loss);
    }
    pgd_step(delta, radii, cfg, mask);
    zero_grad({delta.delta_t, delta.delta_xyz, delta.delta_theta, delta.delta_f, delta.delta_c,
               delta.delta_sigma});
  }

  delta.detach_all();
  SearchResult res;
  res.delta = std::move(delta);
  if (eval_final) {
    RenderOutput out = render_batch(field, batch, &res.delta, opt, /*freeze_params=*/true);
    res.adversarial_loss = mse_loss(out.color, truth).value();
    res.evaluated = true;
  }
  return res;
}

}  // namespace advnerf
