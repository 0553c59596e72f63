#include "advnerf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "advnerf/metrics.hpp"

namespace advnerf {

namespace fs = std::filesystem;

RegKind reg_from_name(const std::string& name) {
  if (name == "none") return RegKind::None;
  if (name == "l1") return RegKind::L1;
  if (name == "tv") return RegKind::TV;
  if (name == "laplacian") return RegKind::Laplacian;
  fail(ErrorCode::InvalidArgument, "unknown regularizer kind: " + name);
}

const char* reg_name(RegKind kind) {
  switch (kind) {
    case RegKind::None: return "none";
    case RegKind::L1: return "l1";
    case RegKind::TV: return "tv";
    case RegKind::Laplacian: return "laplacian";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (iterations < 1) fail(ErrorCode::InvalidArgument, "TrainConfig: iterations must be >= 1");
  if (rays_per_batch < 1) fail(ErrorCode::InvalidArgument, "TrainConfig: rays_per_batch must be >= 1");
  if (samples_coarse < 2) fail(ErrorCode::InvalidArgument, "TrainConfig: samples_coarse must be >= 2");
  if (samples_fine < 0) fail(ErrorCode::InvalidArgument, "TrainConfig: samples_fine must be >= 0");
  if (lr <= 0.0) fail(ErrorCode::InvalidArgument, "TrainConfig: lr must be positive");
  if (lr_decay <= 0.0 || lr_decay > 1.0)
    fail(ErrorCode::InvalidArgument, "TrainConfig: lr_decay must be in (0,1]");
  if (lambda_adv < 0.0) fail(ErrorCode::InvalidArgument, "TrainConfig: lambda_adv must be >= 0");
  if (reg.kind != RegKind::None && reg.lattice < 2)
    fail(ErrorCode::InvalidArgument, "TrainConfig: regularizer lattice must be >= 2");
  field.validate();
}

Tensor photometric_loss(const Tensor& rendered, const Tensor& truth) { return mse_loss(rendered, truth); }

void Adam::step(std::span<Tensor> params, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].numel(), 0.0);
      v_[i].assign(params[i].numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) fail(ErrorCode::InvalidArgument, "Adam: parameter count changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    auto vals = params[i].values_mut();
    auto grad = params[i].grad();
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (size_t j = 0; j < vals.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g;
      v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      vals[j] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

// --- regularizers ---------------------------------------------------------------------

double FieldDensitySource::sigma(const Vec3& p) const {
  Tensor pos = Tensor::from({p.x, p.y, p.z}, {1, 3});
  return field_.sigma_forward(pos).at(0);
}

Vec3 FieldDensitySource::sigma_grad(const Vec3& p) const {
  Tensor pos = Tensor::from({p.x, p.y, p.z}, {1, 3}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor sigma = field_.sigma_forward(pos, nullptr, /*freeze_params=*/true);
    tape.backward(sum(sigma));
  }
  auto g = pos.grad();
  if (g.empty()) return {0, 0, 0};
  return {g[0], g[1], g[2]};
}

namespace {

std::vector<double> lattice_centers(int n) {
  const double delta = 2.0 / static_cast<double>(n);
  std::vector<double> centers(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) centers[static_cast<size_t>(i)] = -1.0 + (static_cast<double>(i) + 0.5) * delta;
  return centers;
}

}  // namespace

double regularizer_value(const DensitySource& src, RegKind kind, int lattice_n) {
  if (lattice_n < 2) fail(ErrorCode::InvalidArgument, "regularizer_value: lattice must be >= 2");
  if (kind == RegKind::None) return 0.0;
  const double delta = 2.0 / static_cast<double>(lattice_n);
  const double cell = delta * delta * delta;
  const auto c = lattice_centers(lattice_n);

  double total = 0.0;
  if (kind == RegKind::L1) {
    for (double z : c)
      for (double y : c)
        for (double x : c) total += std::abs(src.sigma({x, y, z})) * cell;
  } else if (kind == RegKind::TV) {
    for (double z : c)
      for (double y : c)
        for (double x : c) total += src.sigma_grad({x, y, z}).norm() * cell;
  } else {  // Laplacian, central stencil with spacing delta, interior nodes only
    for (int iz = 1; iz + 1 < lattice_n; ++iz)
      for (int iy = 1; iy + 1 < lattice_n; ++iy)
        for (int ix = 1; ix + 1 < lattice_n; ++ix) {
          const Vec3 p{c[static_cast<size_t>(ix)], c[static_cast<size_t>(iy)], c[static_cast<size_t>(iz)]};
          const double s0 = src.sigma(p);
          double lap = 0.0;
          for (int a = 0; a < 3; ++a) {
            Vec3 pp = p, pm = p;
            (&pp.x)[a] += delta;
            (&pm.x)[a] -= delta;
            lap += (src.sigma(pp) - 2.0 * s0 + src.sigma(pm)) / (delta * delta);
          }
          total += std::abs(lap) * cell;
        }
  }
  return total;
}

namespace {

Tensor lattice_positions_tensor(int n, int axis_shift, double shift) {
  const auto c = lattice_centers(n);
  const size_t m = static_cast<size_t>(n) * n * n;
  std::vector<double> pos(m * 3);
  size_t r = 0;
  for (double z : c)
    for (double y : c)
      for (double x : c) {
        pos[r * 3] = x;
        pos[r * 3 + 1] = y;
        pos[r * 3 + 2] = z;
        if (axis_shift >= 0) pos[r * 3 + static_cast<size_t>(axis_shift)] += shift;
        ++r;
      }
  return Tensor::from(std::move(pos), {static_cast<int>(m), 3});
}

// |x| with the sign detached: gradient is sgn(x) dx
Tensor abs_detached(const Tensor& x) {
  std::vector<double> s(x.numel());
  auto v = x.values();
  for (size_t i = 0; i < s.size(); ++i) s[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
  return mul(x, Tensor::from(std::move(s), x.shape()));
}

}  // namespace

Tensor regularizer_loss(const RadianceField& field, RegKind kind, int lattice_n) {
  if (kind == RegKind::None) return Tensor::scalar(0.0);
  const double delta = 2.0 / static_cast<double>(lattice_n);
  const double cell = delta * delta * delta;

  if (kind == RegKind::L1) {
    // sigma is rectified, so |sigma| = sigma
    Tensor sigma = field.sigma_forward(lattice_positions_tensor(lattice_n, -1, 0.0));
    return scale(sum(sigma), cell);
  }
  if (kind == RegKind::TV) {
    // finite-difference gradient, spacing delta
    std::array<Tensor, 3> g2;
    for (int a = 0; a < 3; ++a) {
      Tensor sp = field.sigma_forward(lattice_positions_tensor(lattice_n, a, delta));
      Tensor sm = field.sigma_forward(lattice_positions_tensor(lattice_n, a, -delta));
      Tensor g = scale(sub(sp, sm), 1.0 / (2.0 * delta));
      g2[static_cast<size_t>(a)] = mul(g, g);
    }
    Tensor norm = sqrt(add_const(add(add(g2[0], g2[1]), g2[2]), 1e-24));
    return scale(sum(norm), cell);
  }
  // Laplacian stencil; lattice interior handled by evaluating all nodes and
  // masking boundary rows out with a constant 0/1 weight vector
  Tensor s0 = field.sigma_forward(lattice_positions_tensor(lattice_n, -1, 0.0));
  Tensor lap = scale(s0, -6.0);
  for (int a = 0; a < 3; ++a) {
    lap = add(lap, field.sigma_forward(lattice_positions_tensor(lattice_n, a, delta)));
    lap = add(lap, field.sigma_forward(lattice_positions_tensor(lattice_n, a, -delta)));
  }
  lap = scale(lap, 1.0 / (delta * delta));
  const int n = lattice_n;
  std::vector<double> mask(static_cast<size_t>(n) * n * n, 0.0);
  size_t r = 0;
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix, ++r)
        if (ix > 0 && ix + 1 < n && iy > 0 && iy + 1 < n && iz > 0 && iz + 1 < n) mask[r] = 1.0;
  Tensor masked = mul(abs_detached(lap), Tensor::from(std::move(mask), {n * n * n, 1}));
  return scale(sum(masked), cell);
}

// --- the loop ---------------------------------------------------------------------------

namespace {

struct RayPool {
  std::vector<Ray> rays;
  double focal = 0.0;
  double pixel_size = 0.0;
};

RayPool build_pool(const SceneDataset& scene) {
  RayPool pool;
  for (size_t v = 0; v < scene.train_cameras.size(); ++v) {
    const Camera& cam = scene.train_cameras[v];
    const Image& img = scene.train_images[v];
    std::vector<Ray> rays = generate_rays(cam);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x)
        rays[static_cast<size_t>(y) * cam.width + x].truth_color = img.pixel(x, y);
    pool.rays.insert(pool.rays.end(), rays.begin(), rays.end());
    pool.focal = cam.focal;
    pool.pixel_size = cam.pixel_size();
  }
  if (pool.rays.empty()) fail(ErrorCode::InvalidArgument, "train: scene has no training rays");
  return pool;
}

// one batched sigma pass over the coarse samples -> per-ray importance
// weights. With a perturbation set, the per-ray position/feature/density
// offsets are applied (the along-ray shifts are per fine sample and do not
// map onto the coarse lattice).
std::vector<std::vector<double>> coarse_weights(const RadianceField& field,
                                                std::span<const Ray> rays,
                                                const std::vector<DepthSamples>& coarse,
                                                const PerturbationSet* delta = nullptr,
                                                double sigma_max = 0.0) {
  const int kc = static_cast<int>(coarse[0].size());
  const int b = static_cast<int>(rays.size());
  std::vector<double> pos(static_cast<size_t>(b) * kc * 3);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < kc; ++j) {
      Vec3 p = rays[static_cast<size_t>(i)].origin +
               rays[static_cast<size_t>(i)].direction * coarse[static_cast<size_t>(i)].t[static_cast<size_t>(j)];
      if (delta != nullptr) {
        auto dx = delta->delta_xyz.values();
        p += {dx[static_cast<size_t>(i) * 3], dx[static_cast<size_t>(i) * 3 + 1],
              dx[static_cast<size_t>(i) * 3 + 2]};
      }
      const size_t r = (static_cast<size_t>(i) * kc + static_cast<size_t>(j)) * 3;
      pos[r] = p.x;
      pos[r + 1] = p.y;
      pos[r + 2] = p.z;
    }

  Tensor sigma;
  if (delta != nullptr) {
    Tensor df = repeat_rows(delta->delta_f, kc);
    sigma = field.sigma_forward(Tensor::from(std::move(pos), {b * kc, 3}), &df);
  } else {
    sigma = field.sigma_forward(Tensor::from(std::move(pos), {b * kc, 3}));
  }
  auto sv = sigma.values();

  std::vector<std::vector<double>> weights(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    auto& w = weights[static_cast<size_t>(i)];
    w.resize(static_cast<size_t>(kc));
    const double ds = delta != nullptr ? delta->delta_sigma.at(static_cast<size_t>(i)) : 0.0;
    double optical = 0.0;
    for (int j = 0; j < kc; ++j) {
      double s = sv[static_cast<size_t>(i) * kc + static_cast<size_t>(j)];
      if (delta != nullptr) s = std::min(std::max(s + ds, 0.0), std::max(s, sigma_max));
      const double dt = coarse[static_cast<size_t>(i)].dt[static_cast<size_t>(j)];
      w[static_cast<size_t>(j)] = std::exp(-optical) * (1.0 - std::exp(-s * dt));
      optical += s * dt;
    }
  }
  return weights;
}

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void dump_diagnostics(const std::string& out_dir, int iteration, const RayBatch& batch,
                      const LossBreakdown& loss) {
  nlohmann::json j;
  j["iteration"] = iteration;
  j["loss"] = {{"photometric", loss.photometric},
               {"adversarial", loss.adversarial},
               {"regularizer", loss.regularizer},
               {"total", loss.total}};
  j["batch"] = {{"rays", batch.b},   {"samples", batch.k},     {"origins", batch.origin},
                {"dirs", batch.dir}, {"truth", batch.truth},   {"t", batch.t}};
  std::ofstream out(fs::path(out_dir) / "diagnostic_dump.json");
  if (out) out << j.dump(2) << "\n";
}

}  // namespace

std::pair<double, double> evaluate_field(const RadianceField& field, const SceneDataset& scene,
                                         bool test_split, const TrainConfig& cfg) {
  const auto& cams = test_split ? scene.test_cameras : scene.train_cameras;
  const auto& imgs = test_split ? scene.test_images : scene.train_images;
  if (cams.empty()) fail(ErrorCode::InvalidArgument, "evaluate_field: empty split");
  ViewRenderSettings vs;
  vs.samples_coarse = cfg.samples_coarse;
  vs.samples_fine = cfg.samples_fine;
  vs.options = cfg.render;
  double p = 0.0, s = 0.0;
  for (size_t i = 0; i < cams.size(); ++i) {
    ViewRender vr = render_view(field, cams[i], vs);
    p += psnr(vr.color, imgs[i]);
    s += ssim(vr.color, imgs[i]);
  }
  return {p / static_cast<double>(cams.size()), s / static_cast<double>(cams.size())};
}

TrainResult train(const SceneDataset& scene, const TrainConfig& cfg, const AttackConfig& attack,
                  const std::string& out_dir) {
  cfg.validate();
  attack.validate();
  scene.validate();
  fs::create_directories(out_dir);

  Rng master(cfg.seed);
  Rng batch_rng = master.fork(101);
  Rng strat_rng = master.fork(102);
  Rng attack_base = master.fork(103);
  Rng init_rng = master.fork(104);

  RadianceField field(cfg.field, init_rng);
  Adam adam;
  RayPool pool = build_pool(scene);

  // render options inherit the dataset background
  RenderOptions ropt = cfg.render;
  if (!ropt.background) ropt.background = scene.background;

  const std::string log_path = (fs::path(out_dir) / "log.csv").string();
  std::ofstream log(log_path);
  if (!log) fail(ErrorCode::Io, "train: cannot write " + log_path);
  log << "iteration,photometric,adversarial,regularizer,total,lr,eval_psnr,eval_ssim\n";

  const int k_total = cfg.samples_coarse + cfg.samples_fine;
  const bool attack_on = attack.any_active();
  LossBreakdown last{};
  double eval_psnr = 0.0, eval_ssim = 0.0;

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    // assemble the batch: pick rays, stratify, coarse pass, importance resample
    std::vector<Ray> rays(static_cast<size_t>(cfg.rays_per_batch));
    for (auto& r : rays) r = pool.rays[batch_rng.uniform_index(pool.rays.size())];

    std::vector<DepthSamples> coarse(rays.size());
    for (size_t i = 0; i < rays.size(); ++i)
      coarse[i] = stratified_sample(rays[i], cfg.samples_coarse, strat_rng);

    RayBatch batch = make_ray_batch(rays, k_total, pool.focal, pool.pixel_size);
    if (cfg.samples_fine > 0) {
      auto weights = coarse_weights(field, rays, coarse);
      for (size_t i = 0; i < rays.size(); ++i)
        batch.set_samples(static_cast<int>(i),
                          hierarchical_sample(coarse[i], weights[i], cfg.samples_fine, strat_rng));
    } else {
      for (size_t i = 0; i < rays.size(); ++i) batch.set_samples(static_cast<int>(i), coarse[i]);
    }

    // inner maximization on the same samples as the clean term
    SearchResult found;
    RayBatch adv_batch;
    bool adv_resampled = false;
    if (attack_on) {
      found = search(field, batch, attack, ropt, attack_base.fork(static_cast<uint64_t>(iter)),
                     /*eval_final=*/false);
      if (attack.perturb_coarse && cfg.samples_fine > 0) {
        // the importance weights are recomputed under the found perturbation
        // and the adversarial term renders on freshly drawn fine depths; the
        // along-ray shifts stay tied to the original sample lattice and are
        // dropped for this render
        Rng resample = attack_base.fork(static_cast<uint64_t>(iter)).fork(77);
        auto weights = coarse_weights(field, rays, coarse, &found.delta, ropt.sigma_max);
        adv_batch = batch;
        for (size_t i = 0; i < rays.size(); ++i)
          adv_batch.set_samples(static_cast<int>(i),
                                hierarchical_sample(coarse[i], weights[i], cfg.samples_fine, resample));
        adv_resampled = true;
      }
    }

    Tensor truth = Tensor::from(batch.truth, {batch.b, 3});
    LossBreakdown bd{};
    Tape tape;
    {
      TapeScope scope(tape);
      RenderOutput clean = render_batch(field, batch, nullptr, ropt, /*freeze_params=*/false);
      Tensor photo = photometric_loss(clean.color, truth);

      Tensor adv = photo;  // with the attack off both terms coincide exactly
      if (attack_on) {
        PerturbationSet adv_delta = found.delta;
        if (adv_resampled) adv_delta.delta_t = Tensor();
        RenderOutput perturbed = render_batch(field, adv_resampled ? adv_batch : batch, &adv_delta,
                                              ropt, /*freeze_params=*/false);
        adv = photometric_loss(perturbed.color, truth);
      }

      Tensor total = add(photo, scale(adv, cfg.lambda_adv));
      Tensor reg;
      if (cfg.reg.kind != RegKind::None) {
        reg = regularizer_loss(field, cfg.reg.kind, cfg.reg.lattice);
        total = add(total, scale(reg, cfg.reg.weight));
      }

      bd.photometric = photo.value();
      bd.adversarial = adv.value();
      bd.regularizer = reg.defined() ? reg.value() : 0.0;
      bd.total = total.value();

      if (!std::isfinite(bd.total)) {
        dump_diagnostics(out_dir, iter, batch, bd);
        fail(ErrorCode::Numeric,
             cat("train: non-finite loss at iteration ", iter, " (diagnostic_dump.json written)"));
      }

      zero_grad(field.params());
      tape.backward(total);
    }

    const double lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(iter) / cfg.iterations);
    adam.step(field.params(), lr);
    last = bd;

    const bool final_iter = iter == cfg.iterations;
    const bool do_eval = final_iter || (cfg.eval_every > 0 && iter % cfg.eval_every == 0);
    if (do_eval && !scene.test_cameras.empty()) {
      auto [p, s] = evaluate_field(field, scene, /*test_split=*/true, cfg);
      eval_psnr = p;
      eval_ssim = s;
    }
    if (final_iter || iter == 1 || (cfg.log_every > 0 && iter % cfg.log_every == 0)) {
      log << iter << ',' << fmt_g17(bd.photometric) << ',' << fmt_g17(bd.adversarial) << ','
          << fmt_g17(bd.regularizer) << ',' << fmt_g17(bd.total) << ',' << fmt_g17(lr);
      if (do_eval && !scene.test_cameras.empty())
        log << ',' << fmt_g17(eval_psnr) << ',' << fmt_g17(eval_ssim);
      else
        log << ",,";
      log << '\n';
    }
    if (cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0 && !final_iter)
      field.save_checkpoint((fs::path(out_dir) / cat("checkpoint_", iter, ".json")).string(), cfg.seed,
                            static_cast<uint64_t>(iter));
  }

  const std::string ckpt = (fs::path(out_dir) / "checkpoint.json").string();
  field.save_checkpoint(ckpt, cfg.seed, static_cast<uint64_t>(cfg.iterations));
  log.flush();

  TrainResult res{std::move(field), last, eval_psnr, eval_ssim, ckpt, log_path};
  return res;
}

}  // namespace advnerf
