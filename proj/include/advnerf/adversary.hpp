#pragma once

#include <optional>

#include "advnerf/common.hpp"
#include "advnerf/field.hpp"
#include "advnerf/rays.hpp"
#include "advnerf/renderer.hpp"
#include "advnerf/tensor.hpp"

namespace advnerf {

// Worst-case perturbations at three levels of the rendering pipeline and the
// projected-gradient inner maximization that searches them:
//   coordinate level: delta_t (per sample, along-ray), delta_xyz (l2 ball),
//                     delta_theta (box, view direction)
//   feature level:    delta_f (box, trunk feature space)
//   output level:     delta_c, delta_sigma (boxes, pre-compositing outputs)
// Box sets take sign-ascent steps; the l2 ball takes normalized-gradient
// steps. Every step is followed by an exact projection.

struct LevelConfig {
  bool enabled = true;
  int steps = 0;
  double alpha = 0.0;

  bool active() const { return enabled && steps > 0; }
};

struct AttackConfig {
  bool enabled = true;
  bool random_start = true;
  uint64_t seed = 0;

  LevelConfig coord{true, 3, 1e-2};
  double alpha_t = 0.5;       // delta_t radius = alpha_t * min(adjacent gaps); keeps t-order for alpha_t <= 0.5
  double eps_ball = -1.0;     // l2 radius for delta_xyz; auto (<0): half the mean sample spacing
  double eps_theta = -1.0;    // box for delta_theta; auto (<0): pixel_size / (2 focal)

  LevelConfig feature{true, 1, 1e-3};
  double eps_feature = 0.01;

  LevelConfig output{true, 1, 1e-5};
  double eps_color = 0.05;
  double eps_sigma = -1.0;    // auto (<0): 0.05 * sigma_max

  // when set, the importance weights are recomputed under the current
  // perturbation and the fine depths redrawn inside the inner loop
  bool perturb_coarse = false;

  bool any_active() const {
    return enabled && (coord.active() || feature.active() || output.active());
  }
  void validate() const;
};

/// Concrete per-level radii for one batch.
struct ConstraintRadii {
  std::vector<double> t_radius;  // [B*K], per sample
  double ball_xyz = 0.0;
  double theta_box = 0.0;
  double feature_box = 0.0;
  double color_box = 0.0;
  double sigma_box = 0.0;
};

ConstraintRadii make_radii(const AttackConfig& cfg, const RayBatch& batch, double sigma_max);

/// The six perturbation components. delta_t is per sample; the rest are per
/// ray. Tensors are leaves; requires-grad is managed by the search.
struct PerturbationSet {
  Tensor delta_t;      // [B,K]
  Tensor delta_xyz;    // [B,3]
  Tensor delta_theta;  // [B,3]
  Tensor delta_f;      // [B,D]
  Tensor delta_c;      // [B,3]
  Tensor delta_sigma;  // [B,1]

  void detach_all();
};

/// Zero or uniform-random start inside the constraint sets. Disabled levels
/// stay identically zero; each level draws from its own forked stream.
PerturbationSet init_perturbation(const AttackConfig& cfg, const ConstraintRadii& radii,
                                  int b, int k, int feature_dim, Rng& rng);

/// Exact projection onto the constraint sets; idempotent bit for bit.
void project(PerturbationSet& delta, const ConstraintRadii& radii);

struct LevelMask {
  bool coord = false, feature = false, output = false;
};

/// One ascent step per active level from the gradients currently held by the
/// delta tensors, followed by projection. Errors when an active level has no
/// gradient.
void pgd_step(PerturbationSet& delta, const ConstraintRadii& radii, const AttackConfig& cfg,
              const LevelMask& mask);

/// Renders the batch through the field under an optional perturbation set.
/// This is the one pipeline shared by the clean pass, the inner maximization
/// and the adversarial loss term.
RenderOutput render_batch(const RadianceField& field, const RayBatch& batch,
                          const PerturbationSet* delta, const RenderOptions& opt,
                          bool freeze_params);

/// Mean over rays of the squared color error (the training loss form).
Tensor mse_loss(const Tensor& color, const Tensor& truth);

struct SearchResult {
  PerturbationSet delta;       // detached, constraints satisfied
  double adversarial_loss = 0.0;
  bool evaluated = false;      // adversarial_loss valid only when true
};

/// Multi-step PGD inner maximization; per-level step budgets run jointly with
/// exhausted levels masked. Leaves the field parameters and the caller's rng
/// untouched. When eval_final is false the final loss evaluation is skipped
/// (the trainer recomputes it inside its own graph).
SearchResult search(const RadianceField& field, const RayBatch& batch, const AttackConfig& cfg,
                    const RenderOptions& opt, Rng rng, bool eval_final = true);

}  // namespace advnerf
