#pragma once

#include <optional>
#include <span>
#include <vector>

#include "advnerf/common.hpp"
#include "advnerf/field.hpp"
#include "advnerf/rays.hpp"
#include "advnerf/tensor.hpp"

namespace advnerf {

// Emission-absorption compositing along rays, in two flavors: a batched
// tensor path used by training (differentiable w.r.t. densities, colors,
// depths and the perturbations) and a plain-value path used by the oracle
// renderer and evaluation.
//
// The perturbed variant applies per-ray color/density offsets and per-sample
// depth shifts. Offsets are clamped so the perturbed color stays in [0,1]
// and the perturbed density in [0, max(sigma_max, sigma)]; the clamp windows
// always contain zero, so a zero perturbation reproduces the clean composite
// bit for bit even when the clean density already exceeds sigma_max.

struct RenderOptions {
  double sigma_max = 5.0;            // admissible ceiling for perturbed density
  std::optional<Vec3> background;    // when set, C += (1 - sum w) * background
};

struct RenderValues {
  Vec3 color;
  double depth = 0.0;
  double opacity = 0.0;
  std::vector<double> weights;
};

/// Clean per-ray compositing of plain values.
RenderValues composite_values(const DepthSamples& samples, std::span<const FieldOutput> outputs,
                              const RenderOptions& opt = {});

/// Perturbed per-ray compositing: colors get +delta_c, densities +delta_sigma
/// (both clamped as described above), depths are replaced by t_shifted.
/// Errors when t_shifted is decreasing.
RenderValues composite_values_perturbed(const DepthSamples& samples, std::span<const FieldOutput> outputs,
                                        const Vec3& delta_c, double delta_sigma,
                                        std::span<const double> t_shifted, const RenderOptions& opt = {});

/// Batched differentiable compositing inputs. Colors are one [B,K] tensor per
/// channel; t is the clean depth matrix and dt_terminal the terminal gap.
struct CompositeBatch {
  Tensor sigma;                 // [B,K]
  std::array<Tensor, 3> color;  // [B,K] each
  Tensor t;                     // [B,K]
  double terminal_gap = 0.0;
};

struct RenderOutput {
  Tensor color;    // [B,3]
  Tensor depth;    // [B,1]
  Tensor opacity;  // [B,1]
  Tensor weights;  // [B,K]
};

/// Per-ray perturbation tensors for the batch; any member may be undefined
/// (treated as zero and skipped).
struct RenderPerturbation {
  Tensor delta_t;      // [B,K], per sample
  Tensor delta_c;      // [B,3], per ray
  Tensor delta_sigma;  // [B,1], per ray
};

RenderOutput composite_tensors(const CompositeBatch& in, const RenderOptions& opt = {});
RenderOutput composite_tensors_perturbed(const CompositeBatch& in, const RenderPerturbation& delta,
                                         const RenderOptions& opt = {});

}  // namespace advnerf
