#pragma once

#include <array>
#include <span>
#include <vector>

#include "advnerf/common.hpp"

namespace advnerf {

// Pinhole camera, inverse-perspective ray generation, stratified bin
// sampling along rays, and importance resampling from coarse compositing
// weights. The camera convention is the transforms-JSON one: camera-to-world
// pose, camera looks down -z, +x right, +y up, rays through pixel centers.

struct Camera {
  double focal = 0.0;     // pixels
  int width = 0, height = 0;
  double cx = 0.0, cy = 0.0;                 // principal point, pixels
  std::array<std::array<double, 4>, 3> pose; // camera-to-world [R|t]
  double t_near = 0.0, t_far = 0.0;          // world units

  /// World-units extent of one pixel at unit depth.
  double pixel_size() const { return 1.0 / focal; }

  void validate() const;
  Vec3 origin() const { return {pose[0][3], pose[1][3], pose[2][3]}; }
  Vec3 rotate(const Vec3& v) const;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;   // un-normalized; z-depth parameterization
  Vec3 view_dir;    // direction / |direction|
  double t_near = 0.0, t_far = 0.0;
  Vec3 truth_color; // supervision, in [0,1]^3
};

/// Ordered depth samples along one ray, with the bin edges they were drawn
/// from and the per-sample interval lengths. The terminal interval uses a
/// configured gap because t_{K+1} does not exist.
struct DepthSamples {
  std::vector<double> t;      // strictly increasing, inside [t_near, t_far]
  std::vector<double> edges;  // bin edges, size t.size()+1 (coarse bins)
  std::vector<double> dt;     // dt[k] = t[k+1]-t[k]; dt.back() = terminal gap

  size_t size() const { return t.size(); }
  void validate() const;
};

/// One ray per pixel through the pixel center, row-major (row from the top,
/// then column), deterministic.
std::vector<Ray> generate_rays(const Camera& camera);

/// Single ray for pixel (ix, iy).
Ray generate_ray(const Camera& camera, int ix, int iy);

/// K evenly spaced bins over [t_near, t_far], one uniform draw per bin.
/// Errors for K < 2.
DepthSamples stratified_sample(const Ray& ray, int k, Rng& rng, double terminal_gap = -1.0);

/// Deterministic variant with every sample at its bin midpoint (used for
/// evaluation renders).
DepthSamples midpoint_sample(const Ray& ray, int k, double terminal_gap = -1.0);

/// Inverse-transform draws from the piecewise-constant pdf proportional to
/// `weights` over `edges` (len(weights)+1 edges). All-zero weights fall back
/// to the uniform pdf. When `stratify_u` is true the u-grid ((i+0.5)/n) is
/// used instead of rng draws (deterministic).
std::vector<double> sample_importance(std::span<const double> edges, std::span<const double> weights,
                                      int n, Rng& rng, bool stratify_u = false);

/// Importance-samples k_fine depths from the coarse weights, then merges and
/// sorts them with the coarse samples into one DepthSamples.
DepthSamples hierarchical_sample(const DepthSamples& coarse, std::span<const double> weights,
                                 int k_fine, Rng& rng, double terminal_gap = -1.0,
                                 bool stratify_u = false);

/// A batch of rays with their per-ray depth samples flattened for the tensor
/// pipeline. Sample rows are ray-major: ray i occupies rows [i*k, (i+1)*k).
struct RayBatch {
  int b = 0;                    // rays
  int k = 0;                    // samples per ray
  std::vector<double> origin;   // [B*3]
  std::vector<double> dir;      // [B*3], un-normalized (z-depth parameterization)
  std::vector<double> view_dir; // [B*3], unit
  std::vector<double> truth;    // [B*3] supervision colors
  std::vector<double> t;        // [B*K] depths, strictly increasing per ray
  std::vector<double> dt;       // [B*K] intervals; dt of the last sample is the terminal gap
  double terminal_gap = 0.0;
  double focal = 0.0;           // pixels; used for the view-direction frustum radius
  double pixel_size = 0.0;      // world units at unit depth

  void set_samples(int ray_index, const DepthSamples& s);
};

/// Assembles a batch skeleton (rays only; call set_samples per ray after).
RayBatch make_ray_batch(std::span<const Ray> rays, int k, double focal, double pixel_size);

}  // namespace advnerf
