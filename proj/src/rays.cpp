#include "advnerf/rays.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace advnerf {

void Camera::validate() const {
  if (focal <= 0.0) fail(ErrorCode::InvalidArgument, "Camera: focal must be positive");
  if (width <= 0 || height <= 0) fail(ErrorCode::InvalidArgument, "Camera: empty image plane");
  if (!(0.0 < t_near && t_near < t_far))
    fail(ErrorCode::InvalidArgument, cat("Camera: need 0 < near < far, got [", t_near, ",", t_far, "]"));
  for (int a = 0; a < 3; ++a) {
    Vec3 ca{pose[0][a], pose[1][a], pose[2][a]};
    for (int b = 0; b < 3; ++b) {
      Vec3 cb{pose[0][b], pose[1][b], pose[2][b]};
      double expect = a == b ? 1.0 : 0.0;
      if (std::abs(ca.dot(cb) - expect) > 1e-6)
        fail(ErrorCode::InvalidArgument, "Camera: rotation block is not orthonormal within 1e-6");
    }
  }
}

Vec3 Camera::rotate(const Vec3& v) const {
  return {pose[0][0] * v.x + pose[0][1] * v.y + pose[0][2] * v.z,
          pose[1][0] * v.x + pose[1][1] * v.y + pose[1][2] * v.z,
          pose[2][0] * v.x + pose[2][1] * v.y + pose[2][2] * v.z};
}

void DepthSamples::validate() const {
  if (t.empty()) fail(ErrorCode::InvalidArgument, "DepthSamples: empty");
  if (dt.size() != t.size()) fail(ErrorCode::InvalidArgument, "DepthSamples: dt size mismatch");
  for (size_t i = 0; i + 1 < t.size(); ++i)
    if (!(t[i] < t[i + 1])) fail(ErrorCode::InvalidArgument, "DepthSamples: not strictly increasing");
  for (double d : dt)
    if (!(d > 0.0)) fail(ErrorCode::InvalidArgument, "DepthSamples: non-positive interval");
}

Ray generate_ray(const Camera& camera, int ix, int iy) {
  // camera space: x right, y up, looking down -z
  const double u = (static_cast<double>(ix) + 0.5 - camera.cx) / camera.focal;
  const double v = -((static_cast<double>(iy) + 0.5 - camera.cy) / camera.focal);
  Vec3 dir_cam{u, v, -1.0};
  Ray r;
  r.origin = camera.origin();
  r.direction = camera.rotate(dir_cam);
  r.view_dir = r.direction.normalized();
  r.t_near = camera.t_near;
  r.t_far = camera.t_far;
  return r;
}

std::vector<Ray> generate_rays(const Camera& camera) {
  camera.validate();
  std::vector<Ray> rays;
  rays.reserve(static_cast<size_t>(camera.width) * camera.height);
  for (int iy = 0; iy < camera.height; ++iy)
    for (int ix = 0; ix < camera.width; ++ix) rays.push_back(generate_ray(camera, ix, iy));
  return rays;
}

namespace {

DepthSamples finalize_samples(std::vector<double> t, std::vector<double> edges, double terminal_gap) {
  DepthSamples s;
  s.t = std::move(t);
  s.edges = std::move(edges);
  s.dt.resize(s.t.size());
  for (size_t i = 0; i + 1 < s.t.size(); ++i) s.dt[i] = s.t[i + 1] - s.t[i];
  s.dt.back() = terminal_gap;
  return s;
}

std::vector<double> uniform_edges(const Ray& ray, int k) {
  const double w = (ray.t_far - ray.t_near) / static_cast<double>(k);
  std::vector<double> edges(static_cast<size_t>(k) + 1);
  for (int i = 0; i <= k; ++i) edges[static_cast<size_t>(i)] = ray.t_near + w * static_cast<double>(i);
  return edges;
}

}  // namespace

DepthSamples stratified_sample(const Ray& ray, int k, Rng& rng, double terminal_gap) {
  if (k < 2) fail(ErrorCode::InvalidArgument, cat("stratified_sample: K must be >= 2, got ", k));
  const double w = (ray.t_far - ray.t_near) / static_cast<double>(k);
  if (terminal_gap <= 0.0) terminal_gap = w;
  std::vector<double> edges = uniform_edges(ray, k);
  std::vector<double> t(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) t[static_cast<size_t>(i)] = edges[static_cast<size_t>(i)] + w * rng.uniform();
  return finalize_samples(std::move(t), std::move(edges), terminal_gap);
}

DepthSamples midpoint_sample(const Ray& ray, int k, double terminal_gap) {
  if (k < 2) fail(ErrorCode::InvalidArgument, cat("midpoint_sample: K must be >= 2, got ", k));
  const double w = (ray.t_far - ray.t_near) / static_cast<double>(k);
  if (terminal_gap <= 0.0) terminal_gap = w;
  std::vector<double> edges = uniform_edges(ray, k);
  std::vector<double> t(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) t[static_cast<size_t>(i)] = ray.t_near + w * (static_cast<double>(i) + 0.5);
  return finalize_samples(std::move(t), std::move(edges), terminal_gap);
}

std::vector<double> sample_importance(std::span<const double> edges, std::span<const double> weights,
                                      int n, Rng& rng, bool stratify_u) {
  if (edges.size() != weights.size() + 1)
    fail(ErrorCode::InvalidArgument,
         cat("sample_importance: ", weights.size(), " weights need ", weights.size() + 1,
             " edges, got ", edges.size()));
  if (n <= 0) fail(ErrorCode::InvalidArgument, "sample_importance: n must be positive");

  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) fail(ErrorCode::InvalidArgument, "sample_importance: negative weight");
    total += w;
  }

  const size_t nb = weights.size();
  std::vector<double> cdf(nb + 1, 0.0);
  if (total > 0.0) {
    for (size_t i = 0; i < nb; ++i) cdf[i + 1] = cdf[i] + weights[i] / total;
    cdf[nb] = 1.0;
  } else {
    // all-zero mass: uniform fallback
    for (size_t i = 0; i <= nb; ++i) cdf[i] = static_cast<double>(i) / static_cast<double>(nb);
  }

  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = stratify_u ? (static_cast<double>(i) + 0.5) / static_cast<double>(n) : rng.uniform();
    // smallest bin with cdf[bin+1] > u
    const auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), u);
    size_t bin = std::min(static_cast<size_t>(it - cdf.begin() - 1), nb - 1);
    const double c0 = cdf[bin], c1 = cdf[bin + 1];
    const double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
    out[static_cast<size_t>(i)] = edges[bin] + frac * (edges[bin + 1] - edges[bin]);
  }
  return out;
}

DepthSamples hierarchical_sample(const DepthSamples& coarse, std::span<const double> weights,
                                 int k_fine, Rng& rng, double terminal_gap, bool stratify_u) {
  if (weights.size() != coarse.t.size())
    fail(ErrorCode::InvalidArgument,
         cat("hierarchical_sample: ", weights.size(), " weights for ", coarse.t.size(), " coarse bins"));
  std::vector<double> fine = sample_importance(coarse.edges, weights, k_fine, rng, stratify_u);

  std::vector<double> merged(coarse.t);
  merged.insert(merged.end(), fine.begin(), fine.end());
  std::sort(merged.begin(), merged.end());
  // exact duplicates would break strict monotonicity; nudge by one ulp
  for (size_t i = 1; i < merged.size(); ++i)
    if (merged[i] <= merged[i - 1])
      merged[i] = std::nextafter(merged[i - 1], std::numeric_limits<double>::infinity());

  if (terminal_gap <= 0.0) terminal_gap = coarse.dt.back();
  DepthSamples s = finalize_samples(std::move(merged), coarse.edges, terminal_gap);
  s.validate();
  return s;
}

void RayBatch::set_samples(int ray_index, const DepthSamples& s) {
  if (static_cast<int>(s.size()) != k)
    fail(ErrorCode::InvalidArgument, cat("RayBatch: ", s.size(), " samples for K=", k));
  const size_t base = static_cast<size_t>(ray_index) * k;
  for (int j = 0; j < k; ++j) {
    t[base + j] = s.t[static_cast<size_t>(j)];
    dt[base + j] = s.dt[static_cast<size_t>(j)];
  }
  terminal_gap = s.dt.back();
}

RayBatch make_ray_batch(std::span<const Ray> rays, int k, double focal, double pixel_size) {
  RayBatch batch;
  batch.b = static_cast<int>(rays.size());
  batch.k = k;
  batch.focal = focal;
  batch.pixel_size = pixel_size;
  batch.origin.resize(rays.size() * 3);
  batch.dir.resize(rays.size() * 3);
  batch.view_dir.resize(rays.size() * 3);
  batch.truth.resize(rays.size() * 3);
  batch.t.resize(rays.size() * static_cast<size_t>(k));
  batch.dt.resize(rays.size() * static_cast<size_t>(k));
  for (size_t i = 0; i < rays.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      batch.origin[i * 3 + c] = rays[i].origin[c];
      batch.dir[i * 3 + c] = rays[i].direction[c];
      batch.view_dir[i * 3 + c] = rays[i].view_dir[c];
      batch.truth[i * 3 + c] = rays[i].truth_color[c];
    }
  }
  return batch;
}

}  // namespace advnerf
