#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "advnerf/common.hpp"
#include "advnerf/field.hpp"
#include "advnerf/image.hpp"
#include "advnerf/metrics.hpp"
#include "advnerf/rays.hpp"
#include "advnerf/renderer.hpp"

namespace advnerf {

// Scene ingestion: the standard transforms-JSON + PNG layout
// (transforms_train.json / transforms_test.json, camera_angle_x, per-frame
// 4x4 camera-to-world matrices) plus procedurally generated toy scenes whose
// ground truth comes from compositing analytic density/color fields at a
// high sample count through the shared renderer.

struct SceneDataset {
  std::string name;
  std::vector<Camera> train_cameras, test_cameras;
  std::vector<Image> train_images, test_images;
  Vec3 background{0, 0, 0};
  double t_near = 2.0, t_far = 6.0;

  void validate() const;
};

struct LoadOptions {
  Vec3 background{0, 0, 0};
  double default_near = 2.0, default_far = 6.0;
  int downsample = 1;  // integer factor applied to images and intrinsics
};

SceneDataset load_scene(const std::string& dir, const LoadOptions& opt = {});
void save_scene(const SceneDataset& scene, const std::string& dir);

/// Applies a supervision corruption to every training image (test images stay
/// clean), with one forked rng stream per image.
SceneDataset corrupt_scene(const SceneDataset& scene, CorruptionKind kind, int severity, uint64_t seed);

// --- toy scenes -----------------------------------------------------------------

/// Analytic density + color field; bounded, nonnegative, supported in [-1,1]^3.
struct AnalyticField {
  std::function<double(const Vec3&)> sigma;
  std::function<Vec3(const Vec3&)> color;
};

struct ToySpec {
  std::string kind = "spherebox";  // sphere | box | blobs | spherebox
  int train_views = 8;
  int test_views = 4;
  int resolution = 64;
  double camera_radius = 3.2;
  double elevation_deg = 28.0;
  double t_near = 1.4;
  double t_far = 5.2;
  double fov_deg = 42.0;
  int oracle_samples = 512;
  Vec3 background{0, 0, 0};

  void validate() const;
};

AnalyticField make_analytic_field(const std::string& kind);

/// Ground-truth image of the analytic field through one camera, composited
/// midpoint quadrature with k samples per ray.
Image oracle_render(const AnalyticField& field, const Camera& camera, int k, const Vec3& background);

/// Cameras on a circle at fixed elevation, all facing the origin; test views
/// sit at azimuths between the training ones. rng is reserved for optional
/// rig jitter and is unused by the default spec.
SceneDataset generate_toy_scene(const ToySpec& spec, Rng& rng);

// --- view rendering through a trained field ---------------------------------------

struct ViewRenderSettings {
  int samples_coarse = 32;
  int samples_fine = 32;
  RenderOptions options;
  int chunk = 1024;  // rays per forward batch
};

struct ViewRender {
  Image color;
  std::vector<double> depth;    // expected termination distance per pixel
  std::vector<double> opacity;  // accumulated opacity per pixel
};

/// Renders a full view with deterministic sampling (midpoint coarse pass,
/// stratified-u importance resampling).
ViewRender render_view(const RadianceField& field, const Camera& camera, const ViewRenderSettings& s);

/// Camera helper shared by loaders and the toy generator.
Camera make_camera(double focal, int width, int height, const std::array<std::array<double, 4>, 3>& pose,
                   double t_near, double t_far);

}  // namespace advnerf
