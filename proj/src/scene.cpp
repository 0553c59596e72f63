#include "advnerf/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "advnerf/adversary.hpp"

namespace advnerf {

namespace fs = std::filesystem;
using nlohmann::json;

void SceneDataset::validate() const {
  if (train_cameras.size() != train_images.size() || test_cameras.size() != test_images.size())
    fail(ErrorCode::InvalidArgument, "SceneDataset: image/camera count mismatch");
  auto check = [](const Camera& c, const Image& img) {
    if (c.width != img.width || c.height != img.height)
      fail(ErrorCode::InvalidArgument,
           cat("SceneDataset: image ", img.width, "x", img.height, " does not match camera ", c.width, "x",
               c.height));
  };
  for (size_t i = 0; i < train_cameras.size(); ++i) check(train_cameras[i], train_images[i]);
  for (size_t i = 0; i < test_cameras.size(); ++i) check(test_cameras[i], test_images[i]);
}

Camera make_camera(double focal, int width, int height, const std::array<std::array<double, 4>, 3>& pose,
                   double t_near, double t_far) {
  Camera c;
  c.focal = focal;
  c.width = width;
  c.height = height;
  c.cx = width / 2.0;
  c.cy = height / 2.0;
  c.pose = pose;
  c.t_near = t_near;
  c.t_far = t_far;
  c.validate();
  return c;
}

namespace {

struct SplitData {
  std::vector<Camera> cameras;
  std::vector<Image> images;
};

SplitData load_split(const fs::path& dir, const std::string& split, const LoadOptions& opt,
                     double t_near, double t_far) {
  const fs::path tf = dir / ("transforms_" + split + ".json");
  std::ifstream in(tf);
  if (!in) fail(ErrorCode::Io, "load_scene: missing transforms file " + tf.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::BadFormat, cat("load_scene: ", tf.string(), ": ", e.what()));
  }
  if (!j.contains("camera_angle_x"))
    fail(ErrorCode::BadFormat, "load_scene: camera_angle_x missing in " + tf.string());
  const double fov = j.at("camera_angle_x").get<double>();

  SplitData out;
  for (const auto& frame : j.at("frames")) {
    const auto& m = frame.at("transform_matrix");
    if (!m.is_array() || m.size() != 4)
      fail(ErrorCode::BadFormat,
           cat("load_scene: transform_matrix must have 4 rows in ", tf.string()));
    std::array<std::array<double, 4>, 3> pose{};
    for (int r = 0; r < 3; ++r) {
      if (!m[static_cast<size_t>(r)].is_array() || m[static_cast<size_t>(r)].size() != 4)
        fail(ErrorCode::BadFormat,
             cat("load_scene: transform_matrix row ", r, " must have 4 entries in ", tf.string()));
      for (int c = 0; c < 4; ++c) pose[static_cast<size_t>(r)][static_cast<size_t>(c)] =
          m[static_cast<size_t>(r)][static_cast<size_t>(c)].get<double>();
    }

    std::string rel = frame.at("file_path").get<std::string>();
    fs::path img_path = dir / (rel + ".png");
    if (!fs::exists(img_path)) img_path = dir / rel;  // extension already present
    if (!fs::exists(img_path))
      fail(ErrorCode::Io, "load_scene: missing image " + (dir / (rel + ".png")).string());
    Image img = read_png(img_path.string(), opt.background);
    if (opt.downsample > 1) img = downsample(img, opt.downsample);

    const double focal = 0.5 * img.width / std::tan(0.5 * fov);
    out.cameras.push_back(make_camera(focal, img.width, img.height, pose, t_near, t_far));
    out.images.push_back(std::move(img));
  }
  return out;
}

}  // namespace

SceneDataset load_scene(const std::string& dir, const LoadOptions& opt) {
  const fs::path root(dir);
  if (!fs::exists(root)) fail(ErrorCode::Io, "load_scene: no such directory: " + dir);

  SceneDataset scene;
  scene.name = root.filename().string();
  scene.background = opt.background;
  scene.t_near = opt.default_near;
  scene.t_far = opt.default_far;

  // optional scene metadata (written by the toy generator)
  const fs::path meta = root / "scene.json";
  if (fs::exists(meta)) {
    std::ifstream in(meta);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      fail(ErrorCode::BadFormat, cat("load_scene: ", meta.string(), ": ", e.what()));
    }
    scene.t_near = j.value("near", scene.t_near);
    scene.t_far = j.value("far", scene.t_far);
    if (j.contains("background")) {
      auto bg = j.at("background").get<std::vector<double>>();
      if (bg.size() == 3) scene.background = {bg[0], bg[1], bg[2]};
    }
  }

  SplitData train = load_split(root, "train", opt, scene.t_near, scene.t_far);
  SplitData test = load_split(root, "test", opt, scene.t_near, scene.t_far);
  scene.train_cameras = std::move(train.cameras);
  scene.train_images = std::move(train.images);
  scene.test_cameras = std::move(test.cameras);
  scene.test_images = std::move(test.images);
  scene.validate();
  return scene;
}

namespace {

json split_json(const std::vector<Camera>& cams, const std::string& split) {
  json j;
  if (cams.empty()) fail(ErrorCode::InvalidArgument, "save_scene: empty split " + split);
  j["camera_angle_x"] = 2.0 * std::atan(0.5 * cams[0].width / cams[0].focal);
  json frames = json::array();
  for (size_t i = 0; i < cams.size(); ++i) {
    json m = json::array();
    for (int r = 0; r < 3; ++r) {
      json row = json::array();
      for (int c = 0; c < 4; ++c) row.push_back(cams[i].pose[static_cast<size_t>(r)][static_cast<size_t>(c)]);
      m.push_back(row);
    }
    m.push_back({0.0, 0.0, 0.0, 1.0});
    frames.push_back({{"file_path", cat("./", split, "/r_", i)}, {"transform_matrix", m}});
  }
  j["frames"] = std::move(frames);
  return j;
}

void save_split(const fs::path& dir, const std::string& split, const std::vector<Camera>& cams,
                const std::vector<Image>& images) {
  fs::create_directories(dir / split);
  json j = split_json(cams, split);
  std::ofstream out(dir / ("transforms_" + split + ".json"));
  if (!out) fail(ErrorCode::Io, "save_scene: cannot write transforms for " + split);
  out << j.dump(2) << "\n";
  for (size_t i = 0; i < images.size(); ++i)
    write_png((dir / split / cat("r_", i, ".png")).string(), images[i]);
}

}  // namespace

void save_scene(const SceneDataset& scene, const std::string& dir) {
  scene.validate();
  const fs::path root(dir);
  fs::create_directories(root);
  save_split(root, "train", scene.train_cameras, scene.train_images);
  save_split(root, "test", scene.test_cameras, scene.test_images);
  json meta;
  meta["name"] = scene.name;
  meta["near"] = scene.t_near;
  meta["far"] = scene.t_far;
  meta["background"] = {scene.background.x, scene.background.y, scene.background.z};
  std::ofstream out(root / "scene.json");
  if (!out) fail(ErrorCode::Io, "save_scene: cannot write scene.json");
  out << meta.dump(2) << "\n";
}

SceneDataset corrupt_scene(const SceneDataset& scene, CorruptionKind kind, int severity, uint64_t seed) {
  SceneDataset out = scene;
  Rng base(seed);
  for (size_t i = 0; i < out.train_images.size(); ++i) {
    Rng stream = base.fork(i);
    out.train_images[i] = corrupt_image(out.train_images[i], kind, severity, stream);
  }
  return out;
}

// --- toy scenes -----------------------------------------------------------------

void ToySpec::validate() const {
  if (train_views < 1 || test_views < 0) fail(ErrorCode::InvalidArgument, "ToySpec: bad view counts");
  if (resolution < 12) fail(ErrorCode::InvalidArgument, "ToySpec: resolution too small");
  if (!(0.0 < t_near && t_near < t_far)) fail(ErrorCode::InvalidArgument, "ToySpec: bad near/far");
  if (oracle_samples < 16) fail(ErrorCode::InvalidArgument, "ToySpec: oracle_samples too small");
}

AnalyticField make_analytic_field(const std::string& kind) {
  // solid primitives with crisp colors; densities chosen so a full chord
  // saturates (sigma * chord >> 1)
  if (kind == "sphere") {
    return {[](const Vec3& p) { return p.norm() <= 0.5 ? 8.0 : 0.0; },
            [](const Vec3&) { return Vec3{0.9, 0.25, 0.2}; }};
  }
  if (kind == "box") {
    return {[](const Vec3& p) {
              return (std::abs(p.x) <= 0.4 && std::abs(p.y) <= 0.4 && std::abs(p.z) <= 0.4) ? 8.0 : 0.0;
            },
            [](const Vec3&) { return Vec3{0.2, 0.4, 0.9}; }};
  }
  if (kind == "blobs") {
    const Vec3 mu1{-0.45, 0.0, 0.1}, mu2{0.45, 0.1, -0.1};
    const double s2 = 0.18 * 0.18 * 2.0;
    auto g1 = [=](const Vec3& p) { return 6.0 * std::exp(-(p - mu1).dot(p - mu1) / s2); };
    auto g2 = [=](const Vec3& p) { return 6.0 * std::exp(-(p - mu2).dot(p - mu2) / s2); };
    return {[=](const Vec3& p) { return g1(p) + g2(p); },
            [=](const Vec3& p) {
              const double a = g1(p), b = g2(p);
              const double t = a + b;
              if (t <= 0.0) return Vec3{0, 0, 0};
              return (Vec3{0.95, 0.6, 0.15} * a + Vec3{0.25, 0.8, 0.5} * b) / t;
            }};
  }
  if (kind == "spherebox") {
    auto sphere = make_analytic_field("sphere");
    auto box = make_analytic_field("box");
    const Vec3 sc{-0.45, 0.0, 0.05};
    const Vec3 bc{0.42, 0.05, -0.12};
    const double sr = 0.34, bh = 0.28;
    auto sig_s = [=](const Vec3& p) { return (p - sc).norm() <= sr ? 9.0 : 0.0; };
    auto sig_b = [=](const Vec3& p) {
      const Vec3 q = p - bc;
      return (std::abs(q.x) <= bh && std::abs(q.y) <= bh && std::abs(q.z) <= bh) ? 9.0 : 0.0;
    };
    return {[=](const Vec3& p) { return sig_s(p) + sig_b(p); },
            [=](const Vec3& p) {
              const double a = sig_s(p), b = sig_b(p);
              const double t = a + b;
              if (t <= 0.0) return Vec3{0, 0, 0};
              return (Vec3{0.9, 0.3, 0.2} * a + Vec3{0.25, 0.45, 0.9} * b) / t;
            }};
  }
  fail(ErrorCode::InvalidArgument, "make_analytic_field: unknown kind " + kind);
}

Image oracle_render(const AnalyticField& field, const Camera& camera, int k, const Vec3& background) {
  Image img;
  img.width = camera.width;
  img.height = camera.height;
  img.data.resize(img.pixels() * 3);
  RenderOptions opt;
  opt.background = background;
  opt.sigma_max = 1e30;  // analytic ground truth is never perturbed

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      Ray ray = generate_ray(camera, x, y);
      DepthSamples s = midpoint_sample(ray, k);
      std::vector<FieldOutput> outs(s.size());
      for (size_t i = 0; i < s.size(); ++i) {
        const Vec3 p = ray.origin + ray.direction * s.t[i];
        outs[i].sigma = field.sigma(p);
        outs[i].color = field.color(p);
      }
      RenderValues rv = composite_values(s, outs, opt);
      img.set_pixel(x, y, rv.color);
    }
  }
  return img;
}

namespace {

Camera rig_camera(const ToySpec& spec, double azimuth_rad) {
  const double el = spec.elevation_deg * M_PI / 180.0;
  const Vec3 p{spec.camera_radius * std::cos(azimuth_rad) * std::cos(el),
               spec.camera_radius * std::sin(azimuth_rad) * std::cos(el),
               spec.camera_radius * std::sin(el)};
  // camera looks at the origin: -z axis points from p toward 0
  const Vec3 zc = p.normalized();
  Vec3 up{0, 0, 1};
  Vec3 xc = up.cross(zc).normalized();
  Vec3 yc = zc.cross(xc);
  std::array<std::array<double, 4>, 3> pose{{{xc.x, yc.x, zc.x, p.x},
                                             {xc.y, yc.y, zc.y, p.y},
                                             {xc.z, yc.z, zc.z, p.z}}};
  const double focal = 0.5 * spec.resolution / std::tan(0.5 * spec.fov_deg * M_PI / 180.0);
  return make_camera(focal, spec.resolution, spec.resolution, pose, spec.t_near, spec.t_far);
}

}  // namespace

SceneDataset generate_toy_scene(const ToySpec& spec, Rng& rng) {
  (void)rng;  // rig jitter hook; the default rig is deterministic
  spec.validate();
  AnalyticField field = make_analytic_field(spec.kind);

  SceneDataset scene;
  scene.name = spec.kind;
  scene.background = spec.background;
  scene.t_near = spec.t_near;
  scene.t_far = spec.t_far;

  const int total = spec.train_views + spec.test_views;
  // training azimuths evenly spaced; test azimuths at the largest gaps
  for (int i = 0; i < spec.train_views; ++i) {
    const double az = 2.0 * M_PI * static_cast<double>(i) / spec.train_views;
    scene.train_cameras.push_back(rig_camera(spec, az));
  }
  for (int i = 0; i < spec.test_views; ++i) {
    const double az = 2.0 * M_PI * (static_cast<double>(i) + 0.5) / std::max(spec.test_views, 1) +
                      M_PI / std::max(total, 1);
    scene.test_cameras.push_back(rig_camera(spec, az));
  }

  for (const auto& cam : scene.train_cameras)
    scene.train_images.push_back(oracle_render(field, cam, spec.oracle_samples, spec.background));
  for (const auto& cam : scene.test_cameras)
    scene.test_images.push_back(oracle_render(field, cam, spec.oracle_samples, spec.background));

  scene.validate();
  return scene;
}

// --- view rendering ---------------------------------------------------------------

ViewRender render_view(const RadianceField& field, const Camera& camera, const ViewRenderSettings& s) {
  camera.validate();
  ViewRender out;
  out.color.width = camera.width;
  out.color.height = camera.height;
  out.color.data.resize(out.color.pixels() * 3);
  out.depth.resize(out.color.pixels());
  out.opacity.resize(out.color.pixels());

  std::vector<Ray> rays = generate_rays(camera);
  Rng unused(0);

  for (size_t start = 0; start < rays.size(); start += static_cast<size_t>(s.chunk)) {
    const size_t count = std::min(static_cast<size_t>(s.chunk), rays.size() - start);
    std::span<const Ray> chunk(rays.data() + start, count);
    const int k_total = s.samples_coarse + s.samples_fine;
    RayBatch batch = make_ray_batch(chunk, k_total, camera.focal, camera.pixel_size());

    // deterministic coarse pass for importance weights
    std::vector<DepthSamples> coarse(count);
    std::vector<double> pos(count * static_cast<size_t>(s.samples_coarse) * 3);
    for (size_t i = 0; i < count; ++i) {
      coarse[i] = midpoint_sample(chunk[i], s.samples_coarse);
      for (int j = 0; j < s.samples_coarse; ++j) {
        const Vec3 p = chunk[i].origin + chunk[i].direction * coarse[i].t[static_cast<size_t>(j)];
        const size_t r = (i * static_cast<size_t>(s.samples_coarse) + static_cast<size_t>(j)) * 3;
        pos[r] = p.x;
        pos[r + 1] = p.y;
        pos[r + 2] = p.z;
      }
    }
    Tensor sig = field.sigma_forward(
        Tensor::from(std::move(pos), {static_cast<int>(count) * s.samples_coarse, 3}));
    auto sv = sig.values();
    for (size_t i = 0; i < count; ++i) {
      std::vector<double> w(static_cast<size_t>(s.samples_coarse));
      double optical = 0.0;
      for (int j = 0; j < s.samples_coarse; ++j) {
        const double sigma = sv[i * static_cast<size_t>(s.samples_coarse) + static_cast<size_t>(j)];
        const double dt = coarse[i].dt[static_cast<size_t>(j)];
        w[static_cast<size_t>(j)] = std::exp(-optical) * (1.0 - std::exp(-sigma * dt));
        optical += sigma * dt;
      }
      DepthSamples merged =
          hierarchical_sample(coarse[i], w, s.samples_fine, unused, -1.0, /*stratify_u=*/true);
      batch.set_samples(static_cast<int>(i), merged);
    }

    RenderOutput ro = render_batch(field, batch, nullptr, s.options, /*freeze_params=*/true);
    auto cv = ro.color.values();
    auto dv = ro.depth.values();
    auto ov = ro.opacity.values();
    for (size_t i = 0; i < count; ++i) {
      const size_t px = start + i;
      out.color.data[px * 3] = std::min(std::max(cv[i * 3], 0.0), 1.0);
      out.color.data[px * 3 + 1] = std::min(std::max(cv[i * 3 + 1], 0.0), 1.0);
      out.color.data[px * 3 + 2] = std::min(std::max(cv[i * 3 + 2], 0.0), 1.0);
      out.depth[px] = dv[i];
      out.opacity[px] = ov[i];
    }
  }
  return out;
}

}  // namespace advnerf
