#include "advnerf/advnerf.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "advnerf/config.hpp"
#include "advnerf/geometry.hpp"
#include "advnerf/metrics.hpp"
#include "advnerf/scene.hpp"
#include "advnerf/trainer.hpp"

using namespace advnerf;

namespace fs = std::filesystem;

struct anf_scene {
  SceneDataset data;
};

struct anf_field {
  RadianceField field;
};

namespace {

thread_local std::string g_last_error;

anf_status code_of(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidArgument: return ANF_ERR_INVALID_ARGUMENT;
    case ErrorCode::ShapeMismatch: return ANF_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return ANF_ERR_IO;
    case ErrorCode::BadFormat: return ANF_ERR_BAD_FORMAT;
    case ErrorCode::Numeric: return ANF_ERR_NUMERIC;
    case ErrorCode::Internal: return ANF_ERR_INTERNAL;
  }
  return ANF_ERR_INTERNAL;
}

template <typename Fn>
anf_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ANF_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return code_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ANF_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ANF_ERR_INTERNAL;
  }
}

nlohmann::json parse_optional_json(const char* text, const char* what) {
  if (text == nullptr || *text == '\0') return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::BadFormat, cat(what, ": invalid JSON: ", e.what()));
  }
}

void fill_buffer(const std::string& s, char* buf, size_t bufsize) {
  if (buf == nullptr || bufsize == 0) return;
  const size_t n = std::min(s.size(), bufsize - 1);
  std::memcpy(buf, s.data(), n);
  buf[n] = '\0';
}

void require(bool cond, const char* message) {
  if (!cond) fail(ErrorCode::InvalidArgument, message);
}

const std::vector<Camera>& split_cameras(const SceneDataset& s, const std::string& split) {
  if (split == "train") return s.train_cameras;
  if (split == "test") return s.test_cameras;
  fail(ErrorCode::InvalidArgument, "split must be \"train\" or \"test\", got \"" + split + "\"");
}

const std::vector<Image>& split_images(const SceneDataset& s, const std::string& split) {
  return split == "train" ? s.train_images : s.test_images;
}

}  // namespace

extern "C" {

const char* anf_status_name(anf_status status) {
  switch (status) {
    case ANF_OK: return "ok";
    case ANF_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case ANF_ERR_IO: return "io";
    case ANF_ERR_BAD_FORMAT: return "bad_format";
    case ANF_ERR_NUMERIC: return "numeric";
    case ANF_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* anf_last_error(void) { return g_last_error.c_str(); }

const char* anf_version(void) { return "0.1.0"; }

anf_status anf_scene_load(const char* dir, const char* options_json, anf_scene** out) {
  return guarded([&] {
    require(dir != nullptr && out != nullptr, "anf_scene_load: null argument");
    LoadOptions opt = parse_load_options(parse_optional_json(options_json, "load options"));
    auto scene = std::make_unique<anf_scene>(anf_scene{load_scene(dir, opt)});
    *out = scene.release();
  });
}

anf_status anf_scene_generate_toy(const char* spec_json, uint64_t seed, anf_scene** out) {
  return guarded([&] {
    require(out != nullptr, "anf_scene_generate_toy: null output");
    ToySpec spec = parse_toy_spec(parse_optional_json(spec_json, "toy spec"));
    Rng rng(seed);
    auto scene = std::make_unique<anf_scene>(anf_scene{generate_toy_scene(spec, rng)});
    *out = scene.release();
  });
}

anf_status anf_scene_save(const anf_scene* scene, const char* dir) {
  return guarded([&] {
    require(scene != nullptr && dir != nullptr, "anf_scene_save: null argument");
    save_scene(scene->data, dir);
  });
}

anf_status anf_scene_corrupt(const anf_scene* scene, const char* kind, int severity, uint64_t seed,
                             anf_scene** out) {
  return guarded([&] {
    require(scene != nullptr && kind != nullptr && out != nullptr, "anf_scene_corrupt: null argument");
    auto copy = std::make_unique<anf_scene>(
        anf_scene{corrupt_scene(scene->data, corruption_from_name(kind), severity, seed)});
    *out = copy.release();
  });
}

anf_status anf_scene_info(const anf_scene* scene, char* buf, size_t bufsize) {
  return guarded([&] {
    require(scene != nullptr, "anf_scene_info: null scene");
    nlohmann::json j;
    j["name"] = scene->data.name;
    j["train_views"] = scene->data.train_cameras.size();
    j["test_views"] = scene->data.test_cameras.size();
    if (!scene->data.train_images.empty()) {
      j["width"] = scene->data.train_images[0].width;
      j["height"] = scene->data.train_images[0].height;
    }
    j["near"] = scene->data.t_near;
    j["far"] = scene->data.t_far;
    fill_buffer(j.dump(), buf, bufsize);
  });
}

void anf_scene_free(anf_scene* scene) { delete scene; }

anf_status anf_field_load(const char* checkpoint_path, anf_field** out) {
  return guarded([&] {
    require(checkpoint_path != nullptr && out != nullptr, "anf_field_load: null argument");
    auto f = std::make_unique<anf_field>(anf_field{RadianceField::load_checkpoint(checkpoint_path)});
    *out = f.release();
  });
}

void anf_field_free(anf_field* field) { delete field; }

anf_status anf_train(const anf_scene* scene, const char* config_json, const char* out_dir,
                     anf_field** out_field) {
  return guarded([&] {
    require(scene != nullptr && out_dir != nullptr, "anf_train: null argument");
    FullConfig cfg = parse_full_config(parse_optional_json(config_json, "config"));
    TrainResult res = train(scene->data, cfg.train, cfg.attack, out_dir);
    if (out_field != nullptr)
      *out_field = std::make_unique<anf_field>(anf_field{std::move(res.field)}).release();
  });
}

anf_status anf_render(const anf_field* field, const anf_scene* scene, const char* split,
                      const char* config_json, const char* out_dir) {
  return guarded([&] {
    require(field != nullptr && scene != nullptr && split != nullptr && out_dir != nullptr,
            "anf_render: null argument");
    FullConfig cfg = parse_full_config(parse_optional_json(config_json, "config"));
    const auto& cams = split_cameras(scene->data, split);
    require(!cams.empty(), "anf_render: empty split");
    fs::create_directories(out_dir);

    ViewRenderSettings vs;
    vs.samples_coarse = cfg.train.samples_coarse;
    vs.samples_fine = cfg.train.samples_fine;
    vs.options = cfg.train.render;
    if (!vs.options.background) vs.options.background = scene->data.background;

    for (size_t i = 0; i < cams.size(); ++i) {
      ViewRender vr = render_view(field->field, cams[i], vs);
      const fs::path base = fs::path(out_dir) / cat(split, "_", i);
      write_png(base.string() + ".png", vr.color);
      write_png16_gray(base.string() + "_depth.png", vr.depth, cams[i].width, cams[i].height,
                       cams[i].t_near, cams[i].t_far);
      write_raw_f32(base.string() + "_depth.f32", vr.depth);
    }
  });
}

anf_status anf_eval(const anf_field* field, const anf_scene* scene, const char* split,
                    const char* config_json, const char* out_csv, char* report_buf, size_t bufsize) {
  return guarded([&] {
    require(field != nullptr && scene != nullptr && split != nullptr && out_csv != nullptr,
            "anf_eval: null argument");
    FullConfig cfg = parse_full_config(parse_optional_json(config_json, "config"));
    const auto& cams = split_cameras(scene->data, split);
    const auto& imgs = split_images(scene->data, split);
    require(!cams.empty(), "anf_eval: empty split");

    ViewRenderSettings vs;
    vs.samples_coarse = cfg.train.samples_coarse;
    vs.samples_fine = cfg.train.samples_fine;
    vs.options = cfg.train.render;
    if (!vs.options.background) vs.options.background = scene->data.background;

    std::ofstream csv(out_csv);
    if (!csv) fail(ErrorCode::Io, cat("anf_eval: cannot write ", out_csv));
    csv << "view,psnr,ssim,average,terms\n";
    double mp = 0.0, ms = 0.0, ma = 0.0;
    for (size_t i = 0; i < cams.size(); ++i) {
      ViewRender vr = render_view(field->field, cams[i], vs);
      MetricReport r = evaluate_pair(vr.color, imgs[i]);
      csv << i << ',' << r.psnr << ',' << r.ssim << ',' << r.average << ',' << r.terms << '\n';
      mp += r.psnr;
      ms += r.ssim;
      ma += r.average;
    }
    const double n = static_cast<double>(cams.size());
    csv << "mean," << mp / n << ',' << ms / n << ',' << ma / n << ",2\n";

    nlohmann::json j;
    j["split"] = split;
    j["views"] = cams.size();
    j["psnr"] = mp / n;
    j["ssim"] = ms / n;
    j["average"] = ma / n;
    fill_buffer(j.dump(), report_buf, bufsize);
  });
}

anf_status anf_export_mesh(const anf_field* field, int resolution, double threshold,
                           const char* out_obj, int export_volume) {
  return guarded([&] {
    require(field != nullptr && out_obj != nullptr, "anf_export_mesh: null argument");
    DensityGrid grid = export_density_grid(field->field, resolution);
    TriangleMesh mesh = marching_cubes(grid, threshold);
    write_obj(mesh, out_obj);
    if (export_volume) {
      std::string base = out_obj;
      if (base.size() > 4 && base.substr(base.size() - 4) == ".obj") base.resize(base.size() - 4);
      save_density_grid(grid, base + "_density");
    }
  });
}

}  // extern "C"
