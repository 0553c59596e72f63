// Command-line front end. Links the C API only; everything heavier lives in
// the shared library.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "advnerf/advnerf.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::fprintf(stderr, "error: cannot open config file %s\n", path.c_str());
    std::exit(2);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int fail_status(const char* what, anf_status st) {
  std::fprintf(stderr, "error: %s: %s: %s\n", what, anf_status_name(st), anf_last_error());
  return 1;
}

// config hash + seed + version, next to every run's outputs
void write_manifest(const std::string& out_dir, const std::string& command, const std::string& config_text,
                    uint64_t seed) {
  fs::create_directories(out_dir);
  json j;
  j["command"] = command;
  j["config_hash"] = [&] {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(config_text)));
    return std::string(buf);
  }();
  j["seed"] = seed;
  j["versions"] = {{"advnerf", anf_version()}, {"format", 1}};
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  out << j.dump(2) << "\n";
}

// merges the --seed override into the config text so the library sees it
std::string with_seed(const std::string& config_text, std::optional<uint64_t> seed) {
  if (!seed) return config_text;
  json j = config_text.empty() ? json::object() : json::parse(config_text);
  j["seed"] = *seed;
  return j.dump();
}

struct SceneGuard {
  anf_scene* p = nullptr;
  ~SceneGuard() { anf_scene_free(p); }
};
struct FieldGuard {
  anf_field* p = nullptr;
  ~FieldGuard() { anf_field_free(p); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarially-augmented neural radiance fields"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::optional<uint64_t> seed;
  app.add_option("--config", config_path, "JSON config file")->configurable(false);
  app.add_option("--out", out_path, "output directory/file");
  app.add_option("--seed", seed, "seed override");

  // toy
  auto* toy = app.add_subcommand("toy", "generate a procedural scene with analytic ground truth");
  std::string toy_kind = "spherebox";
  int toy_train = 8, toy_test = 4, toy_res = 64, toy_oracle = 512;
  toy->add_option("--kind", toy_kind, "sphere | box | blobs | spherebox");
  toy->add_option("--train-views", toy_train);
  toy->add_option("--test-views", toy_test);
  toy->add_option("--resolution", toy_res);
  toy->add_option("--oracle-samples", toy_oracle);

  // train
  auto* tr = app.add_subcommand("train", "fit a radiance field to a scene");
  std::string tr_scene;
  tr->add_option("--scene", tr_scene, "scene directory")->required();

  // render
  auto* rd = app.add_subcommand("render", "render images and depth maps from a checkpoint");
  std::string rd_ckpt, rd_scene, rd_split = "test";
  rd->add_option("--checkpoint", rd_ckpt)->required();
  rd->add_option("--scene", rd_scene)->required();
  rd->add_option("--split", rd_split, "train | test");

  // eval
  auto* ev = app.add_subcommand("eval", "image metrics of a checkpoint against a split");
  std::string ev_ckpt, ev_scene, ev_split = "test";
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--scene", ev_scene)->required();
  ev->add_option("--split", ev_split, "train | test");

  // mesh
  auto* me = app.add_subcommand("mesh", "extract an isosurface OBJ from a checkpoint");
  std::string me_ckpt;
  int me_res = 128;
  double me_thresh = 1.0;
  bool me_volume = false;
  me->add_option("--checkpoint", me_ckpt)->required();
  me->add_option("--resolution", me_res, "density lattice resolution");
  me->add_option("--threshold", me_thresh, "isosurface level");
  me->add_flag("--volume", me_volume, "also export the raw density volume");

  // corrupt
  auto* co = app.add_subcommand("corrupt", "corrupted copy of a dataset's training images");
  std::string co_scene, co_kind = "gaussian";
  int co_sev = 3;
  co->add_option("--scene", co_scene)->required();
  co->add_option("--kind", co_kind, "gaussian | shot | pepper");
  co->add_option("--severity", co_sev, "0..5 (0 = identity)");

  CLI11_PARSE(app, argc, argv);

  const std::string config_text = config_path.empty() ? "" : read_file(config_path);
  const std::string effective = with_seed(config_text, seed);
  const uint64_t seed_value = seed.value_or(config_text.empty() ? 42 : [&] {
    json j = json::parse(config_text);
    return j.value("seed", 42ULL);
  }());

  if (toy->parsed()) {
    if (out_path.empty()) {
      std::fprintf(stderr, "error: toy requires --out <dir>\n");
      return 2;
    }
    json spec;
    if (!config_text.empty()) spec = json::parse(config_text);
    spec["kind"] = toy_kind;
    spec["train_views"] = toy_train;
    spec["test_views"] = toy_test;
    spec["resolution"] = toy_res;
    spec["oracle_samples"] = toy_oracle;
    SceneGuard scene;
    anf_status st = anf_scene_generate_toy(spec.dump().c_str(), seed_value, &scene.p);
    if (st != ANF_OK) return fail_status("toy", st);
    st = anf_scene_save(scene.p, out_path.c_str());
    if (st != ANF_OK) return fail_status("toy", st);
    write_manifest(out_path, "toy", spec.dump(), seed_value);
    std::printf("wrote scene to %s\n", out_path.c_str());
    return 0;
  }

  if (tr->parsed()) {
    if (out_path.empty()) {
      std::fprintf(stderr, "error: train requires --out <dir>\n");
      return 2;
    }
    SceneGuard scene;
    anf_status st = anf_scene_load(tr_scene.c_str(), nullptr, &scene.p);
    if (st != ANF_OK) return fail_status("train: load scene", st);
    write_manifest(out_path, "train", effective, seed_value);
    st = anf_train(scene.p, effective.c_str(), out_path.c_str(), nullptr);
    if (st != ANF_OK) return fail_status("train", st);
    std::printf("checkpoint and log written to %s\n", out_path.c_str());
    return 0;
  }

  if (rd->parsed()) {
    if (out_path.empty()) {
      std::fprintf(stderr, "error: render requires --out <dir>\n");
      return 2;
    }
    FieldGuard field;
    anf_status st = anf_field_load(rd_ckpt.c_str(), &field.p);
    if (st != ANF_OK) return fail_status("render: load checkpoint", st);
    SceneGuard scene;
    st = anf_scene_load(rd_scene.c_str(), nullptr, &scene.p);
    if (st != ANF_OK) return fail_status("render: load scene", st);
    st = anf_render(field.p, scene.p, rd_split.c_str(), effective.c_str(), out_path.c_str());
    if (st != ANF_OK) return fail_status("render", st);
    write_manifest(out_path, "render", effective, seed_value);
    std::printf("rendered %s split to %s\n", rd_split.c_str(), out_path.c_str());
    return 0;
  }

  if (ev->parsed()) {
    if (out_path.empty()) {
      std::fprintf(stderr, "error: eval requires --out <csv path>\n");
      return 2;
    }
    FieldGuard field;
    anf_status st = anf_field_load(ev_ckpt.c_str(), &field.p);
    if (st != ANF_OK) return fail_status("eval: load checkpoint", st);
    SceneGuard scene;
    st = anf_scene_load(ev_scene.c_str(), nullptr, &scene.p);
    if (st != ANF_OK) return fail_status("eval: load scene", st);
    char report[512] = {0};
    st = anf_eval(field.p, scene.p, ev_split.c_str(), effective.c_str(), out_path.c_str(), report,
                  sizeof(report));
    if (st != ANF_OK) return fail_status("eval", st);
    write_manifest(fs::path(out_path).parent_path().string().empty()
                       ? "."
                       : fs::path(out_path).parent_path().string(),
                   "eval", effective, seed_value);
    std::printf("%s\n", report);
    return 0;
  }

  if (me->parsed()) {
    if (out_path.empty()) {
      std::fprintf(stderr, "error: mesh requires --out <obj path>\n");
      return 2;
    }
    FieldGuard field;
    anf_status st = anf_field_load(me_ckpt.c_str(), &field.p);
    if (st != ANF_OK) return fail_status("mesh: load checkpoint", st);
    st = anf_export_mesh(field.p, me_res, me_thresh, out_path.c_str(), me_volume ? 1 : 0);
    if (st != ANF_OK) return fail_status("mesh", st);
    write_manifest(fs::path(out_path).parent_path().string().empty()
                       ? "."
                       : fs::path(out_path).parent_path().string(),
                   "mesh", effective, seed_value);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
  }

  if (co->parsed()) {
    if (out_path.empty()) {
      std::fprintf(stderr, "error: corrupt requires --out <dir>\n");
      return 2;
    }
    if (co_sev == 0) {
      // identity: copy the dataset byte for byte
      std::error_code ec;
      fs::copy(co_scene, out_path, fs::copy_options::recursive | fs::copy_options::overwrite_existing,
               ec);
      if (ec) {
        std::fprintf(stderr, "error: corrupt: copy failed: %s\n", ec.message().c_str());
        return 1;
      }
    } else {
      SceneGuard scene;
      anf_status st = anf_scene_load(co_scene.c_str(), nullptr, &scene.p);
      if (st != ANF_OK) return fail_status("corrupt: load scene", st);
      SceneGuard corrupted;
      st = anf_scene_corrupt(scene.p, co_kind.c_str(), co_sev, seed_value, &corrupted.p);
      if (st != ANF_OK) return fail_status("corrupt", st);
      st = anf_scene_save(corrupted.p, out_path.c_str());
      if (st != ANF_OK) return fail_status("corrupt: save", st);
    }
    json info{{"kind", co_kind}, {"severity", co_sev}};
    write_manifest(out_path, "corrupt", info.dump(), seed_value);
    std::printf("wrote corrupted dataset to %s\n", out_path.c_str());
    return 0;
  }

  return 2;
}
