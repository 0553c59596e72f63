#include "advnerf/config.hpp"

#include <set>

namespace advnerf {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const char* where) {
  if (!j.is_object()) fail(ErrorCode::BadFormat, cat("config: ", where, " must be an object"));
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      fail(ErrorCode::BadFormat, cat("config: unknown key \"", it.key(), "\" in ", where));
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::BadFormat, cat("config: bad value for \"", key, "\": ", e.what()));
  }
}

Vec3 get_vec3(const json& j, const char* key, Vec3 fallback) {
  if (!j.contains(key)) return fallback;
  auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3) fail(ErrorCode::BadFormat, cat("config: \"", key, "\" must have 3 entries"));
  return {v[0], v[1], v[2]};
}

LevelConfig parse_level(const json& j, const char* where, LevelConfig def,
                        const std::set<std::string>& extra) {
  std::set<std::string> allowed{"enabled", "steps", "alpha"};
  allowed.insert(extra.begin(), extra.end());
  check_keys(j, allowed, where);
  LevelConfig l = def;
  l.enabled = get_or(j, "enabled", l.enabled);
  l.steps = get_or(j, "steps", l.steps);
  l.alpha = get_or(j, "alpha", l.alpha);
  return l;
}

FieldConfig parse_field(const json& j) {
  check_keys(j, {"trunk_depth", "hidden", "skip_layer", "injection_layer", "l_pos", "l_dir",
                 "include_identity"},
             "field");
  FieldConfig f;
  f.trunk_depth = get_or(j, "trunk_depth", f.trunk_depth);
  f.hidden = get_or(j, "hidden", f.hidden);
  f.skip_layer = get_or(j, "skip_layer", f.skip_layer);
  f.injection_layer = get_or(j, "injection_layer", f.injection_layer);
  f.encoder.l_pos = get_or(j, "l_pos", f.encoder.l_pos);
  f.encoder.l_dir = get_or(j, "l_dir", f.encoder.l_dir);
  f.encoder.include_identity = get_or(j, "include_identity", f.encoder.include_identity);
  return f;
}

}  // namespace

FullConfig parse_full_config(const nlohmann::json& j) {
  check_keys(j, {"seed", "train", "field", "render", "attack"}, "config");
  FullConfig cfg;
  cfg.train.seed = get_or(j, "seed", cfg.train.seed);

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"iterations", "rays_per_batch", "samples_coarse", "samples_fine", "lr", "lr_decay",
                "lambda_adv", "log_every", "eval_every", "checkpoint_every", "regularizer"},
               "train");
    cfg.train.iterations = get_or(t, "iterations", cfg.train.iterations);
    cfg.train.rays_per_batch = get_or(t, "rays_per_batch", cfg.train.rays_per_batch);
    cfg.train.samples_coarse = get_or(t, "samples_coarse", cfg.train.samples_coarse);
    cfg.train.samples_fine = get_or(t, "samples_fine", cfg.train.samples_fine);
    cfg.train.lr = get_or(t, "lr", cfg.train.lr);
    cfg.train.lr_decay = get_or(t, "lr_decay", cfg.train.lr_decay);
    cfg.train.lambda_adv = get_or(t, "lambda_adv", cfg.train.lambda_adv);
    cfg.train.log_every = get_or(t, "log_every", cfg.train.log_every);
    cfg.train.eval_every = get_or(t, "eval_every", cfg.train.eval_every);
    cfg.train.checkpoint_every = get_or(t, "checkpoint_every", cfg.train.checkpoint_every);
    if (t.contains("regularizer")) {
      const json& r = t.at("regularizer");
      check_keys(r, {"kind", "weight", "lattice"}, "train.regularizer");
      cfg.train.reg.kind = reg_from_name(get_or<std::string>(r, "kind", "none"));
      cfg.train.reg.weight = get_or(r, "weight", cfg.train.reg.weight);
      cfg.train.reg.lattice = get_or(r, "lattice", cfg.train.reg.lattice);
    }
  }

  if (j.contains("field")) cfg.train.field = parse_field(j.at("field"));

  if (j.contains("render")) {
    const json& r = j.at("render");
    check_keys(r, {"sigma_max", "background"}, "render");
    cfg.train.render.sigma_max = get_or(r, "sigma_max", cfg.train.render.sigma_max);
    if (r.contains("background")) cfg.train.render.background = get_vec3(r, "background", {0, 0, 0});
  }

  if (j.contains("attack")) {
    const json& a = j.at("attack");
    check_keys(a, {"enabled", "random_start", "seed", "perturb_coarse", "coord", "feature", "output"},
               "attack");
    cfg.attack.enabled = get_or(a, "enabled", cfg.attack.enabled);
    cfg.attack.random_start = get_or(a, "random_start", cfg.attack.random_start);
    cfg.attack.seed = get_or(a, "seed", cfg.attack.seed);
    cfg.attack.perturb_coarse = get_or(a, "perturb_coarse", cfg.attack.perturb_coarse);
    if (a.contains("coord")) {
      const json& c = a.at("coord");
      cfg.attack.coord = parse_level(c, "attack.coord", cfg.attack.coord,
                                     {"alpha_t", "eps_ball", "eps_theta"});
      cfg.attack.alpha_t = get_or(c, "alpha_t", cfg.attack.alpha_t);
      cfg.attack.eps_ball = get_or(c, "eps_ball", cfg.attack.eps_ball);
      cfg.attack.eps_theta = get_or(c, "eps_theta", cfg.attack.eps_theta);
    }
    if (a.contains("feature")) {
      const json& f = a.at("feature");
      cfg.attack.feature = parse_level(f, "attack.feature", cfg.attack.feature, {"eps"});
      cfg.attack.eps_feature = get_or(f, "eps", cfg.attack.eps_feature);
    }
    if (a.contains("output")) {
      const json& o = a.at("output");
      cfg.attack.output = parse_level(o, "attack.output", cfg.attack.output, {"eps_color", "eps_sigma"});
      cfg.attack.eps_color = get_or(o, "eps_color", cfg.attack.eps_color);
      cfg.attack.eps_sigma = get_or(o, "eps_sigma", cfg.attack.eps_sigma);
    }
  }

  cfg.train.validate();
  cfg.attack.validate();
  return cfg;
}

FullConfig parse_full_config_text(const std::string& text) {
  if (text.empty()) return parse_full_config(nlohmann::json::object());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::BadFormat, cat("config: invalid JSON: ", e.what()));
  }
  return parse_full_config(j);
}

ToySpec parse_toy_spec(const nlohmann::json& j) {
  check_keys(j,
             {"kind", "train_views", "test_views", "resolution", "camera_radius", "elevation_deg",
              "near", "far", "fov_deg", "oracle_samples", "background"},
             "toy spec");
  ToySpec s;
  s.kind = get_or<std::string>(j, "kind", s.kind);
  s.train_views = get_or(j, "train_views", s.train_views);
  s.test_views = get_or(j, "test_views", s.test_views);
  s.resolution = get_or(j, "resolution", s.resolution);
  s.camera_radius = get_or(j, "camera_radius", s.camera_radius);
  s.elevation_deg = get_or(j, "elevation_deg", s.elevation_deg);
  s.t_near = get_or(j, "near", s.t_near);
  s.t_far = get_or(j, "far", s.t_far);
  s.fov_deg = get_or(j, "fov_deg", s.fov_deg);
  s.oracle_samples = get_or(j, "oracle_samples", s.oracle_samples);
  s.background = get_vec3(j, "background", s.background);
  s.validate();
  return s;
}

LoadOptions parse_load_options(const nlohmann::json& j) {
  check_keys(j, {"background", "near", "far", "downsample"}, "load options");
  LoadOptions o;
  o.background = get_vec3(j, "background", o.background);
  o.default_near = get_or(j, "near", o.default_near);
  o.default_far = get_or(j, "far", o.default_far);
  o.downsample = get_or(j, "downsample", o.downsample);
  return o;
}

nlohmann::json full_config_to_json(const FullConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.train.seed;
  j["train"] = {{"iterations", cfg.train.iterations},
                {"rays_per_batch", cfg.train.rays_per_batch},
                {"samples_coarse", cfg.train.samples_coarse},
                {"samples_fine", cfg.train.samples_fine},
                {"lr", cfg.train.lr},
                {"lr_decay", cfg.train.lr_decay},
                {"lambda_adv", cfg.train.lambda_adv},
                {"log_every", cfg.train.log_every},
                {"eval_every", cfg.train.eval_every},
                {"checkpoint_every", cfg.train.checkpoint_every},
                {"regularizer",
                 {{"kind", reg_name(cfg.train.reg.kind)},
                  {"weight", cfg.train.reg.weight},
                  {"lattice", cfg.train.reg.lattice}}}};
  j["field"] = {{"trunk_depth", cfg.train.field.trunk_depth},
                {"hidden", cfg.train.field.hidden},
                {"skip_layer", cfg.train.field.skip_layer},
                {"injection_layer", cfg.train.field.injection_layer},
                {"l_pos", cfg.train.field.encoder.l_pos},
                {"l_dir", cfg.train.field.encoder.l_dir},
                {"include_identity", cfg.train.field.encoder.include_identity}};
  j["render"] = {{"sigma_max", cfg.train.render.sigma_max}};
  if (cfg.train.render.background)
    j["render"]["background"] = {cfg.train.render.background->x, cfg.train.render.background->y,
                                 cfg.train.render.background->z};
  j["attack"] = {{"enabled", cfg.attack.enabled},
                 {"random_start", cfg.attack.random_start},
                 {"seed", cfg.attack.seed},
                 {"perturb_coarse", cfg.attack.perturb_coarse},
                 {"coord",
                  {{"enabled", cfg.attack.coord.enabled},
                   {"steps", cfg.attack.coord.steps},
                   {"alpha", cfg.attack.coord.alpha},
                   {"alpha_t", cfg.attack.alpha_t},
                   {"eps_ball", cfg.attack.eps_ball},
                   {"eps_theta", cfg.attack.eps_theta}}},
                 {"feature",
                  {{"enabled", cfg.attack.feature.enabled},
                   {"steps", cfg.attack.feature.steps},
                   {"alpha", cfg.attack.feature.alpha},
                   {"eps", cfg.attack.eps_feature}}},
                 {"output",
                  {{"enabled", cfg.attack.output.enabled},
                   {"steps", cfg.attack.output.steps},
                   {"alpha", cfg.attack.output.alpha},
                   {"eps_color", cfg.attack.eps_color},
                   {"eps_sigma", cfg.attack.eps_sigma}}}};
  return j;
}

}  // namespace advnerf
