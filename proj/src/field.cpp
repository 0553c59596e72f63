#include "advnerf/field.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace advnerf {

namespace {

constexpr int kCheckpointVersion = 1;

int encoded_dim(int axes, int l, bool include_identity) {
  return axes * (2 * l + (include_identity ? 1 : 0));
}

Tensor linear_init(int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(static_cast<size_t>(in) * out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(w), {in, out}, true);
}

Tensor bias_init(int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> b(static_cast<size_t>(out));
  for (auto& v : b) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(b), {1, out}, true);
}

}  // namespace

void FieldConfig::validate() const {
  if (trunk_depth < 1) fail(ErrorCode::InvalidArgument, "FieldConfig: trunk_depth must be >= 1");
  if (hidden < 1) fail(ErrorCode::InvalidArgument, "FieldConfig: hidden must be >= 1");
  if (skip_layer >= trunk_depth)
    fail(ErrorCode::InvalidArgument,
         cat("FieldConfig: skip_layer ", skip_layer, " outside trunk depth ", trunk_depth));
  if (injection_layer < 0 || injection_layer >= trunk_depth)
    fail(ErrorCode::InvalidArgument,
         cat("FieldConfig: injection_layer ", injection_layer, " outside trunk depth ", trunk_depth));
  if (encoder.l_pos < 0 || encoder.l_dir < 0)
    fail(ErrorCode::InvalidArgument, "FieldConfig: frequency counts must be >= 0");
}

Tensor encode(const Tensor& x, int l, bool include_identity) {
  if (x.rank() != 2) fail(ErrorCode::ShapeMismatch, cat("encode: rank-2 input required, got ", shape_str(x.shape())));
  if (l < 0) fail(ErrorCode::InvalidArgument, "encode: negative frequency count");
  const int axes = x.dim(1);

  std::vector<Tensor> blocks;
  blocks.reserve(static_cast<size_t>(axes));
  for (int a = 0; a < axes; ++a) {
    Tensor col = slice(x, 1, a, 1);
    std::vector<Tensor> parts;
    parts.reserve(static_cast<size_t>(2 * l + 1));
    if (include_identity) parts.push_back(col);
    for (int k = 0; k < l; ++k) parts.push_back(sin(scale(col, M_PI * std::exp2(k))));
    for (int k = 0; k < l; ++k) parts.push_back(cos(scale(col, M_PI * std::exp2(k))));
    if (parts.empty()) fail(ErrorCode::InvalidArgument, "encode: empty encoding (l=0 without identity)");
    blocks.push_back(parts.size() == 1 ? parts[0] : concat(parts, 1));
  }
  return blocks.size() == 1 ? blocks[0] : concat(blocks, 1);
}

RadianceField::RadianceField(FieldConfig cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int p = encoded_dim(3, cfg_.encoder.l_pos, cfg_.encoder.include_identity);
  const int q = encoded_dim(3, cfg_.encoder.l_dir, cfg_.encoder.include_identity);
  const int d = cfg_.hidden;

  trunk_base_ = 0;
  for (int i = 0; i < cfg_.trunk_depth; ++i) {
    int in = (i == 0) ? p : d;
    if (i == cfg_.skip_layer && i != 0) in = d + p;
    params_.push_back(linear_init(in, d, rng));
    params_.push_back(bias_init(in, d, rng));
  }
  sigma_base_ = static_cast<int>(params_.size());
  params_.push_back(linear_init(d, 1, rng));
  params_.push_back(bias_init(d, 1, rng));

  color_base_ = static_cast<int>(params_.size());
  const int ch = std::max(d / 2, 4);
  params_.push_back(linear_init(d + q, ch, rng));
  params_.push_back(bias_init(d + q, ch, rng));
  params_.push_back(linear_init(ch, 3, rng));
  params_.push_back(bias_init(ch, 3, rng));

  name_params();
}

void RadianceField::name_params() {
  param_names_.clear();
  for (int i = 0; i < cfg_.trunk_depth; ++i) {
    param_names_.push_back(cat("trunk.", i, ".weight"));
    param_names_.push_back(cat("trunk.", i, ".bias"));
  }
  param_names_.push_back("sigma_head.weight");
  param_names_.push_back("sigma_head.bias");
  param_names_.push_back("color.0.weight");
  param_names_.push_back("color.0.bias");
  param_names_.push_back("color.1.weight");
  param_names_.push_back("color.1.bias");
}

Tensor RadianceField::trunk_forward(const Tensor& pos, const Tensor* feature_delta,
                                    bool freeze_params) const {
  if (pos.rank() != 2 || pos.dim(1) != 3)
    fail(ErrorCode::ShapeMismatch, cat("field: positions must be [N,3], got ", shape_str(pos.shape())));
  if (feature_delta != nullptr &&
      (feature_delta->rank() != 2 || feature_delta->dim(0) != pos.dim(0) || feature_delta->dim(1) != cfg_.hidden))
    fail(ErrorCode::ShapeMismatch,
         cat("field: feature delta must be [N,", cfg_.hidden, "], got ", shape_str(feature_delta->shape())));

  auto weight = [&](int idx) {
    return freeze_params ? stop_gradient(params_[static_cast<size_t>(idx)]) : params_[static_cast<size_t>(idx)];
  };

  Tensor penc = encode(pos, cfg_.encoder.l_pos, cfg_.encoder.include_identity);
  Tensor h = penc;
  for (int i = 0; i < cfg_.trunk_depth; ++i) {
    if (i == cfg_.skip_layer && i != 0) h = concat({h, penc}, 1);
    h = relu(add_bias(matmul(h, weight(trunk_base_ + 2 * i)), weight(trunk_base_ + 2 * i + 1)));
    if (i == cfg_.injection_layer && feature_delta != nullptr) h = add(h, *feature_delta);
  }
  return h;
}

FieldForward RadianceField::forward(const Tensor& pos, const Tensor& dir, const Tensor* feature_delta,
                                    bool freeze_params) const {
  if (dir.rank() != 2 || dir.dim(1) != 3 || dir.dim(0) != pos.dim(0))
    fail(ErrorCode::ShapeMismatch, cat("field: directions must be [N,3], got ", shape_str(dir.shape())));

  auto weight = [&](int idx) {
    return freeze_params ? stop_gradient(params_[static_cast<size_t>(idx)]) : params_[static_cast<size_t>(idx)];
  };

  Tensor h = trunk_forward(pos, feature_delta, freeze_params);
  Tensor sigma = relu(add_bias(matmul(h, weight(sigma_base_)), weight(sigma_base_ + 1)));

  Tensor denc = encode(dir, cfg_.encoder.l_dir, cfg_.encoder.include_identity);
  Tensor c = concat({h, denc}, 1);
  c = relu(add_bias(matmul(c, weight(color_base_)), weight(color_base_ + 1)));
  c = sigmoid(add_bias(matmul(c, weight(color_base_ + 2)), weight(color_base_ + 3)));

  return {sigma, c};
}

Tensor RadianceField::sigma_forward(const Tensor& pos, const Tensor* feature_delta,
                                    bool freeze_params) const {
  auto weight = [&](int idx) {
    return freeze_params ? stop_gradient(params_[static_cast<size_t>(idx)]) : params_[static_cast<size_t>(idx)];
  };
  Tensor h = trunk_forward(pos, feature_delta, freeze_params);
  return relu(add_bias(matmul(h, weight(sigma_base_)), weight(sigma_base_ + 1)));
}

FieldOutput RadianceField::query(const Vec3& p, const Vec3& theta,
                                 const std::vector<double>* feature_delta) const {
  const double n = theta.norm();
  if (std::abs(n - 1.0) > 1e-6)
    fail(ErrorCode::InvalidArgument, cat("query: view direction norm ", n, " is not unit"));
  std::optional<Tensor> delta;
  if (feature_delta != nullptr) {
    if (static_cast<int>(feature_delta->size()) != cfg_.hidden)
      fail(ErrorCode::InvalidArgument,
           cat("query: feature delta length ", feature_delta->size(), ", expected ", cfg_.hidden));
    delta = Tensor::from(*feature_delta, {1, cfg_.hidden});
  }
  Tensor pos = Tensor::from({p.x, p.y, p.z}, {1, 3});
  Tensor dir = Tensor::from({theta.x, theta.y, theta.z}, {1, 3});
  FieldForward f = forward(pos, dir, delta ? &*delta : nullptr);
  return {{f.color.at(0), f.color.at(1), f.color.at(2)}, f.sigma.at(0)};
}

void RadianceField::save_checkpoint(const std::string& path, uint64_t seed, uint64_t trained_iterations) const {
  nlohmann::json j;
  j["format"] = "advnerf-checkpoint";
  j["version"] = kCheckpointVersion;
  j["field"] = {{"trunk_depth", cfg_.trunk_depth},
                {"hidden", cfg_.hidden},
                {"skip_layer", cfg_.skip_layer},
                {"injection_layer", cfg_.injection_layer},
                {"l_pos", cfg_.encoder.l_pos},
                {"l_dir", cfg_.encoder.l_dir},
                {"include_identity", cfg_.encoder.include_identity}};
  j["seed"] = seed;
  j["trained_iterations"] = trained_iterations;
  nlohmann::json params = nlohmann::json::object();
  for (size_t i = 0; i < params_.size(); ++i) {
    const Tensor& t = params_[i];
    params[param_names_[i]] = {{"shape", t.shape()},
                               {"values", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  j["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "save_checkpoint: cannot write " + path);
  out << j.dump();
  out << "\n";
  if (!out) fail(ErrorCode::Io, "save_checkpoint: write failed for " + path);
}

RadianceField RadianceField::load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "load_checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::BadFormat, cat("load_checkpoint: ", path, ": ", e.what()));
  }
  if (j.value("format", "") != "advnerf-checkpoint")
    fail(ErrorCode::BadFormat, "load_checkpoint: not a checkpoint file: " + path);
  if (j.value("version", -1) != kCheckpointVersion)
    fail(ErrorCode::BadFormat, cat("load_checkpoint: unsupported version ", j.value("version", -1)));

  RadianceField f;
  const auto& fc = j.at("field");
  f.cfg_.trunk_depth = fc.at("trunk_depth").get<int>();
  f.cfg_.hidden = fc.at("hidden").get<int>();
  f.cfg_.skip_layer = fc.at("skip_layer").get<int>();
  f.cfg_.injection_layer = fc.at("injection_layer").get<int>();
  f.cfg_.encoder.l_pos = fc.at("l_pos").get<int>();
  f.cfg_.encoder.l_dir = fc.at("l_dir").get<int>();
  f.cfg_.encoder.include_identity = fc.at("include_identity").get<bool>();
  f.cfg_.validate();
  f.name_params();

  const auto& params = j.at("params");
  for (const auto& name : f.param_names_) {
    if (!params.contains(name)) fail(ErrorCode::BadFormat, "load_checkpoint: missing parameter " + name);
    const auto& e = params.at(name);
    Shape shape = e.at("shape").get<Shape>();
    std::vector<double> values = e.at("values").get<std::vector<double>>();
    f.params_.push_back(Tensor::from(std::move(values), std::move(shape), true));
  }
  return f;
}

}  // namespace advnerf
