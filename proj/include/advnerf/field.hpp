#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advnerf/common.hpp"
#include "advnerf/tensor.hpp"

namespace advnerf {

// The radiance field: a Fourier feature encoding composed with a trunk MLP
// whose output feature feeds a density head (rectified) and a color head
// (consumes trunk feature + encoded view direction, logistic output).
// The trunk exposes a configurable injection layer where a feature-space
// offset can be added before both heads consume the result.

struct EncoderConfig {
  int l_pos = 6;
  int l_dir = 4;
  bool include_identity = true;
};

struct FieldConfig {
  int trunk_depth = 4;
  int hidden = 64;         // trunk width D; also the feature-offset dimension
  int skip_layer = 2;      // encoded input re-concatenated at this layer's input; -1 disables
  int injection_layer = 2; // feature offset added to this trunk layer's output
  EncoderConfig encoder;

  void validate() const;
};

/// Per-sample field output: radiance in [0,1]^3 and nonnegative density.
struct FieldOutput {
  Vec3 color;
  double sigma = 0.0;
};

/// Batched field output as graph tensors.
struct FieldForward {
  Tensor sigma;  // [N,1], >= 0
  Tensor color;  // [N,3], in [0,1]
};

/// Fourier feature ladder. Per input axis the output block is
/// [x, sin(pi 2^0 x) .. sin(pi 2^(L-1) x), cos(pi 2^0 x) .. cos(pi 2^(L-1) x)]
/// (identity column present only when include_identity). Output width is
/// n * (2L + include_identity).
Tensor encode(const Tensor& x, int l, bool include_identity = true);

class RadianceField {
 public:
  RadianceField(FieldConfig cfg, Rng& rng);

  const FieldConfig& config() const { return cfg_; }
  int feature_dim() const { return cfg_.hidden; }

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return param_names_; }

  /// Batched evaluation. pos/dir are [N,3]; dir rows must be unit vectors.
  /// feature_delta, when present, is [N,D] and is added to the configured
  /// trunk layer's output. freeze_params detaches the weights so gradients
  /// flow only into the inputs and the delta.
  FieldForward forward(const Tensor& pos, const Tensor& dir, const Tensor* feature_delta = nullptr,
                       bool freeze_params = false) const;

  /// Density-only evaluation (skips the color branch); density never depends
  /// on the view direction.
  Tensor sigma_forward(const Tensor& pos, const Tensor* feature_delta = nullptr,
                       bool freeze_params = false) const;

  /// Single query; errors when |theta| is not unit within 1e-6 or the delta
  /// length is not D. With a zero or absent delta this is the clean field.
  FieldOutput query(const Vec3& p, const Vec3& theta,
                    const std::vector<double>* feature_delta = nullptr) const;

  void save_checkpoint(const std::string& path, uint64_t seed, uint64_t trained_iterations) const;
  static RadianceField load_checkpoint(const std::string& path);

 private:
  RadianceField() = default;
  void name_params();
  Tensor trunk_forward(const Tensor& pos, const Tensor* feature_delta, bool freeze_params) const;

  FieldConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<std::string> param_names_;
  // parameter indices: trunk weights/biases, then sigma head, then color head
  int trunk_base_ = 0;
  int sigma_base_ = 0;
  int color_base_ = 0;
};

}  // namespace advnerf
