#pragma once

#include <functional>
#include <optional>
#include <string>

#include "advnerf/common.hpp"
#include "advnerf/image.hpp"

namespace advnerf {

/// Identical images report this instead of +inf.
inline constexpr double kPsnrSentinelDb = 100.0;

/// -10 log10(MSE) over all pixels and channels, inputs in [0,1].
double psnr(const Image& a, const Image& b);

/// Mean local SSIM over the valid region, 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, on channel-averaged grayscale. Errors when the
/// image is smaller than the window.
double ssim(const Image& a, const Image& b);

/// Geometric mean of MSE = 10^(-PSNR/10), sqrt(1-SSIM) and, when present,
/// LPIPS. The term count adapts to what is available.
double average_metric(double psnr_db, double ssim_score, std::optional<double> lpips = {});

/// External perceptual-metric hook (e.g. an LPIPS implementation); absent by
/// default, in which case reports carry the 2-term average.
using PerceptualHook = std::function<double(const Image&, const Image&)>;

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
  double average = 0.0;
  int terms = 2;
};

MetricReport evaluate_pair(const Image& rendered, const Image& truth,
                           const PerceptualHook& hook = nullptr);

// --- supervision corruption ---------------------------------------------------

enum class CorruptionKind { Gaussian, Shot, Pepper };

CorruptionKind corruption_from_name(const std::string& name);
const char* corruption_name(CorruptionKind kind);

/// Severity 1..5 constants (0 = identity):
///   gaussian sigma: 0.08 0.12 0.18 0.26 0.38
///   shot photons:   60   25   12   5    3
///   pepper q:       0.03 0.06 0.09 0.17 0.27
double corruption_parameter(CorruptionKind kind, int severity);

/// Additive N(0, sigma^2), clipped to [0,1].
Image corrupt_gaussian(const Image& img, double sigma, Rng& rng);
/// Poisson(img * photons) / photons, clipped.
Image corrupt_shot(const Image& img, double photons, Rng& rng);
/// Each pixel (all channels) zeroed with probability q.
Image corrupt_pepper(const Image& img, double q, Rng& rng);

/// Severity-table dispatch; severity 0 returns the input unchanged.
Image corrupt_image(const Image& img, CorruptionKind kind, int severity, Rng& rng);

}  // namespace advnerf
