#include "advnerf/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace advnerf {

namespace {

constexpr int kWindow = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_same_dims(const Image& a, const Image& b, const char* op) {
  if (a.width != b.width || a.height != b.height)
    fail(ErrorCode::InvalidArgument,
         cat(op, ": dimension mismatch ", a.width, "x", a.height, " vs ", b.width, "x", b.height));
}

std::vector<double> grayscale(const Image& img) {
  std::vector<double> g(img.pixels());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      g[static_cast<size_t>(y) * img.width + x] =
          (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0;
  return g;
}

std::array<double, kWindow> gaussian_kernel() {
  std::array<double, kWindow> k{};
  const double sigma = 1.5;
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = static_cast<double>(i - kWindow / 2);
    k[static_cast<size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
    total += k[static_cast<size_t>(i)];
  }
  for (auto& v : k) v /= total;
  return k;
}

// separable valid-mode gaussian filter
std::vector<double> gauss_filter(const std::vector<double>& in, int w, int h, int& ow, int& oh) {
  static const std::array<double, kWindow> k = gaussian_kernel();
  const int half = kWindow / 2;
  ow = w - 2 * half;
  oh = h - 2 * half;
  std::vector<double> tmp(static_cast<size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[static_cast<size_t>(i)] * in[static_cast<size_t>(y) * w + x + i];
      tmp[static_cast<size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_same_dims(a, b, "psnr");
  if (a.data.empty()) fail(ErrorCode::InvalidArgument, "psnr: empty image");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return kPsnrSentinelDb;
  return std::min(-10.0 * std::log10(mse), kPsnrSentinelDb);
}

double ssim(const Image& a, const Image& b) {
  check_same_dims(a, b, "ssim");
  if (a.width < kWindow || a.height < kWindow)
    fail(ErrorCode::InvalidArgument,
         cat("ssim: image ", a.width, "x", a.height, " smaller than the ", kWindow, "-pixel window"));

  const std::vector<double> ga = grayscale(a);
  const std::vector<double> gb = grayscale(b);
  const size_t n = ga.size();
  std::vector<double> ga2(n), gb2(n), gab(n);
  for (size_t i = 0; i < n; ++i) {
    ga2[i] = ga[i] * ga[i];
    gb2[i] = gb[i] * gb[i];
    gab[i] = ga[i] * gb[i];
  }

  int ow = 0, oh = 0;
  const auto mu_a = gauss_filter(ga, a.width, a.height, ow, oh);
  const auto mu_b = gauss_filter(gb, a.width, a.height, ow, oh);
  const auto m_a2 = gauss_filter(ga2, a.width, a.height, ow, oh);
  const auto m_b2 = gauss_filter(gb2, a.width, a.height, ow, oh);
  const auto m_ab = gauss_filter(gab, a.width, a.height, ow, oh);

  double total = 0.0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double va = m_a2[i] - mu_a[i] * mu_a[i];
    const double vb = m_b2[i] - mu_b[i] * mu_b[i];
    const double cov = m_ab[i] - mu_a[i] * mu_b[i];
    const double l = (2.0 * mu_a[i] * mu_b[i] + kC1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1);
    const double cs = (2.0 * cov + kC2) / (va + vb + kC2);
    total += l * cs;
  }
  return total / static_cast<double>(mu_a.size());
}

double average_metric(double psnr_db, double ssim_score, std::optional<double> lpips) {
  if (!std::isfinite(psnr_db)) fail(ErrorCode::InvalidArgument, "average_metric: non-finite PSNR");
  const double mse = std::pow(10.0, -psnr_db / 10.0);
  const double s = std::sqrt(std::max(1.0 - ssim_score, 0.0));
  double product = mse * s;
  int terms = 2;
  if (lpips) {
    product *= *lpips;
    terms = 3;
  }
  return std::pow(product, 1.0 / static_cast<double>(terms));
}

MetricReport evaluate_pair(const Image& rendered, const Image& truth, const PerceptualHook& hook) {
  MetricReport r;
  r.psnr = psnr(rendered, truth);
  r.ssim = ssim(rendered, truth);
  if (hook) {
    r.lpips = hook(rendered, truth);
    r.terms = 3;
  }
  r.average = average_metric(r.psnr, r.ssim, r.lpips);
  return r;
}

CorruptionKind corruption_from_name(const std::string& name) {
  if (name == "gaussian") return CorruptionKind::Gaussian;
  if (name == "shot") return CorruptionKind::Shot;
  if (name == "pepper") return CorruptionKind::Pepper;
  fail(ErrorCode::InvalidArgument, "unknown corruption kind: " + name);
}

const char* corruption_name(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::Gaussian: return "gaussian";
    case CorruptionKind::Shot: return "shot";
    case CorruptionKind::Pepper: return "pepper";
  }
  return "?";
}

double corruption_parameter(CorruptionKind kind, int severity) {
  if (severity < 1 || severity > 5)
    fail(ErrorCode::InvalidArgument, cat("corruption severity ", severity, " outside 1..5"));
  static constexpr double kGauss[5] = {0.08, 0.12, 0.18, 0.26, 0.38};
  static constexpr double kShot[5] = {60.0, 25.0, 12.0, 5.0, 3.0};
  static constexpr double kPepper[5] = {0.03, 0.06, 0.09, 0.17, 0.27};
  switch (kind) {
    case CorruptionKind::Gaussian: return kGauss[severity - 1];
    case CorruptionKind::Shot: return kShot[severity - 1];
    case CorruptionKind::Pepper: return kPepper[severity - 1];
  }
  fail(ErrorCode::Internal, "corruption_parameter: bad kind");
}

Image corrupt_gaussian(const Image& img, double sigma, Rng& rng) {
  Image out = img;
  for (auto& v : out.data) v = std::min(std::max(v + sigma * rng.normal(), 0.0), 1.0);
  return out;
}

Image corrupt_shot(const Image& img, double photons, Rng& rng) {
  if (photons <= 0.0) fail(ErrorCode::InvalidArgument, "corrupt_shot: photons must be positive");
  Image out = img;
  for (auto& v : out.data) {
    const double lambda = std::min(std::max(v, 0.0), 1.0) * photons;
    v = std::min(std::max(static_cast<double>(rng.poisson(lambda)) / photons, 0.0), 1.0);
  }
  return out;
}

Image corrupt_pepper(const Image& img, double q, Rng& rng) {
  Image out = img;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      if (rng.uniform() < q) out.set_pixel(x, y, {0, 0, 0});
  return out;
}

Image corrupt_image(const Image& img, CorruptionKind kind, int severity, Rng& rng) {
  if (severity == 0) return img;
  const double p = corruption_parameter(kind, severity);
  switch (kind) {
    case CorruptionKind::Gaussian: return corrupt_gaussian(img, p, rng);
    case CorruptionKind::Shot: return corrupt_shot(img, p, rng);
    case CorruptionKind::Pepper: return corrupt_pepper(img, p, rng);
  }
  fail(ErrorCode::Internal, "corrupt_image: bad kind");
}

}  // namespace advnerf
