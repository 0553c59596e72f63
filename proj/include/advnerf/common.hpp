#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace advnerf {

enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  Io,
  BadFormat,
  Numeric,
  Internal,
};

/// All failures surface as this exception; the C API maps it onto status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

// ---------------------------------------------------------------------------
// Small fixed-size vector math (cameras, rays, meshes). The autodiff Tensor
// handles everything that needs gradients; this is for plain geometry.

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](int i) { return (&x)[i]; }
  double operator[](int i) const { return (&x)[i]; }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    if (n == 0.0) fail(ErrorCode::Numeric, "Vec3::normalized: zero vector");
    return *this / n;
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 as the engine (portable sequence by the
// standard) with hand-rolled distributions so results do not depend on the
// standard library's distribution internals. Streams fork from a base seed so
// consumers (batch sampling, attack, corruption) never share state.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : base_seed_(seed), state_(splitmix64(seed)) {
    // warm up: mt-like mixing not needed for splitmix-based stream
  }

  /// Independent stream derived from this rng's base seed and a tag.
  Rng fork(uint64_t tag) const { return Rng(splitmix64(base_seed_ ^ (0x9E3779B97F4A7C15ULL * (tag + 1)))); }

  uint64_t next_u64() {
    state_ = splitmix64(state_);
    return state_;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) {
    if (n == 0) fail(ErrorCode::InvalidArgument, "Rng::uniform_index: n must be positive");
    // modulo bias is below 2^-44 for any n under 2^20; acceptable here
    return next_u64() % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Poisson via Knuth's product method; adequate for the photon counts used
  /// by the shot-noise corruption (lambda <= ~100).
  uint64_t poisson(double lambda) {
    if (lambda < 0.0) fail(ErrorCode::InvalidArgument, "Rng::poisson: negative rate");
    if (lambda == 0.0) return 0;
    double limit = std::exp(-lambda);
    uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  uint64_t base_seed() const { return base_seed_; }

 private:
  uint64_t base_seed_;
  uint64_t state_;
};

// ---------------------------------------------------------------------------

template <typename... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace advnerf
