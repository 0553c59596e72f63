#pragma once

#include <string>
#include <vector>

#include "advnerf/common.hpp"

namespace advnerf {

/// RGB image, values in [0,1], row-major interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // size width*height*3

  static Image solid(int w, int h, const Vec3& color);

  double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  Vec3 pixel(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set_pixel(int x, int y, const Vec3& v) {
    at(x, y, 0) = v.x;
    at(x, y, 1) = v.y;
    at(x, y, 2) = v.z;
  }
  size_t pixels() const { return static_cast<size_t>(width) * height; }
};

/// Reads an 8- or 16-bit gray/RGB/RGBA PNG; alpha is composited onto the
/// given background color.
Image read_png(const std::string& path, const Vec3& background = {0, 0, 0});

/// 8-bit RGB PNG.
void write_png(const std::string& path, const Image& img);

/// 16-bit grayscale PNG of values scaled from [lo, hi] to the full range.
void write_png16_gray(const std::string& path, const std::vector<double>& values, int width, int height,
                      double lo, double hi);

/// Raw little-endian float32 dump (row-major), used as the depth sidecar.
void write_raw_f32(const std::string& path, const std::vector<double>& values);

/// Integer-factor box downsampling.
Image downsample(const Image& img, int factor);

}  // namespace advnerf
