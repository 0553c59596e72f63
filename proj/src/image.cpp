#include "advnerf/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <png.h>

namespace advnerf {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint8_t to_u8(double v) {
  const double x = std::min(std::max(v, 0.0), 1.0);
  return static_cast<uint8_t>(std::lround(x * 255.0));
}

}  // namespace

Image Image::solid(int w, int h, const Vec3& color) {
  Image img;
  img.width = w;
  img.height = h;
  img.data.resize(static_cast<size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.set_pixel(x, y, color);
  return img;
}

Image read_png(const std::string& path, const Vec3& background) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(ErrorCode::Io, "read_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Internal, "read_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::BadFormat, "read_png: not a valid PNG: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  // normalize everything to 16-bit RGBA, then composite and scale down
  png_set_expand(png);
  if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
  png_set_gray_to_rgb(png);
  png_set_add_alpha(png, 0xFFFF, PNG_FILLER_AFTER);
  if (png_get_bit_depth(png, info) == 16)
    png_set_swap(png);  // little-endian reads
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 4) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::BadFormat, cat("read_png: unexpected channel count ", channels, " in ", path));
  }

  const size_t stride = png_get_rowbytes(png, info);
  std::vector<uint8_t> raw(stride * static_cast<size_t>(h));
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = raw.data() + stride * static_cast<size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img;
  img.width = w;
  img.height = h;
  img.data.resize(static_cast<size_t>(w) * h * 3);
  const double scale = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double rgba[4];
      if (depth == 16) {
        const uint16_t* px = reinterpret_cast<const uint16_t*>(raw.data() + stride * static_cast<size_t>(y)) +
                             static_cast<size_t>(x) * 4;
        for (int c = 0; c < 4; ++c) rgba[c] = static_cast<double>(px[c]) / scale;
      } else {
        const uint8_t* px = raw.data() + stride * static_cast<size_t>(y) + static_cast<size_t>(x) * 4;
        for (int c = 0; c < 4; ++c) rgba[c] = static_cast<double>(px[c]) / scale;
      }
      const double a = rgba[3];
      img.set_pixel(x, y,
                    {rgba[0] * a + background.x * (1.0 - a), rgba[1] * a + background.y * (1.0 - a),
                     rgba[2] * a + background.z * (1.0 - a)});
    }
  }
  return img;
}

void write_png(const std::string& path, const Image& img) {
  if (img.width <= 0 || img.height <= 0 || img.data.size() != img.pixels() * 3)
    fail(ErrorCode::InvalidArgument, "write_png: malformed image");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(ErrorCode::Io, "write_png: cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Internal, "write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "write_png: write failed for " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<size_t>(x) * 3 + c] = to_u8(img.at(x, y, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png16_gray(const std::string& path, const std::vector<double>& values, int width, int height,
                      double lo, double hi) {
  if (values.size() != static_cast<size_t>(width) * height)
    fail(ErrorCode::InvalidArgument, "write_png16_gray: size mismatch");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(ErrorCode::Io, "write_png16_gray: cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Internal, "write_png16_gray: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "write_png16_gray: write failed for " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<uint8_t> row(static_cast<size_t>(width) * 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = (values[static_cast<size_t>(y) * width + x] - lo) / span;
      v = std::min(std::max(v, 0.0), 1.0);
      const uint16_t q = static_cast<uint16_t>(std::lround(v * 65535.0));
      row[static_cast<size_t>(x) * 2] = static_cast<uint8_t>(q >> 8);  // PNG is big-endian
      row[static_cast<size_t>(x) * 2 + 1] = static_cast<uint8_t>(q & 0xFF);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_raw_f32(const std::string& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "write_raw_f32: cannot write " + path);
  std::vector<float> f(values.size());
  for (size_t i = 0; i < values.size(); ++i) f[i] = static_cast<float>(values[i]);
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!out) fail(ErrorCode::Io, "write_raw_f32: write failed for " + path);
}

Image downsample(const Image& img, int factor) {
  if (factor <= 1) return img;
  if (img.width % factor != 0 || img.height % factor != 0)
    fail(ErrorCode::InvalidArgument,
         cat("downsample: ", img.width, "x", img.height, " not divisible by ", factor));
  Image out;
  out.width = img.width / factor;
  out.height = img.height / factor;
  out.data.resize(static_cast<size_t>(out.width) * out.height * 3);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += img.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = acc * inv;
      }
  return out;
}

}  // namespace advnerf
