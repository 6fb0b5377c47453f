#pragma once

// PNG read/write for float [C,H,W] tensors. 8-bit for display output, 16-bit
// for data that must round-trip with quantization as the only loss. Values
// outside the encoding range are clamped; 16-bit files can carry an affine
// range (lo, hi) so signed noise survives storage. Fixed compression settings
// keep the emitted bytes deterministic.

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <png.h>

#include "burstforge/tensor.hpp"

namespace burstforge {

namespace detail {

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* f = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (f) std::fclose(f);
  }
};

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* f = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (f) std::fclose(f);
  }
};

}  // namespace detail

// Returns [C,H,W] in [0,1]; C is whatever the file holds after palette and
// sub-8-bit expansion (1=gray, 2=gray+alpha, 3=rgb, 4=rgba).
inline Tensor<float> load_png(const std::string& path) {
  detail::PngReadCloser ctx;
  ctx.f = std::fopen(path.c_str(), "rb");
  if (!ctx.f) throw IoError("cannot open image: " + path);
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw IoError("png init failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw IoError("png init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("corrupt PNG: " + path);

  png_init_io(ctx.png, ctx.f);
  png_read_info(ctx.png, ctx.info);
  png_set_palette_to_rgb(ctx.png);
  png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS))
    png_set_tRNS_to_alpha(ctx.png);
  if (png_get_bit_depth(ctx.png, ctx.info) == 16) png_set_swap(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  const std::int64_t w = png_get_image_width(ctx.png, ctx.info);
  const std::int64_t h = png_get_image_height(ctx.png, ctx.info);
  const std::int64_t c = png_get_channels(ctx.png, ctx.info);
  const int depth = png_get_bit_depth(ctx.png, ctx.info);
  require(depth == 8 || depth == 16, "unsupported PNG bit depth");

  const std::size_t row_bytes = png_get_rowbytes(ctx.png, ctx.info);
  std::vector<std::uint8_t> raw(row_bytes * h);
  std::vector<png_bytep> rows(h);
  for (std::int64_t y = 0; y < h; ++y) rows[y] = raw.data() + y * row_bytes;
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);

  Tensor<float> out = Tensor<float>::zeros({c, h, w});
  float* po = out.data();
  if (depth == 8) {
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        for (std::int64_t ch = 0; ch < c; ++ch)
          po[(ch * h + y) * w + x] = raw[y * row_bytes + (x * c + ch)] / 255.0f;
  } else {
    const std::uint16_t* raw16 = reinterpret_cast<const std::uint16_t*>(raw.data());
    const std::size_t row_elems = row_bytes / 2;
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        for (std::int64_t ch = 0; ch < c; ++ch)
          po[(ch * h + y) * w + x] = raw16[y * row_elems + (x * c + ch)] / 65535.0f;
  }
  return out;
}

namespace detail {

inline int png_color_type(std::int64_t channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
    default: throw ValidationError("PNG write supports 1, 3 or 4 channels");
  }
}

template <typename Sample>
void write_png_impl(const std::string& path, const Tensor<float>& img, int depth,
                    Sample sample) {
  require(img.shape().size() == 3, "image must be [C,H,W]");
  const std::int64_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  const int color = png_color_type(c);

  PngWriteCloser ctx;
  ctx.f = std::fopen(path.c_str(), "wb");
  if (!ctx.f) throw IoError("cannot open image for writing: " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw IoError("png init failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw IoError("png init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("png write failed: " + path);

  png_init_io(ctx.png, ctx.f);
  png_set_compression_level(ctx.png, 6);
  png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  if (depth == 16) png_set_swap(ctx.png);

  const float* pi = img.data();
  if (depth == 8) {
    std::vector<std::uint8_t> row(w * c);
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x)
        for (std::int64_t ch = 0; ch < c; ++ch)
          row[x * c + ch] =
              static_cast<std::uint8_t>(sample(pi[(ch * h + y) * w + x], 255.0));
      png_write_row(ctx.png, row.data());
    }
  } else {
    std::vector<std::uint16_t> row(w * c);
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x)
        for (std::int64_t ch = 0; ch < c; ++ch)
          row[x * c + ch] =
              static_cast<std::uint16_t>(sample(pi[(ch * h + y) * w + x], 65535.0));
      png_write_row(ctx.png, reinterpret_cast<png_bytep>(row.data()));
    }
  }
  png_write_end(ctx.png, nullptr);
}

}  // namespace detail

// Clamps to [0,1] and quantizes to 8 bits.
inline void save_png8(const std::string& path, const Tensor<float>& img) {
  detail::write_png_impl(path, img, 8, [](float v, double scale) {
    double t = std::min(1.0, std::max(0.0, static_cast<double>(v)));
    return static_cast<long>(t * scale + 0.5);
  });
}

// Affine-encodes [lo,hi] into the 16-bit range; values outside clamp.
inline void save_png16(const std::string& path, const Tensor<float>& img,
                       float lo = 0.0f, float hi = 1.0f) {
  require(hi > lo, "png16 range must satisfy hi > lo");
  const double span = static_cast<double>(hi) - lo;
  const double lod = lo;
  detail::write_png_impl(path, img, 16, [span, lod](float v, double scale) {
    double t = (static_cast<double>(v) - lod) / span;
    t = std::min(1.0, std::max(0.0, t));
    return static_cast<long>(t * scale + 0.5);
  });
}

// Inverse of save_png16 for a known range.
inline Tensor<float> load_png16(const std::string& path, float lo = 0.0f,
                                float hi = 1.0f) {
  Tensor<float> t = load_png(path);
  const float span = hi - lo;
  for (auto& v : t.vec()) v = lo + v * span;
  return t;
}

}  // namespace burstforge
