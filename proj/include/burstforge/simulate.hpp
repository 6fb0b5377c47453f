#pragma once

// Synthetic burst generation: sRGB source -> inverse camera pipeline -> per
// frame motion -> (SR only) bilinear downsampling -> Bayer mosaic packing ->
// heteroscedastic noise. Ground truth stays in sRGB space. All randomness is
// derived from the sample seed through split_seed, one stream per purpose:
//   split_seed(seed, 0)         crop position, white-balance gains, exposure
//   split_seed(seed, 1+b)       frame b warp
//   split_seed(seed, 1+B+b)     frame b noise
// so frames can be produced in any order with identical results.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "burstforge/image_io.hpp"
#include "burstforge/model.hpp"
#include "burstforge/random.hpp"
#include "burstforge/tensor.hpp"

namespace burstforge {

// Frame PNGs carry signed noise; this affine range survives the worst case
// (gain 8 highlights) with headroom.
inline constexpr float kFrameLo = -1.0f;
inline constexpr float kFrameHi = 2.0f;

struct NoiseParams {
  double sigma_read = 0.0;
  double sigma_shot = 0.0;
  int gain_label = 1;
  bool unseen = false;
};

// Gain table: log10 sigma pairs (read, shot). Gain 8 is excluded from
// training and flagged so evaluation can report it separately.
inline NoiseParams noise_for_gain(int gain) {
  NoiseParams p;
  p.gain_label = gain;
  switch (gain) {
    case 1: p.sigma_read = std::pow(10.0, -2.2); p.sigma_shot = std::pow(10.0, -2.6); break;
    case 2: p.sigma_read = std::pow(10.0, -1.8); p.sigma_shot = std::pow(10.0, -2.2); break;
    case 4: p.sigma_read = std::pow(10.0, -1.4); p.sigma_shot = std::pow(10.0, -1.8); break;
    case 8:
      p.sigma_read = std::pow(10.0, -1.1);
      p.sigma_shot = std::pow(10.0, -1.5);
      p.unseen = true;
      break;
    default: throw ValidationError("gain must be one of 1, 2, 4, 8");
  }
  return p;
}

struct FrameTransform {
  double translate_y = 0.0;
  double translate_x = 0.0;
  double rotate_deg = 0.0;
};

struct IspParams {
  double gain_r = 1.0;
  double gain_b = 1.0;
};

// Fixed color-correction matrix of the inverse pipeline (identity: the
// simulation keeps colors device-neutral; kept explicit so a non-trivial
// matrix is a data change, not a code change).
inline const double kCcm[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

inline double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double v) {
  return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

// sRGB [0,1] -> linear RAW-domain RGB: de-gamma, inverse CCM (fixed), then
// inverse white balance by dividing R and B by their gains. Clamped to [0,1].
inline Tensor<float> inverse_isp(const Tensor<float>& srgb, const IspParams& p) {
  require(srgb.shape().size() == 3 && srgb.shape()[0] == 3,
          "inverse_isp expects [3,H,W], got " + shape_str(srgb.shape()));
  for (float v : srgb.vec())
    require(v >= 0.0f && v <= 1.0f, "inverse_isp input must lie in [0,1]");
  const std::int64_t hw = srgb.shape()[1] * srgb.shape()[2];
  Tensor<float> out = Tensor<float>::zeros(srgb.shape());
  const float* pi = srgb.data();
  float* po = out.data();
  const double inv_gain[3] = {1.0 / p.gain_r, 1.0, 1.0 / p.gain_b};
  for (std::int64_t i = 0; i < hw; ++i) {
    double lin[3];
    for (int c = 0; c < 3; ++c) lin[c] = srgb_to_linear(pi[c * hw + i]);
    for (int c = 0; c < 3; ++c) {
      double v = kCcm[c][0] * lin[0] + kCcm[c][1] * lin[1] + kCcm[c][2] * lin[2];
      v *= inv_gain[c];
      po[c * hw + i] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
    }
  }
  return out;
}

// Rotation about the image center followed by translation, resolved by
// inverse mapping with bilinear sampling and zero fill. A pure translation of
// (2,0) moves content down two rows.
inline Tensor<float> apply_warp(const Tensor<float>& img, const FrameTransform& t) {
  require(img.shape().size() == 3, "apply_warp expects [C,H,W]");
  if (t.translate_y == 0.0 && t.translate_x == 0.0 && t.rotate_deg == 0.0)
    return img.clone();
  const std::int64_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  const double th = t.rotate_deg * (M_PI / 180.0);
  const double cs = std::cos(th), sn = std::sin(th);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  Tensor<float> out = Tensor<float>::zeros(img.shape());
  const float* pi = img.data();
  float* po = out.data();
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const double vy = y - cy - t.translate_y;
      const double vx = x - cx - t.translate_x;
      // inverse rotation = transpose
      const double sy = cs * vy + sn * vx + cy;
      const double sx = -sn * vy + cs * vx + cx;
      const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
      const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const float* plane = pi + ch * h * w;
        auto at = [&](std::int64_t yy, std::int64_t xx) -> double {
          return (yy < 0 || yy >= h || xx < 0 || xx >= w) ? 0.0 : plane[yy * w + xx];
        };
        const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        po[(ch * h + y) * w + x] = static_cast<float>(v);
      }
    }
  return out;
}

// Draw order: rotation, translate_y, translate_x.
inline FrameTransform random_transform(Rng& rng, double max_translation,
                                       double max_rotation_deg) {
  FrameTransform t;
  t.rotate_deg = rng.uniform(-max_rotation_deg, max_rotation_deg);
  t.translate_y = rng.uniform(-max_translation, max_translation);
  t.translate_x = rng.uniform(-max_translation, max_translation);
  return t;
}

inline std::pair<Tensor<float>, FrameTransform> random_warp(
    const Tensor<float>& img, double max_translation, double max_rotation_deg,
    std::uint64_t seed) {
  require(max_translation >= 0.0 && max_rotation_deg >= 0.0,
          "warp bounds must be non-negative");
  Rng rng(seed);
  const FrameTransform t = random_transform(rng, max_translation, max_rotation_deg);
  return {apply_warp(img, t), t};
}

// Spatial mirror of [C,H,W]. Used on source sRGB images before synthesis;
// flipping after mosaicking would scramble the Bayer phase.
inline Tensor<float> flip_image(const Tensor<float>& t, bool flip_y, bool flip_x) {
  require(t.shape().size() == 3, "flip expects [C,H,W]");
  if (!flip_y && !flip_x) return t.clone();
  const std::int64_t c = t.shape()[0], h = t.shape()[1], w = t.shape()[2];
  Tensor<float> out = Tensor<float>::zeros(t.shape());
  const float* pi = t.data();
  float* po = out.data();
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y) {
      const std::int64_t sy = flip_y ? h - 1 - y : y;
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t sx = flip_x ? w - 1 - x : x;
        po[(ch * h + y) * w + x] = pi[(ch * h + sy) * w + sx];
      }
    }
  return out;
}

// Bilinear resize by an integer factor; output pixel i samples the source at
// (i + 0.5) * s - 0.5 (pixel centers aligned, no corner pinning).
inline Tensor<float> downsample_bilinear(const Tensor<float>& img, int s) {
  require(img.shape().size() == 3, "downsample expects [C,H,W]");
  require(s >= 1, "downsample factor must be >= 1");
  const std::int64_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  require(h % s == 0 && w % s == 0,
          "extents " + shape_str(img.shape()) + " not divisible by " + std::to_string(s));
  if (s == 1) return img.clone();
  const std::int64_t ho = h / s, wo = w / s;
  Tensor<float> out = Tensor<float>::zeros({c, ho, wo});
  const float* pi = img.data();
  float* po = out.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const float* plane = pi + ch * h * w;
    for (std::int64_t i = 0; i < ho; ++i) {
      const double sy = (i + 0.5) * s - 0.5;
      const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
      const double fy = sy - y0;
      for (std::int64_t j = 0; j < wo; ++j) {
        const double sx = (j + 0.5) * s - 0.5;
        const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
        const double fx = sx - x0;
        auto at = [&](std::int64_t yy, std::int64_t xx) -> double {
          yy = std::min(h - 1, std::max<std::int64_t>(0, yy));
          xx = std::min(w - 1, std::max<std::int64_t>(0, xx));
          return plane[yy * w + xx];
        };
        po[(ch * ho + i) * wo + j] = static_cast<float>(
            (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
            fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1)));
      }
    }
  }
  return out;
}

// RGGB: R at (0,0), G at (0,1) and (1,0), B at (1,1) of each 2x2 tile,
// packed as channels [R, G1, G2, B] at half resolution.
inline Tensor<float> mosaic_and_pack(const Tensor<float>& rgb) {
  require(rgb.shape().size() == 3 && rgb.shape()[0] == 3,
          "mosaic expects [3,H,W], got " + shape_str(rgb.shape()));
  const std::int64_t h = rgb.shape()[1], w = rgb.shape()[2];
  require(h % 2 == 0 && w % 2 == 0, "mosaic extents must be even");
  const std::int64_t hh = h / 2, hw2 = w / 2;
  Tensor<float> out = Tensor<float>::zeros({4, hh, hw2});
  const float* r = rgb.data();
  const float* g = r + h * w;
  const float* b = g + h * w;
  float* po = out.data();
  for (std::int64_t i = 0; i < hh; ++i)
    for (std::int64_t j = 0; j < hw2; ++j) {
      po[(0 * hh + i) * hw2 + j] = r[(2 * i) * w + 2 * j];
      po[(1 * hh + i) * hw2 + j] = g[(2 * i) * w + 2 * j + 1];
      po[(2 * hh + i) * hw2 + j] = g[(2 * i + 1) * w + 2 * j];
      po[(3 * hh + i) * hw2 + j] = b[(2 * i + 1) * w + 2 * j + 1];
    }
  return out;
}

// Additive Gaussian noise with signal-dependent variance sigma_r^2 +
// sigma_s * x. Deliberately unclamped: clipping would bias the statistics
// the denoiser is supposed to learn.
inline Tensor<float> add_noise(const Tensor<float>& x, const NoiseParams& p,
                               std::uint64_t seed) {
  require(p.sigma_read >= 0.0 && p.sigma_shot >= 0.0,
          "noise sigmas must be non-negative");
  Tensor<float> out = x.clone();
  Rng rng(seed);
  const double var_read = p.sigma_read * p.sigma_read;
  for (auto& v : out.vec()) {
    const double var = var_read + p.sigma_shot * std::max(0.0, static_cast<double>(v));
    v = static_cast<float>(v + std::sqrt(var) * rng.normal());
  }
  return out;
}

inline Tensor<float> crop(const Tensor<float>& img, std::int64_t y0, std::int64_t x0,
                          std::int64_t h, std::int64_t w) {
  require(img.shape().size() == 3, "crop expects [C,H,W]");
  require(y0 >= 0 && x0 >= 0 && y0 + h <= img.shape()[1] && x0 + w <= img.shape()[2],
          "crop outside image");
  const std::int64_t c = img.shape()[0], ih = img.shape()[1], iw = img.shape()[2];
  Tensor<float> out = Tensor<float>::zeros({c, h, w});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      std::copy(img.data() + (ch * ih + y0 + y) * iw + x0,
                img.data() + (ch * ih + y0 + y) * iw + x0 + w,
                out.data() + (ch * h + y) * w);
  return out;
}

struct SimParams {
  Task task = Task::sr_x4;
  std::int64_t burst = 14;
  std::int64_t crop = 48;  // SR: LR frame size; denoise/low-light: GT crop size
  int scale = 4;           // SR downsampling factor (mosaic-domain SR factor)
  int gain = 1;
  bool zero_noise = false;  // test override: keep the gain label, emit no noise
  double max_translation = 8.0;
  double max_rotation_deg = 1.0;

  NoiseParams noise() const {
    NoiseParams n = noise_for_gain(gain);
    if (zero_noise) {
      n.sigma_read = 0.0;
      n.sigma_shot = 0.0;
      n.unseen = false;
    }
    return n;
  }

  static SimParams defaults_for(Task t) {
    SimParams p;
    p.task = t;
    switch (t) {
      case Task::sr_x4: break;
      case Task::sr_x8: p.crop = 24; p.scale = 8; break;
      case Task::denoise_gray:
      case Task::denoise_color:
        p.burst = 8; p.crop = 128; p.scale = 1; p.max_rotation_deg = 0.0;
        break;
      case Task::lowlight:
        p.burst = 8; p.crop = 128; p.scale = 1; p.gain = 4;
        break;
    }
    return p;
  }
};

namespace detail {

// Extra source pixels needed so warped content never exposes the zero fill
// inside the final crop.
inline std::int64_t warp_margin(std::int64_t crop_px, const SimParams& p) {
  const double rot = p.max_rotation_deg * (M_PI / 180.0);
  const double swing = crop_px * (std::sqrt(2.0) / 2.0) * std::sin(std::abs(rot));
  return static_cast<std::int64_t>(std::ceil(p.max_translation + swing)) + 1;
}

inline std::int64_t draw_index(Rng& rng, std::int64_t n) {
  return std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(rng.uniform() * n));
}

}  // namespace detail

// Smallest source image extent (either axis) a task accepts.
inline std::int64_t min_source_extent(const SimParams& p) {
  const bool raw_sr = p.task == Task::sr_x4 || p.task == Task::sr_x8;
  const std::int64_t region = raw_sr ? p.crop * p.scale : p.crop;
  return region + 2 * detail::warp_margin(region, p);
}

// BT.601 luma.
inline Tensor<float> rgb_to_gray(const Tensor<float>& rgb) {
  require(rgb.shape().size() == 3 && rgb.shape()[0] == 3,
          "rgb_to_gray expects [3,H,W]");
  const std::int64_t hw = rgb.shape()[1] * rgb.shape()[2];
  Tensor<float> out = Tensor<float>::zeros({1, rgb.shape()[1], rgb.shape()[2]});
  const float* p = rgb.data();
  for (std::int64_t i = 0; i < hw; ++i)
    out.data()[i] = 0.299f * p[i] + 0.587f * p[hw + i] + 0.114f * p[2 * hw + i];
  return out;
}

struct BurstSample {
  std::string task;
  std::uint64_t seed = 0;
  std::vector<Tensor<float>> frames;
  Tensor<float> ground_truth;
  std::vector<FrameTransform> transforms;
  NoiseParams noise;
  IspParams isp;
  double exposure_div = 1.0;  // low-light only
};

// HR sRGB crop is the ground truth; frames are warped, downsampled, mosaicked
// and noised versions of its RAW-domain rendition.
inline BurstSample make_sr_burst(const Tensor<float>& srgb, const SimParams& p,
                                 std::uint64_t seed) {
  require(srgb.shape().size() == 3 && srgb.shape()[0] == 3,
          "SR source must be [3,H,W]");
  require(p.crop % 2 == 0, "SR LR crop must be even for mosaicking");
  const std::int64_t hr = p.crop * p.scale;
  const std::int64_t margin = detail::warp_margin(hr, p);
  const std::int64_t pad = hr + 2 * margin;
  require(srgb.shape()[1] >= pad && srgb.shape()[2] >= pad,
          "source too small: need " + std::to_string(pad) + "px for HR crop " +
              std::to_string(hr) + " plus warp margin " + std::to_string(margin));

  Rng rng0(split_seed(seed, 0));
  const std::int64_t top = detail::draw_index(rng0, srgb.shape()[1] - pad + 1);
  const std::int64_t left = detail::draw_index(rng0, srgb.shape()[2] - pad + 1);
  IspParams isp;
  isp.gain_r = rng0.uniform(1.5, 2.5);
  isp.gain_b = rng0.uniform(1.5, 2.5);

  BurstSample s;
  s.task = task_name(p.task);
  s.seed = seed;
  s.isp = isp;
  s.noise = p.noise();
  s.ground_truth = crop(srgb, top + margin, left + margin, hr, hr);

  const Tensor<float> raw = inverse_isp(crop(srgb, top, left, pad, pad), isp);
  for (std::int64_t b = 0; b < p.burst; ++b) {
    FrameTransform t;
    if (b > 0) {
      Rng rng(split_seed(seed, 1 + static_cast<std::uint64_t>(b)));
      t = random_transform(rng, p.max_translation, p.max_rotation_deg);
    }
    Tensor<float> frame = apply_warp(raw, t);
    frame = crop(frame, margin, margin, hr, hr);
    frame = downsample_bilinear(frame, p.scale);
    frame = mosaic_and_pack(frame);
    frame = add_noise(frame, s.noise,
                      split_seed(seed, 1 + static_cast<std::uint64_t>(p.burst + b)));
    s.frames.push_back(std::move(frame));
    s.transforms.push_back(t);
  }
  return s;
}

// Image-space task: translated noisy copies of the clean crop, no mosaic.
inline BurstSample make_denoise_burst(const Tensor<float>& img, const SimParams& p,
                                      std::uint64_t seed) {
  require(img.shape().size() == 3, "denoise source must be [C,H,W]");
  const std::int64_t want_c = (p.task == Task::denoise_gray) ? 1 : 3;
  require(img.shape()[0] == want_c,
          "denoise source has " + std::to_string(img.shape()[0]) +
              " channels, task wants " + std::to_string(want_c));
  const std::int64_t margin = detail::warp_margin(p.crop, p);
  const std::int64_t pad = p.crop + 2 * margin;
  require(img.shape()[1] >= pad && img.shape()[2] >= pad,
          "source too small: need " + std::to_string(pad) + "px for crop " +
              std::to_string(p.crop) + " plus warp margin " + std::to_string(margin));

  Rng rng0(split_seed(seed, 0));
  const std::int64_t top = detail::draw_index(rng0, img.shape()[1] - pad + 1);
  const std::int64_t left = detail::draw_index(rng0, img.shape()[2] - pad + 1);

  BurstSample s;
  s.task = task_name(p.task);
  s.seed = seed;
  s.noise = p.noise();
  const Tensor<float> region = crop(img, top, left, pad, pad);
  s.ground_truth = crop(region, margin, margin, p.crop, p.crop);

  for (std::int64_t b = 0; b < p.burst; ++b) {
    FrameTransform t;
    if (b > 0) {
      Rng rng(split_seed(seed, 1 + static_cast<std::uint64_t>(b)));
      t = random_transform(rng, p.max_translation, p.max_rotation_deg);
    }
    Tensor<float> frame = crop(apply_warp(region, t), margin, margin, p.crop, p.crop);
    frame = add_noise(frame, s.noise,
                      split_seed(seed, 1 + static_cast<std::uint64_t>(p.burst + b)));
    s.frames.push_back(std::move(frame));
    s.transforms.push_back(t);
  }
  return s;
}

// Low-light style: the RAW rendition is divided by a random exposure factor
// before motion, mosaicking and noise; ground truth stays the well-exposed
// sRGB crop. Exposure divisor ~ U[10,50], drawn after the WB gains.
inline BurstSample make_lowlight_burst(const Tensor<float>& srgb, const SimParams& p,
                                       std::uint64_t seed) {
  require(srgb.shape().size() == 3 && srgb.shape()[0] == 3,
          "low-light source must be [3,H,W]");
  require(p.crop % 2 == 0, "low-light crop must be even for mosaicking");
  const std::int64_t margin = detail::warp_margin(p.crop, p);
  const std::int64_t pad = p.crop + 2 * margin;
  require(srgb.shape()[1] >= pad && srgb.shape()[2] >= pad,
          "source too small: need " + std::to_string(pad) + "px for crop " +
              std::to_string(p.crop) + " plus warp margin " + std::to_string(margin));

  Rng rng0(split_seed(seed, 0));
  const std::int64_t top = detail::draw_index(rng0, srgb.shape()[1] - pad + 1);
  const std::int64_t left = detail::draw_index(rng0, srgb.shape()[2] - pad + 1);
  IspParams isp;
  isp.gain_r = rng0.uniform(1.5, 2.5);
  isp.gain_b = rng0.uniform(1.5, 2.5);
  const double exposure = rng0.uniform(10.0, 50.0);

  BurstSample s;
  s.task = task_name(p.task);
  s.seed = seed;
  s.isp = isp;
  s.exposure_div = exposure;
  s.noise = p.noise();
  s.ground_truth = crop(srgb, top + margin, left + margin, p.crop, p.crop);

  Tensor<float> raw = inverse_isp(crop(srgb, top, left, pad, pad), isp);
  for (auto& v : raw.vec()) v = static_cast<float>(v / exposure);
  for (std::int64_t b = 0; b < p.burst; ++b) {
    FrameTransform t;
    if (b > 0) {
      Rng rng(split_seed(seed, 1 + static_cast<std::uint64_t>(b)));
      t = random_transform(rng, p.max_translation, p.max_rotation_deg);
    }
    Tensor<float> frame = crop(apply_warp(raw, t), margin, margin, p.crop, p.crop);
    frame = mosaic_and_pack(frame);
    frame = add_noise(frame, s.noise,
                      split_seed(seed, 1 + static_cast<std::uint64_t>(p.burst + b)));
    s.frames.push_back(std::move(frame));
    s.transforms.push_back(t);
  }
  return s;
}

inline BurstSample make_burst(const Tensor<float>& src, const SimParams& p,
                              std::uint64_t seed) {
  switch (p.task) {
    case Task::sr_x4:
    case Task::sr_x8: return make_sr_burst(src, p, seed);
    case Task::denoise_gray:
    case Task::denoise_color: return make_denoise_burst(src, p, seed);
    case Task::lowlight: return make_lowlight_burst(src, p, seed);
  }
  throw ValidationError("unknown task");
}

// ---------------------------------------------------------------------------
// On-disk sample layout: frame_###.png (16-bit, affine range), gt.png
// (16-bit, [0,1]) and meta.json describing both plus full provenance.

inline void save_sample(const std::string& dir, const BurstSample& s) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t b = 0; b < s.frames.size(); ++b) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.png", b);
    save_png16((fs::path(dir) / name).string(), s.frames[b], kFrameLo, kFrameHi);
    frames.push_back(name);
  }
  save_png16((fs::path(dir) / "gt.png").string(), s.ground_truth, 0.0f, 1.0f);

  nlohmann::json transforms = nlohmann::json::array();
  for (const auto& t : s.transforms)
    transforms.push_back({{"translate_y", t.translate_y},
                          {"translate_x", t.translate_x},
                          {"rotate_deg", t.rotate_deg}});
  nlohmann::json meta = {
      {"task", s.task},
      {"seed", s.seed},
      {"burst_size", s.frames.size()},
      {"frame_channels", s.frames[0].shape()[0]},
      {"frame_size", {s.frames[0].shape()[1], s.frames[0].shape()[2]}},
      {"gt_channels", s.ground_truth.shape()[0]},
      {"gt_size", {s.ground_truth.shape()[1], s.ground_truth.shape()[2]}},
      {"frames", frames},
      {"gt", "gt.png"},
      {"frame_range", {kFrameLo, kFrameHi}},
      {"gt_range", {0.0, 1.0}},
      {"noise",
       {{"gain", s.noise.gain_label},
        {"sigma_read", s.noise.sigma_read},
        {"sigma_shot", s.noise.sigma_shot},
        {"unseen", s.noise.unseen}}},
      {"transforms", transforms},
      {"isp", {{"gain_r", s.isp.gain_r}, {"gain_b", s.isp.gain_b}}},
      {"exposure_div", s.exposure_div}};
  std::ofstream f(fs::path(dir) / "meta.json");
  if (!f) throw IoError("cannot write meta.json in " + dir);
  f << meta.dump(2) << "\n";
}

// Deterministic procedural sRGB test card: low-frequency color waves plus a
// few soft-edged rectangles. Enough structure for alignment and SR smoke
// tests without any external image corpus.
inline Tensor<float> make_test_image(std::int64_t h, std::int64_t w,
                                     std::uint64_t seed) {
  require(h >= 8 && w >= 8, "test image extents must be >= 8");
  Rng rng(seed);
  Tensor<float> img = Tensor<float>::zeros({3, h, w});
  double fy[3], fx[3], ph[3];
  for (int c = 0; c < 3; ++c) {
    fy[c] = rng.uniform(0.5, 3.0);
    fx[c] = rng.uniform(0.5, 3.0);
    ph[c] = rng.uniform(0.0, 2.0 * M_PI);
  }
  struct Box {
    double y0, x0, y1, x1, amp[3];
  };
  std::vector<Box> boxes(6);
  for (auto& b : boxes) {
    b.y0 = rng.uniform(0.0, 0.8);
    b.x0 = rng.uniform(0.0, 0.8);
    b.y1 = b.y0 + rng.uniform(0.1, 0.4);
    b.x1 = b.x0 + rng.uniform(0.1, 0.4);
    for (auto& a : b.amp) a = rng.uniform(-0.35, 0.35);
  }
  float* p = img.data();
  for (int c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const double u = static_cast<double>(y) / h, v = static_cast<double>(x) / w;
        double val = 0.5 + 0.35 * std::sin(2.0 * M_PI * (fy[c] * u + fx[c] * v) + ph[c]);
        for (const auto& b : boxes) {
          // soft box edge, ~2% of the extent wide
          auto edge = [](double t, double lo, double hi) {
            const double s = 0.02;
            auto smooth = [&](double d) { return 1.0 / (1.0 + std::exp(-d / s)); };
            return smooth(t - lo) * smooth(hi - t);
          };
          val += b.amp[c] * edge(u, b.y0, b.y1) * edge(v, b.x0, b.x1);
        }
        p[(c * h + y) * w + x] = static_cast<float>(std::min(1.0, std::max(0.0, val)));
      }
  return img;
}

inline BurstSample load_sample(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "meta.json");
  if (!mf) throw IoError("missing meta.json in " + dir);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt meta.json in " + dir + ": " + e.what());
  }

  BurstSample s;
  s.task = meta.at("task").get<std::string>();
  s.seed = meta.at("seed").get<std::uint64_t>();
  const float flo = meta.at("frame_range")[0].get<float>();
  const float fhi = meta.at("frame_range")[1].get<float>();
  for (const auto& name : meta.at("frames")) {
    const fs::path fp = fs::path(dir) / name.get<std::string>();
    if (!fs::exists(fp)) throw IoError("missing burst frame: " + fp.string());
    s.frames.push_back(load_png16(fp.string(), flo, fhi));
  }
  const float glo = meta.at("gt_range")[0].get<float>();
  const float ghi = meta.at("gt_range")[1].get<float>();
  s.ground_truth =
      load_png16((fs::path(dir) / meta.at("gt").get<std::string>()).string(), glo, ghi);
  for (const auto& t : meta.at("transforms"))
    s.transforms.push_back({t.at("translate_y").get<double>(),
                            t.at("translate_x").get<double>(),
                            t.at("rotate_deg").get<double>()});
  const auto& n = meta.at("noise");
  s.noise.gain_label = n.at("gain").get<int>();
  s.noise.sigma_read = n.at("sigma_read").get<double>();
  s.noise.sigma_shot = n.at("sigma_shot").get<double>();
  s.noise.unseen = n.at("unseen").get<bool>();
  s.isp.gain_r = meta.at("isp").at("gain_r").get<double>();
  s.isp.gain_b = meta.at("isp").at("gain_b").get<double>();
  s.exposure_div = meta.at("exposure_div").get<double>();
  return s;
}

}  // namespace burstforge
