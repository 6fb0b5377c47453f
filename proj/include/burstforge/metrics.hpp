#pragma once

// Image quality metrics on [C,H,W] float tensors with a [0,1] nominal range.
// Both inputs are clamped to [0,1] before comparison so unclipped network
// output does not distort scores.

#include <cmath>
#include <vector>

#include "burstforge/tensor.hpp"

namespace burstforge {

namespace detail {

inline std::vector<double> clamped01(const Tensor<float>& t) {
  std::vector<double> v(t.vec().begin(), t.vec().end());
  for (auto& x : v) x = std::min(1.0, std::max(0.0, x));
  return v;
}

}  // namespace detail

// Peak signal-to-noise ratio in dB, peak 1. Identical images score 100 dB
// (finite cap instead of infinity).
inline double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  require(a.shape() == b.shape(), "psnr shape mismatch: " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
  require(a.numel() > 0, "psnr on empty tensor");
  const auto va = detail::clamped01(a);
  const auto vb = detail::clamped01(b);
  double mse = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(va.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, -10.0 * std::log10(mse));
}

// Structural similarity, standard constants: 11x11 Gaussian window with
// sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1. Computed on the valid
// (fully inside) region only and averaged over channels. Images must be at
// least 11x11.
inline double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  require(a.shape() == b.shape(), "ssim shape mismatch: " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
  require(a.shape().size() == 3, "ssim expects [C,H,W]");
  const std::int64_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  constexpr int kWin = 11;
  require(h >= kWin && w >= kWin, "ssim needs extents >= 11");

  double win[kWin];
  {
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
      const double d = i - (kWin - 1) / 2.0;
      win[i] = std::exp(-d * d / (2.0 * sigma * sigma));
      sum += win[i];
    }
    for (auto& v : win) v /= sum;
  }

  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const auto va = detail::clamped01(a);
  const auto vb = detail::clamped01(b);
  const std::int64_t ho = h - kWin + 1, wo = w - kWin + 1;

  double total = 0.0;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const double* pa = va.data() + ch * h * w;
    const double* pb = vb.data() + ch * h * w;
    // separable window: blur rows first, then columns
    std::vector<double> ra(h * wo), rb(h * wo), raa(h * wo), rbb(h * wo), rab(h * wo);
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < wo; ++x) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int k = 0; k < kWin; ++k) {
          const double xa = pa[y * w + x + k], xb = pb[y * w + x + k];
          sa += win[k] * xa;
          sb += win[k] * xb;
          saa += win[k] * xa * xa;
          sbb += win[k] * xb * xb;
          sab += win[k] * xa * xb;
        }
        ra[y * wo + x] = sa;
        rb[y * wo + x] = sb;
        raa[y * wo + x] = saa;
        rbb[y * wo + x] = sbb;
        rab[y * wo + x] = sab;
      }
    double acc = 0.0;
    for (std::int64_t y = 0; y < ho; ++y)
      for (std::int64_t x = 0; x < wo; ++x) {
        double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
        for (int k = 0; k < kWin; ++k) {
          ma += win[k] * ra[(y + k) * wo + x];
          mb += win[k] * rb[(y + k) * wo + x];
          maa += win[k] * raa[(y + k) * wo + x];
          mbb += win[k] * rbb[(y + k) * wo + x];
          mab += win[k] * rab[(y + k) * wo + x];
        }
        const double var_a = maa - ma * ma;
        const double var_b = mbb - mb * mb;
        const double cov = mab - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      }
    total += acc / static_cast<double>(ho * wo);
  }
  return total / static_cast<double>(c);
}

}  // namespace burstforge
