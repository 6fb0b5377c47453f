#pragma once

// Modulated deformable 3x3 convolution, stride 1, zero pad 1 (same-size
// output). Each of the K=9 taps samples the input at its regular grid
// position displaced by a learned per-pixel offset, weighted by a per-pixel
// mask in (0,1). Sampling is bilinear; reads outside the image are zero and
// receive no gradient.
//
// Offsets layout: [2K,H,W], channel 2t is the vertical displacement of tap t
// and 2t+1 the horizontal one, taps in row-major kernel order. Masks: [K,H,W]
// already squashed by the caller.

#include <cstdint>
#include <vector>

#include "burstforge/parallel.hpp"
#include "burstforge/tensor.hpp"

namespace burstforge {

namespace detail {

// Four-corner bilinear stencil for one sample position.
template <typename T>
struct BilinStencil {
  std::int64_t idx[4];  // flat index into an [H,W] plane, -1 if outside
  T wt[4];
  T dy[4];  // d(weight)/d(sy)
  T dx[4];  // d(weight)/d(sx)
};

template <typename T>
BilinStencil<T> bilin_stencil(T sy, T sx, std::int64_t h, std::int64_t w) {
  BilinStencil<T> st;
  const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
  const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
  const T fy = sy - static_cast<T>(y0);
  const T fx = sx - static_cast<T>(x0);
  const std::int64_t ys[2] = {y0, y0 + 1};
  const std::int64_t xs[2] = {x0, x0 + 1};
  const T wy[2] = {T(1) - fy, fy};
  const T wx[2] = {T(1) - fx, fx};
  const T gy[2] = {T(-1), T(1)};
  const T gx[2] = {T(-1), T(1)};
  int n = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const bool in = ys[a] >= 0 && ys[a] < h && xs[b] >= 0 && xs[b] < w;
      st.idx[n] = in ? ys[a] * w + xs[b] : -1;
      st.wt[n] = wy[a] * wx[b];
      st.dy[n] = gy[a] * wx[b];
      st.dx[n] = wy[a] * gx[b];
      ++n;
    }
  return st;
}

}  // namespace detail

// Samples every channel of `feature` at the absolute (y,x) positions given by
// coords[0],coords[1]; differentiable in both arguments. Out-of-bounds reads
// are zero and out-of-bounds corners take no gradient.
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& feature, const Tensor<T>& coords) {
  require(feature.shape().size() == 3, "bilinear_sample feature must be [C,H,W]");
  const std::int64_t ch = feature.shape()[0];
  const std::int64_t h = feature.shape()[1], w = feature.shape()[2];
  require(coords.shape() == Shape({2, h, w}),
          "bilinear_sample coords must be [2,H,W], got " + shape_str(coords.shape()));
  for (const T& v : coords.vec())
    if (!std::isfinite(static_cast<double>(v)))
      throw ValidationError("bilinear_sample coords must be finite");

  Tensor<T> out = Tensor<T>::zeros(feature.shape());
  const std::int64_t hw = h * w;
  const T* pf = feature.data();
  const T* pc = coords.data();
  T* po = out.data();
  for (std::int64_t p = 0; p < hw; ++p) {
    const auto st = detail::bilin_stencil(pc[p], pc[hw + p], h, w);
    for (std::int64_t c = 0; c < ch; ++c) {
      T acc = T(0);
      const T* plane = pf + c * hw;
      for (int n = 0; n < 4; ++n)
        if (st.idx[n] >= 0) acc += st.wt[n] * plane[st.idx[n]];
      po[c * hw + p] = acc;
    }
  }
  detail::check_finite(out, "bilinear_sample");

  Tape<T>* tape = Tape<T>::current();
  const bool tf = detail::tracked(tape, feature);
  const bool tc = detail::tracked(tape, coords);
  if (tf || tc) {
    if (tf) const_cast<Tensor<T>&>(feature).ensure_grad();
    if (tc) const_cast<Tensor<T>&>(coords).ensure_grad();
    detail::enroll(tape, out);
    auto fi = feature.impl();
    auto ci = coords.impl();
    auto oi = out.impl();
    tape->record([fi, ci, oi, tf, tc, ch, h, w] {
      const std::int64_t hw = h * w;
      for (std::int64_t p = 0; p < hw; ++p) {
        const auto st = detail::bilin_stencil(ci->data[p], ci->data[hw + p], h, w);
        T gsy = T(0), gsx = T(0);
        for (std::int64_t c = 0; c < ch; ++c) {
          const T go = oi->grad[c * hw + p];
          if (go == T(0)) continue;
          for (int n = 0; n < 4; ++n) {
            if (st.idx[n] < 0) continue;
            if (tf) fi->grad[c * hw + st.idx[n]] += go * st.wt[n];
            gsy += go * st.dy[n] * fi->data[c * hw + st.idx[n]];
            gsx += go * st.dx[n] * fi->data[c * hw + st.idx[n]];
          }
        }
        if (tc) {
          ci->grad[p] += gsy;
          ci->grad[hw + p] += gsx;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> deform_conv2d(const Tensor<T>& x, const Tensor<T>& w,
                        const Tensor<T>& offsets, const Tensor<T>& masks) {
  require(x.shape().size() == 3, "deform input must be [C,H,W]");
  const std::int64_t ci = x.shape()[0], h = x.shape()[1], ww = x.shape()[2];
  require(w.shape() == Shape({w.shape()[0], ci, 3, 3}),
          "deform weight must be [Co,Ci,3,3], got " + shape_str(w.shape()));
  const std::int64_t co = w.shape()[0];
  require(offsets.shape() == Shape({18, h, ww}),
          "deform offsets must be [18,H,W], got " + shape_str(offsets.shape()));
  require(masks.shape() == Shape({9, h, ww}),
          "deform masks must be [9,H,W], got " + shape_str(masks.shape()));
  for (const T& v : masks.vec())
    require(v >= T(0) && v <= T(1), "deform masks must lie in [0,1]");

  Tensor<T> out = Tensor<T>::zeros({co, h, ww});
  const std::int64_t hw = h * ww;
  const T* px = x.data();
  const T* pw = w.data();
  const T* poff = offsets.data();
  const T* pm = masks.data();
  T* po = out.data();

  parallel_for(h, [&](std::int64_t row_lo, std::int64_t row_hi) {
    std::vector<T> v(ci);
    for (std::int64_t r = row_lo; r < row_hi; ++r)
      for (std::int64_t c = 0; c < ww; ++c) {
        const std::int64_t p = r * ww + c;
        for (int t = 0; t < 9; ++t) {
          const T m = pm[t * hw + p];
          const T sy = static_cast<T>(r + t / 3 - 1) + poff[(2 * t) * hw + p];
          const T sx = static_cast<T>(c + t % 3 - 1) + poff[(2 * t + 1) * hw + p];
          const auto st = detail::bilin_stencil(sy, sx, h, ww);
          for (std::int64_t ic = 0; ic < ci; ++ic) {
            T acc = T(0);
            const T* plane = px + ic * hw;
            for (int n = 0; n < 4; ++n)
              if (st.idx[n] >= 0) acc += st.wt[n] * plane[st.idx[n]];
            v[ic] = acc * m;
          }
          for (std::int64_t oc = 0; oc < co; ++oc) {
            const T* wp = pw + (oc * ci) * 9 + t;
            T acc = T(0);
            for (std::int64_t ic = 0; ic < ci; ++ic) acc += wp[ic * 9] * v[ic];
            po[oc * hw + p] += acc;
          }
        }
      }
  });
  detail::check_finite(out, "deform_conv2d");

  Tape<T>* tape = Tape<T>::current();
  const bool tx = detail::tracked(tape, x);
  const bool tw = detail::tracked(tape, w);
  const bool to = detail::tracked(tape, offsets);
  const bool tm = detail::tracked(tape, masks);
  if (tx || tw || to || tm) {
    if (tx) const_cast<Tensor<T>&>(x).ensure_grad();
    if (tw) const_cast<Tensor<T>&>(w).ensure_grad();
    if (to) const_cast<Tensor<T>&>(offsets).ensure_grad();
    if (tm) const_cast<Tensor<T>&>(masks).ensure_grad();
    detail::enroll(tape, out);
    auto xi = x.impl();
    auto wi = w.impl();
    auto ofi = offsets.impl();
    auto mi = masks.impl();
    auto oi = out.impl();
    tape->record([xi, wi, ofi, mi, oi, tx, tw, to, tm, ci, co, h, ww] {
      const std::int64_t hw = h * ww;
      const T* px = xi->data.data();
      const T* pw = wi->data.data();
      const T* poff = ofi->data.data();
      const T* pm = mi->data.data();
      const T* go = oi->grad.data();
      std::vector<T> v(ci), gv(ci);
      for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < ww; ++c) {
          const std::int64_t p = r * ww + c;
          for (int t = 0; t < 9; ++t) {
            const T m = pm[t * hw + p];
            const T sy = static_cast<T>(r + t / 3 - 1) + poff[(2 * t) * hw + p];
            const T sx = static_cast<T>(c + t % 3 - 1) + poff[(2 * t + 1) * hw + p];
            const auto st = detail::bilin_stencil(sy, sx, h, ww);
            // Recompute unmodulated samples v and pull back the output
            // cotangent onto them: gv[ci] = sum_co go * w.
            for (std::int64_t ic = 0; ic < ci; ++ic) {
              T acc = T(0);
              const T* plane = px + ic * hw;
              for (int n = 0; n < 4; ++n)
                if (st.idx[n] >= 0) acc += st.wt[n] * plane[st.idx[n]];
              v[ic] = acc;
              gv[ic] = T(0);
            }
            for (std::int64_t oc = 0; oc < co; ++oc) {
              const T g = go[oc * hw + p];
              if (g == T(0)) continue;
              const T* wp = pw + (oc * ci) * 9 + t;
              if (tw) {
                T* gwp = wi->grad.data() + (oc * ci) * 9 + t;
                for (std::int64_t ic = 0; ic < ci; ++ic) {
                  gv[ic] += g * wp[ic * 9];
                  gwp[ic * 9] += g * m * v[ic];
                }
              } else {
                for (std::int64_t ic = 0; ic < ci; ++ic) gv[ic] += g * wp[ic * 9];
              }
            }
            T gm = T(0), gsy = T(0), gsx = T(0);
            for (std::int64_t ic = 0; ic < ci; ++ic) {
              gm += gv[ic] * v[ic];
              const T gs = gv[ic] * m;  // cotangent on the modulated sample
              if (gs == T(0)) continue;
              const T* plane = px + ic * hw;
              T* gplane = tx ? xi->grad.data() + ic * hw : nullptr;
              for (int n = 0; n < 4; ++n) {
                if (st.idx[n] < 0) continue;
                if (tx) gplane[st.idx[n]] += gs * st.wt[n];
                gsy += gs * st.dy[n] * plane[st.idx[n]];
                gsx += gs * st.dx[n] * plane[st.idx[n]];
              }
            }
            if (tm) mi->grad[t * hw + p] += gm;
            if (to) {
              ofi->grad[(2 * t) * hw + p] += gsy;
              ofi->grad[(2 * t + 1) * hw + p] += gsx;
            }
          }
        }
    });
  }
  return out;
}

}  // namespace burstforge
