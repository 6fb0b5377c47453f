#pragma once

// 2D convolution on [C,H,W] tensors with zero padding, plus a stride-2
// transposed convolution implemented as the exact adjoint of the stride-2
// forward convolution (same kernels, roles of input/cotangent swapped).
// All kernels accumulate into their destination buffer.

#include <cstdint>
#include <vector>

#include "burstforge/parallel.hpp"
#include "burstforge/tensor.hpp"

namespace burstforge {

struct ConvSpec {
  std::int64_t ci = 0, h = 0, w = 0;  // input
  std::int64_t co = 0, k = 0;         // weight [co, ci/groups, k, k]
  std::int64_t ho = 0, wo = 0;        // output
  int stride = 1, pad = 1, groups = 1;
};

inline ConvSpec make_conv_spec(const Shape& x_shape, const Shape& w_shape,
                               int stride, int pad, int groups) {
  require(x_shape.size() == 3, "conv input must be [C,H,W], got " + shape_str(x_shape));
  require(w_shape.size() == 4 && w_shape[2] == w_shape[3],
          "conv weight must be [Co,Ci/g,k,k], got " + shape_str(w_shape));
  require(stride == 1 || stride == 2, "conv stride must be 1 or 2");
  require(pad >= 0, "conv pad must be >= 0");
  require(groups >= 1, "conv groups must be >= 1");
  ConvSpec s;
  s.ci = x_shape[0];
  s.h = x_shape[1];
  s.w = x_shape[2];
  s.co = w_shape[0];
  s.k = w_shape[2];
  s.stride = stride;
  s.pad = pad;
  s.groups = groups;
  require(s.ci % groups == 0 && s.co % groups == 0,
          "conv channels must be divisible by groups");
  require(w_shape[1] == s.ci / groups,
          "conv weight in-channels mismatch: " + shape_str(w_shape) + " for input " +
              shape_str(x_shape) + " with groups " + std::to_string(groups));
  s.ho = (s.h + 2 * pad - s.k) / stride + 1;
  s.wo = (s.w + 2 * pad - s.k) / stride + 1;
  require(s.ho >= 1 && s.wo >= 1, "conv output would be empty");
  return s;
}

namespace rawconv {

template <typename T>
void forward(const T* x, const T* w, const T* bias, T* y, const ConvSpec& s) {
  const std::int64_t cig = s.ci / s.groups;
  const std::int64_t cog = s.co / s.groups;
  parallel_for(s.co, [&](std::int64_t co_lo, std::int64_t co_hi) {
    for (std::int64_t co = co_lo; co < co_hi; ++co) {
      const std::int64_t g = co / cog;
      for (std::int64_t ho = 0; ho < s.ho; ++ho)
        for (std::int64_t wo = 0; wo < s.wo; ++wo) {
          T acc = bias ? bias[co] : T(0);
          for (std::int64_t ci = 0; ci < cig; ++ci) {
            const T* xp = x + (g * cig + ci) * s.h * s.w;
            const T* wp = w + (co * cig + ci) * s.k * s.k;
            for (std::int64_t kh = 0; kh < s.k; ++kh) {
              const std::int64_t ih = ho * s.stride - s.pad + kh;
              if (ih < 0 || ih >= s.h) continue;
              for (std::int64_t kw = 0; kw < s.k; ++kw) {
                const std::int64_t iw = wo * s.stride - s.pad + kw;
                if (iw < 0 || iw >= s.w) continue;
                acc += wp[kh * s.k + kw] * xp[ih * s.w + iw];
              }
            }
          }
          y[(co * s.ho + ho) * s.wo + wo] += acc;
        }
    }
  });
}

// Gather form: each input cell collects contributions from the output cells
// whose receptive field covers it. Disjoint writes per input channel.
template <typename T>
void input_grad(const T* gy, const T* w, T* gx, const ConvSpec& s) {
  const std::int64_t cig = s.ci / s.groups;
  const std::int64_t cog = s.co / s.groups;
  parallel_for(s.ci, [&](std::int64_t ci_lo, std::int64_t ci_hi) {
    for (std::int64_t ci = ci_lo; ci < ci_hi; ++ci) {
      const std::int64_t g = ci / cig;
      const std::int64_t ci_in_g = ci % cig;
      for (std::int64_t ih = 0; ih < s.h; ++ih)
        for (std::int64_t iw = 0; iw < s.w; ++iw) {
          T acc = T(0);
          for (std::int64_t kh = 0; kh < s.k; ++kh) {
            const std::int64_t num_h = ih + s.pad - kh;
            if (num_h < 0 || num_h % s.stride != 0) continue;
            const std::int64_t ho = num_h / s.stride;
            if (ho >= s.ho) continue;
            for (std::int64_t kw = 0; kw < s.k; ++kw) {
              const std::int64_t num_w = iw + s.pad - kw;
              if (num_w < 0 || num_w % s.stride != 0) continue;
              const std::int64_t wo = num_w / s.stride;
              if (wo >= s.wo) continue;
              for (std::int64_t co = g * cog; co < (g + 1) * cog; ++co)
                acc += w[(co * cig + ci_in_g) * s.k * s.k + kh * s.k + kw] *
                       gy[(co * s.ho + ho) * s.wo + wo];
            }
          }
          gx[(ci * s.h + ih) * s.w + iw] += acc;
        }
    }
  });
}

template <typename T>
void weight_grad(const T* x, const T* gy, T* gw, const ConvSpec& s) {
  const std::int64_t cig = s.ci / s.groups;
  const std::int64_t cog = s.co / s.groups;
  parallel_for(s.co, [&](std::int64_t co_lo, std::int64_t co_hi) {
    for (std::int64_t co = co_lo; co < co_hi; ++co) {
      const std::int64_t g = co / cog;
      for (std::int64_t ci = 0; ci < cig; ++ci) {
        const T* xp = x + (g * cig + ci) * s.h * s.w;
        T* wp = gw + (co * cig + ci) * s.k * s.k;
        for (std::int64_t kh = 0; kh < s.k; ++kh)
          for (std::int64_t kw = 0; kw < s.k; ++kw) {
            T acc = T(0);
            for (std::int64_t ho = 0; ho < s.ho; ++ho) {
              const std::int64_t ih = ho * s.stride - s.pad + kh;
              if (ih < 0 || ih >= s.h) continue;
              for (std::int64_t wo = 0; wo < s.wo; ++wo) {
                const std::int64_t iw = wo * s.stride - s.pad + kw;
                if (iw < 0 || iw >= s.w) continue;
                acc += gy[(co * s.ho + ho) * s.wo + wo] * xp[ih * s.w + iw];
              }
            }
            wp[kh * s.k + kw] += acc;
          }
      }
    }
  });
}

template <typename T>
void bias_grad(const T* gy, T* gb, const ConvSpec& s) {
  for (std::int64_t co = 0; co < s.co; ++co) {
    T acc = T(0);
    const T* p = gy + co * s.ho * s.wo;
    for (std::int64_t i = 0; i < s.ho * s.wo; ++i) acc += p[i];
    gb[co] += acc;
  }
}

}  // namespace rawconv

// Pass an undefined Tensor for `bias` to omit it.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride = 1, int pad = 1, int groups = 1) {
  const ConvSpec s = make_conv_spec(x.shape(), w.shape(), stride, pad, groups);
  if (bias.defined())
    require(bias.shape() == Shape{s.co},
            "conv bias must be [Co], got " + shape_str(bias.shape()));

  Tensor<T> out = Tensor<T>::zeros({s.co, s.ho, s.wo});
  rawconv::forward(x.data(), w.data(), bias.defined() ? bias.data() : nullptr,
                   out.data(), s);
  detail::check_finite(out, "conv2d");

  Tape<T>* tape = Tape<T>::current();
  const bool tx = detail::tracked(tape, x);
  const bool tw = detail::tracked(tape, w);
  const bool tb = bias.defined() && detail::tracked(tape, bias);
  if (tx || tw || tb) {
    if (tx) const_cast<Tensor<T>&>(x).ensure_grad();
    if (tw) const_cast<Tensor<T>&>(w).ensure_grad();
    if (tb) const_cast<Tensor<T>&>(bias).ensure_grad();
    detail::enroll(tape, out);
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    auto oi = out.impl();
    tape->record([xi, wi, bi, oi, s, tx, tw, tb] {
      if (tx) rawconv::input_grad(oi->grad.data(), wi->data.data(), xi->grad.data(), s);
      if (tw) rawconv::weight_grad(xi->data.data(), oi->grad.data(), wi->grad.data(), s);
      if (tb) rawconv::bias_grad(oi->grad.data(), bi->grad.data(), s);
    });
  }
  return out;
}

// Transposed convolution, fixed k=3, stride=2, pad=1, output_padding=1: maps
// [Ci,H,W] to [Co,2H,2W]. Weight layout [Ci,Co,3,3]. Forward is the adjoint
// (input-grad) of the corresponding stride-2 conv, which makes
// <conv(x), y> == <x, tconv(y)> hold exactly by construction.
template <typename T>
Tensor<T> transposed_conv2d_x2(const Tensor<T>& x, const Tensor<T>& w,
                               const Tensor<T>& bias) {
  require(x.shape().size() == 3, "tconv input must be [C,H,W]");
  require(w.shape().size() == 4 && w.shape()[2] == 3 && w.shape()[3] == 3,
          "tconv weight must be [Ci,Co,3,3], got " + shape_str(w.shape()));
  require(w.shape()[0] == x.shape()[0],
          "tconv weight in-channels mismatch: " + shape_str(w.shape()) + " for input " +
              shape_str(x.shape()));
  const std::int64_t co = w.shape()[1];
  const std::int64_t ho = 2 * x.shape()[1];
  const std::int64_t wo = 2 * x.shape()[2];

  // Underlying stride-2 conv: [co, ho, wo] -> [ci, h, w] with weight [ci, co, 3, 3].
  ConvSpec s = make_conv_spec({co, ho, wo}, w.shape(), /*stride=*/2, /*pad=*/1,
                              /*groups=*/1);
  require(s.ho == x.shape()[1] && s.wo == x.shape()[2],
          "tconv geometry mismatch");
  if (bias.defined())
    require(bias.shape() == Shape{co},
            "tconv bias must be [Co], got " + shape_str(bias.shape()));

  Tensor<T> out = Tensor<T>::zeros({co, ho, wo});
  rawconv::input_grad(x.data(), w.data(), out.data(), s);
  if (bias.defined()) {
    T* po = out.data();
    const T* pb = bias.data();
    for (std::int64_t c = 0; c < co; ++c)
      for (std::int64_t i = 0; i < ho * wo; ++i) po[c * ho * wo + i] += pb[c];
  }
  detail::check_finite(out, "transposed_conv2d_x2");

  Tape<T>* tape = Tape<T>::current();
  const bool tx = detail::tracked(tape, x);
  const bool tw = detail::tracked(tape, w);
  const bool tb = bias.defined() && detail::tracked(tape, bias);
  if (tx || tw || tb) {
    if (tx) const_cast<Tensor<T>&>(x).ensure_grad();
    if (tw) const_cast<Tensor<T>&>(w).ensure_grad();
    if (tb) const_cast<Tensor<T>&>(bias).ensure_grad();
    detail::enroll(tape, out);
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    auto oi = out.impl();
    tape->record([xi, wi, bi, oi, s, tx, tw, tb, ho, wo, co] {
      // Adjoint of the adjoint is the forward conv; weight grad swaps the
      // roles of activation and cotangent relative to the plain conv.
      if (tx) rawconv::forward(oi->grad.data(), wi->data.data(), (const T*)nullptr,
                               xi->grad.data(), s);
      if (tw) rawconv::weight_grad(oi->grad.data(), xi->data.data(), wi->grad.data(), s);
      if (tb) {
        for (std::int64_t c = 0; c < co; ++c) {
          T acc = T(0);
          for (std::int64_t i = 0; i < ho * wo; ++i) acc += oi->grad[c * ho * wo + i];
          bi->grad[c] += acc;
        }
      }
    });
  }
  return out;
}

}  // namespace burstforge
