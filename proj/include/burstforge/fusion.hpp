#pragma once

// Pseudo-burst feature fusion: channel c of every aligned frame is gathered
// into a B-channel stack and projected to f channels by one shared conv, so
// pseudo-frame c depends on channel c alone. Each pseudo-frame then runs
// through a shared 3-level U-Net whose widths grow 1.5x per level.

#include <string>
#include <vector>

#include "burstforge/align.hpp"
#include "burstforge/layers.hpp"
#include "burstforge/tensor.hpp"

namespace burstforge {

template <typename T>
struct PseudoBurstFuser {
  Conv2dLayer<T> conv;  // B -> f, shared across channels

  PseudoBurstFuser() = default;
  PseudoBurstFuser(ParamStore<T>& ps, const std::string& name, std::int64_t burst,
                   std::int64_t f) {
    conv = Conv2dLayer<T>(ps, name + ".conv", burst, f, 3, 1, 1, false);
  }

  // e: B x [f,H,W] -> f pseudo-frames, each [f,H,W]
  std::vector<Tensor<T>> operator()(const std::vector<Tensor<T>>& e) const {
    require(!e.empty(), "pseudo-burst needs at least one frame");
    const std::int64_t b = static_cast<std::int64_t>(e.size());
    require(conv.w.shape()[1] == b,
            "pseudo-burst conv expects burst size " + std::to_string(conv.w.shape()[1]) +
                ", got " + std::to_string(b));
    const std::int64_t f = e[0].shape()[0];
    std::vector<Tensor<T>> out;
    out.reserve(f);
    for (std::int64_t c = 0; c < f; ++c) {
      std::vector<Tensor<T>> channel_stack;
      channel_stack.reserve(e.size());
      for (const auto& frame : e) channel_stack.push_back(slice(frame, 0, c, c + 1));
      out.push_back(conv(concat(channel_stack, 0)));
    }
    return out;
  }
};

inline std::int64_t msf_width(std::int64_t f) { return (3 * f) / 2; }

template <typename T>
struct MsfUnet {
  Conv2dLayer<T> down1, down2;  // stride-2
  TConv2dX2Layer<T> up1, up2;
  Fpm<T> fpm_d1, fpm_d2, fpm_u1, fpm_u2;

  MsfUnet() = default;
  MsfUnet(ParamStore<T>& ps, const std::string& name, std::int64_t f) {
    const std::int64_t f1 = msf_width(f);
    const std::int64_t f2 = msf_width(f1);
    down1 = Conv2dLayer<T>(ps, name + ".down1", f, f1, 3, 2, 1, false);
    fpm_d1 = Fpm<T>(ps, name + ".fpm_d1", f1, 2, 2);
    down2 = Conv2dLayer<T>(ps, name + ".down2", f1, f2, 3, 2, 1, false);
    fpm_d2 = Fpm<T>(ps, name + ".fpm_d2", f2, 2, 2);
    up1 = TConv2dX2Layer<T>(ps, name + ".up1", f2, f1);
    fpm_u1 = Fpm<T>(ps, name + ".fpm_u1", f1, 2, 2);
    up2 = TConv2dX2Layer<T>(ps, name + ".up2", f1, f);
    fpm_u2 = Fpm<T>(ps, name + ".fpm_u2", f, 2, 2);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    require(x.shape()[1] % 4 == 0 && x.shape()[2] % 4 == 0,
            "msf input extents must be divisible by 4, got " + shape_str(x.shape()));
    Tensor<T> d1 = fpm_d1(down1(x));
    Tensor<T> d2 = fpm_d2(down2(d1));
    Tensor<T> u1 = fpm_u1(add(up1(d2), d1));
    return fpm_u2(add(up2(u1), x));
  }
};

}  // namespace burstforge
