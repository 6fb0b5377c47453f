#pragma once

// Feature processing (residual-in-residual global context attention stacks)
// and edge boosting feature alignment. Every frame is aligned to frame 0 via
// three chained offset-predict/deform stages; the alignment then gets an
// edge-boost residual against the base-frame features.

#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "burstforge/deform.hpp"
#include "burstforge/layers.hpp"
#include "burstforge/tensor.hpp"

namespace burstforge {

// Global context attention: a single spatial softmax pools the map into a
// per-channel context vector, which a 1x1 bottleneck refines and adds back.
template <typename T>
struct Gca {
  Conv2dLayer<T> key;   // f -> 1
  Conv2dLayer<T> down;  // f -> f/r
  Conv2dLayer<T> up;    // f/r -> f

  Gca() = default;
  Gca(ParamStore<T>& ps, const std::string& name, std::int64_t f, std::int64_t r) {
    require(f % r == 0, "gca width must be divisible by the bottleneck ratio");
    key = Conv2dLayer<T>(ps, name + ".key", f, 1, 1, 1, 0, false);
    down = Conv2dLayer<T>(ps, name + ".down", f, f / r, 1, 1, 0, false);
    up = Conv2dLayer<T>(ps, name + ".up", f / r, f, 1, 1, 0, false);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    const std::int64_t f = x.shape()[0];
    const std::int64_t hw = x.shape()[1] * x.shape()[2];
    Tensor<T> alpha = softmax(reshape(key(x), {1, hw}), 1);
    Tensor<T> ctx = matmul(reshape(x, {f, hw}), reshape(alpha, {hw, 1}));
    ctx = reshape(ctx, {f, 1, 1});
    ctx = up(leaky_relu(down(ctx)));
    return add(x, ctx);
  }
};

template <typename T>
struct Rgcab {
  Conv2dLayer<T> conv_a, conv_b;  // 3x3 residual pair
  Gca<T> gca;
  Conv2dLayer<T> out;  // 1x1 before the block skip

  Rgcab() = default;
  Rgcab(ParamStore<T>& ps, const std::string& name, std::int64_t f, std::int64_t r) {
    conv_a = Conv2dLayer<T>(ps, name + ".conv_a", f, f, 3, 1, 1, false);
    conv_b = Conv2dLayer<T>(ps, name + ".conv_b", f, f, 3, 1, 1, false);
    gca = Gca<T>(ps, name + ".gca", f, r);
    out = Conv2dLayer<T>(ps, name + ".out", f, f, 1, 1, 0, false);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> t = conv_b(leaky_relu(conv_a(x)));
    return add(x, out(gca(t)));
  }
};

// g residual groups of m blocks each, every group and the module itself
// closed by a 3x3 conv before its skip.
template <typename T>
struct Fpm {
  std::vector<std::vector<Rgcab<T>>> blocks;
  std::vector<Conv2dLayer<T>> group_tail;
  Conv2dLayer<T> tail;

  Fpm() = default;
  Fpm(ParamStore<T>& ps, const std::string& name, std::int64_t f, int g, int m,
      std::int64_t r = 4) {
    require(g >= 1 && m >= 1, "fpm needs at least one group and one block");
    for (int gi = 0; gi < g; ++gi) {
      blocks.emplace_back();
      for (int mi = 0; mi < m; ++mi)
        blocks.back().emplace_back(ps,
                                   name + ".rir" + std::to_string(gi) + ".block" +
                                       std::to_string(mi),
                                   f, r);
      group_tail.emplace_back(ps, name + ".rir" + std::to_string(gi) + ".tail", f, f,
                              3, 1, 1, false);
    }
    tail = Conv2dLayer<T>(ps, name + ".tail", f, f, 3, 1, 1, false);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> cur = x;
    for (std::size_t gi = 0; gi < blocks.size(); ++gi) {
      Tensor<T> t = cur;
      for (const auto& b : blocks[gi]) t = b(t);
      cur = add(cur, group_tail[gi](t));
    }
    return add(x, tail(cur));
  }
};

// Test hook: scrambles the 18/9 offset/mask channel split so downstream
// equivalence checks must catch the layout corruption.
inline bool fault_offset_layout() {
  const char* v = std::getenv("BURSTFORGE_FAULT_INJECT");
  return v != nullptr && std::string(v) == "offset-layout";
}

// Single 3x3 conv on the concatenated (current, base) features predicting the
// deform field: channels [0,18) are tap offsets, [18,27) mask logits.
// Zero-initialized so the initial field is the identity (offsets 0, masks
// sigmoid(0) = 0.5).
template <typename T>
struct OffsetPredictor {
  Conv2dLayer<T> conv;

  OffsetPredictor() = default;
  OffsetPredictor(ParamStore<T>& ps, const std::string& name, std::int64_t f) {
    conv = Conv2dLayer<T>(ps, name + ".conv", 2 * f, 27, 3, 1, 1, false, 1, Init::zero);
  }

  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& cur,
                                             const Tensor<T>& base) const {
    require(cur.shape() == base.shape(), "offset predictor inputs must match");
    Tensor<T> field = conv(concat<T>({cur, base}, 0));
    if (fault_offset_layout())
      return {slice(field, 0, 9, 27), sigmoid(slice(field, 0, 0, 9))};
    return {slice(field, 0, 0, 18), sigmoid(slice(field, 0, 18, 27))};
  }
};

template <typename T>
struct Ebfa {
  Conv2dLayer<T> conv_in;  // only biased conv in the network
  Fpm<T> fpm_in;
  std::vector<OffsetPredictor<T>> predictors;
  std::vector<Tensor<T>> align_w;  // deform weights per stage
  Fpm<T> fpm_raf;
  Conv2dLayer<T> edge;

  Ebfa() = default;
  Ebfa(ParamStore<T>& ps, const std::string& name, std::int64_t in_ch, std::int64_t f,
       int fpm_groups = 3, int fpm_blocks = 3, int stages = 3) {
    conv_in = Conv2dLayer<T>(ps, name + ".conv_in", in_ch, f, 3, 1, 1, true);
    fpm_in = Fpm<T>(ps, name + ".fpm_in", f, fpm_groups, fpm_blocks);
    for (int s = 0; s < stages; ++s) {
      predictors.emplace_back(ps, name + ".stage" + std::to_string(s) + ".offsets", f);
      align_w.push_back(ps.add(name + ".stage" + std::to_string(s) + ".deform.w",
                               {f, f, 3, 3}, Init::fan_in, f * 9));
    }
    fpm_raf = Fpm<T>(ps, name + ".fpm_raf", f, fpm_groups, fpm_blocks);
    edge = Conv2dLayer<T>(ps, name + ".edge", f, f, 3, 1, 1, false);
  }

  // frames: B x [C,H,W] -> aligned features B x [f,H,W]; frame 0 is the base
  // and passes through the same stages, aligned to itself.
  std::vector<Tensor<T>> operator()(const std::vector<Tensor<T>>& frames) const {
    require(!frames.empty(), "ebfa requires at least one frame");
    std::vector<Tensor<T>> feats;
    feats.reserve(frames.size());
    for (const auto& fr : frames) feats.push_back(fpm_in(conv_in(fr)));

    const Tensor<T> base = feats[0];  // pre-alignment base features, fixed
    for (std::size_t s = 0; s < predictors.size(); ++s)
      for (auto& ft : feats) {
        auto [off, mask] = predictors[s](ft, base);
        ft = deform_conv2d(ft, align_w[s], off, mask);
      }

    std::vector<Tensor<T>> out;
    out.reserve(feats.size());
    for (const auto& ft : feats) {
      Tensor<T> raf = fpm_raf(ft);
      out.push_back(add(raf, edge(sub(raf, base))));
    }
    return out;
  }
};

}  // namespace burstforge
