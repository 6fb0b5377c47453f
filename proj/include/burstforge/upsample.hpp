#pragma once

// Adaptive group upsampling: pseudo-frames are merged four at a time under a
// dense softmax attention, level by level, until one map remains. Each level
// either doubles the resolution (transposed conv) or keeps it (grouped conv),
// and shares its merger weights across all groups of that level.

#include <string>
#include <vector>

#include "burstforge/layers.hpp"
#include "burstforge/tensor.hpp"

namespace burstforge {

enum class MergeMode { upsample, flat };

// Groups per level for f pseudo-frames: f/4, f/16, ..., 1.
inline std::vector<std::int64_t> agu_group_sequence(std::int64_t f) {
  std::vector<std::int64_t> seq;
  std::int64_t n = f;
  while (n > 1) {
    require(n % 4 == 0, "pseudo-frame count " + std::to_string(f) +
                            " does not reduce to 1 by groups of 4");
    n /= 4;
    seq.push_back(n);
  }
  require(!seq.empty(), "need at least 4 pseudo-frames to form one group");
  return seq;
}

template <typename T>
struct LevelMerger {
  MergeMode mode = MergeMode::upsample;
  std::int64_t f = 0;
  Conv2dLayer<T> att_a;  // f -> f, 1x1
  Conv2dLayer<T> att_b;  // f -> 4f, 1x1
  Conv2dLayer<T> flat_conv;
  TConv2dX2Layer<T> up_conv;

  LevelMerger() = default;
  LevelMerger(ParamStore<T>& ps, const std::string& name, std::int64_t f_,
              std::int64_t out_ch, MergeMode mode_)
      : mode(mode_), f(f_) {
    att_a = Conv2dLayer<T>(ps, name + ".att_a", f, f, 1, 1, 0, false);
    att_b = Conv2dLayer<T>(ps, name + ".att_b", f, 4 * f, 1, 1, 0, false);
    if (mode == MergeMode::flat) {
      // Group conv wants out_ch divisible by the 4 member groups; the final
      // level of a denoising head emits 1 or 3 channels, so fall back to a
      // dense conv there.
      const int groups = (out_ch % 4 == 0) ? 4 : 1;
      flat_conv = Conv2dLayer<T>(ps, name + ".merge", 4 * f, out_ch, 3, 1, 1, false,
                                 groups);
    } else {
      up_conv = TConv2dX2Layer<T>(ps, name + ".merge", 4 * f, out_ch);
    }
  }

  // Dense attention over a group of 4: softmax across members per (c,h,w).
  Tensor<T> attention(const std::vector<Tensor<T>>& members) const {
    require(members.size() == 4, "attention group size must be exactly 4");
    Tensor<T> s = add(add(members[0], members[1]), add(members[2], members[3]));
    Tensor<T> a = att_b(leaky_relu(att_a(s)));
    a = reshape(a, {4, f, s.shape()[1], s.shape()[2]});
    return softmax(a, 0);
  }

  Tensor<T> merge(const std::vector<Tensor<T>>& members, const Tensor<T>& att) const {
    require(members.size() == 4, "merge group size must be exactly 4");
    const std::int64_t h = members[0].shape()[1], w = members[0].shape()[2];
    require(att.shape() == Shape({4, f, h, w}), "attention shape mismatch");
    std::vector<Tensor<T>> weighted;
    weighted.reserve(4);
    for (int i = 0; i < 4; ++i)
      weighted.push_back(mul(members[i], reshape(slice(att, 0, i, i + 1), {f, h, w})));
    Tensor<T> cat = concat(weighted, 0);
    return mode == MergeMode::upsample ? up_conv(cat) : flat_conv(cat);
  }
};

template <typename T>
struct Agu {
  std::vector<LevelMerger<T>> levels;
  bool extra_x2 = false;   // one trailing plain x2 stage (x8 SR variant)
  TConv2dX2Layer<T> extra;

  Agu() = default;
  Agu(ParamStore<T>& ps, const std::string& name, std::int64_t f, std::int64_t out_ch,
      const std::vector<MergeMode>& modes, bool extra_x2_)
      : extra_x2(extra_x2_) {
    const auto seq = agu_group_sequence(f);
    require(modes.size() == seq.size(),
            "agu wants " + std::to_string(seq.size()) + " level modes, got " +
                std::to_string(modes.size()));
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const bool last = (i + 1 == modes.size());
      const std::int64_t level_out = (last && !extra_x2) ? out_ch : f;
      levels.emplace_back(ps, name + ".level" + std::to_string(i), f, level_out,
                          modes[i]);
    }
    if (extra_x2) extra = TConv2dX2Layer<T>(ps, name + ".extra", f, out_ch);
  }

  // Consumes f pseudo-frames, returns the restored image tensor. When
  // `attention_out` is given, every level's attention maps are appended to it
  // in evaluation order.
  Tensor<T> operator()(std::vector<Tensor<T>> frames,
                       std::vector<Tensor<T>>* attention_out = nullptr) const {
    for (const auto& level : levels) {
      require(frames.size() % 4 == 0, "pseudo-frame count must be a multiple of 4");
      std::vector<Tensor<T>> next;
      next.reserve(frames.size() / 4);
      for (std::size_t g = 0; g * 4 < frames.size(); ++g) {
        std::vector<Tensor<T>> members(frames.begin() + g * 4,
                                       frames.begin() + g * 4 + 4);
        Tensor<T> att = level.attention(members);
        if (attention_out) attention_out->push_back(att);
        next.push_back(level.merge(members, att));
      }
      frames = std::move(next);
    }
    require(frames.size() == 1, "agu did not reduce to a single map");
    return extra_x2 ? extra(frames[0]) : frames[0];
  }
};

}  // namespace burstforge
