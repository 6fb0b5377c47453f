#pragma once

// Task configuration and the assembled network: alignment, pseudo-burst
// fusion, shared multi-scale U-Net, adaptive group upsampling.

#include <string>
#include <vector>

#include "burstforge/align.hpp"
#include "burstforge/fusion.hpp"
#include "burstforge/upsample.hpp"

namespace burstforge {

enum class Task { sr_x4, sr_x8, lowlight, denoise_gray, denoise_color };

inline std::string task_name(Task t) {
  switch (t) {
    case Task::sr_x4: return "sr_x4";
    case Task::sr_x8: return "sr_x8";
    case Task::lowlight: return "lowlight";
    case Task::denoise_gray: return "denoise_gray";
    case Task::denoise_color: return "denoise_color";
  }
  throw ValidationError("unknown task");
}

inline Task task_from_name(const std::string& s) {
  if (s == "sr_x4") return Task::sr_x4;
  if (s == "sr_x8") return Task::sr_x8;
  if (s == "lowlight") return Task::lowlight;
  if (s == "denoise_gray") return Task::denoise_gray;
  if (s == "denoise_color") return Task::denoise_color;
  throw ValidationError("unknown task '" + s +
                        "' (expected sr_x4|sr_x8|lowlight|denoise_gray|denoise_color)");
}

struct ModelConfig {
  Task task = Task::sr_x4;
  std::int64_t burst_size = 14;
  std::int64_t features = 64;
  std::uint64_t seed = 0;

  // SR and low-light consume packed RGGB RAW; denoising works in image space.
  std::int64_t input_channels() const {
    switch (task) {
      case Task::sr_x4:
      case Task::sr_x8:
      case Task::lowlight: return 4;
      case Task::denoise_gray: return 1;
      case Task::denoise_color: return 3;
    }
    throw ValidationError("unknown task");
  }

  std::int64_t output_channels() const {
    switch (task) {
      case Task::denoise_gray: return 1;
      case Task::denoise_color: return 3;
      default: return 3;
    }
  }

  void validate() const {
    require(burst_size >= 1, "burst_size must be >= 1");
    // Sequential groups of 4 must reduce the f pseudo-frames to exactly one,
    // so f has to be a power of 4; 16 is the smallest width the grouping and
    // the 1.5x U-Net growth both accept.
    std::int64_t n = features;
    while (n > 1 && n % 4 == 0) n /= 4;
    require(n == 1 && features >= 16,
            "features must be a power of 4 and >= 16, got " +
                std::to_string(features));
  }

  std::vector<MergeMode> level_modes() const {
    const std::size_t n_levels = agu_group_sequence(features).size();
    std::vector<MergeMode> modes(n_levels, MergeMode::flat);
    switch (task) {
      case Task::sr_x4:
      case Task::sr_x8:
        std::fill(modes.begin(), modes.end(), MergeMode::upsample);
        break;
      case Task::lowlight:
        modes.back() = MergeMode::upsample;  // single x2 stage: packed RAW -> sRGB
        break;
      default: break;  // denoising stays flat throughout
    }
    return modes;
  }

  // Output spatial extent divided by input extent.
  std::int64_t scale_factor() const {
    std::int64_t s = 1;
    for (MergeMode m : level_modes())
      if (m == MergeMode::upsample) s *= 2;
    if (task == Task::sr_x8) s *= 2;
    return s;
  }
};

namespace detail {
inline ModelConfig checked(ModelConfig cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace detail

template <typename T>
class BurstNet {
 public:
  explicit BurstNet(const ModelConfig& cfg)
      : cfg_(detail::checked(cfg)),
        params_(cfg.seed),
        ebfa_(params_, "ebfa", cfg.input_channels(), cfg.features),
        fuser_(params_, "pbff", cfg.burst_size, cfg.features),
        msf_(params_, "msf", cfg.features),
        agu_(params_, "agu", cfg.features, cfg.output_channels(), cfg.level_modes(),
             cfg.task == Task::sr_x8) {}

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  std::int64_t parameter_count() const { return params_.total_parameters(); }

  // burst: B frames of [C,H,W]. Returns [C_out, H*scale, W*scale].
  Tensor<T> forward(const std::vector<Tensor<T>>& burst,
                    std::vector<Tensor<T>>* attention_out = nullptr) const {
    require(static_cast<std::int64_t>(burst.size()) == cfg_.burst_size,
            "burst has " + std::to_string(burst.size()) + " frames, config wants " +
                std::to_string(cfg_.burst_size));
    const Shape want = {cfg_.input_channels(), burst[0].shape()[1],
                        burst[0].shape()[2]};
    for (const auto& fr : burst)
      require(fr.shape() == want, "frame shape " + shape_str(fr.shape()) +
                                      " does not match " + shape_str(want));
    require(want[1] % 4 == 0 && want[2] % 4 == 0,
            "frame extents must be divisible by 4 for the U-Net, got " +
                shape_str(want));

    std::vector<Tensor<T>> aligned = ebfa_(burst);
    std::vector<Tensor<T>> pseudo = fuser_(aligned);
    for (auto& p : pseudo) p = msf_(p);
    return agu_(std::move(pseudo), attention_out);
  }

  // Convenience for [B,C,H,W] storage.
  Tensor<T> forward(const Tensor<T>& burst4d,
                    std::vector<Tensor<T>>* attention_out = nullptr) const {
    require(burst4d.shape().size() == 4, "burst tensor must be [B,C,H,W]");
    std::vector<Tensor<T>> frames;
    const Shape fs = {burst4d.shape()[1], burst4d.shape()[2], burst4d.shape()[3]};
    for (std::int64_t b = 0; b < burst4d.shape()[0]; ++b)
      frames.push_back(reshape(slice(burst4d, 0, b, b + 1), fs));
    return forward(frames, attention_out);
  }

  const Ebfa<T>& ebfa() const { return ebfa_; }
  const PseudoBurstFuser<T>& fuser() const { return fuser_; }
  const MsfUnet<T>& msf() const { return msf_; }
  const Agu<T>& agu() const { return agu_; }

 private:
  ModelConfig cfg_;
  ParamStore<T> params_;
  Ebfa<T> ebfa_;
  PseudoBurstFuser<T> fuser_;
  MsfUnet<T> msf_;
  Agu<T> agu_;
};

}  // namespace burstforge
