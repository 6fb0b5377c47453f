#pragma once

// Training loop: L1 objective, cosine learning-rate schedule, CSV logging and
// periodic checkpoints. Fully deterministic for a fixed (data, seeds, thread
// cap) triple; per-step randomness comes from split_seed(train_seed, step) so
// a resumed run replays the exact sample sequence of an uninterrupted one.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "burstforge/checkpoint.hpp"
#include "burstforge/model.hpp"
#include "burstforge/optim.hpp"
#include "burstforge/simulate.hpp"
#include "burstforge/tensor.hpp"

namespace burstforge {

// Mean absolute error. Subgradient at exact ties is 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require(pred.shape() == target.shape(),
          "l1_loss shape mismatch: " + shape_str(pred.shape()) + " vs " +
              shape_str(target.shape()));
  const std::int64_t n = pred.numel();
  Tensor<T> out = Tensor<T>::zeros({1});
  {
    double acc = 0.0;
    const T* pp = pred.data();
    const T* pt = target.data();
    for (std::int64_t i = 0; i < n; ++i)
      acc += std::abs(static_cast<double>(pp[i]) - static_cast<double>(pt[i]));
    out.data()[0] = static_cast<T>(acc / static_cast<double>(n));
  }
  detail::check_finite(out, "l1_loss");

  Tape<T>* tape = Tape<T>::current();
  const bool tp = detail::tracked(tape, pred);
  const bool tt = detail::tracked(tape, target);
  if (tp || tt) {
    if (tp) const_cast<Tensor<T>&>(pred).ensure_grad();
    if (tt) const_cast<Tensor<T>&>(target).ensure_grad();
    detail::enroll(tape, out);
    auto pi = pred.impl();
    auto ti = target.impl();
    auto oi = out.impl();
    tape->record([pi, ti, oi, tp, tt, n] {
      const T go = oi->grad[0] / static_cast<T>(n);
      for (std::int64_t i = 0; i < n; ++i) {
        const T d = pi->data[i] - ti->data[i];
        const T s = d > T(0) ? go : (d < T(0) ? -go : T(0));
        if (tp) pi->grad[i] += s;
        if (tt) ti->grad[i] -= s;
      }
    });
  }
  return out;
}

// Cosine annealing from lr_max (step 0) to lr_min (step total).
inline double cosine_lr(std::int64_t step, std::int64_t total, double lr_max,
                        double lr_min) {
  require(total >= 1, "schedule length must be >= 1");
  if (step <= 0) return lr_max;
  if (step >= total) return lr_min;
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * t));
}

struct TrainConfig {
  std::int64_t steps = 300;
  double lr_max = 1e-4;
  double lr_min = 1e-6;
  std::int64_t checkpoint_interval = 100;
  std::uint64_t seed = 0;  // per-step sample choice
  // Random source flips during dataset synthesis. Flips must happen on the
  // sRGB source before mosaicking (Bayer phase), so the trainer itself never
  // flips; this flag is consumed where the training set is built.
  bool augment = true;
  std::string out_dir = "run";
};

struct TrainResult {
  std::int64_t steps_completed = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
  std::string checkpoint_path;
  std::string log_path;
};

namespace detail {

inline void validate_training_set(const BurstNet<float>& model,
                                  const std::vector<BurstSample>& samples) {
  require(!samples.empty(), "training set is empty");
  const ModelConfig& cfg = model.config();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const BurstSample& s = samples[i];
    const std::string at = " (sample " + std::to_string(i) + ")";
    require(s.task == task_name(cfg.task),
            "sample task " + s.task + " does not match model task " +
                task_name(cfg.task) + at);
    require(static_cast<std::int64_t>(s.frames.size()) == cfg.burst_size,
            "burst size mismatch" + at);
    for (const auto& fr : s.frames)
      require(fr.shape().size() == 3 && fr.shape()[0] == cfg.input_channels(),
              "frame channel mismatch" + at);
    const Shape want_gt = {cfg.output_channels(),
                           s.frames[0].shape()[1] * cfg.scale_factor(),
                           s.frames[0].shape()[2] * cfg.scale_factor()};
    require(s.ground_truth.shape() == want_gt,
            "ground truth " + shape_str(s.ground_truth.shape()) + " but model emits " +
                shape_str(want_gt) + at);
  }
}

}  // namespace detail

// Runs [start_step, cfg.steps). start_step > 0 resumes: the optimizer must
// already carry the checkpointed moments and the log is appended to.
// A non-finite loss or gradient aborts with NumericError before the next
// checkpoint write, so the last completed checkpoint stays valid.
inline TrainResult train_model(BurstNet<float>& model, Adam<float>& opt,
                               const std::vector<BurstSample>& samples,
                               const TrainConfig& cfg, std::int64_t start_step = 0) {
  namespace fs = std::filesystem;
  require(cfg.steps >= 1, "steps must be >= 1");
  require(cfg.checkpoint_interval >= 1, "checkpoint_interval must be >= 1");
  require(start_step >= 0 && start_step < cfg.steps,
          "resume step " + std::to_string(start_step) + " is not before " +
              std::to_string(cfg.steps));
  require(opt.steps_taken() == start_step,
          "optimizer has taken " + std::to_string(opt.steps_taken()) +
              " steps but training resumes at " + std::to_string(start_step));
  detail::validate_training_set(model, samples);
  fs::create_directories(cfg.out_dir);

  TrainResult res;
  res.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.bfn").string();
  res.log_path = (fs::path(cfg.out_dir) / "train_log.csv").string();

  std::ofstream log(res.log_path, start_step == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot open " + res.log_path);
  if (start_step == 0) log << "step,lr,loss\n";

  auto save = [&](std::int64_t next_step) {
    const std::string tmp = res.checkpoint_path + ".tmp";
    save_checkpoint(tmp, model, TrainState{next_step}, opt.export_state());
    fs::rename(tmp, res.checkpoint_path);
  };

  for (std::int64_t step = start_step; step < cfg.steps; ++step) {
    const double lr = cosine_lr(step, cfg.steps, cfg.lr_max, cfg.lr_min);
    Rng rng(split_seed(cfg.seed, static_cast<std::uint64_t>(step)));
    const std::int64_t idx =
        detail::draw_index(rng, static_cast<std::int64_t>(samples.size()));
    const BurstSample& s = samples[idx];

    double loss_val;
    try {
      Tape<float> tape;
      Tensor<float> pred = model.forward(s.frames);
      Tensor<float> loss = l1_loss(pred, s.ground_truth);
      loss_val = loss.data()[0];
      tape.backward(loss);
      opt.step(lr);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(step) +
                         "; last checkpoint retained");
    }
    model.params().zero_grads();

    if (step == start_step) res.first_loss = loss_val;
    res.last_loss = loss_val;
    res.steps_completed = step + 1;

    char line[96];
    std::snprintf(line, sizeof(line), "%lld,%.10g,%.10g\n",
                  static_cast<long long>(step), lr, loss_val);
    log << line;

    if ((step + 1) % cfg.checkpoint_interval == 0 || step + 1 == cfg.steps) {
      log.flush();
      save(step + 1);
    }
  }
  return res;
}

}  // namespace burstforge
