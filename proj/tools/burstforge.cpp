// Command-line surface: simulate | train | infer | eval | selftest.
// Exit codes: 0 ok, 1 usage, 2 validation or I/O, 3 numerical failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "burstforge/checkpoint.hpp"
#include "burstforge/metrics.hpp"
#include "burstforge/model.hpp"
#include "burstforge/run_config.hpp"
#include "burstforge/selftest.hpp"
#include "burstforge/simulate.hpp"
#include "burstforge/train.hpp"

namespace fs = std::filesystem;
using namespace burstforge;

namespace {

struct SimulateArgs {
  std::string config, out, task, src;
  std::int64_t count = -1;
  std::int64_t procedural = -1;
  std::int64_t seed = -1;
  int gain = -1;
};

struct TrainArgs {
  std::string config, out, resume;
};

struct InferArgs {
  std::string ckpt, burst, out;
};

struct EvalArgs {
  std::string ckpt, dataset, out;
};

// Source images for the simulator: either a PNG corpus directory (sorted by
// filename, assigned round-robin) or procedurally generated test cards.
std::vector<Tensor<float>> gather_sources(const RunConfig& cfg, const SimParams& sim) {
  std::vector<Tensor<float>> sources;
  const std::int64_t need = min_source_extent(sim);
  if (cfg.data.procedural_count > 0) {
    const std::int64_t extent = need + 32;
    for (std::int64_t i = 0; i < cfg.data.procedural_count; ++i)
      sources.push_back(make_test_image(
          extent, extent, split_seed(cfg.data.seed, cfg.data.count + 1 + i)));
  } else {
    require(!cfg.data.source_dir.empty(),
            "data.source_dir is empty and data.procedural_count is 0");
    if (!fs::is_directory(cfg.data.source_dir))
      throw ValidationError("source corpus is not a directory: " +
                            cfg.data.source_dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(cfg.data.source_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".png")
        paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    require(!paths.empty(),
            "source corpus contains no PNG images: " + cfg.data.source_dir);
    for (const auto& p : paths) sources.push_back(load_png(p));
  }

  for (auto& src : sources) {
    if (cfg.model.task == Task::denoise_gray && src.shape()[0] == 3)
      src = rgb_to_gray(src);
    const std::int64_t want =
        (cfg.model.task == Task::denoise_gray) ? 1 : 3;
    require(src.shape()[0] == want,
            "source image has " + std::to_string(src.shape()[0]) +
                " channels, task " + task_name(cfg.model.task) + " wants " +
                std::to_string(want));
    require(src.shape()[1] >= need && src.shape()[2] >= need,
            "source image " + shape_str(src.shape()) + " smaller than the " +
                std::to_string(need) + "px the task needs");
  }
  return sources;
}

// Seed channels within data.seed: [0,count) sample seeds, (count,2count]
// procedural sources, (2count,3count] augmentation flips.
std::vector<BurstSample> build_dataset(const RunConfig& cfg,
                                       const std::string* save_dir,
                                       nlohmann::json* manifest_out,
                                       bool augment_flips = false) {
  const SimParams sim = cfg.sim_params();
  const auto sources = gather_sources(cfg, sim);

  std::vector<BurstSample> samples;
  nlohmann::json entries = nlohmann::json::array();
  for (std::int64_t i = 0; i < cfg.data.count; ++i) {
    const std::uint64_t sample_seed = split_seed(cfg.data.seed, i);
    const std::int64_t src_idx = i % static_cast<std::int64_t>(sources.size());
    Tensor<float> src = sources[src_idx];
    if (augment_flips) {
      Rng frng(split_seed(cfg.data.seed, 2 * cfg.data.count + 1 + i));
      src = flip_image(src, frng.uniform() < 0.5, frng.uniform() < 0.5);
    }
    BurstSample s = make_burst(src, sim, sample_seed);
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%04lld", static_cast<long long>(i));
    if (save_dir) save_sample((fs::path(*save_dir) / name).string(), s);
    entries.push_back({{"dir", name},
                       {"seed", sample_seed},
                       {"source", cfg.data.procedural_count > 0
                                      ? "procedural:" + std::to_string(src_idx)
                                      : "corpus:" + std::to_string(src_idx)}});
    samples.push_back(std::move(s));
  }
  if (manifest_out) {
    *manifest_out = {{"task", task_name(cfg.model.task)},
                     {"count", cfg.data.count},
                     {"seed", cfg.data.seed},
                     {"gain", sim.gain},
                     {"unseen_gain", noise_for_gain(sim.gain).unseen},
                     {"samples", entries},
                     {"config", resolved_json(cfg)}};
  }
  return samples;
}

std::vector<BurstSample> load_dataset(const std::string& dir, nlohmann::json* manifest) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw IoError("missing manifest.json in " + dir);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("corrupt manifest.json: " + std::string(e.what()));
  }
  const auto& entries = m.at("samples");
  require(!entries.empty(), "dataset is empty: " + dir);
  std::vector<BurstSample> samples;
  for (const auto& e : entries)
    samples.push_back(
        load_sample((fs::path(dir) / e.at("dir").get<std::string>()).string()));
  if (manifest) *manifest = m;
  return samples;
}

RunConfig resolve_simulate_config(const SimulateArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (!a.task.empty()) cfg.model.task = task_from_name(a.task);
  if (a.count >= 0) cfg.data.count = a.count;
  if (a.seed >= 0) cfg.data.seed = static_cast<std::uint64_t>(a.seed);
  if (a.gain >= 0) cfg.data.gain = a.gain;
  if (!a.src.empty()) {
    cfg.data.source_dir = a.src;
    cfg.data.procedural_count = 0;
  }
  if (a.procedural >= 0) cfg.data.procedural_count = a.procedural;
  if (!a.out.empty()) cfg.io.out_dir = a.out;
  require(cfg.data.count >= 1, "data.count must be >= 1");
  noise_for_gain(cfg.data.gain);
  return cfg;
}

int cmd_simulate(const SimulateArgs& a) {
  const RunConfig cfg = resolve_simulate_config(a);
  std::cout << "resolved config:\n" << resolved_json(cfg).dump(2) << "\n";

  fs::create_directories(cfg.io.out_dir);
  nlohmann::json manifest;
  build_dataset(cfg, &cfg.io.out_dir, &manifest);
  std::ofstream mf(fs::path(cfg.io.out_dir) / "manifest.json");
  if (!mf) throw IoError("cannot write manifest.json in " + cfg.io.out_dir);
  mf << manifest.dump(2) << "\n";
  std::cout << "wrote " << cfg.data.count << " samples to " << cfg.io.out_dir
            << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (!a.out.empty()) {
    cfg.io.out_dir = a.out;
    cfg.train.out_dir = a.out;
  }
  std::cout << "resolved config:\n" << resolved_json(cfg).dump(2) << "\n";
  fs::create_directories(cfg.io.out_dir);
  {
    std::ofstream rf(fs::path(cfg.io.out_dir) / "resolved_config.json");
    if (!rf) throw IoError("cannot write resolved_config.json");
    rf << resolved_json(cfg).dump(2) << "\n";
  }

  // Flip augmentation happens at synthesis time (source sRGB, pre-mosaic), so
  // it only applies when the training set is generated here.
  std::vector<BurstSample> samples =
      cfg.io.dataset_dir.empty()
          ? build_dataset(cfg, nullptr, nullptr, cfg.train.augment)
          : load_dataset(cfg.io.dataset_dir, nullptr);

  std::shared_ptr<BurstNet<float>> model;
  std::int64_t start_step = 0;
  std::vector<std::pair<std::string, Tensor<float>>> opt_state;
  if (!a.resume.empty()) {
    LoadedCheckpoint<float> lc = load_checkpoint<float>(a.resume);
    const ModelConfig& mc = lc.model->config();
    require(mc.task == cfg.model.task && mc.burst_size == cfg.model.burst_size &&
                mc.features == cfg.model.features && mc.seed == cfg.model.seed,
            "resume checkpoint was built from a different model config");
    model = lc.model;
    start_step = lc.train.step;
    opt_state = std::move(lc.state);
  } else {
    model = std::make_shared<BurstNet<float>>(cfg.model);
  }

  Adam<float> opt(model->params());
  if (!a.resume.empty()) opt.import_state(opt_state, start_step);

  const TrainResult res = train_model(*model, opt, samples, cfg.train, start_step);
  std::cout << "trained steps [" << start_step << "," << res.steps_completed
            << "), loss " << res.first_loss << " -> " << res.last_loss << "\n"
            << "checkpoint: " << res.checkpoint_path << "\n"
            << "log: " << res.log_path << "\n";
  return 0;
}

int cmd_infer(const InferArgs& a) {
  std::cout << nlohmann::json({{"command", "infer"},
                               {"ckpt", a.ckpt},
                               {"burst", a.burst},
                               {"out", a.out}})
                   .dump()
            << "\n";
  LoadedCheckpoint<float> lc = load_checkpoint<float>(a.ckpt);
  const BurstSample s = load_sample(a.burst);
  const ModelConfig& mc = lc.model->config();
  require(s.task == task_name(mc.task),
          "burst task " + s.task + " does not match checkpoint task " +
              task_name(mc.task));
  require(static_cast<std::int64_t>(s.frames.size()) == mc.burst_size,
          "burst has " + std::to_string(s.frames.size()) + " frames, model wants " +
              std::to_string(mc.burst_size));

  const Tensor<float> out = lc.model->forward(s.frames);
  if (!a.out.empty() && fs::path(a.out).has_parent_path())
    fs::create_directories(fs::path(a.out).parent_path());
  save_png8(a.out, out);
  std::cout << "wrote " << shape_str(out.shape()) << " image to " << a.out << "\n";
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  std::cout << nlohmann::json({{"command", "eval"},
                               {"ckpt", a.ckpt},
                               {"dataset", a.dataset},
                               {"out", a.out}})
                   .dump()
            << "\n";
  LoadedCheckpoint<float> lc = load_checkpoint<float>(a.ckpt);
  const ModelConfig& mc = lc.model->config();

  nlohmann::json manifest;
  const std::vector<BurstSample> samples = load_dataset(a.dataset, &manifest);
  require(manifest.at("task").get<std::string>() == task_name(mc.task),
          "dataset task " + manifest.at("task").get<std::string>() +
              " does not match checkpoint task " + task_name(mc.task));

  nlohmann::json rows = nlohmann::json::array();
  double sum_psnr = 0.0, sum_ssim = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const BurstSample& s = samples[i];
    const Tensor<float> pred = lc.model->forward(s.frames);
    const double p = psnr(pred, s.ground_truth);
    const double q = ssim(pred, s.ground_truth);
    sum_psnr += p;
    sum_ssim += q;
    rows.push_back({{"dir", manifest.at("samples")[i].at("dir")},
                    {"psnr", p},
                    {"ssim", q},
                    {"gain", s.noise.gain_label},
                    {"unseen", s.noise.unseen}});
  }
  const double n = static_cast<double>(samples.size());
  const nlohmann::json report = {{"task", task_name(mc.task)},
                                 {"count", samples.size()},
                                 {"mean_psnr", sum_psnr / n},
                                 {"mean_ssim", sum_ssim / n},
                                 {"samples", rows}};
  std::cout << report.dump(2) << "\n";
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) throw IoError("cannot write report: " + a.out);
    f << report.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"burstforge: burst image restoration engine"};
  app.require_subcommand(1);

  SimulateArgs sa;
  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic burst dataset");
  sim->add_option("--config", sa.config, "run config JSON");
  sim->add_option("--out", sa.out, "output dataset directory");
  sim->add_option("--count", sa.count, "number of samples");
  sim->add_option("--seed", sa.seed, "dataset seed");
  sim->add_option("--task", sa.task,
                  "sr_x4 | sr_x8 | lowlight | denoise_gray | denoise_color");
  sim->add_option("--gain", sa.gain, "noise gain: 1, 2, 4 or 8");
  sim->add_option("--src", sa.src, "source PNG corpus directory");
  sim->add_option("--procedural", sa.procedural,
                  "generate this many procedural source images");

  TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", ta.config, "run config JSON");
  tr->add_option("--out", ta.out, "run output directory");
  tr->add_option("--resume", ta.resume, "checkpoint to resume from");

  InferArgs ia;
  CLI::App* in = app.add_subcommand("infer", "restore one burst");
  in->add_option("--ckpt", ia.ckpt, "checkpoint file")->required();
  in->add_option("--burst", ia.burst, "burst sample directory")->required();
  in->add_option("--out", ia.out, "output PNG path")->required();

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  ev->add_option("--ckpt", ea.ckpt, "checkpoint file")->required();
  ev->add_option("--dataset", ea.dataset, "dataset directory with manifest.json")
      ->required();
  ev->add_option("--out", ea.out, "write the metrics JSON here too");

  app.add_subcommand("selftest", "run the built-in invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sa);
    if (tr->parsed()) return cmd_train(ta);
    if (in->parsed()) return cmd_infer(ia);
    if (ev->parsed()) return cmd_eval(ea);
    return run_selftest(std::cout);
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
