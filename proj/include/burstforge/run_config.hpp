#pragma once

// JSON run configuration with four sections: model, train, data, io. Parsing
// is strict (unknown keys are rejected) and every command logs the fully
// resolved document, so a run is reproducible from that JSON alone.
//
// Data-section defaults depend on the task, and the downsampling factor is
// derived from the model (GT extent = frame extent * model scale) unless set
// explicitly; an explicit conflicting value fails pre-flight.

#include <fstream>
#include <string>

#include "json.hpp"

#include "burstforge/model.hpp"
#include "burstforge/simulate.hpp"
#include "burstforge/train.hpp"

namespace burstforge {

struct DataConfig {
  std::string source_dir;              // PNG corpus; ignored when procedural
  std::int64_t procedural_count = 2;   // >0: synthesize this many source images
  std::int64_t count = 8;              // samples to generate
  std::uint64_t seed = 0;
  int gain = 1;
  std::int64_t crop = -1;        // -1: task default
  int scale = -1;                // -1: derived from the model
  double max_translation = -1.0; // -1: task default
  double max_rotation_deg = -1.0;
};

struct IoConfig {
  std::string out_dir = "run";
  std::string dataset_dir;  // train: read samples from here instead of simulating
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  IoConfig io;

  SimParams sim_params() const {
    SimParams p = SimParams::defaults_for(model.task);
    p.burst = model.burst_size;
    p.gain = data.gain;
    if (data.crop >= 0) p.crop = data.crop;
    if (data.max_translation >= 0.0) p.max_translation = data.max_translation;
    if (data.max_rotation_deg >= 0.0) p.max_rotation_deg = data.max_rotation_deg;
    const bool raw_sr = model.task == Task::sr_x4 || model.task == Task::sr_x8;
    const int derived = raw_sr ? static_cast<int>(model.scale_factor() / 2) : 1;
    p.scale = (data.scale >= 0) ? data.scale : derived;
    require(p.scale == derived,
            "data.scale " + std::to_string(p.scale) + " conflicts with model (" +
                task_name(model.task) + ", features " +
                std::to_string(model.features) + " upsamples x" +
                std::to_string(model.scale_factor()) + " from packed input, so " +
                "scale must be " + std::to_string(derived) + ")");
    return p;
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const char* section,
                       std::initializer_list<const char*> allowed) {
  require(j.is_object(), std::string(section) + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || item.key() == a;
    if (!known)
      throw ValidationError("unknown key '" + item.key() + "' in " + section);
  }
}

template <typename V>
V get_or(const nlohmann::json& j, const char* key, V fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  detail::check_keys(j, "config root", {"model", "train", "data", "io"});
  RunConfig c;

  const nlohmann::json empty = nlohmann::json::object();
  const nlohmann::json& jm = j.contains("model") ? j.at("model") : empty;
  detail::check_keys(jm, "model", {"task", "burst_size", "features", "seed"});
  c.model.task = task_from_name(detail::get_or<std::string>(jm, "task", "sr_x4"));
  c.model.burst_size = detail::get_or<std::int64_t>(jm, "burst_size", 14);
  c.model.features = detail::get_or<std::int64_t>(jm, "features", 64);
  c.model.seed = detail::get_or<std::uint64_t>(jm, "seed", 0);
  c.model.validate();

  const nlohmann::json& jt = j.contains("train") ? j.at("train") : empty;
  detail::check_keys(jt, "train",
                     {"steps", "lr_max", "lr_min", "checkpoint_interval", "seed",
                      "augment"});
  c.train.steps = detail::get_or<std::int64_t>(jt, "steps", 300);
  c.train.lr_max = detail::get_or<double>(jt, "lr_max", 1e-4);
  c.train.lr_min = detail::get_or<double>(jt, "lr_min", 1e-6);
  c.train.checkpoint_interval =
      detail::get_or<std::int64_t>(jt, "checkpoint_interval", 100);
  c.train.seed = detail::get_or<std::uint64_t>(jt, "seed", 0);
  c.train.augment = detail::get_or<bool>(jt, "augment", true);

  const nlohmann::json& jd = j.contains("data") ? j.at("data") : empty;
  detail::check_keys(jd, "data",
                     {"source_dir", "procedural_count", "count", "seed", "gain",
                      "crop", "scale", "max_translation", "max_rotation_deg"});
  c.data.source_dir = detail::get_or<std::string>(jd, "source_dir", "");
  c.data.procedural_count = detail::get_or<std::int64_t>(jd, "procedural_count",
                                                         c.data.source_dir.empty() ? 2 : 0);
  c.data.count = detail::get_or<std::int64_t>(jd, "count", 8);
  c.data.seed = detail::get_or<std::uint64_t>(jd, "seed", 0);
  c.data.gain = detail::get_or<int>(jd, "gain", 1);
  c.data.crop = detail::get_or<std::int64_t>(jd, "crop", -1);
  c.data.scale = detail::get_or<int>(jd, "scale", -1);
  c.data.max_translation = detail::get_or<double>(jd, "max_translation", -1.0);
  c.data.max_rotation_deg = detail::get_or<double>(jd, "max_rotation_deg", -1.0);
  require(c.data.count >= 1, "data.count must be >= 1");
  noise_for_gain(c.data.gain);  // rejects values outside the table

  const nlohmann::json& ji = j.contains("io") ? j.at("io") : empty;
  detail::check_keys(ji, "io", {"out_dir", "dataset_dir"});
  c.io.out_dir = detail::get_or<std::string>(ji, "out_dir", "run");
  c.io.dataset_dir = detail::get_or<std::string>(ji, "dataset_dir", "");
  c.train.out_dir = c.io.out_dir;
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return parse_run_config(nlohmann::json::object());
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_run_config(j);
}

// Fully resolved document: defaults expanded, derived values materialized.
inline nlohmann::json resolved_json(const RunConfig& c) {
  const SimParams sim = c.sim_params();
  return nlohmann::json{
      {"model",
       {{"task", task_name(c.model.task)},
        {"burst_size", c.model.burst_size},
        {"features", c.model.features},
        {"seed", c.model.seed}}},
      {"train",
       {{"steps", c.train.steps},
        {"lr_max", c.train.lr_max},
        {"lr_min", c.train.lr_min},
        {"checkpoint_interval", c.train.checkpoint_interval},
        {"seed", c.train.seed},
        {"augment", c.train.augment}}},
      {"data",
       {{"source_dir", c.data.source_dir},
        {"procedural_count", c.data.procedural_count},
        {"count", c.data.count},
        {"seed", c.data.seed},
        {"gain", sim.gain},
        {"crop", sim.crop},
        {"scale", sim.scale},
        {"max_translation", sim.max_translation},
        {"max_rotation_deg", sim.max_rotation_deg}}},
      {"io", {{"out_dir", c.io.out_dir}, {"dataset_dir", c.io.dataset_dir}}}};
}

}  // namespace burstforge
