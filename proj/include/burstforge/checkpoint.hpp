#pragma once

// Checkpoint container: magic "BFN1", u32 format version, u64 header length,
// canonical JSON header (sorted keys), then the raw little-endian parameter
// payload in header order. The header carries a SHA-256 of the payload, so
// truncation and corruption are detected before any tensor is populated.
// Loading then saving reproduces the file byte for byte.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "burstforge/model.hpp"

namespace burstforge {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian; big-endian hosts unsupported");

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
  return "f32";
}
template <>
inline const char* dtype_name<double>() {
  return "f64";
}

inline std::string sha256_hex(const void* data, std::size_t n) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

struct TrainState {
  std::int64_t step = 0;
};

namespace detail {

template <typename T>
void append_raw(std::vector<std::uint8_t>& buf, const Tensor<T>& t) {
  const std::size_t bytes = t.numel() * sizeof(T);
  const std::size_t at = buf.size();
  buf.resize(at + bytes);
  std::memcpy(buf.data() + at, t.data(), bytes);
}

inline nlohmann::json shape_json(const Shape& s) {
  return nlohmann::json(std::vector<std::int64_t>(s.begin(), s.end()));
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const BurstNet<T>& model,
                     const TrainState& train,
                     const std::vector<std::pair<std::string, Tensor<T>>>& state = {}) {
  const auto& ps = model.params();
  std::vector<std::uint8_t> payload;
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    params.push_back(
        {{"name", ps.name(i)}, {"shape", detail::shape_json(ps.tensor(i).shape())}});
    detail::append_raw(payload, ps.tensor(i));
  }
  nlohmann::json extra = nlohmann::json::array();
  for (const auto& [name, t] : state) {
    extra.push_back({{"name", name}, {"shape", detail::shape_json(t.shape())}});
    detail::append_raw(payload, t);
  }

  const ModelConfig& cfg = model.config();
  nlohmann::json header = {
      {"dtype", dtype_name<T>()},
      {"model",
       {{"task", task_name(cfg.task)},
        {"burst_size", cfg.burst_size},
        {"features", cfg.features},
        {"seed", cfg.seed}}},
      {"params", params},
      {"state", extra},
      {"step", train.step},
      {"payload_sha256", sha256_hex(payload.data(), payload.size())}};
  const std::string header_str = header.dump();  // sorted keys: canonical

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write("BFN1", 4);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t header_len = header_str.size();
  f.write(reinterpret_cast<const char*>(&version), sizeof(version));
  f.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (!f) throw IoError("short write while saving checkpoint: " + path);
}

template <typename T>
struct LoadedCheckpoint {
  std::shared_ptr<BurstNet<T>> model;
  TrainState train;
  std::vector<std::pair<std::string, Tensor<T>>> state;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "BFN1", 4) != 0)
    throw IoError("not a checkpoint file (bad magic): " + path);
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  f.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!f) throw IoError("truncated checkpoint header: " + path);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint version " + std::to_string(version) +
                  " is incompatible with supported version " +
                  std::to_string(kCheckpointVersion));
  std::string header_str(header_len, '\0');
  f.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!f) throw IoError("truncated checkpoint header: " + path);
  std::vector<std::uint8_t> payload((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.at("dtype").get<std::string>() != dtype_name<T>())
    throw IoError("checkpoint dtype " + header.at("dtype").get<std::string>() +
                  " does not match requested " + dtype_name<T>());
  if (sha256_hex(payload.data(), payload.size()) !=
      header.at("payload_sha256").get<std::string>())
    throw IoError("checkpoint payload checksum mismatch (truncated or corrupt): " +
                  path);

  ModelConfig cfg;
  const auto& m = header.at("model");
  cfg.task = task_from_name(m.at("task").get<std::string>());
  cfg.burst_size = m.at("burst_size").get<std::int64_t>();
  cfg.features = m.at("features").get<std::int64_t>();
  cfg.seed = m.at("seed").get<std::uint64_t>();

  LoadedCheckpoint<T> out;
  out.model = std::make_shared<BurstNet<T>>(cfg);
  out.train.step = header.at("step").get<std::int64_t>();

  std::size_t cursor = 0;
  auto read_tensor = [&](const Shape& shape) {
    const std::size_t bytes = static_cast<std::size_t>(numel(shape)) * sizeof(T);
    if (cursor + bytes > payload.size())
      throw IoError("checkpoint payload shorter than header promises");
    Tensor<T> t = Tensor<T>::zeros(shape);
    std::memcpy(t.data(), payload.data() + cursor, bytes);
    cursor += bytes;
    return t;
  };

  auto& ps = out.model->params();
  const auto& params = header.at("params");
  require(params.size() == ps.size(),
          "checkpoint has " + std::to_string(params.size()) + " parameters, model has " +
              std::to_string(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string name = params[i].at("name").get<std::string>();
    require(name == ps.name(i), "checkpoint parameter order mismatch at " + name);
    Shape shape(params[i].at("shape").begin(), params[i].at("shape").end());
    require(shape == ps.tensor(i).shape(), "checkpoint shape mismatch for " + name);
    Tensor<T> t = read_tensor(shape);
    ps.tensor(i).vec() = t.vec();
  }
  for (const auto& entry : header.at("state")) {
    Shape shape(entry.at("shape").begin(), entry.at("shape").end());
    out.state.emplace_back(entry.at("name").get<std::string>(), read_tensor(shape));
  }
  if (cursor != payload.size())
    throw IoError("checkpoint payload longer than header promises");
  return out;
}

}  // namespace burstforge
