#pragma once

// Parameter registry and thin layer wrappers around the conv primitives.
// Every learnable tensor is registered under a stable dotted name; the
// registration order defines the checkpoint payload order. Initialization is
// a pure function of (model seed, parameter name), so construction order
// never changes the values.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "burstforge/conv.hpp"
#include "burstforge/random.hpp"
#include "burstforge/tensor.hpp"

namespace burstforge {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

enum class Init { fan_in, zero };

template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  Tensor<T> add(const std::string& name, const Shape& shape, Init init,
                std::int64_t fan_in) {
    require(index_.find(name) == index_.end(), "duplicate parameter name " + name);
    Tensor<T> t;
    if (init == Init::zero)
      t = Tensor<T>::zeros(shape);
    else
      t = Tensor<T>::fan_in_uniform(shape, mix64(seed_ ^ fnv1a64(name)), fan_in);
    t.set_requires_grad(true);
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(t);
    return t;
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor<T>& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor<T>& tensor(std::size_t i) const { return tensors_[i]; }

  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &tensors_[it->second];
  }

  std::int64_t total_parameters() const {
    std::int64_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  void zero_grads() {
    for (auto& t : tensors_) t.zero_grad();
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;  // b stays undefined for bias-free layers
  int stride = 1, pad = 1, groups = 1;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<T>& ps, const std::string& name, std::int64_t in_ch,
              std::int64_t out_ch, int k, int stride_, int pad_, bool bias,
              int groups_ = 1, Init init = Init::fan_in)
      : stride(stride_), pad(pad_), groups(groups_) {
    const std::int64_t fan_in = (in_ch / groups_) * k * k;
    w = ps.add(name + ".w", {out_ch, in_ch / groups_, k, k}, init, fan_in);
    if (bias) b = ps.add(name + ".b", {out_ch}, Init::zero, 1);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, w, b, stride, pad, groups);
  }
};

// k=3, stride 2, output 2H x 2W; weight [in, out, 3, 3].
template <typename T>
struct TConv2dX2Layer {
  Tensor<T> w, b;

  TConv2dX2Layer() = default;
  TConv2dX2Layer(ParamStore<T>& ps, const std::string& name, std::int64_t in_ch,
                 std::int64_t out_ch, bool bias = false) {
    w = ps.add(name + ".w", {in_ch, out_ch, 3, 3}, Init::fan_in, in_ch * 9);
    if (bias) b = ps.add(name + ".b", {out_ch}, Init::zero, 1);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return transposed_conv2d_x2(x, w, b);
  }
};

}  // namespace burstforge
