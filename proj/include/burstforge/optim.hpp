#pragma once

// Adam with bias correction over a ParamStore. Moment buffers live here and
// can be round-tripped through checkpoints; the optimizer step count is the
// trainer step count (the trainer calls step() exactly once per iteration),
// so resume restores it from the saved training state.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "burstforge/layers.hpp"
#include "burstforge/tensor.hpp"

namespace burstforge {

template <typename T>
class Adam {
 public:
  explicit Adam(ParamStore<T>& params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : params_(&params), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Tensor<T>::zeros(params.tensor(i).shape()));
      v_.push_back(Tensor<T>::zeros(params.tensor(i).shape()));
    }
  }

  // One update with the given learning rate. Parameters that received no
  // gradient this step are treated as having a zero gradient (their moments
  // still decay). Any non-finite gradient aborts before touching weights.
  void step(double lr) {
    for (std::size_t i = 0; i < params_->size(); ++i) {
      const Tensor<T>& p = params_->tensor(i);
      if (!p.has_grad()) continue;
      for (const T& g : p.grad())
        if (!std::isfinite(static_cast<double>(g)))
          throw NumericError("non-finite gradient in parameter " + params_->name(i));
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_->size(); ++i) {
      Tensor<T>& p = params_->tensor(i);
      const bool has = p.has_grad();
      T* pm = m_[i].data();
      T* pv = v_[i].data();
      T* pd = p.data();
      const std::int64_t n = p.numel();
      for (std::int64_t j = 0; j < n; ++j) {
        const double g = has ? static_cast<double>(p.grad()[j]) : 0.0;
        const double m = beta1_ * pm[j] + (1.0 - beta1_) * g;
        const double v = beta2_ * pv[j] + (1.0 - beta2_) * g * g;
        pm[j] = static_cast<T>(m);
        pv[j] = static_cast<T>(v);
        pd[j] -= static_cast<T>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

  std::int64_t steps_taken() const { return t_; }

  // Moment buffers in parameter order, named adam.m.<param> / adam.v.<param>.
  std::vector<std::pair<std::string, Tensor<T>>> export_state() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (std::size_t i = 0; i < params_->size(); ++i) {
      out.emplace_back("adam.m." + params_->name(i), m_[i]);
      out.emplace_back("adam.v." + params_->name(i), v_[i]);
    }
    return out;
  }

  void import_state(const std::vector<std::pair<std::string, Tensor<T>>>& state,
                    std::int64_t step) {
    require(state.size() == 2 * params_->size(),
            "optimizer state has " + std::to_string(state.size()) +
                " tensors, expected " + std::to_string(2 * params_->size()));
    for (std::size_t i = 0; i < params_->size(); ++i) {
      const auto& em = state[2 * i];
      const auto& ev = state[2 * i + 1];
      require(em.first == "adam.m." + params_->name(i) &&
                  ev.first == "adam.v." + params_->name(i),
              "optimizer state order mismatch at " + em.first);
      require(em.second.shape() == m_[i].shape() && ev.second.shape() == v_[i].shape(),
              "optimizer state shape mismatch for " + params_->name(i));
      m_[i] = em.second.clone();
      v_[i] = ev.second.clone();
    }
    require(step >= 0, "step must be non-negative");
    t_ = step;
  }

 private:
  ParamStore<T>* params_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace burstforge
