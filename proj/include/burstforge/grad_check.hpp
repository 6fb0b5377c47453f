#pragma once

// Central-difference gradient verification. Double precision only: f32
// cancellation noise swamps the tolerances this is meant to enforce.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "burstforge/tensor.hpp"

namespace burstforge {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "input 2, coord 17" for the worst coordinate
  std::int64_t coords_checked = 0;

  bool ok(double tol) const { return max_rel_err < tol; }
};

// `fn` must build a scalar loss from `inputs` using ops recorded on the
// current tape. Each call re-reads the input buffers, so the checker can
// nudge coordinates in place. Inputs with requires_grad unset are skipped.
template <typename Fn>
GradCheckResult grad_check(Fn&& fn, const std::vector<Tensor<double>>& inputs,
                           double eps = 1e-5) {
  require(!inputs.empty(), "grad_check needs at least one input");

  for (const auto& t : inputs) const_cast<Tensor<double>&>(t).zero_grad();

  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Tensor<double> loss = fn();
    tape.backward(loss);
  }
  for (const auto& t : inputs) {
    if (t.requires_grad() && t.has_grad())
      analytic.push_back(t.grad());
    else
      analytic.emplace_back(t.numel(), 0.0);
  }

  // Numeric pass: no tape open, so fn runs forward-only.
  GradCheckResult res;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    if (!inputs[ti].requires_grad()) continue;
    Tensor<double>& t = const_cast<Tensor<double>&>(inputs[ti]);
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + eps;
      const double up = fn().data()[0];
      t.data()[i] = saved - eps;
      const double down = fn().data()[0];
      t.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[ti][static_cast<std::size_t>(i)];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++res.coords_checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = "input " + std::to_string(ti) + ", coord " + std::to_string(i) +
                    " (analytic " + std::to_string(a) + ", numeric " +
                    std::to_string(numeric) + ")";
      }
    }
  }
  return res;
}

}  // namespace burstforge
