#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
// Layout conventions: images are [C,H,W], bursts carry the frame index as
// the leading axis. A Tape records forward ops and replays their backward
// rules in exact reverse order; one backward pass per tape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "burstforge/common.hpp"
#include "burstforge/random.hpp"

namespace burstforge {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

namespace detail {

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily once the tensor joins a tape
  bool requires_grad = false;
  std::uint64_t tape_epoch = 0;  // id of the tape this tensor last joined
};

inline void validate_shape(const Shape& shape) {
  require(!shape.empty(), "tensor shape must be non-empty");
  for (auto e : shape)
    require(e >= 1, "tensor extents must be >= 1, got " + shape_str(shape));
}

}  // namespace detail

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape) {
    detail::validate_shape(shape);
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl<T>>();
    t.impl_->shape = shape;
    t.impl_->data.assign(burstforge::numel(shape), T(0));
    return t;
  }

  static Tensor full(const Shape& shape, T value) {
    Tensor t = zeros(shape);
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
  }

  // Uniform in [0, 1); deterministic for a given seed.
  static Tensor uniform(const Shape& shape, std::uint64_t seed) {
    Tensor t = zeros(shape);
    Rng rng(seed);
    for (auto& v : t.impl_->data) v = static_cast<T>(rng.uniform());
    return t;
  }

  // Fan-in uniform initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)), so a
  // linear layer has variance gain 1/3. The network stacks residual branches
  // that end in activation-free convs; a gain-2 init (He) compounds through
  // them and overflows f32 at full depth, a contractive one stays O(1).
  static Tensor fan_in_uniform(const Shape& shape, std::uint64_t seed,
                               std::int64_t fan_in) {
    require(fan_in >= 1, "fan_in_uniform fan_in must be >= 1");
    Tensor t = zeros(shape);
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.impl_->data) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
  }

  static Tensor from(const Shape& shape, std::vector<T> values) {
    detail::validate_shape(shape);
    require(static_cast<std::int64_t>(values.size()) == burstforge::numel(shape),
            "value count does not match shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl<T>>();
    t.impl_->shape = shape;
    t.impl_->data = std::move(values);
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(int i) const { return impl_->shape[i]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  T* data() { return impl_->data.data(); }
  const T* data() const { return impl_->data.data(); }
  std::vector<T>& vec() { return impl_->data; }
  const std::vector<T>& vec() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<T>& grad() { return impl_->grad; }
  const std::vector<T>& grad() const { return impl_->grad; }
  void ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  }
  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  // Deep copy, detached from any tape; requires_grad is not inherited.
  Tensor clone() const {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl<T>>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
  }

  std::shared_ptr<detail::TensorImpl<T>> impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

// ---------------------------------------------------------------------------
// Tape

template <typename T>
class Tape {
 public:
  Tape() {
    id_ = ++epoch_counter();
    prev_ = current_ref();
    current_ref() = this;
  }
  ~Tape() { current_ref() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_ref(); }
  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }

  void record(std::function<void()> backward_fn) {
    if (consumed_)
      throw ValidationError("tape already consumed by backward; open a new tape");
    nodes_.push_back(std::move(backward_fn));
  }

  // Seeds d(loss)/d(loss) = 1 and propagates through the recorded graph in
  // reverse. Gradient accumulation across fan-out is additive.
  void backward(const Tensor<T>& loss) {
    require(loss.defined() && loss.numel() == 1,
            "backward requires a scalar loss tensor");
    if (consumed_) throw ValidationError("backward called twice on one tape");
    if (loss.impl()->tape_epoch != id_)
      throw ValidationError("loss was not produced on this tape");
    const_cast<Tensor<T>&>(loss).ensure_grad();
    loss.impl()->grad[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    consumed_ = true;
  }

  bool consumed() const { return consumed_; }

 private:
  static Tape*& current_ref() {
    static thread_local Tape* cur = nullptr;
    return cur;
  }
  static std::uint64_t& epoch_counter() {
    static std::uint64_t c = 0;
    return c;
  }

  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
  std::uint64_t id_ = 0;
  Tape* prev_ = nullptr;
};

namespace detail {

template <typename T>
bool tracked(Tape<T>* tape, const Tensor<T>& t) {
  return tape != nullptr &&
         (t.impl()->requires_grad || t.impl()->tape_epoch == tape->id());
}

template <typename T>
void enroll(Tape<T>* tape, Tensor<T>& t) {
  t.impl()->tape_epoch = tape->id();
  t.ensure_grad();
}

// Forward kernels must never emit NaN/Inf from finite inputs; surface it.
template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  for (const T& v : t.vec()) {
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

namespace detail {

// The only broadcast this library needs: a per-channel [C,1,1] column against
// a [C,H,W] map (either operand order).
enum class Broadcast { none, b_is_column, a_is_column };

template <typename T>
Broadcast broadcast_kind(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) return Broadcast::none;
  auto column_vs_map = [](const Shape& col, const Shape& map) {
    return col.size() == 3 && map.size() == 3 && col[0] == map[0] && col[1] == 1 &&
           col[2] == 1;
  };
  if (column_vs_map(b.shape(), a.shape())) return Broadcast::b_is_column;
  if (column_vs_map(a.shape(), b.shape())) return Broadcast::a_is_column;
  throw ValidationError("incompatible shapes " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()) +
                        " (equal shapes or [C,1,1] against [C,H,W] required)");
}

}  // namespace detail

template <typename T, typename FwdOp, typename BwdOp>
Tensor<T> binary_elementwise(const Tensor<T>& a, const Tensor<T>& b, FwdOp fwd,
                             BwdOp bwd, const char* name) {
  const auto kind = detail::broadcast_kind(a, b);
  const Tensor<T>& map = (kind == detail::Broadcast::a_is_column) ? b : a;
  const Tensor<T>& col = (kind == detail::Broadcast::a_is_column) ? a : b;
  Tensor<T> out = Tensor<T>::zeros(map.shape());

  const std::int64_t n = map.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  if (kind == detail::Broadcast::none) {
    for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  } else {
    const std::int64_t hw = map.shape()[1] * map.shape()[2];
    const T* pm = map.data();
    const T* pc = col.data();
    const bool a_is_map = (kind == detail::Broadcast::b_is_column);
    for (std::int64_t i = 0; i < n; ++i) {
      T cv = pc[i / hw];
      po[i] = a_is_map ? fwd(pm[i], cv) : fwd(cv, pm[i]);
    }
  }
  detail::check_finite(out, name);

  Tape<T>* tape = Tape<T>::current();
  bool ta = detail::tracked(tape, a);
  bool tb = detail::tracked(tape, b);
  if (ta || tb) {
    if (ta) const_cast<Tensor<T>&>(a).ensure_grad();
    if (tb) const_cast<Tensor<T>&>(b).ensure_grad();
    detail::enroll(tape, out);
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    tape->record([ai, bi, oi, ta, tb, bwd, kind] {
      const std::int64_t n = static_cast<std::int64_t>(oi->data.size());
      const std::int64_t hw = (kind == detail::Broadcast::none)
                                  ? 1
                                  : oi->shape[1] * oi->shape[2];
      for (std::int64_t i = 0; i < n; ++i) {
        T go = oi->grad[i];
        if (go == T(0)) continue;
        std::int64_t ia = i, ib = i;
        if (kind == detail::Broadcast::b_is_column) ib = i / hw;
        if (kind == detail::Broadcast::a_is_column) ia = i / hw;
        T da, db;
        bwd(ai->data[ia], bi->data[ib], go, da, db);
        if (ta) ai->grad[ia] += da;
        if (tb) bi->grad[ib] += db;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise(
      a, b, [](T x, T y) { return x + y; },
      [](T, T, T go, T& da, T& db) {
        da = go;
        db = go;
      },
      "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise(
      a, b, [](T x, T y) { return x - y; },
      [](T, T, T go, T& da, T& db) {
        da = go;
        db = -go;
      },
      "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise(
      a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T go, T& da, T& db) {
        da = go * y;
        db = go * x;
      },
      "mul");
}

template <typename T, typename FwdOp, typename BwdOp>
Tensor<T> unary_elementwise(const Tensor<T>& a, FwdOp fwd, BwdOp bwd,
                            const char* name) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const std::int64_t n = a.numel();
  const T* pa = a.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  detail::check_finite(out, name);

  Tape<T>* tape = Tape<T>::current();
  if (detail::tracked(tape, a)) {
    const_cast<Tensor<T>&>(a).ensure_grad();
    detail::enroll(tape, out);
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record([ai, oi, bwd] {
      const std::int64_t n = static_cast<std::int64_t>(oi->data.size());
      for (std::int64_t i = 0; i < n; ++i)
        ai->grad[i] += bwd(ai->data[i], oi->data[i]) * oi->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  return unary_elementwise(
      a, [c](T x) { return c * x; }, [c](T, T) { return c; }, "scale");
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.2)) {
  return unary_elementwise(
      a, [slope](T x) { return x >= T(0) ? x : slope * x; },
      [slope](T x, T) { return x >= T(0) ? T(1) : slope; }, "leaky_relu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary_elementwise(
      a,
      [](T x) {
        // Split by sign to avoid exp overflow.
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

// ---------------------------------------------------------------------------
// matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2,
          "matmul expects rank-2 tensors");
  const std::int64_t m = a.shape()[0], k = a.shape()[1];
  const std::int64_t k2 = b.shape()[0], n = b.shape()[1];
  require(k == k2, "matmul inner extents differ: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros({m, n});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t l = 0; l < k; ++l) {
      T av = pa[i * k + l];
      if (av == T(0)) continue;
      for (std::int64_t j = 0; j < n; ++j) po[i * n + j] += av * pb[l * n + j];
    }
  detail::check_finite(out, "matmul");

  Tape<T>* tape = Tape<T>::current();
  bool ta = detail::tracked(tape, a);
  bool tb = detail::tracked(tape, b);
  if (ta || tb) {
    if (ta) const_cast<Tensor<T>&>(a).ensure_grad();
    if (tb) const_cast<Tensor<T>&>(b).ensure_grad();
    detail::enroll(tape, out);
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    tape->record([ai, bi, oi, ta, tb, m, k, n] {
      // dA = dO * B^T, dB = A^T * dO
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
          T go = oi->grad[i * n + j];
          if (go == T(0)) continue;
          if (ta)
            for (std::int64_t l = 0; l < k; ++l)
              ai->grad[i * k + l] += go * bi->data[l * n + j];
          if (tb)
            for (std::int64_t l = 0; l < k; ++l)
              bi->grad[l * n + j] += go * ai->data[i * k + l];
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& new_shape) {
  detail::validate_shape(new_shape);
  require(numel(new_shape) == a.numel(),
          "reshape to " + shape_str(new_shape) + " changes element count");
  Tensor<T> out = Tensor<T>::from(new_shape, a.vec());

  Tape<T>* tape = Tape<T>::current();
  if (detail::tracked(tape, a)) {
    const_cast<Tensor<T>&>(a).ensure_grad();
    detail::enroll(tape, out);
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record([ai, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
    });
  }
  return out;
}

namespace detail {

inline void check_axis(const Shape& shape, int axis) {
  require(axis >= 0 && axis < static_cast<int>(shape.size()),
          "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
}

// Collapse shape around `axis` into [outer, extent, inner].
inline void axis_split(const Shape& shape, int axis, std::int64_t& outer,
                       std::int64_t& extent, std::int64_t& inner) {
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  extent = shape[axis];
  inner = 1;
  for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) inner *= shape[i];
}

}  // namespace detail

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  require(!parts.empty(), "concat requires at least one input");
  const Shape& first = parts[0].shape();
  detail::check_axis(first, axis);
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    require(p.shape().size() == first.size(), "concat rank mismatch");
    for (int i = 0; i < static_cast<int>(first.size()); ++i)
      if (i != axis)
        require(p.shape()[i] == first[i],
                "concat inputs disagree on non-concat extent " + std::to_string(i));
    out_shape[axis] += p.shape()[axis];
  }

  Tensor<T> out = Tensor<T>::zeros(out_shape);
  std::int64_t outer, total_extent, inner;
  detail::axis_split(out_shape, axis, outer, total_extent, inner);
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    std::int64_t ext = p.shape()[axis];
    const T* src = p.data();
    T* dst = out.data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy(src + o * ext * inner, src + (o + 1) * ext * inner,
                dst + (o * total_extent + offset) * inner);
    offset += ext;
  }

  Tape<T>* tape = Tape<T>::current();
  bool any = false;
  for (const auto& p : parts) any = any || detail::tracked(tape, p);
  if (any) {
    std::vector<std::shared_ptr<detail::TensorImpl<T>>> impls;
    std::vector<bool> track;
    for (const auto& p : parts) {
      bool t = detail::tracked(tape, p);
      if (t) const_cast<Tensor<T>&>(p).ensure_grad();
      impls.push_back(p.impl());
      track.push_back(t);
    }
    detail::enroll(tape, out);
    auto oi = out.impl();
    tape->record([impls, track, oi, axis, outer, total_extent, inner] {
      std::int64_t offset = 0;
      for (std::size_t pi = 0; pi < impls.size(); ++pi) {
        std::int64_t ext = impls[pi]->shape[axis];
        if (track[pi]) {
          for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t e = 0; e < ext; ++e)
              for (std::int64_t in = 0; in < inner; ++in)
                impls[pi]->grad[(o * ext + e) * inner + in] +=
                    oi->grad[(o * total_extent + offset + e) * inner + in];
        }
        offset += ext;
      }
    });
  }
  return out;
}

// Half-open range [lo, hi) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, std::int64_t lo, std::int64_t hi) {
  detail::check_axis(a.shape(), axis);
  require(lo >= 0 && lo < hi && hi <= a.shape()[axis],
          "slice range [" + std::to_string(lo) + "," + std::to_string(hi) +
              ") invalid for " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[axis] = hi - lo;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  std::int64_t outer, extent, inner;
  detail::axis_split(a.shape(), axis, outer, extent, inner);
  const std::int64_t width = hi - lo;
  const T* src = a.data();
  T* dst = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy(src + (o * extent + lo) * inner, src + (o * extent + hi) * inner,
              dst + o * width * inner);

  Tape<T>* tape = Tape<T>::current();
  if (detail::tracked(tape, a)) {
    const_cast<Tensor<T>&>(a).ensure_grad();
    detail::enroll(tape, out);
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record([ai, oi, outer, extent, inner, lo, width] {
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t e = 0; e < width; ++e)
          for (std::int64_t in = 0; in < inner; ++in)
            ai->grad[(o * extent + lo + e) * inner + in] +=
                oi->grad[(o * width + e) * inner + in];
    });
  }
  return out;
}

// Sums out `axis` (result keeps remaining axes; a full reduction yields [1]).
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, int axis) {
  detail::check_axis(a.shape(), axis);
  Shape out_shape;
  for (int i = 0; i < static_cast<int>(a.shape().size()); ++i)
    if (i != axis) out_shape.push_back(a.shape()[i]);
  if (out_shape.empty()) out_shape = {1};

  Tensor<T> out = Tensor<T>::zeros(out_shape);
  std::int64_t outer, extent, inner;
  detail::axis_split(a.shape(), axis, outer, extent, inner);
  const T* src = a.data();
  T* dst = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t e = 0; e < extent; ++e)
      for (std::int64_t in = 0; in < inner; ++in)
        dst[o * inner + in] += src[(o * extent + e) * inner + in];
  detail::check_finite(out, "sum_axis");

  Tape<T>* tape = Tape<T>::current();
  if (detail::tracked(tape, a)) {
    const_cast<Tensor<T>&>(a).ensure_grad();
    detail::enroll(tape, out);
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record([ai, oi, outer, extent, inner] {
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t e = 0; e < extent; ++e)
          for (std::int64_t in = 0; in < inner; ++in)
            ai->grad[(o * extent + e) * inner + in] += oi->grad[o * inner + in];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros({1});
  T acc = T(0);
  for (const T& v : a.vec()) acc += v;
  out.data()[0] = acc;
  detail::check_finite(out, "sum_all");

  Tape<T>* tape = Tape<T>::current();
  if (detail::tracked(tape, a)) {
    const_cast<Tensor<T>&>(a).ensure_grad();
    detail::enroll(tape, out);
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record([ai, oi] {
      T go = oi->grad[0];
      for (auto& g : ai->grad) g += go;
    });
  }
  return out;
}

// Numerically stable softmax along `axis`; outputs sum to 1 along it.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  detail::check_axis(a.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  std::int64_t outer, extent, inner;
  detail::axis_split(a.shape(), axis, outer, extent, inner);
  const T* src = a.data();
  T* dst = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in) {
      T mx = src[(o * extent) * inner + in];
      for (std::int64_t e = 1; e < extent; ++e)
        mx = std::max(mx, src[(o * extent + e) * inner + in]);
      T denom = T(0);
      for (std::int64_t e = 0; e < extent; ++e) {
        T v = std::exp(src[(o * extent + e) * inner + in] - mx);
        dst[(o * extent + e) * inner + in] = v;
        denom += v;
      }
      for (std::int64_t e = 0; e < extent; ++e)
        dst[(o * extent + e) * inner + in] /= denom;
    }
  detail::check_finite(out, "softmax");

  Tape<T>* tape = Tape<T>::current();
  if (detail::tracked(tape, a)) {
    const_cast<Tensor<T>&>(a).ensure_grad();
    detail::enroll(tape, out);
    auto ai = a.impl();
    auto oi = out.impl();
    tape->record([ai, oi, outer, extent, inner] {
      // dx = y * (dy - sum(dy * y)) along the softmax axis
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
          T dot = T(0);
          for (std::int64_t e = 0; e < extent; ++e) {
            std::int64_t idx = (o * extent + e) * inner + in;
            dot += oi->grad[idx] * oi->data[idx];
          }
          for (std::int64_t e = 0; e < extent; ++e) {
            std::int64_t idx = (o * extent + e) * inner + in;
            ai->grad[idx] += oi->data[idx] * (oi->grad[idx] - dot);
          }
        }
    });
  }
  return out;
}

}  // namespace burstforge
