#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "freqadv/kernels.hpp"
#include "freqadv/tensor.hpp"

namespace freqadv::ad {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint64_t tape = 0;
  std::uint32_t index = 0;
};

template <class T>
class Tape;

/// Gradients of the grad-required leaves reachable from a loss, keyed by leaf.
template <class T>
class GradMap {
 public:
  bool contains(Var v) const { return grads_.count(v.index) != 0; }
  const Tensor<T>& operator[](Var v) const;
  std::size_t size() const noexcept { return grads_.size(); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  friend class Tape<T>;
  std::map<std::uint32_t, Tensor<T>> grads_;
};

/// Reverse-mode tape. Entries are appended in evaluation order, so every
/// entry's inputs precede it. A tape is single-writer; build one per thread.
template <class T>
class Tape {
 public:
  /// Propagates the gradient of one entry into its inputs, given the entry's
  /// own value and its gradient. Implementations add into `grad_buffer(input)`.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& value, const Tensor<T>& grad_out)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  Var leaf(Tensor<T> value, bool requires_grad = false);
  Var record(Tensor<T> value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor<T>& value(Var v) const;
  bool requires_grad(Var v) const;
  bool is_leaf(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  std::uint64_t id() const noexcept { return id_; }

  /// Exact reverse-mode gradients of a scalar entry. Throws UsageError when
  /// `loss` belongs to a different tape or is not a scalar.
  GradMap<T> backward(Var loss);

  /// Gradient buffer for `input` during backward, or nullptr when the input
  /// does not require a gradient.
  Tensor<T>* grad_buffer(Var input);

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    bool leaf = false;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
  };

  const Node& node(Var v) const;

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;  // live only during backward()
};

using kernels::Padding;

// Differentiable primitives. Rank-1 inputs to dense and rank-2 inputs to
// conv1d are treated as a batch of one.

template <class T>
Var dense(Tape<T>& tape, Var x, Var w, Var b);
template <class T>
Var conv1d(Tape<T>& tape, Var x, Var w, Var b, Padding padding);
template <class T>
Var relu(Tape<T>& tape, Var x);
/// Windowed max over the last axis. Trailing elements that do not fill a
/// window are dropped.
template <class T>
Var maxpool1d(Tape<T>& tape, Var x, std::size_t window = 2, std::size_t stride = 2);
/// [N, C, L] -> [N, C]
template <class T>
Var global_avg_pool(Tape<T>& tape, Var x);
template <class T>
Var add(Tape<T>& tape, Var a, Var b);
template <class T>
Var scale(Tape<T>& tape, Var x, T factor);
template <class T>
Var sum(Tape<T>& tape, Var x);
template <class T>
Var sum_squares(Tape<T>& tape, Var x);
template <class T>
Var reshape(Tape<T>& tape, Var x, Shape shape);
/// Concatenates [N, C_i, L] tensors along the channel axis.
template <class T>
Var concat_channels(Tape<T>& tape, std::span<const Var> parts);
/// Elementwise mean of equally shaped tensors, evaluated as a running
/// average so that identical inputs reproduce themselves exactly.
template <class T>
Var mean_of(Tape<T>& tape, std::span<const Var> parts);
/// Row-wise softmax over the last axis.
template <class T>
Var softmax(Tape<T>& tape, Var z);
/// Mean over rows of -log(q[label] + 1e-12). Labels out of range throw.
template <class T>
Var cross_entropy(Tape<T>& tape, Var q, std::span<const int> labels);
/// Sum over rows of -log(1 - q[label] + eps); penalizes confidence in the
/// correct class.
template <class T>
Var confidence_penalty(Tape<T>& tape, Var q, std::span<const int> labels, T eps);
/// Elementwise clamp to [-zeta, zeta]. The gradient is 1 strictly inside the
/// interval and 0 at or beyond its boundary.
template <class T>
Var clip_bounded(Tape<T>& tape, Var v, T zeta);
/// Places the complex coefficients `s` (interleaved re, im per bin) at the
/// DFT bins `bins` of a length-`length` spectrum and applies the inverse DFT
/// x_n = (1/L) sum_k X_k e^{+j 2 pi k n / L}. Output is [2, length]: real row
/// then imaginary row. A rank-2 `s` of shape [B, 2*|bins|] maps row-wise to
/// [B, 2, length].
template <class T>
Var band_idft(Tape<T>& tape, Var s, std::span<const std::size_t> bins, std::size_t length);

/// Max over coordinates of |analytic - numeric| / max(1e-8, |numeric|) using
/// central differences with step h.
double grad_check(const std::function<Var(Tape<double>&, Var)>& fn, const Tensor<double>& point, double h = 1e-5);

}  // namespace freqadv::ad
