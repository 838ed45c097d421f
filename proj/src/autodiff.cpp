#include "freqadv/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <type_traits>

#include "freqadv/errors.hpp"

namespace freqadv {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

}  // namespace freqadv

namespace freqadv::ad {

namespace {

std::atomic<std::uint64_t> next_tape_id{1};

template <class T>
void add_to(Tensor<T>* dst, const Tensor<T>& src) {
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// The message is built only on failure when passed as a callable.
template <class Msg>
void require(bool cond, Msg&& what) {
  if (cond) return;
  if constexpr (std::is_invocable_v<Msg>) {
    throw ConfigError(std::string(what()));
  } else {
    throw ConfigError(std::string(what));
  }
}

}  // namespace

template <class T>
const Tensor<T>& GradMap<T>::operator[](Var v) const {
  auto it = grads_.find(v.index);
  if (it == grads_.end()) throw UsageError("no gradient recorded for tape entry " + std::to_string(v.index));
  return it->second;
}

template <class T>
Tape<T>::Tape() : id_(next_tape_id.fetch_add(1)) {}

template <class T>
Var Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return Var{id_, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
Var Tape<T>::record(Tensor<T> value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    const Node& src = node(in);
    n.requires_grad = n.requires_grad || src.requires_grad;
    n.inputs.push_back(in.index);
  }
  // Constant subgraphs keep no closure.
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{id_, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.tape != id_ || v.index >= nodes_.size()) throw UsageError("value is not on this tape");
  return nodes_[v.index];
}

template <class T>
const Tensor<T>& Tape<T>::value(Var v) const {
  return node(v).value;
}

template <class T>
bool Tape<T>::requires_grad(Var v) const {
  return node(v).requires_grad;
}

template <class T>
bool Tape<T>::is_leaf(Var v) const {
  return node(v).leaf;
}

template <class T>
Tensor<T>* Tape<T>::grad_buffer(Var input) {
  const Node& n = node(input);
  if (!n.requires_grad) return nullptr;
  Tensor<T>& g = grads_[input.index];
  if (g.shape() != n.value.shape() || g.empty()) g = Tensor<T>(n.value.shape(), T{0});
  return &g;
}

template <class T>
GradMap<T> Tape<T>::backward(Var loss) {
  if (loss.tape != id_ || loss.index >= nodes_.size()) throw UsageError("loss is not on this tape");
  const Node& root = nodes_[loss.index];
  if (root.value.size() != 1) throw UsageError("loss must be a scalar, got shape " + shape_string(root.value.shape()));

  std::vector<char> reachable(loss.index + 1, 0);
  reachable[loss.index] = 1;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    if (!reachable[i]) continue;
    for (std::uint32_t in : nodes_[i].inputs) reachable[in] = 1;
  }

  grads_.assign(nodes_.size(), Tensor<T>());
  grads_[loss.index] = Tensor<T>(root.value.shape(), T{1});
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.leaf || !n.backward || grads_[i].empty()) continue;
    // The closure may write into grads_ of earlier entries only.
    const Tensor<T> grad_out = std::move(grads_[i]);
    n.backward(*this, n.value, grad_out);
  }

  GradMap<T> out;
  for (std::size_t i = 0; i <= loss.index; ++i) {
    const Node& n = nodes_[i];
    if (!n.leaf || !n.requires_grad || !reachable[i]) continue;
    if (grads_[i].empty()) grads_[i] = Tensor<T>(n.value.shape(), T{0});
    out.grads_.emplace(static_cast<std::uint32_t>(i), std::move(grads_[i]));
  }
  grads_.clear();
  return out;
}

// ---------------------------------------------------------------------------
// Primitives

template <class T>
Var dense(Tape<T>& tape, Var x, Var w, Var b) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  const Tensor<T>& bv = tape.value(b);
  require(wv.rank() == 2, [&] { return "dense weight must be rank 2, got " + shape_string(wv.shape()); });
  require(xv.rank() == 1 || xv.rank() == 2, [&] { return "dense input must be rank 1 or 2, got " + shape_string(xv.shape()); });
  kernels::DenseShape g;
  g.batch = xv.rank() == 1 ? 1 : xv.dim(0);
  g.in_features = xv.shape().back();
  g.out_features = wv.dim(0);
  require(wv.dim(1) == g.in_features, [&] { return "dense shape mismatch: input " + shape_string(xv.shape()) + " vs weight " +
                                          shape_string(wv.shape()); });
  require(bv.size() == g.out_features, [&] { return "dense bias length " + std::to_string(bv.size()) + " != " +
                                           std::to_string(g.out_features); });
  Shape out_shape = xv.rank() == 1 ? Shape{g.out_features} : Shape{g.batch, g.out_features};
  Tensor<T> y(out_shape);
  kernels::dense_forward<T>(g, xv.data(), wv.data(), bv.data(), y.data());
  const Var inputs[] = {x, w, b};
  return tape.record(std::move(y), inputs, [x, w, b, g](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    if (Tensor<T>* dx = t.grad_buffer(x)) kernels::dense_backward_input<T>(g, gy.data(), t.value(w).data(), dx->data());
    Tensor<T>* dw = t.grad_buffer(w);
    Tensor<T>* db = t.grad_buffer(b);
    if (dw || db) {
      Tensor<T> scratch_w, scratch_b;
      if (!dw) { scratch_w = Tensor<T>(t.value(w).shape()); dw = &scratch_w; }
      if (!db) { scratch_b = Tensor<T>(t.value(b).shape()); db = &scratch_b; }
      kernels::dense_backward_params<T>(g, gy.data(), t.value(x).data(), dw->data(), db->data());
    }
  });
}

template <class T>
Var conv1d(Tape<T>& tape, Var x, Var w, Var b, Padding padding) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  const Tensor<T>& bv = tape.value(b);
  require(wv.rank() == 3, [&] { return "conv1d kernels must be rank 3, got " + shape_string(wv.shape()); });
  require(xv.rank() == 2 || xv.rank() == 3, [&] { return "conv1d input must be rank 2 or 3, got " + shape_string(xv.shape()); });
  const bool batched = xv.rank() == 3;
  const std::size_t batch = batched ? xv.dim(0) : 1;
  const std::size_t channels = xv.dim(batched ? 1 : 0);
  const std::size_t length = xv.dim(batched ? 2 : 1);
  require(wv.dim(1) == channels, [&] { return "conv1d channel mismatch: input " + shape_string(xv.shape()) + " vs kernels " +
                                     shape_string(wv.shape()); });
  require(bv.size() == wv.dim(0), "conv1d bias length mismatch");
  const auto g = kernels::Conv1dShape::make(batch, channels, wv.dim(0), length, wv.dim(2), padding);
  Shape out_shape = batched ? Shape{batch, g.out_channels, g.out_length} : Shape{g.out_channels, g.out_length};
  Tensor<T> y(out_shape);
  kernels::conv1d_forward<T>(g, xv.data(), wv.data(), bv.data(), y.data());
  const Var inputs[] = {x, w, b};
  return tape.record(std::move(y), inputs, [x, w, b, g](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    if (Tensor<T>* dx = t.grad_buffer(x)) kernels::conv1d_backward_input<T>(g, gy.data(), t.value(w).data(), dx->data());
    Tensor<T>* dw = t.grad_buffer(w);
    Tensor<T>* db = t.grad_buffer(b);
    if (dw || db) {
      Tensor<T> scratch_w, scratch_b;
      if (!dw) { scratch_w = Tensor<T>(t.value(w).shape()); dw = &scratch_w; }
      if (!db) { scratch_b = Tensor<T>(t.value(b).shape()); db = &scratch_b; }
      kernels::conv1d_backward_params<T>(g, gy.data(), t.value(x).data(), dw->data(), db->data());
    }
  });
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T{0} ? xv[i] : T{0};
  const Var inputs[] = {x};
  return tape.record(std::move(y), inputs, [x](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    Tensor<T>* dx = t.grad_buffer(x);
    const Tensor<T>& xv = t.value(x);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xv[i] > T{0}) (*dx)[i] += gy[i];
  });
}

template <class T>
Var maxpool1d(Tape<T>& tape, Var x, std::size_t window, std::size_t stride) {
  require(window > 0 && stride > 0, "maxpool window and stride must be positive");
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() >= 1, "maxpool input must have rank >= 1");
  const std::size_t length = xv.shape().back();
  const std::size_t rows = length == 0 ? 0 : xv.size() / length;
  const std::size_t out_len = length >= window ? (length - window) / stride + 1 : 0;
  Shape out_shape = xv.shape();
  out_shape.back() = out_len;
  Tensor<T> y(out_shape);
  std::vector<std::uint32_t> argmax(y.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_len; ++o) {
      std::size_t best = r * length + o * stride;
      for (std::size_t k = 1; k < window; ++k) {
        const std::size_t idx = r * length + o * stride + k;
        if (xv[idx] > xv[best]) best = idx;
      }
      y[r * out_len + o] = xv[best];
      argmax[r * out_len + o] = static_cast<std::uint32_t>(best);
    }
  }
  const Var inputs[] = {x};
  return tape.record(std::move(y), inputs, [x, argmax = std::move(argmax)](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    Tensor<T>* dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gy.size(); ++i) (*dx)[argmax[i]] += gy[i];
  });
}

template <class T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() == 3, [&] { return "global_avg_pool expects [N,C,L], got " + shape_string(xv.shape()); });
  const std::size_t rows = xv.dim(0) * xv.dim(1);
  const std::size_t length = xv.dim(2);
  require(length > 0, "global_avg_pool over an empty axis");
  Tensor<T> y(Shape{xv.dim(0), xv.dim(1)});
  for (std::size_t r = 0; r < rows; ++r) {
    T acc{0};
    for (std::size_t l = 0; l < length; ++l) acc += xv[r * length + l];
    y[r] = acc / static_cast<T>(length);
  }
  const Var inputs[] = {x};
  return tape.record(std::move(y), inputs, [x, rows, length](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    Tensor<T>* dx = t.grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const T g = gy[r] / static_cast<T>(length);
      for (std::size_t l = 0; l < length; ++l) (*dx)[r * length + l] += g;
    }
  });
}

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require(av.shape() == bv.shape(), [&] { return "add shape mismatch " + shape_string(av.shape()) + " vs " +
                                        shape_string(bv.shape()); });
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  const Var inputs[] = {a, b};
  return tape.record(std::move(y), inputs, [a, b](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    if (Tensor<T>* da = t.grad_buffer(a)) add_to(da, gy);
    if (Tensor<T>* db = t.grad_buffer(b)) add_to(db, gy);
  });
}

template <class T>
Var scale(Tape<T>& tape, Var x, T factor) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * xv[i];
  const Var inputs[] = {x};
  return tape.record(std::move(y), inputs, [x, factor](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    Tensor<T>* dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gy.size(); ++i) (*dx)[i] += factor * gy[i];
  });
}

template <class T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T acc{0};
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  const Var inputs[] = {x};
  return tape.record(Tensor<T>(Shape{}, std::vector<T>{acc}), inputs, [x](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    Tensor<T>* dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += gy[0];
  });
}

template <class T>
Var sum_squares(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T acc{0};
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * xv[i];
  const Var inputs[] = {x};
  return tape.record(Tensor<T>(Shape{}, std::vector<T>{acc}), inputs, [x](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    Tensor<T>* dx = t.grad_buffer(x);
    const Tensor<T>& xv = t.value(x);
    for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += T{2} * xv[i] * gy[0];
  });
}

template <class T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  Tensor<T> y = tape.value(x).reshaped(std::move(shape));
  const Var inputs[] = {x};
  return tape.record(std::move(y), inputs, [x](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    Tensor<T>* dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gy.size(); ++i) (*dx)[i] += gy[i];
  });
}

template <class T>
Var concat_channels(Tape<T>& tape, std::span<const Var> parts) {
  require(!parts.empty(), "concat_channels needs at least one input");
  const Tensor<T>& first = tape.value(parts[0]);
  require(first.rank() == 3, "concat_channels expects [N,C,L] inputs");
  const std::size_t batch = first.dim(0);
  const std::size_t length = first.dim(2);
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor<T>& v = tape.value(p);
    require(v.rank() == 3 && v.dim(0) == batch && v.dim(2) == length, "concat_channels shape mismatch");
    channels.push_back(v.dim(1));
    total += v.dim(1);
  }
  Tensor<T> y(Shape{batch, total, length});
  for (std::size_t n = 0; n < batch; ++n) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const Tensor<T>& v = tape.value(parts[p]);
      const std::size_t block = channels[p] * length;
      std::copy_n(v.data().begin() + n * block, block, y.data().begin() + (n * total + offset) * length);
      offset += channels[p];
    }
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return tape.record(std::move(y), parts,
                     [saved, channels, batch, length, total](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < saved.size(); ++p) {
                         const std::size_t block = channels[p] * length;
                         if (Tensor<T>* dp = t.grad_buffer(saved[p])) {
                           for (std::size_t n = 0; n < batch; ++n) {
                             const T* src = gy.data().data() + (n * total + offset) * length;
                             T* dst = dp->data().data() + n * block;
                             for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                           }
                         }
                         offset += channels[p];
                       }
                     });
}

template <class T>
Var mean_of(Tape<T>& tape, std::span<const Var> parts) {
  require(!parts.empty(), "mean_of needs at least one input");
  Tensor<T> y = tape.value(parts[0]);
  for (std::size_t r = 1; r < parts.size(); ++r) {
    const Tensor<T>& v = tape.value(parts[r]);
    require(v.shape() == y.shape(), "mean_of shape mismatch");
    const T inv = T{1} / static_cast<T>(r + 1);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += (v[i] - y[i]) * inv;
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return tape.record(std::move(y), parts, [saved](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    const T w = T{1} / static_cast<T>(saved.size());
    for (Var p : saved) {
      if (Tensor<T>* dp = t.grad_buffer(p))
        for (std::size_t i = 0; i < gy.size(); ++i) (*dp)[i] += w * gy[i];
    }
  });
}

template <class T>
Var softmax(Tape<T>& tape, Var z) {
  const Tensor<T>& zv = tape.value(z);
  require(zv.rank() >= 1 && zv.shape().back() > 0, "softmax needs a non-empty last axis");
  const std::size_t classes = zv.shape().back();
  const std::size_t rows = zv.size() / classes;
  Tensor<T> q(zv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* zr = zv.data().data() + r * classes;
    T* qr = q.data().data() + r * classes;
    const T m = *std::max_element(zr, zr + classes);
    T total{0};
    for (std::size_t c = 0; c < classes; ++c) total += (qr[c] = std::exp(zr[c] - m));
    for (std::size_t c = 0; c < classes; ++c) qr[c] /= total;
  }
  const Var inputs[] = {z};
  return tape.record(std::move(q), inputs, [z, classes, rows](Tape<T>& t, const Tensor<T>& qv, const Tensor<T>& gq) {
    Tensor<T>* dz = t.grad_buffer(z);
    for (std::size_t r = 0; r < rows; ++r) {
      T inner{0};
      for (std::size_t c = 0; c < classes; ++c) inner += gq[r * classes + c] * qv[r * classes + c];
      for (std::size_t c = 0; c < classes; ++c)
        (*dz)[r * classes + c] += qv[r * classes + c] * (gq[r * classes + c] - inner);
    }
  });
}

template <class T>
Var cross_entropy(Tape<T>& tape, Var q, std::span<const int> labels) {
  const Tensor<T>& qv = tape.value(q);
  require(qv.rank() >= 1 && qv.shape().back() > 0, "cross_entropy needs a non-empty class axis");
  const std::size_t classes = qv.shape().back();
  const std::size_t rows = qv.size() / classes;
  require(labels.size() == rows, [&] { return "cross_entropy label count " + std::to_string(labels.size()) + " != rows " +
                                     std::to_string(rows); });
  constexpr T floor = T(1e-12);
  T acc{0};
  for (std::size_t r = 0; r < rows; ++r) {
    require(labels[r] >= 0 && static_cast<std::size_t>(labels[r]) < classes, [&] { return "label " + std::to_string(labels[r]) + " out of range for " + std::to_string(classes) + " classes"; });
    acc -= std::log(qv[r * classes + labels[r]] + floor);
  }
  acc /= static_cast<T>(rows);
  std::vector<int> saved(labels.begin(), labels.end());
  const Var inputs[] = {q};
  return tape.record(Tensor<T>(Shape{}, std::vector<T>{acc}), inputs,
                     [q, saved, classes, rows](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
                       Tensor<T>* dq = t.grad_buffer(q);
                       const Tensor<T>& qv = t.value(q);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const std::size_t idx = r * classes + saved[r];
                         (*dq)[idx] -= gy[0] / ((qv[idx] + floor) * static_cast<T>(rows));
                       }
                     });
}

template <class T>
Var confidence_penalty(Tape<T>& tape, Var q, std::span<const int> labels, T eps) {
  const Tensor<T>& qv = tape.value(q);
  require(qv.rank() >= 1 && qv.shape().back() > 0, "confidence_penalty needs a non-empty class axis");
  const std::size_t classes = qv.shape().back();
  const std::size_t rows = qv.size() / classes;
  require(labels.size() == rows, "confidence_penalty label count mismatch");
  T acc{0};
  for (std::size_t r = 0; r < rows; ++r) {
    require(labels[r] >= 0 && static_cast<std::size_t>(labels[r]) < classes, "label out of range");
    acc -= std::log(T{1} - qv[r * classes + labels[r]] + eps);
  }
  std::vector<int> saved(labels.begin(), labels.end());
  const Var inputs[] = {q};
  return tape.record(Tensor<T>(Shape{}, std::vector<T>{acc}), inputs,
                     [q, saved, classes, rows, eps](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
                       Tensor<T>* dq = t.grad_buffer(q);
                       const Tensor<T>& qv = t.value(q);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const std::size_t idx = r * classes + saved[r];
                         (*dq)[idx] += gy[0] / (T{1} - qv[idx] + eps);
                       }
                     });
}

template <class T>
Var clip_bounded(Tape<T>& tape, Var v, T zeta) {
  require(zeta > T{0}, "clip bound must be positive");
  const Tensor<T>& vv = tape.value(v);
  Tensor<T> y(vv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::clamp(vv[i], -zeta, zeta);
  const Var inputs[] = {v};
  return tape.record(std::move(y), inputs, [v, zeta](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
    Tensor<T>* dv = t.grad_buffer(v);
    const Tensor<T>& vv = t.value(v);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (std::abs(vv[i]) < zeta) (*dv)[i] += gy[i];
  });
}

namespace {

// Rows cos(2 pi k n / L), sin(2 pi k n / L) for each in-band k. Angles are
// taken from (k * n) mod L so every argument is exact.
template <class T>
struct Twiddles {
  std::vector<std::size_t> bins;
  std::size_t length = 0;
  std::vector<T> cos, sin;  // [bins, length]
};

template <class T>
std::shared_ptr<const Twiddles<T>> twiddles(std::span<const std::size_t> bins, std::size_t length) {
  thread_local std::shared_ptr<const Twiddles<T>> last;
  if (last && last->length == length && std::ranges::equal(last->bins, bins)) return last;
  auto tw = std::make_shared<Twiddles<T>>();
  tw->bins.assign(bins.begin(), bins.end());
  tw->length = length;
  tw->cos.resize(bins.size() * length);
  tw->sin.resize(bins.size() * length);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    for (std::size_t n = 0; n < length; ++n) {
      const std::size_t m = (bins[b] * n) % length;
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(length);
      tw->cos[b * length + n] = static_cast<T>(std::cos(angle));
      tw->sin[b * length + n] = static_cast<T>(std::sin(angle));
    }
  }
  last = tw;
  return tw;
}

}  // namespace

template <class T>
Var band_idft(Tape<T>& tape, Var s, std::span<const std::size_t> bins, std::size_t length) {
  require(length > 0, "band_idft length must be positive");
  for (std::size_t k : bins) {
    require(k < length, [&] { return "in-band index " + std::to_string(k) + " out of range for length " + std::to_string(length); });
  }
  const Tensor<T>& sv = tape.value(s);
  const std::size_t width = 2 * bins.size();
  require(sv.rank() == 1 || sv.rank() == 2, "spectrum parameters must be rank 1 or 2");
  require(sv.shape().back() == width, [&] { return "spectrum parameter count " + std::to_string(sv.shape().back()) +
                                          " != 2 x " + std::to_string(bins.size()) + " bins"; });
  const std::size_t rows = sv.rank() == 2 ? sv.dim(0) : 1;
  const auto tw = twiddles<T>(bins, length);
  const T inv_len = T{1} / static_cast<T>(length);
  Tensor<T> y(sv.rank() == 2 ? Shape{rows, 2, length} : Shape{2, length});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* sr = sv.data().data() + r * width;
    T* yr = y.data().data() + r * 2 * length;
    T* yi = yr + length;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      const T a = sr[2 * b], c = sr[2 * b + 1];
      const T* cs = tw->cos.data() + b * length;
      const T* sn = tw->sin.data() + b * length;
      for (std::size_t n = 0; n < length; ++n) {
        yr[n] += a * cs[n] - c * sn[n];
        yi[n] += a * sn[n] + c * cs[n];
      }
    }
    for (std::size_t n = 0; n < 2 * length; ++n) yr[n] *= inv_len;
  }
  const Var inputs[] = {s};
  return tape.record(std::move(y), inputs,
                     [s, length, rows, width, inv_len, tw](Tape<T>& t, const Tensor<T>&, const Tensor<T>& gy) {
                       Tensor<T>* ds = t.grad_buffer(s);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const T* g = gy.data().data() + r * 2 * length;
                         T* d = ds->data().data() + r * width;
                         for (std::size_t b = 0; b < tw->bins.size(); ++b) {
                           const T* cs = tw->cos.data() + b * length;
                           const T* sn = tw->sin.data() + b * length;
                           T ga{0}, gc{0};
                           for (std::size_t n = 0; n < length; ++n) {
                             ga += g[n] * cs[n] + g[length + n] * sn[n];
                             gc += -g[n] * sn[n] + g[length + n] * cs[n];
                           }
                           d[2 * b] += ga * inv_len;
                           d[2 * b + 1] += gc * inv_len;
                         }
                       }
                     });
}

double grad_check(const std::function<Var(Tape<double>&, Var)>& fn, const Tensor<double>& point, double h) {
  Tape<double> tape;
  Var x = tape.leaf(point, true);
  Var loss = fn(tape, x);
  const Tensor<double> analytic = tape.backward(loss)[x];

  auto eval = [&](const Tensor<double>& p) {
    Tape<double> t;
    Var v = t.leaf(p, false);
    return t.value(fn(t, v))[0];
  };
  double worst = 0.0;
  Tensor<double> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + h;
    const double up = eval(probe);
    probe[i] = point[i] - h;
    const double down = eval(probe);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric)));
  }
  return worst;
}

#define FREQADV_INSTANTIATE_AD(T)                                                                  \
  template class GradMap<T>;                                                                       \
  template class Tape<T>;                                                                          \
  template Var dense<T>(Tape<T>&, Var, Var, Var);                                                  \
  template Var conv1d<T>(Tape<T>&, Var, Var, Var, Padding);                                        \
  template Var relu<T>(Tape<T>&, Var);                                                             \
  template Var maxpool1d<T>(Tape<T>&, Var, std::size_t, std::size_t);                              \
  template Var global_avg_pool<T>(Tape<T>&, Var);                                                  \
  template Var add<T>(Tape<T>&, Var, Var);                                                         \
  template Var scale<T>(Tape<T>&, Var, T);                                                         \
  template Var sum<T>(Tape<T>&, Var);                                                              \
  template Var sum_squares<T>(Tape<T>&, Var);                                                      \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                                   \
  template Var concat_channels<T>(Tape<T>&, std::span<const Var>);                                 \
  template Var mean_of<T>(Tape<T>&, std::span<const Var>);                                         \
  template Var softmax<T>(Tape<T>&, Var);                                                          \
  template Var cross_entropy<T>(Tape<T>&, Var, std::span<const int>);                              \
  template Var confidence_penalty<T>(Tape<T>&, Var, std::span<const int>, T);                      \
  template Var clip_bounded<T>(Tape<T>&, Var, T);                                                  \
  template Var band_idft<T>(Tape<T>&, Var, std::span<const std::size_t>, std::size_t);

FREQADV_INSTANTIATE_AD(float)
FREQADV_INSTANTIATE_AD(double)

#undef FREQADV_INSTANTIATE_AD

}  // namespace freqadv::ad
