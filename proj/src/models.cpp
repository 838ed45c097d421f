#include "freqadv/models.hpp"

#include <cmath>

#include "freqadv/errors.hpp"
#include "freqadv/rng.hpp"

namespace freqadv::models {

using ad::Padding;

namespace {

constexpr std::string_view kArchNames[kNumArchs] = {"baseline_cnn", "resnet_small", "vgg_small", "inception_small",
                                                     "googlenet_analog"};

struct SpecBuilder {
  std::vector<ParamSpec> out;
  void conv(const std::string& name, std::size_t in, std::size_t outc, std::size_t k) {
    out.push_back({name + ".weight", {outc, in, k}, in * k});
    out.push_back({name + ".bias", {outc}, 0});
  }
  void dense(const std::string& name, std::size_t in, std::size_t outc) {
    out.push_back({name + ".weight", {outc, in}, in});
    out.push_back({name + ".bias", {outc}, 0});
  }
};

// Hands out bound parameters in storage order while the forward pass is
// written out layer by layer.
template <class T>
struct Layers {
  Tape<T>& t;
  std::span<const Var> p;
  std::size_t next = 0;

  Var conv(Var x) {
    const Var w = p[next++], b = p[next++];
    return ad::conv1d(t, x, w, b, Padding::same);
  }
  Var conv_relu(Var x) { return ad::relu(t, conv(x)); }
  Var dense(Var x) {
    const Var w = p[next++], b = p[next++];
    return ad::dense(t, x, w, b);
  }
  Var pool(Var x) { return ad::maxpool1d(t, x); }
  Var residual(Var x) {
    const Var h = conv(conv_relu(x));
    return ad::relu(t, ad::add(t, h, x));
  }
  // Parallel 1/3/5 branches.
  Var inception(Var x) {
    const Var parts[] = {conv_relu(x), conv_relu(x), conv_relu(x)};
    return ad::concat_channels<T>(t, parts);
  }
  // 1x1, 1x1->3, 1x1->5 and a 1x1 projection branch.
  Var inception_reduced(Var x) {
    const Var a = conv_relu(x);
    const Var b = conv_relu(conv_relu(x));
    const Var c = conv_relu(conv_relu(x));
    const Var d = conv_relu(x);
    const Var parts[] = {a, b, c, d};
    return ad::concat_channels<T>(t, parts);
  }
};

}  // namespace

std::string_view arch_name(Arch a) { return kArchNames[static_cast<std::size_t>(a)]; }

Arch parse_arch(std::string_view name) {
  for (std::size_t i = 0; i < kNumArchs; ++i) {
    if (kArchNames[i] == name) return static_cast<Arch>(i);
  }
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

std::vector<Arch> collection_archs() {
  return {Arch::baseline_cnn, Arch::resnet_small, Arch::vgg_small, Arch::inception_small};
}

std::vector<ParamSpec> arch_params(Arch a) {
  SpecBuilder s;
  switch (a) {
    case Arch::baseline_cnn:
      s.conv("conv1", 2, 16, 7);
      s.conv("conv2", 16, 32, 5);
      s.conv("conv3", 32, 64, 3);
      s.dense("fc1", 64, 64);
      s.dense("fc2", 64, 8);
      break;
    case Arch::resnet_small:
      s.conv("stem", 2, 16, 7);
      s.conv("res1.conv1", 16, 16, 3);
      s.conv("res1.conv2", 16, 16, 3);
      s.conv("widen", 16, 32, 3);
      s.conv("res2.conv1", 32, 32, 3);
      s.conv("res2.conv2", 32, 32, 3);
      s.dense("fc", 32, 8);
      break;
    case Arch::vgg_small:
      s.conv("conv1", 2, 16, 3);
      s.conv("conv2", 16, 16, 3);
      s.conv("conv3", 16, 32, 3);
      s.conv("conv4", 32, 32, 3);
      s.dense("fc1", 32 * 16, 64);
      s.dense("fc2", 64, 8);
      break;
    case Arch::inception_small:
      s.conv("stem", 2, 16, 5);
      s.conv("inc1.b1", 16, 8, 1);
      s.conv("inc1.b3", 16, 8, 3);
      s.conv("inc1.b5", 16, 8, 5);
      s.conv("inc2.b1", 24, 16, 1);
      s.conv("inc2.b3", 24, 16, 3);
      s.conv("inc2.b5", 24, 16, 5);
      s.dense("fc", 48, 8);
      break;
    case Arch::googlenet_analog:
      s.conv("stem", 2, 24, 7);
      s.conv("reduce", 24, 24, 1);
      s.conv("conv", 24, 32, 3);
      s.conv("inc1.b1", 32, 16, 1);
      s.conv("inc1.b3r", 32, 12, 1);
      s.conv("inc1.b3", 12, 16, 3);
      s.conv("inc1.b5r", 32, 4, 1);
      s.conv("inc1.b5", 4, 8, 5);
      s.conv("inc1.proj", 32, 8, 1);
      s.conv("inc2.b1", 48, 24, 1);
      s.conv("inc2.b3r", 48, 16, 1);
      s.conv("inc2.b3", 16, 24, 3);
      s.conv("inc2.b5r", 48, 8, 1);
      s.conv("inc2.b5", 8, 12, 5);
      s.conv("inc2.proj", 48, 12, 1);
      s.dense("fc", 72, 8);
      break;
    default:
      throw ConfigError("invalid architecture id " + std::to_string(static_cast<int>(a)));
  }
  return s.out;
}

template <class T>
Network<T> Network<T>::build(Arch arch, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<Parameter<T>> params;
  for (const auto& spec : arch_params(arch)) {
    Tensor<T> v(spec.shape);
    if (spec.fan_in > 0) {
      const double std = std::sqrt(2.0 / static_cast<double>(spec.fan_in));
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(std * rng.gaussian());
    }
    params.push_back({spec.name, std::move(v)});
  }
  return Network(arch, std::move(params));
}

template <class T>
Network<T> Network<T>::from_params(Arch arch, std::vector<Parameter<T>> params) {
  const auto specs = arch_params(arch);
  if (specs.size() != params.size()) {
    throw FormatError(std::string(arch_name(arch)) + " expects " + std::to_string(specs.size()) + " tensors, got " +
                          std::to_string(params.size()),
                      0);
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name != params[i].name || specs[i].shape != params[i].value.shape()) {
      throw FormatError("tensor " + std::to_string(i) + " is '" + params[i].name + "' " +
                            shape_string(params[i].value.shape()) + ", expected '" + specs[i].name + "' " +
                            shape_string(specs[i].shape),
                        0);
    }
  }
  return Network(arch, std::move(params));
}

template <class T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <class T>
std::vector<Var> Network<T>::bind(Tape<T>& tape, bool requires_grad) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.leaf(p.value, requires_grad));
  return vars;
}

template <class T>
Var Network<T>::forward(Tape<T>& tape, Var x, std::span<const Var> params) const {
  const Shape shape = tape.value(x).shape();
  if (shape.size() != 3 || shape[1] != 2 || shape[2] != kInputLength) {
    throw ConfigError("model input must be [batch, 2, 128], got " + shape_string(shape));
  }
  if (params.size() != params_.size()) throw ConfigError("wrong number of bound parameters");
  Layers<T> L{tape, params};
  Var h = x;
  switch (arch_) {
    case Arch::baseline_cnn:
      h = L.pool(L.conv_relu(h));
      h = L.pool(L.conv_relu(h));
      h = ad::global_avg_pool(tape, L.conv_relu(h));
      h = ad::relu(tape, L.dense(h));
      return L.dense(h);
    case Arch::resnet_small:
      h = L.pool(L.conv_relu(h));
      h = L.pool(L.residual(h));
      h = L.residual(L.conv_relu(h));
      return L.dense(ad::global_avg_pool(tape, h));
    case Arch::vgg_small: {
      h = L.pool(L.conv_relu(L.conv_relu(h)));
      h = L.pool(L.conv_relu(h));
      h = L.pool(L.conv_relu(h));
      const std::size_t batch = shape[0];
      h = ad::reshape(tape, h, Shape{batch, 32 * 16});
      h = ad::relu(tape, L.dense(h));
      return L.dense(h);
    }
    case Arch::inception_small:
      h = L.pool(L.conv_relu(h));
      h = L.pool(L.inception(h));
      h = L.inception(h);
      return L.dense(ad::global_avg_pool(tape, h));
    case Arch::googlenet_analog:
      h = L.pool(L.conv_relu(h));
      h = L.conv_relu(L.conv_relu(h));
      h = L.pool(h);
      h = L.inception_reduced(h);
      h = L.pool(L.inception_reduced(h));
      return L.dense(ad::global_avg_pool(tape, h));
  }
  throw ConfigError("invalid architecture id");
}

template <class T>
Var Network<T>::logits(Tape<T>& tape, Var x) const {
  const auto p = bind(tape, false);
  return forward(tape, x, p);
}

template <class T>
Tensor<T> forward_logits(const Classifier<T>& model, const Tensor<T>& batch) {
  Tape<T> tape;
  return tape.value(model.logits(tape, tape.leaf(batch)));
}

template <class T>
Tensor<T> predict_confidence(const Classifier<T>& model, const Tensor<T>& batch) {
  Tape<T> tape;
  return tape.value(ad::softmax(tape, model.logits(tape, tape.leaf(batch))));
}

template <class T>
std::vector<int> predict_labels(const Classifier<T>& model, const Tensor<T>& batch) {
  const auto z = forward_logits(model, batch);
  const std::size_t classes = z.shape().back(), rows = z.size() / classes;
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (z[r * classes + c] > z[r * classes + best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

#define FREQADV_INSTANTIATE(T)                                                      \
  template class Network<T>;                                                        \
  template Tensor<T> forward_logits<T>(const Classifier<T>&, const Tensor<T>&);     \
  template Tensor<T> predict_confidence<T>(const Classifier<T>&, const Tensor<T>&); \
  template std::vector<int> predict_labels<T>(const Classifier<T>&, const Tensor<T>&);

FREQADV_INSTANTIATE(float)
FREQADV_INSTANTIATE(double)

}  // namespace freqadv::models
