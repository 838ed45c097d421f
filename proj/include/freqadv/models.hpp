#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "freqadv/autodiff.hpp"
#include "freqadv/tensor.hpp"

namespace freqadv::models {

using ad::Tape;
using ad::Var;

enum class Arch : std::uint8_t { baseline_cnn = 0, resnet_small = 1, vgg_small = 2, inception_small = 3, googlenet_analog = 4 };

inline constexpr std::size_t kNumArchs = 5;
inline constexpr std::size_t kInputLength = 128;
inline constexpr std::size_t kNumClasses = 8;

std::string_view arch_name(Arch a);
/// Throws ConfigError for unknown names.
Arch parse_arch(std::string_view name);
/// The four architectures a Meta-SFFAA collection is drawn from.
std::vector<Arch> collection_archs();

/// Anything that maps a [B, 2, L] batch on a tape to [B, classes] logits.
/// Attacks only see this interface, so tests can plug in closed-form models.
template <class T>
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::size_t num_classes() const = 0;
  /// Records the forward pass. Weights enter the tape as constants.
  virtual Var logits(Tape<T>& tape, Var x) const = 0;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;  // 0 for biases
};

/// Parameter names, shapes and He fan-ins of an architecture, in storage order.
std::vector<ParamSpec> arch_params(Arch a);

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool operator==(const Parameter&) const = default;
};

template <class T>
class Network final : public Classifier<T> {
 public:
  Network() = default;

  /// He-normal weights (std sqrt(2/fan_in)) from SeededRng(seed), zero biases.
  static Network build(Arch arch, std::uint64_t seed);
  /// Adopts existing tensors; throws FormatError when names or shapes differ
  /// from the architecture definition.
  static Network from_params(Arch arch, std::vector<Parameter<T>> params);

  Arch arch() const noexcept { return arch_; }
  const std::vector<Parameter<T>>& params() const noexcept { return params_; }
  std::vector<Parameter<T>>& params() noexcept { return params_; }
  std::size_t parameter_count() const;

  std::size_t num_classes() const override { return kNumClasses; }
  Var logits(Tape<T>& tape, Var x) const override;

  /// Adds every parameter to the tape as a leaf.
  std::vector<Var> bind(Tape<T>& tape, bool requires_grad) const;
  /// Forward pass with explicitly bound parameters (as returned by bind).
  /// Throws ConfigError unless x is [B, 2, 128].
  Var forward(Tape<T>& tape, Var x, std::span<const Var> params) const;

  template <class U>
  Network<U> cast() const {
    std::vector<Parameter<U>> p;
    p.reserve(params_.size());
    for (const auto& q : params_) p.push_back({q.name, q.value.template cast<U>()});
    return Network<U>::from_params(arch_, std::move(p));
  }

  bool operator==(const Network& o) const { return arch_ == o.arch_ && params_ == o.params_; }

 private:
  Network(Arch arch, std::vector<Parameter<T>> params) : arch_(arch), params_(std::move(params)) {}
  template <class U>
  friend class Network;

  Arch arch_ = Arch::baseline_cnn;
  std::vector<Parameter<T>> params_;
};

/// Logits of a [B, 2, L] batch.
template <class T>
Tensor<T> forward_logits(const Classifier<T>& model, const Tensor<T>& batch);
/// Softmax of the logits; each row is a probability vector.
template <class T>
Tensor<T> predict_confidence(const Classifier<T>& model, const Tensor<T>& batch);
/// Arg-max class per row (lowest index on ties).
template <class T>
std::vector<int> predict_labels(const Classifier<T>& model, const Tensor<T>& batch);

}  // namespace freqadv::models
