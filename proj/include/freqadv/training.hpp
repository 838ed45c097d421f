#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "freqadv/dataset.hpp"
#include "freqadv/models.hpp"

namespace freqadv::training {

enum class OptimizerKind { rmsprop, adam, adamax };

std::string_view optimizer_name(OptimizerKind k);
/// Throws ConfigError for unknown names.
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double rho = 0.9;     // RMSprop decay
  double beta1 = 0.9;   // Adam / Adamax
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter optimizer state.
///   RMSprop: v = rho v + (1-rho) g^2;          p -= lr g / (sqrt(v) + eps)
///   Adam:    m, v with bias correction;         p -= lr m_hat / (sqrt(v_hat) + eps)
///   Adamax:  u = max(beta2 u, |g|);             p -= lr / (1 - beta1^t) * m / (u + eps)
template <class T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(std::vector<models::Parameter<T>>& params, std::span<const Tensor<T>> grads);
  std::size_t steps() const noexcept { return t_; }
  /// Second-moment (RMSprop, Adam) or infinity-norm (Adamax) state of one parameter.
  const Tensor<T>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

struct TrainConfig {
  OptimizerConfig optimizer;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;  // epochs without validation improvement before stopping
  std::uint64_t seed = 1;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double train_accuracy = 0;
  double valid_accuracy = 0;
  bool operator==(const EpochStats&) const = default;
};

struct TrainResult {
  models::Network<float> model;  // weights of the best validation epoch
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_valid_accuracy = 0;
};

/// Mean cross-entropy and accuracy of a model over a set of records.
struct Evaluation {
  double loss = 0;
  double accuracy = 0;
};
Evaluation evaluate(const models::Network<float>& model, const data::Dataset& ds, std::span<const std::size_t> indices,
                    std::size_t batch_size = 256);

/// Mini-batch training on cross-entropy. Batch order for epoch e comes from
/// SeededRng::derive(cfg.seed, e). Throws ConfigError on empty splits and
/// NumericError naming the epoch when the loss stops being finite.
TrainResult train(models::Network<float> model, const data::Dataset& ds, std::span<const std::size_t> train_idx,
                  std::span<const std::size_t> valid_idx, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace freqadv::training
