#include "freqadv/training.hpp"

#include <cmath>

#include "freqadv/errors.hpp"
#include "freqadv/rng.hpp"

namespace freqadv::training {

using ad::Tape;
using ad::Var;

std::string_view optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::rmsprop: return "rmsprop";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::adamax: return "adamax";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view name) {
  for (auto k : {OptimizerKind::rmsprop, OptimizerKind::adam, OptimizerKind::adamax}) {
    if (optimizer_name(k) == name) return k;
  }
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

template <class T>
void Optimizer<T>::step(std::vector<models::Parameter<T>>& params, std::span<const Tensor<T>> grads) {
  if (grads.size() != params.size()) throw ConfigError("optimizer got a gradient count that does not match");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }
  ++t_;
  const double lr = cfg_.learning_rate, eps = cfg_.eps;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape()) throw ConfigError("gradient shape mismatch for " + params[i].name);
    auto p = params[i].value.data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      double update = 0;
      switch (cfg_.kind) {
        case OptimizerKind::rmsprop:
          v[j] = static_cast<T>(cfg_.rho * v[j] + (1.0 - cfg_.rho) * gj * gj);
          update = lr * gj / (std::sqrt(static_cast<double>(v[j])) + eps);
          break;
        case OptimizerKind::adam:
          m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * gj);
          v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * gj * gj);
          update = lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
          break;
        case OptimizerKind::adamax:
          m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * gj);
          v[j] = static_cast<T>(std::max(b2 * v[j], std::abs(gj)));
          update = lr / c1 * m[j] / (v[j] + eps);
          break;
      }
      p[j] = static_cast<T>(p[j] - update);
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

Evaluation evaluate(const models::Network<float>& model, const data::Dataset& ds, std::span<const std::size_t> indices,
                    std::size_t batch_size) {
  if (indices.empty()) throw ConfigError("cannot evaluate on an empty split");
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < indices.size(); s += batch_size) {
    const auto chunk = indices.subspan(s, std::min(batch_size, indices.size() - s));
    const auto x = data::gather<float>(ds, chunk);
    const auto labels = data::gather_labels(ds, chunk);
    Tape<float> tape;
    const Var q = ad::softmax(tape, model.logits(tape, tape.leaf(x)));
    loss += static_cast<double>(tape.value(ad::cross_entropy(tape, q, labels))[0]) * static_cast<double>(chunk.size());
    const auto& qv = tape.value(q);
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < models::kNumClasses; ++c)
        if (qv[r * models::kNumClasses + c] > qv[r * models::kNumClasses + best]) best = c;
      correct += static_cast<int>(best) == labels[r];
    }
  }
  const double n = static_cast<double>(indices.size());
  return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train(models::Network<float> model, const data::Dataset& ds, std::span<const std::size_t> train_idx,
                  std::span<const std::size_t> valid_idx, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  if (train_idx.empty() || valid_idx.empty()) throw ConfigError("training needs non-empty train and valid splits");
  if (cfg.batch_size == 0 || cfg.max_epochs == 0 || !(cfg.optimizer.learning_rate > 0)) {
    throw ConfigError("batch_size, max_epochs and learning_rate must be positive");
  }
  Optimizer<float> opt(cfg.optimizer);
  TrainResult result;
  result.model = model;
  result.best_valid_accuracy = -1;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double loss_sum = 0;
    std::size_t correct = 0;
    const auto batches = data::iterate_batches(train_idx, cfg.batch_size, splitmix64(cfg.seed ^ epoch));
    for (const auto& batch : batches) {
      const auto x = data::gather<float>(ds, batch);
      const auto labels = data::gather_labels(ds, batch);
      Tape<float> tape;
      const auto params = model.bind(tape, true);
      const Var q = ad::softmax(tape, model.forward(tape, tape.leaf(x), params));
      const Var loss = ad::cross_entropy(tape, q, labels);
      const double lv = tape.value(loss)[0];
      if (!std::isfinite(lv)) throw NumericError("training loss became non-finite in epoch " + std::to_string(epoch));
      loss_sum += lv * static_cast<double>(batch.size());
      const auto& qv = tape.value(q);
      for (std::size_t r = 0; r < batch.size(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < models::kNumClasses; ++c)
          if (qv[r * models::kNumClasses + c] > qv[r * models::kNumClasses + best]) best = c;
        correct += static_cast<int>(best) == labels[r];
      }
      const auto grads = tape.backward(loss);
      std::vector<Tensor<float>> g;
      g.reserve(params.size());
      for (Var p : params) g.push_back(grads[p]);
      opt.step(model.params(), g);
    }
    for (const auto& p : model.params()) {
      for (float v : p.value.data()) {
        if (!std::isfinite(v)) throw NumericError("weights became non-finite in epoch " + std::to_string(epoch));
      }
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(train_idx.size());
    st.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_idx.size());
    st.valid_accuracy = evaluate(model, ds, valid_idx).accuracy;
    result.history.push_back(st);
    if (on_epoch) on_epoch(st);

    if (st.valid_accuracy > result.best_valid_accuracy) {
      result.best_valid_accuracy = st.valid_accuracy;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace freqadv::training
