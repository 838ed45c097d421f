#include "freqadv/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "freqadv/autodiff.hpp"
#include "freqadv/errors.hpp"
#include "freqadv/parallel.hpp"
#include "freqadv/rng.hpp"

namespace freqadv::attacks {

using ad::Tape;
using ad::Var;

namespace {

constexpr std::string_view kAttackNames[] = {"fgsm", "pgd", "uap", "sffaa", "meta-sffaa"};

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

void check_frame(const Tensor<double>& x, std::size_t length) {
  if (x.shape() != Shape{2, length}) {
    throw ConfigError("attack input must be a [2, " + std::to_string(length) + "] frame, got " +
                      shape_string(x.shape()));
  }
}

void check_label(const Model& model, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= model.num_classes()) {
    throw ConfigError("label " + std::to_string(label) + " out of range");
  }
}

Var as_batch(Tape<double>& t, Var frame, std::size_t length) { return ad::reshape(t, frame, Shape{1, 2, length}); }

// Loss and gradient of the confidence penalty with respect to the spectrum.
// Several models are combined through the mean of their logits.
struct SpectrumGrad {
  double loss = 0;
  Tensor<double> delta;
  Tensor<double> grad;
};

SpectrumGrad spectrum_gradient(std::span<const Model* const> models, const Tensor<double>& x, int label,
                               std::span<const double> s, std::span<const std::size_t> bins, std::size_t length,
                               const AttackBudget& budget) {
  Tape<double> t;
  const Var sv = t.leaf(Tensor<double>(Shape{s.size()}, std::vector<double>(s.begin(), s.end())), true);
  const Var delta = ad::clip_bounded(t, ad::band_idft(t, sv, bins, length), budget.zeta);
  const Var xa = as_batch(t, ad::add(t, t.leaf(x), delta), length);
  Var z;
  if (models.size() == 1) {
    z = models[0]->logits(t, xa);
  } else {
    std::vector<Var> parts;
    parts.reserve(models.size());
    for (const Model* m : models) parts.push_back(m->logits(t, xa));
    z = ad::mean_of(t, std::span<const Var>(parts));
  }
  const int labels[] = {label};
  const Var loss = ad::confidence_penalty(t, ad::softmax(t, z), labels, budget.loss_eps);
  SpectrumGrad out;
  out.loss = t.value(loss)[0];
  out.delta = t.value(delta);
  out.grad = t.backward(loss)[sv];
  return out;
}

void spectrum_update(std::vector<double>& s, const SpectrumGrad& g, double alpha, std::size_t step,
                     const char* who) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(g.grad[i])) {
      throw NumericError(std::string(who) + ": non-finite gradient at iteration " + std::to_string(step + 1));
    }
  }
  for (std::size_t i = 0; i < s.size(); ++i) s[i] -= alpha * sign(g.grad[i]);
}

SpectrumResult finish(std::vector<double> s, const Tensor<double>& x, const BandSpec& band, double zeta,
                      std::size_t updates) {
  SpectrumResult r;
  r.perturbation = spectrum_to_perturbation(s, band, zeta);
  r.adversarial = x;
  for (std::size_t i = 0; i < x.size(); ++i) r.adversarial[i] += r.perturbation[i];
  r.spectrum = std::move(s);
  r.updates = updates;
  return r;
}

// Gradient of softmax cross-entropy with respect to a [2, L] input.
Tensor<double> input_gradient(const Model& model, const Tensor<double>& x, int label) {
  Tape<double> t;
  const Var xv = t.leaf(x, true);
  const int labels[] = {label};
  const Var loss = ad::cross_entropy(t, ad::softmax(t, model.logits(t, as_batch(t, xv, x.dim(1)))), labels);
  return t.backward(loss)[xv];
}

}  // namespace

std::size_t BandSpec::half_count() const {
  return static_cast<std::size_t>(std::floor(focus_bandwidth_hz * static_cast<double>(length) / sample_rate_hz));
}

std::vector<std::size_t> BandSpec::bins() const {
  validate();
  const std::size_t nb = half_count();
  std::vector<std::size_t> out;
  out.reserve(2 * nb);
  for (std::size_t k = 0; k < nb; ++k) out.push_back(k);
  for (std::size_t k = length - nb; k < length; ++k) out.push_back(k);
  return out;
}

void BandSpec::validate() const {
  if (!(focus_bandwidth_hz > 0) || !(sample_rate_hz > 0) || length < 4) {
    throw ConfigError("band needs positive bandwidth and sample rate and length >= 4");
  }
  const std::size_t nb = half_count();
  if (nb < 1 || 2 * nb >= length) {
    throw ConfigError("focus band must give 1 <= N_b < L/2, got N_b = " + std::to_string(nb));
  }
}

void AttackBudget::validate() const {
  if (!(zeta > 0)) throw ConfigError("zeta must be positive");
  if (!(alpha >= 0)) throw ConfigError("alpha must be non-negative");
  if (steps < 1) throw ConfigError("attack needs at least one step");
  if (!(loss_eps > 0)) throw ConfigError("loss epsilon must be positive");
}

void TaskSchedule::validate() const {
  if (meta_train < 1 || inner_steps < 1 || tasks < 1) throw ConfigError("meta schedule counts must be positive");
}

std::vector<std::complex<double>> embed_spectrum(std::span<const double> s, const BandSpec& band) {
  const auto bins = band.bins();
  if (s.size() != 2 * bins.size()) {
    throw ConfigError("spectrum has " + std::to_string(s.size()) + " reals, band needs " +
                      std::to_string(2 * bins.size()));
  }
  std::vector<std::complex<double>> X(band.length);
  for (std::size_t j = 0; j < bins.size(); ++j) X[bins[j]] = {s[2 * j], s[2 * j + 1]};
  return X;
}

Tensor<double> spectrum_to_perturbation(std::span<const double> s, const BandSpec& band, double zeta) {
  if (!(zeta > 0)) throw ConfigError("zeta must be positive");
  const auto bins = band.bins();
  Tape<double> t;
  const Var sv = t.leaf(Tensor<double>(Shape{s.size()}, std::vector<double>(s.begin(), s.end())));
  return t.value(ad::clip_bounded(t, ad::band_idft(t, sv, bins, band.length), zeta));
}

double attack_loss(std::span<const double> q, int label, double eps) {
  if (label < 0 || static_cast<std::size_t>(label) >= q.size()) throw ConfigError("label out of range");
  return -std::log(1.0 - q[static_cast<std::size_t>(label)] + eps);
}

double spectrum_init_stddev(const BandSpec& band, const AttackBudget& budget) {
  const double n_bins = static_cast<double>(2 * band.half_count());
  return budget.zeta * static_cast<double>(band.length) / (4.0 * std::sqrt(2.0 * n_bins));
}

std::vector<double> initial_spectrum(const BandSpec& band, const AttackBudget& budget, std::uint64_t seed) {
  band.validate();
  const double sd = spectrum_init_stddev(band, budget);
  SeededRng rng(seed);
  std::vector<double> s(4 * band.half_count());
  for (double& v : s) v = sd * rng.gaussian();
  return s;
}

SpectrumResult sffaa(const Model& model, const Tensor<double>& x, int label, const AttackBudget& budget,
                     const BandSpec& band, std::uint64_t seed, const SpectrumTrace& trace) {
  return sffaa_from(model, x, label, budget, band, initial_spectrum(band, budget, seed), trace);
}

SpectrumResult sffaa_from(const Model& model, const Tensor<double>& x, int label, const AttackBudget& budget,
                          const BandSpec& band, std::vector<double> s, const SpectrumTrace& trace) {
  budget.validate();
  const auto bins = band.bins();
  check_frame(x, band.length);
  check_label(model, label);
  if (s.size() != 2 * bins.size()) throw ConfigError("initial spectrum has the wrong length");
  const Model* one[] = {&model};
  for (std::size_t n = 0; n < budget.steps; ++n) {
    const auto g = spectrum_gradient(one, x, label, s, bins, band.length, budget);
    if (trace) trace(n, s, g.delta, g.loss);
    spectrum_update(s, g, budget.alpha, n, "sffaa");
  }
  return finish(std::move(s), x, band, budget.zeta, budget.steps);
}

Tensor<double> fgsm(const Model& model, const Tensor<double>& x, int label, double epsilon) {
  if (!(epsilon >= 0)) throw ConfigError("epsilon must be non-negative");
  check_label(model, label);
  check_frame(x, x.rank() == 2 ? x.dim(1) : 0);
  const auto g = input_gradient(model, x, label);
  Tensor<double> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += epsilon * sign(g[i]);
  return out;
}

Tensor<double> pgd(const Model& model, const Tensor<double>& x, int label, double epsilon, double step,
                   std::size_t iters) {
  if (!(epsilon >= 0) || !(step >= 0)) throw ConfigError("epsilon and step must be non-negative");
  check_label(model, label);
  check_frame(x, x.rank() == 2 ? x.dim(1) : 0);
  Tensor<double> cur = x;
  for (std::size_t it = 0; it < iters; ++it) {
    const auto g = input_gradient(model, cur, label);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (!std::isfinite(g[i])) throw NumericError("pgd: non-finite gradient at iteration " + std::to_string(it + 1));
      cur[i] = std::clamp(cur[i] + step * sign(g[i]), x[i] - epsilon, x[i] + epsilon);
    }
  }
  return cur;
}

std::vector<int> classify(const Model& model, const Tensor<double>& frames) {
  if (frames.rank() != 3) throw ConfigError("classify expects [n, 2, L] frames");
  const std::size_t n = frames.dim(0), per = frames.size() / std::max<std::size_t>(n, 1);
  constexpr std::size_t chunk = 64;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<int> out(n);
  parallel_for(static_cast<std::ptrdiff_t>(chunks), [&](std::ptrdiff_t c) {
    const std::size_t lo = static_cast<std::size_t>(c) * chunk, hi = std::min(n, lo + chunk);
    const auto first = frames.data().begin() + static_cast<std::ptrdiff_t>(lo * per);
    Tensor<double> part(Shape{hi - lo, frames.dim(1), frames.dim(2)},
                        std::vector<double>(first, first + static_cast<std::ptrdiff_t>((hi - lo) * per)));
    const auto labels = models::predict_labels(model, part);
    std::copy(labels.begin(), labels.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
  });
  return out;
}

double fooling_rate(const Model& model, const Tensor<double>& frames, std::span<const int> labels,
                    const Tensor<double>& v) {
  if (frames.rank() != 3 || frames.dim(0) != labels.size()) throw ConfigError("frames and labels disagree");
  if (labels.empty()) return 0.0;
  Tensor<double> shifted = frames;
  const std::size_t per = v.size();
  for (std::size_t e = 0; e < labels.size(); ++e)
    for (std::size_t i = 0; i < per; ++i) shifted[e * per + i] += v[i];
  const auto pred = classify(model, shifted);
  std::size_t fooled = 0;
  for (std::size_t e = 0; e < labels.size(); ++e) fooled += pred[e] != labels[e];
  return static_cast<double>(fooled) / static_cast<double>(labels.size());
}

UapResult uap(const Model& model, const Tensor<double>& frames, std::span<const int> labels, const UapConfig& cfg) {
  if (frames.rank() != 3 || frames.dim(1) != 2) throw ConfigError("uap expects [n, 2, L] frames");
  if (frames.dim(0) == 0) throw ConfigError("uap needs a non-empty crafting set");
  if (frames.dim(0) != labels.size()) throw ConfigError("frames and labels disagree");
  if (!(cfg.epsilon >= 0) || cfg.max_passes < 1) throw ConfigError("uap needs epsilon >= 0 and at least one pass");
  const std::size_t n = frames.dim(0), length = frames.dim(2), per = 2 * length;

  UapResult r;
  r.perturbation = Tensor<double>(Shape{2, length});
  Tensor<double>& v = r.perturbation;
  std::vector<std::size_t> order(n);
  Tensor<double> xv(Shape{2, length});
  for (std::size_t pass = 0; pass < cfg.max_passes; ++pass) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng rng = SeededRng::derive(cfg.seed, pass);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t e : order) {
      for (std::size_t i = 0; i < per; ++i) xv[i] = frames[e * per + i] + v[i];
      Tensor<double> batch = xv.reshaped(Shape{1, 2, length});
      if (models::predict_labels(model, batch)[0] != labels[e]) continue;
      const auto moved = pgd(model, xv, labels[e], cfg.epsilon, cfg.inner_step, cfg.inner_iters);
      for (std::size_t i = 0; i < per; ++i) {
        v[i] = std::clamp(v[i] + (moved[i] - xv[i]), -cfg.epsilon, cfg.epsilon);
      }
    }
    r.passes = pass + 1;
    r.fooling_rate = fooling_rate(model, frames, labels, v);
    if (r.fooling_rate >= cfg.fool_target) break;
  }
  return r;
}

ModelCollection make_collection(std::span<const models::Network<double>> networks) {
  ModelCollection c;
  for (const auto& net : networks) {
    if (net.arch() == models::Arch::googlenet_analog) {
      throw ConfigError("googlenet_analog is the black-box target and cannot join the collection");
    }
    c.models.push_back(&net);
  }
  return c;
}

std::vector<std::size_t> sample_task(std::size_t collection_size, const TaskSchedule& schedule, std::size_t t) {
  schedule.validate();
  const std::size_t need = schedule.meta_train + 1;
  if (collection_size < need) {
    throw ConfigError("collection of " + std::to_string(collection_size) + " models is smaller than R+1 = " +
                      std::to_string(need));
  }
  std::vector<std::size_t> pool(collection_size);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  SeededRng rng = SeededRng::derive(schedule.seed, t);
  for (std::size_t i = 0; i < need; ++i) std::swap(pool[i], pool[i + rng.below(collection_size - i)]);
  pool.resize(need);
  return pool;
}

SpectrumResult meta_sffaa(const ModelCollection& collection, const Tensor<double>& x, int label,
                          const AttackBudget& budget, const BandSpec& band, const TaskSchedule& schedule,
                          std::uint64_t seed, const SpectrumTrace& trace) {
  budget.validate();
  schedule.validate();
  const auto bins = band.bins();
  check_frame(x, band.length);
  if (collection.models.size() < schedule.meta_train + 1) {
    throw ConfigError("collection of " + std::to_string(collection.models.size()) +
                      " models is smaller than R+1 = " + std::to_string(schedule.meta_train + 1));
  }
  for (const Model* m : collection.models) check_label(*m, label);

  std::vector<double> s = initial_spectrum(band, budget, seed);
  std::size_t step = 0;
  std::vector<const Model*> train(schedule.meta_train);
  for (std::size_t t = 0; t < schedule.tasks; ++t) {
    const auto pick = sample_task(collection.models.size(), schedule, t);
    for (std::size_t r = 0; r < schedule.meta_train; ++r) train[r] = collection.models[pick[r]];
    for (std::size_t k = 0; k < schedule.inner_steps; ++k, ++step) {
      const auto g = spectrum_gradient(train, x, label, s, bins, band.length, budget);
      if (trace) trace(step, s, g.delta, g.loss);
      spectrum_update(s, g, budget.alpha, step, "meta-sffaa");
    }
    const Model* test[] = {collection.models[pick.back()]};
    const auto g = spectrum_gradient(test, x, label, s, bins, band.length, budget);
    if (trace) trace(step, s, g.delta, g.loss);
    spectrum_update(s, g, budget.alpha, step, "meta-sffaa");
    ++step;
  }
  return finish(std::move(s), x, band, budget.zeta, step);
}

std::string_view attack_name(AttackKind k) {
  const auto i = static_cast<std::size_t>(k);
  if (i >= std::size(kAttackNames)) throw ConfigError("invalid attack id");
  return kAttackNames[i];
}

AttackKind parse_attack(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kAttackNames); ++i)
    if (kAttackNames[i] == name) return static_cast<AttackKind>(i);
  throw ConfigError("unknown attack '" + std::string(name) + "' (expected fgsm, pgd, uap, sffaa or meta-sffaa)");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0) || !(pgd_step >= 0)) throw ConfigError("epsilon and pgd step must be non-negative");
  budget.validate();
  band.validate();
  schedule.validate();
  if (uap.max_passes < 1) throw ConfigError("uap needs at least one pass");
}

AttackReport attack_batch(const AttackConfig& cfg, const AttackTargets& targets, const data::Dataset& ds,
                          std::span<const std::size_t> indices, std::span<const std::size_t> uap_train) {
  using clock = std::chrono::steady_clock;
  cfg.validate();
  const bool meta = cfg.kind == AttackKind::meta_sffaa;
  if (meta ? targets.collection == nullptr : targets.model == nullptr) {
    throw ConfigError(std::string(attack_name(cfg.kind)) + " needs " + (meta ? "a model collection" : "a model"));
  }
  const Model* victim = targets.victim ? targets.victim : targets.model;
  if (victim == nullptr) throw ConfigError("no model to score the attack against");
  if (ds.frame_len != cfg.band.length) throw ConfigError("dataset frame length differs from the band length");

  const auto start = clock::now();
  const std::size_t n = indices.size(), per = 2 * ds.frame_len;
  AttackReport rep;
  rep.kind = cfg.kind;
  rep.adversarial = Tensor<double>(Shape{n, 2, ds.frame_len});
  rep.perturbations = Tensor<double>(Shape{n, 2, ds.frame_len});
  rep.records.resize(n);
  if (n == 0) return rep;

  const auto clean = data::gather<double>(ds, indices);
  const auto labels = data::gather_labels(ds, indices);

  if (cfg.kind == AttackKind::uap) {
    std::vector<std::size_t> craft(uap_train.begin(), uap_train.end());
    if (craft.empty()) throw ConfigError("uap needs a non-empty crafting split");
    if (cfg.uap_max_examples > 0 && craft.size() > cfg.uap_max_examples) {
      SeededRng rng(cfg.uap.seed);
      for (std::size_t i = 0; i < cfg.uap_max_examples; ++i) std::swap(craft[i], craft[i + rng.below(craft.size() - i)]);
      craft.resize(cfg.uap_max_examples);
      std::sort(craft.begin(), craft.end());
    }
    UapConfig uc = cfg.uap;
    uc.epsilon = cfg.epsilon;
    const auto t0 = clock::now();
    const auto u = uap(*targets.model, data::gather<double>(ds, craft), data::gather_labels(ds, craft), uc);
    const double each = std::chrono::duration<double>(clock::now() - t0).count() / static_cast<double>(n);
    rep.universal = u.perturbation;
    for (std::size_t e = 0; e < n; ++e) {
      for (std::size_t i = 0; i < per; ++i) {
        rep.perturbations[e * per + i] = u.perturbation[i];
        rep.adversarial[e * per + i] = clean[e * per + i] + u.perturbation[i];
      }
      rep.records[e].seconds = each;
    }
  } else {
    parallel_for(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t ei) {
      const auto e = static_cast<std::size_t>(ei);
      const auto t0 = clock::now();
      const auto first = clean.data().begin() + static_cast<std::ptrdiff_t>(e * per);
      const Tensor<double> x(Shape{2, ds.frame_len}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(per)));
      const std::uint64_t seed = splitmix64(cfg.seed ^ indices[e]);
      Tensor<double> adv;
      switch (cfg.kind) {
        case AttackKind::fgsm:
          adv = fgsm(*targets.model, x, labels[e], cfg.epsilon);
          break;
        case AttackKind::pgd:
          adv = pgd(*targets.model, x, labels[e], cfg.epsilon, cfg.pgd_step, cfg.pgd_iters);
          break;
        case AttackKind::sffaa:
          adv = sffaa(*targets.model, x, labels[e], cfg.budget, cfg.band, seed).adversarial;
          break;
        case AttackKind::meta_sffaa:
          adv = meta_sffaa(*targets.collection, x, labels[e], cfg.budget, cfg.band, cfg.schedule, seed).adversarial;
          break;
        case AttackKind::uap:
          break;
      }
      for (std::size_t i = 0; i < per; ++i) {
        rep.adversarial[e * per + i] = adv[i];
        rep.perturbations[e * per + i] = adv[i] - x[i];
      }
      rep.records[e].seconds = std::chrono::duration<double>(clock::now() - t0).count();
    });
  }

  const auto clean_pred = classify(*victim, clean);
  const auto adv_pred = classify(*victim, rep.adversarial);
  for (std::size_t e = 0; e < n; ++e) {
    auto& r = rep.records[e];
    r.index = indices[e];
    r.label = labels[e];
    r.snr_db = ds.snrs[indices[e]];
    r.clean_pred = clean_pred[e];
    r.adv_pred = adv_pred[e];
    r.success = adv_pred[e] != labels[e];
    double m = 0;
    for (std::size_t i = 0; i < per; ++i) m = std::max(m, std::abs(rep.perturbations[e * per + i]));
    r.linf = m;
  }
  rep.total_seconds = std::chrono::duration<double>(clock::now() - start).count();
  return rep;
}

}  // namespace freqadv::attacks
