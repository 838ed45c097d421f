#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "freqadv/dataset.hpp"
#include "freqadv/models.hpp"
#include "freqadv/tensor.hpp"

namespace freqadv::attacks {

using Model = models::Classifier<double>;

/// Focus band around DC. Bins {0..N_b-1} and {L-N_b..L-1} are in band.
struct BandSpec {
  double focus_bandwidth_hz = 1e6;
  std::size_t length = 128;
  double sample_rate_hz = 8e6;

  std::size_t half_count() const;
  /// Ascending in-band DFT bin indices, 2 * half_count() of them.
  std::vector<std::size_t> bins() const;
  void validate() const;
};

struct AttackBudget {
  double zeta = 0.1;
  double alpha = 0.05;
  std::size_t steps = 50;
  double loss_eps = 1e-6;

  void validate() const;
};

struct TaskSchedule {
  std::size_t meta_train = 3;  // R
  std::size_t inner_steps = 50;  // K
  std::size_t tasks = 15;  // T
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t total_updates() const { return tasks * (inner_steps + 1); }
};

/// Places interleaved (re, im) coefficients at the in-band bins.
std::vector<std::complex<double>> embed_spectrum(std::span<const double> s, const BandSpec& band);

/// Clipped inverse DFT of the embedded spectrum as a [2, L] frame.
Tensor<double> spectrum_to_perturbation(std::span<const double> s, const BandSpec& band, double zeta);

/// -log(1 - q[label] + eps)
double attack_loss(std::span<const double> q, int label, double eps = 1e-6);

/// Per-component standard deviation of the random initial spectrum.
double spectrum_init_stddev(const BandSpec& band, const AttackBudget& budget);
std::vector<double> initial_spectrum(const BandSpec& band, const AttackBudget& budget, std::uint64_t seed);

/// Called once per spectrum update with the iterate before the update, its
/// perturbation and loss. `step` counts updates from 0.
using SpectrumTrace =
    std::function<void(std::size_t step, std::span<const double> s, const Tensor<double>& delta, double loss)>;

struct SpectrumResult {
  std::vector<double> spectrum;
  Tensor<double> perturbation;  // [2, L]
  Tensor<double> adversarial;  // [2, L]
  std::size_t updates = 0;
};

/// x is a [2, L] frame.
SpectrumResult sffaa(const Model& model, const Tensor<double>& x, int label, const AttackBudget& budget,
                     const BandSpec& band, std::uint64_t seed, const SpectrumTrace& trace = {});
/// Same iteration from a caller-supplied initial spectrum.
SpectrumResult sffaa_from(const Model& model, const Tensor<double>& x, int label, const AttackBudget& budget,
                          const BandSpec& band, std::vector<double> s0, const SpectrumTrace& trace = {});

Tensor<double> fgsm(const Model& model, const Tensor<double>& x, int label, double epsilon = 0.1);
Tensor<double> pgd(const Model& model, const Tensor<double>& x, int label, double epsilon = 0.1, double step = 0.02,
                   std::size_t iters = 10);

struct UapConfig {
  double epsilon = 0.1;
  double inner_step = 0.02;
  std::size_t inner_iters = 10;
  std::size_t max_passes = 5;
  double fool_target = 0.8;
  std::uint64_t seed = 1;
};

struct UapResult {
  Tensor<double> perturbation;  // [2, L]
  std::size_t passes = 0;
  double fooling_rate = 0;
};

/// frames is [n, 2, L]. An example counts as fooled when x + v is
/// misclassified.
UapResult uap(const Model& model, const Tensor<double>& frames, std::span<const int> labels, const UapConfig& cfg);

/// Fraction of frames misclassified once `v` ([2, L]) is added to each.
double fooling_rate(const Model& model, const Tensor<double>& frames, std::span<const int> labels,
                    const Tensor<double>& v);

/// Surrogate models for the transfer attack. Holds non-owning pointers.
struct ModelCollection {
  std::vector<const Model*> models;
};

/// Rejects the black-box target architecture.
ModelCollection make_collection(std::span<const models::Network<double>> networks);

/// Models of task t: the first R are meta-train, the last is meta-test.
std::vector<std::size_t> sample_task(std::size_t collection_size, const TaskSchedule& schedule, std::size_t t);

SpectrumResult meta_sffaa(const ModelCollection& collection, const Tensor<double>& x, int label,
                          const AttackBudget& budget, const BandSpec& band, const TaskSchedule& schedule,
                          std::uint64_t seed, const SpectrumTrace& trace = {});

enum class AttackKind : std::uint8_t { fgsm, pgd, uap, sffaa, meta_sffaa };
inline constexpr AttackKind kAllAttacks[] = {AttackKind::fgsm, AttackKind::pgd, AttackKind::uap, AttackKind::sffaa,
                                             AttackKind::meta_sffaa};
std::string_view attack_name(AttackKind k);
AttackKind parse_attack(std::string_view name);

struct AttackConfig {
  AttackKind kind = AttackKind::sffaa;
  double epsilon = 0.1;  // FGSM, PGD and UAP
  double pgd_step = 0.02;
  std::size_t pgd_iters = 10;
  UapConfig uap;
  /// Caps the UAP crafting set; 0 uses all of it.
  std::size_t uap_max_examples = 0;
  AttackBudget budget;
  BandSpec band;
  TaskSchedule schedule;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ExampleRecord {
  std::size_t index = 0;  // dataset record
  int label = 0;
  int snr_db = 0;
  int clean_pred = 0;
  int adv_pred = 0;
  bool success = false;  // adv_pred != label
  double linf = 0;
  double seconds = 0;
};

struct AttackReport {
  AttackKind kind = AttackKind::sffaa;
  Tensor<double> adversarial;  // [n, 2, L]
  Tensor<double> perturbations;  // [n, 2, L]
  std::vector<ExampleRecord> records;
  std::optional<Tensor<double>> universal;
  double total_seconds = 0;
};

struct AttackTargets {
  const Model* model = nullptr;  // white-box model for every attack but meta-sffaa
  const ModelCollection* collection = nullptr;  // meta-sffaa surrogates
  const Model* victim = nullptr;  // scores success; defaults to `model`
};

/// Attacks every listed record in parallel, one tape per example. UAP is
/// crafted on `uap_train` first, then applied unchanged.
AttackReport attack_batch(const AttackConfig& cfg, const AttackTargets& targets, const data::Dataset& ds,
                          std::span<const std::size_t> indices, std::span<const std::size_t> uap_train = {});

/// Arg-max labels for [n, 2, L] frames, evaluated in parallel chunks.
std::vector<int> classify(const Model& model, const Tensor<double>& frames);

}  // namespace freqadv::attacks
