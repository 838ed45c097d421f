#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "freqadv/attacks.hpp"
#include "freqadv/tensor.hpp"

namespace freqadv::metrics {

using attacks::BandSpec;

inline constexpr double kOserFloorDb = -300.0;

struct BandEnergy {
  double in = 0;
  double out = 0;
  double total() const { return in + out; }
};

/// |DFT|^2 of the complex series I + jQ of a [2, L] frame, split at the band.
BandEnergy band_energy(const Tensor<double>& delta, const BandSpec& band);

/// Out-band to total energy ratio in dB, floored at -300 dB. Throws
/// MetricError for an all-zero perturbation.
double oser_db(const Tensor<double>& delta, const BandSpec& band);

/// sum (x - x')^2 / sum (x - mean x)^2 over all 2L samples. Throws
/// MetricError when x is constant.
double fitting_difference(const Tensor<double>& x, const Tensor<double>& adv);

struct AccuracyRow {
  int snr_db = 0;
  std::string attack;  // "clean" for unattacked predictions
  double accuracy = 0;
  std::size_t n = 0;
};

struct AccuracyTable {
  std::vector<AccuracyRow> rows;  // ascending SNR
  std::vector<int> empty_snrs;  // requested SNRs that had no examples
};

/// Groups predictions by SNR. With a non-empty `expected_snrs`, rows are
/// emitted in that order and missing buckets are reported, not emitted.
AccuracyTable accuracy_by_snr(const std::string& attack, std::span<const int> labels, std::span<const int> predictions,
                              std::span<const int> snrs, std::span<const int> expected_snrs = {});

struct SpectrumProfile {
  std::vector<double> mean_power;  // FFT-shifted, negative frequencies first
  std::vector<double> freq_hz;
  std::vector<int> bin_index;  // unshifted DFT bin of each entry
  BandEnergy energy;  // of the unshifted mean profile
};

/// Mean |DFT|^2 over a [n, 2, L] batch of perturbations.
SpectrumProfile spectrum_profile(const Tensor<double>& perturbations, const BandSpec& band);

struct MetricRow {
  std::string attack;
  double mean_fd = 0;
  double mean_oser_db = 0;
  double in_energy = 0;
  double out_energy = 0;
  std::size_t n = 0;
};

/// Mean FD, OSER and in/out energy over [n, 2, L] clean and adversarial
/// frames. Examples are evaluated in parallel and reduced in index order.
/// Zero perturbations are skipped for OSER.
MetricRow summarize(const std::string& attack, const Tensor<double>& clean, const Tensor<double>& adversarial,
                    const BandSpec& band);

// CSV writers. Numbers use a fixed %.10g format so equal inputs give equal
// bytes.
std::string accuracy_csv(std::span<const AccuracyRow> rows);
std::string metrics_csv(std::span<const MetricRow> rows);
struct NamedProfile {
  std::string attack;
  SpectrumProfile profile;
};
std::string profile_csv(std::span<const NamedProfile> profiles);

std::vector<AccuracyRow> parse_accuracy_csv(const std::string& text);
std::vector<MetricRow> parse_metrics_csv(const std::string& text);

std::string format_number(double v);

}  // namespace freqadv::metrics
