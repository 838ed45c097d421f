#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "freqadv/rng.hpp"

namespace freqadv::signal {

using cplx = std::complex<double>;

/// Complex baseband samples. I is the real part, Q the imaginary part.
struct ComplexSeries {
  std::vector<cplx> samples;
  double sample_rate_hz = 8e6;

  std::size_t size() const noexcept { return samples.size(); }
  bool operator==(const ComplexSeries&) const = default;
};

/// Class order is the on-disk label order.
enum class Modulation : std::uint8_t { bpsk, qpsk, psk8, qam16, qam64, pam4, gfsk, fsk2 };

inline constexpr std::size_t kNumModulations = 8;
inline constexpr std::array<std::string_view, kNumModulations> kModulationNames = {
    "BPSK", "QPSK", "8PSK", "16QAM", "64QAM", "PAM4", "GFSK", "2FSK"};

std::string_view modulation_name(Modulation m);
/// Throws ConfigError for names not in kModulationNames.
Modulation parse_modulation(std::string_view name);

/// Symbols per alphabet (2, 4, 8, 16, 64, 4, 2, 2).
std::size_t alphabet_size(Modulation m);
bool is_linear(Modulation m);

/// Gray-mapped, unit-average-power constellation of a linear modulation,
/// indexed by symbol value. BPSK maps 0 -> +1 and 1 -> -1. Throws ConfigError
/// for GFSK/2FSK.
std::vector<cplx> constellation(Modulation m);

struct PulseConfig {
  std::size_t sps = 8;
  double rrc_rolloff = 0.35;
  std::size_t rrc_span_symbols = 8;
  double gfsk_bt = 0.35;
  double gfsk_index = 0.5;
  double fsk2_index = 1.0;  // tone separation equals the symbol rate
};

/// Root-raised-cosine taps, span*sps+1 of them, scaled to unit energy.
std::vector<double> rrc_taps(double rolloff, std::size_t span_symbols, std::size_t sps);

/// Filters with the RRC taps and trims the result to the input length,
/// compensating the group delay of (taps-1)/2 samples.
ComplexSeries pulse_shape_rrc(const ComplexSeries& impulses, double rolloff = 0.35, std::size_t span_symbols = 8,
                              std::size_t sps = 8);

/// Baseband waveform of `symbols`, symbols.size()*sps samples long. Linear
/// modulations place constellation points every sps samples and RRC-shape
/// them. GFSK and 2FSK are phase accumulators with unit envelope; symbol b
/// drives frequency deviation 2b-1. Throws ConfigError for an out-of-range
/// symbol.
ComplexSeries modulate(Modulation m, std::span<const std::uint32_t> symbols, const PulseConfig& cfg = {},
                       double sample_rate_hz = 8e6);

struct ChannelParams {
  double direct_path_freq_offset_hz = 2.0;
  double indirect_delay_s = 0.3e-6;
  /// Below 1e-4 rad of phase drift over one frame, so each path gets a single
  /// random phase instead of a fading process.
  double indirect_max_doppler_hz = 2.0;
  double avg_path_gain_db = -5.9;
  double rician_k = 10.0;

  /// Throws ConfigError when rician_k <= 0 or the delay is negative.
  void validate() const;
  /// Stable 64-bit digest of the parameter values, as hex.
  std::string digest() const;
};

/// Delays x by `delay` samples (non-negative, may be fractional) with an
/// 8-tap Hann-windowed sinc. Samples before the start are zero. Integer
/// delays are exact shifts.
std::vector<cplx> fractional_delay(std::span<const cplx> x, double delay);

/// Two-path Rician channel. The total average gain is avg_path_gain_db, split
/// K : 1 between the direct path (frequency offset plus a random phase) and
/// the delayed indirect path (random phase). Setting rician_k to infinity
/// removes the indirect path.
ComplexSeries apply_rician(const ComplexSeries& x, const ChannelParams& p, SeededRng& rng);

/// Mean of |x_n|^2.
double mean_power(std::span<const cplx> x);

/// Adds complex white Gaussian noise of power mean_power(x) / 10^(snr_db/10),
/// split equally between I and Q. Throws ConfigError on a zero-power input.
ComplexSeries add_awgn(const ComplexSeries& x, double snr_db, SeededRng& rng);

/// Scales x to unit mean power. Throws ConfigError on a zero-power input.
ComplexSeries normalize_unit_power(const ComplexSeries& x);

/// X_k = sum_n x_n e^{-j 2 pi k n / L}. Radix-2 for power-of-two lengths,
/// direct evaluation otherwise.
std::vector<cplx> dft(std::span<const cplx> x);
/// x_n = (1/L) sum_k X_k e^{+j 2 pi k n / L}.
std::vector<cplx> idft(std::span<const cplx> X);

/// O(L^2) transforms, used for non-power-of-two lengths.
std::vector<cplx> dft_direct(std::span<const cplx> x);
std::vector<cplx> idft_direct(std::span<const cplx> X);

}  // namespace freqadv::signal
