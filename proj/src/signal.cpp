#include "freqadv/signal.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "freqadv/errors.hpp"

namespace freqadv::signal {

namespace {

constexpr double pi = std::numbers::pi;

std::uint32_t gray_inverse(std::uint32_t g) {
  std::uint32_t b = 0;
  for (; g; g >>= 1) b ^= g;
  return b;
}

// Gray-coded PAM levels -(m-1), ..., m-1 for a bits-wide label.
double pam_level(std::uint32_t label, std::uint32_t m) {
  return 2.0 * gray_inverse(label) - (m - 1.0);
}

double sinc(double t) {
  if (t == 0.0) return 1.0;
  if (t == std::round(t)) return 0.0;
  return std::sin(pi * t) / (pi * t);
}

std::vector<double> gaussian_taps(double bt, std::size_t sps) {
  const double sigma = std::sqrt(std::log(2.0)) / (2.0 * pi * bt) * static_cast<double>(sps);
  const std::ptrdiff_t half = 2 * static_cast<std::ptrdiff_t>(sps);
  std::vector<double> g;
  double total = 0;
  for (std::ptrdiff_t m = -half; m <= half; ++m) {
    const double v = std::exp(-0.5 * (m / sigma) * (m / sigma));
    g.push_back(v);
    total += v;
  }
  for (double& v : g) v /= total;
  return g;
}

}  // namespace

std::string_view modulation_name(Modulation m) { return kModulationNames.at(static_cast<std::size_t>(m)); }

Modulation parse_modulation(std::string_view name) {
  for (std::size_t i = 0; i < kNumModulations; ++i) {
    if (kModulationNames[i] == name) return static_cast<Modulation>(i);
  }
  throw ConfigError("unknown modulation '" + std::string(name) + "'");
}

std::size_t alphabet_size(Modulation m) {
  switch (m) {
    case Modulation::bpsk: return 2;
    case Modulation::qpsk: return 4;
    case Modulation::psk8: return 8;
    case Modulation::qam16: return 16;
    case Modulation::qam64: return 64;
    case Modulation::pam4: return 4;
    case Modulation::gfsk: return 2;
    case Modulation::fsk2: return 2;
  }
  throw ConfigError("invalid modulation id");
}

bool is_linear(Modulation m) { return m != Modulation::gfsk && m != Modulation::fsk2; }

std::vector<cplx> constellation(Modulation m) {
  if (!is_linear(m)) throw ConfigError("no constellation for " + std::string(modulation_name(m)));
  const std::uint32_t n = static_cast<std::uint32_t>(alphabet_size(m));
  std::vector<cplx> pts(n);
  switch (m) {
    case Modulation::bpsk:
      pts = {{1, 0}, {-1, 0}};
      break;
    case Modulation::qpsk:
      for (std::uint32_t s = 0; s < 4; ++s) {
        pts[s] = cplx((s & 2) ? -1.0 : 1.0, (s & 1) ? -1.0 : 1.0) / std::sqrt(2.0);
      }
      break;
    case Modulation::psk8:
      for (std::uint32_t s = 0; s < 8; ++s) pts[s] = std::polar(1.0, 2.0 * pi * gray_inverse(s) / 8.0);
      break;
    case Modulation::qam16:
    case Modulation::qam64: {
      const std::uint32_t side = n == 16 ? 4 : 8, bits = n == 16 ? 2 : 3;
      const double norm = std::sqrt(n == 16 ? 10.0 : 42.0);
      for (std::uint32_t s = 0; s < n; ++s) {
        pts[s] = cplx(pam_level(s >> bits, side), pam_level(s & (side - 1), side)) / norm;
      }
      break;
    }
    case Modulation::pam4:
      for (std::uint32_t s = 0; s < 4; ++s) pts[s] = cplx(pam_level(s, 4) / std::sqrt(5.0), 0.0);
      break;
    default:
      break;
  }
  return pts;
}

std::vector<double> rrc_taps(double rolloff, std::size_t span_symbols, std::size_t sps) {
  if (sps == 0 || span_symbols == 0 || rolloff <= 0.0 || rolloff > 1.0) {
    throw ConfigError("rrc needs sps >= 1, span >= 1 and rolloff in (0, 1]");
  }
  const double b = rolloff;
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(span_symbols * sps / 2);
  std::vector<double> h;
  double energy = 0;
  for (std::ptrdiff_t k = -half; k <= half; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(sps);
    double v;
    if (k == 0) {
      v = 1.0 - b + 4.0 * b / pi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-12) {
      v = b / std::sqrt(2.0) *
          ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * b)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * b)));
    } else {
      v = (std::sin(pi * t * (1.0 - b)) + 4.0 * b * t * std::cos(pi * t * (1.0 + b))) /
          (pi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t)));
    }
    h.push_back(v);
    energy += v * v;
  }
  const double s = 1.0 / std::sqrt(energy);
  for (double& v : h) v *= s;
  return h;
}

ComplexSeries pulse_shape_rrc(const ComplexSeries& impulses, double rolloff, std::size_t span_symbols,
                              std::size_t sps) {
  const auto h = rrc_taps(rolloff, span_symbols, sps);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(impulses.size());
  const std::ptrdiff_t taps = static_cast<std::ptrdiff_t>(h.size()), delay = (taps - 1) / 2;
  ComplexSeries out{std::vector<cplx>(impulses.size()), impulses.sample_rate_hz};
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    cplx acc = 0;
    for (std::ptrdiff_t k = 0; k < taps; ++k) {
      const std::ptrdiff_t j = i + delay - k;
      if (j >= 0 && j < n) acc += h[k] * impulses.samples[j];
    }
    out.samples[i] = acc;
  }
  return out;
}

ComplexSeries modulate(Modulation m, std::span<const std::uint32_t> symbols, const PulseConfig& cfg,
                       double sample_rate_hz) {
  const std::size_t order = alphabet_size(m);
  for (std::uint32_t s : symbols) {
    if (s >= order) {
      throw ConfigError("symbol " + std::to_string(s) + " out of range for " + std::string(modulation_name(m)));
    }
  }
  const std::size_t sps = cfg.sps;
  ComplexSeries out{std::vector<cplx>(symbols.size() * sps), sample_rate_hz};

  if (is_linear(m)) {
    const auto pts = constellation(m);
    for (std::size_t i = 0; i < symbols.size(); ++i) out.samples[i * sps] = pts[symbols[i]];
    return pulse_shape_rrc(out, cfg.rrc_rolloff, cfg.rrc_span_symbols, sps);
  }

  std::vector<double> freq(out.size());
  for (std::size_t n = 0; n < freq.size(); ++n) freq[n] = 2.0 * symbols[n / sps] - 1.0;
  double index = cfg.fsk2_index;
  if (m == Modulation::gfsk) {
    index = cfg.gfsk_index;
    const auto g = gaussian_taps(cfg.gfsk_bt, sps);
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(g.size() / 2), len = static_cast<std::ptrdiff_t>(freq.size());
    std::vector<double> smooth(freq.size());
    for (std::ptrdiff_t n = 0; n < len; ++n) {
      double acc = 0;
      for (std::ptrdiff_t k = -half; k <= half; ++k) {
        // hold the edge symbols rather than padding with zero frequency
        const std::ptrdiff_t j = std::clamp<std::ptrdiff_t>(n - k, 0, len - 1);
        acc += g[k + half] * freq[j];
      }
      smooth[n] = acc;
    }
    freq = std::move(smooth);
  }
  // Deviation h/(2T) per unit drive, i.e. pi*h/sps radians per sample.
  const double step = pi * index / static_cast<double>(sps);
  double phase = 0;
  for (std::size_t n = 0; n < freq.size(); ++n) {
    out.samples[n] = std::polar(1.0, phase);
    phase = std::fmod(phase + step * freq[n], 2.0 * pi);
  }
  return out;
}

void ChannelParams::validate() const {
  if (!(rician_k > 0.0)) throw ConfigError("rician_k must be positive");
  if (!(indirect_delay_s >= 0.0)) throw ConfigError("indirect_delay_s must be non-negative");
}

std::string ChannelParams::digest() const {
  char text[256];
  std::snprintf(text, sizeof text, "%.17g|%.17g|%.17g|%.17g|%.17g", direct_path_freq_offset_hz, indirect_delay_s,
                indirect_max_doppler_hz, avg_path_gain_db, rician_k);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const char* c = text; *c; ++c) {
    h ^= static_cast<unsigned char>(*c);
    h *= 0x100000001b3ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::vector<cplx> fractional_delay(std::span<const cplx> x, double delay) {
  if (!(delay >= 0.0)) throw ConfigError("delay must be non-negative");
  constexpr double half_width = 4.5;
  const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(std::floor(delay));
  double taps[8];
  for (int i = 0; i < 8; ++i) {
    const double t = static_cast<double>(base - 3 + i) - delay;
    taps[i] = sinc(t) * 0.5 * (1.0 + std::cos(pi * t / half_width));
  }
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<cplx> y(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    cplx acc = 0;
    for (int t = 0; t < 8; ++t) {
      const std::ptrdiff_t j = i - (base - 3 + t);
      if (j >= 0 && j < n) acc += taps[t] * x[j];
    }
    y[i] = acc;
  }
  return y;
}

ComplexSeries apply_rician(const ComplexSeries& x, const ChannelParams& p, SeededRng& rng) {
  p.validate();
  if (x.samples.empty()) throw ConfigError("rician channel needs a non-empty input");
  const double gain = std::pow(10.0, p.avg_path_gain_db / 10.0);
  double los2 = gain, nlos2 = 0.0;
  if (!std::isinf(p.rician_k)) {
    los2 = gain * p.rician_k / (p.rician_k + 1.0);
    nlos2 = gain / (p.rician_k + 1.0);
  }
  const double theta = 2.0 * pi * rng.uniform();
  const double phi = 2.0 * pi * rng.uniform();
  const cplx los = std::sqrt(los2), nlos = std::polar(std::sqrt(nlos2), phi);

  const auto delayed = fractional_delay(x.samples, p.indirect_delay_s * x.sample_rate_hz);
  ComplexSeries out{std::vector<cplx>(x.size()), x.sample_rate_hz};
  const double w = 2.0 * pi * p.direct_path_freq_offset_hz / x.sample_rate_hz;
  for (std::size_t n = 0; n < x.size(); ++n) {
    out.samples[n] = los * std::polar(1.0, theta + w * static_cast<double>(n)) * x.samples[n] + nlos * delayed[n];
  }
  return out;
}

double mean_power(std::span<const cplx> x) {
  if (x.empty()) return 0.0;
  double acc = 0;
  for (const cplx& v : x) acc += std::norm(v);
  return acc / static_cast<double>(x.size());
}

ComplexSeries add_awgn(const ComplexSeries& x, double snr_db, SeededRng& rng) {
  const double p = mean_power(x.samples);
  if (!(p > 0.0)) throw ConfigError("cannot set an SNR on a zero-power signal");
  const double sigma = std::sqrt(p / std::pow(10.0, snr_db / 10.0) / 2.0);
  ComplexSeries out = x;
  for (cplx& v : out.samples) {
    const double ni = rng.gaussian();
    const double nq = rng.gaussian();
    v += cplx(sigma * ni, sigma * nq);
  }
  return out;
}

ComplexSeries normalize_unit_power(const ComplexSeries& x) {
  const double p = mean_power(x.samples);
  if (!(p > 0.0)) throw ConfigError("cannot normalize a zero-power signal");
  const double s = 1.0 / std::sqrt(p);
  ComplexSeries out = x;
  for (cplx& v : out.samples) v *= s;
  return out;
}

std::vector<cplx> dft_direct(std::span<const cplx> x) {
  const std::size_t L = x.size();
  std::vector<cplx> X(L);
  for (std::size_t k = 0; k < L; ++k) {
    cplx acc = 0;
    for (std::size_t n = 0; n < L; ++n) acc += x[n] * std::polar(1.0, -2.0 * pi * static_cast<double>((k * n) % L) / L);
    X[k] = acc;
  }
  return X;
}

std::vector<cplx> idft_direct(std::span<const cplx> X) {
  const std::size_t L = X.size();
  std::vector<cplx> x(L);
  for (std::size_t n = 0; n < L; ++n) {
    cplx acc = 0;
    for (std::size_t k = 0; k < L; ++k) acc += X[k] * std::polar(1.0, 2.0 * pi * static_cast<double>((k * n) % L) / L);
    x[n] = acc / static_cast<double>(L);
  }
  return x;
}

std::vector<cplx> dft(std::span<const cplx> x) {
  const std::size_t L = x.size();
  if (L < 2 || !std::has_single_bit(L)) return dft_direct(x);

  std::vector<cplx> a(x.begin(), x.end());
  for (std::size_t i = 1, j = 0; i < L; ++i) {
    std::size_t bit = L >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  std::vector<cplx> tw(L / 2);
  for (std::size_t k = 0; k < L / 2; ++k) tw[k] = std::polar(1.0, -2.0 * pi * static_cast<double>(k) / L);
  for (std::size_t len = 2; len <= L; len <<= 1) {
    const std::size_t stride = L / len;
    for (std::size_t i = 0; i < L; i += len) {
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cplx u = a[i + j], v = a[i + j + len / 2] * tw[j * stride];
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
  return a;
}

std::vector<cplx> idft(std::span<const cplx> X) {
  const std::size_t L = X.size();
  if (L < 2 || !std::has_single_bit(L)) return idft_direct(X);
  std::vector<cplx> c(L);
  for (std::size_t k = 0; k < L; ++k) c[k] = std::conj(X[k]);
  auto x = dft(c);
  for (cplx& v : x) v = std::conj(v) / static_cast<double>(L);
  return x;
}

}  // namespace freqadv::signal
