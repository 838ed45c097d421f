#include "freqadv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "freqadv/errors.hpp"
#include "freqadv/parallel.hpp"
#include "freqadv/signal.hpp"

namespace freqadv::metrics {

namespace {

void check_perturbation(const Tensor<double>& d, const BandSpec& band) {
  if (d.shape() != Shape{2, band.length}) {
    throw ConfigError("perturbation must be [2, " + std::to_string(band.length) + "], got " + shape_string(d.shape()));
  }
}

std::vector<double> power_spectrum(const double* iq, std::size_t length) {
  std::vector<signal::cplx> c(length);
  for (std::size_t n = 0; n < length; ++n) c[n] = {iq[n], iq[length + n]};
  const auto S = signal::dft(c);
  std::vector<double> p(length);
  for (std::size_t k = 0; k < length; ++k) p[k] = std::norm(S[k]);
  return p;
}

BandEnergy split(const std::vector<double>& p, std::size_t nb) {
  BandEnergy e;
  const std::size_t L = p.size();
  for (std::size_t k = 0; k < L; ++k) (k >= nb && k < L - nb ? e.out : e.in) += p[k];
  return e;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError("bad number '" + s + "'", line);
}

// Rows of a CSV with the given header; offsets in errors are line numbers.
std::vector<std::vector<std::string>> read_rows(const std::string& text, const std::string& header) {
  std::istringstream in(text);
  std::string line;
  std::size_t no = 1;
  if (!std::getline(in, line) || line != header) throw FormatError("expected CSV header '" + header + "'", 1);
  const std::size_t cols = split_fields(header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    auto f = split_fields(line);
    if (f.size() != cols) throw FormatError("expected " + std::to_string(cols) + " fields", no);
    rows.push_back(std::move(f));
  }
  return rows;
}

constexpr const char* kAccuracyHeader = "snr_db,attack,accuracy,n";
constexpr const char* kMetricsHeader = "attack,mean_fd,mean_oser_db,in_energy,out_energy";

}  // namespace

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

BandEnergy band_energy(const Tensor<double>& delta, const BandSpec& band) {
  check_perturbation(delta, band);
  return split(power_spectrum(delta.data().data(), band.length), band.half_count());
}

double oser_db(const Tensor<double>& delta, const BandSpec& band) {
  const auto e = band_energy(delta, band);
  if (!(e.total() > 0)) throw MetricError("OSER is undefined for a zero perturbation");
  const double ratio = e.out / e.total();
  if (ratio < 1e-30) return kOserFloorDb;
  return 10.0 * std::log10(ratio);
}

double fitting_difference(const Tensor<double>& x, const Tensor<double>& adv) {
  if (x.shape() != adv.shape() || x.empty()) throw ConfigError("fitting difference needs equally shaped frames");
  double mean = 0;
  for (double v : x.data()) mean += v;
  mean /= static_cast<double>(x.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - adv[i]) * (x[i] - adv[i]);
    den += (x[i] - mean) * (x[i] - mean);
  }
  if (!(den > 0)) throw MetricError("fitting difference is undefined for a constant reference frame");
  return num / den;
}

AccuracyTable accuracy_by_snr(const std::string& attack, std::span<const int> labels, std::span<const int> predictions,
                              std::span<const int> snrs, std::span<const int> expected_snrs) {
  if (labels.size() != predictions.size() || labels.size() != snrs.size()) {
    throw ConfigError("labels, predictions and SNRs must have equal length");
  }
  std::map<int, std::pair<std::size_t, std::size_t>> buckets;  // snr -> (correct, n)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& b = buckets[snrs[i]];
    b.first += labels[i] == predictions[i];
    ++b.second;
  }
  AccuracyTable t;
  auto emit = [&](int snr, std::pair<std::size_t, std::size_t> b) {
    t.rows.push_back({snr, attack, static_cast<double>(b.first) / static_cast<double>(b.second), b.second});
  };
  if (expected_snrs.empty()) {
    for (const auto& [snr, b] : buckets) emit(snr, b);
  } else {
    for (int snr : expected_snrs) {
      const auto it = buckets.find(snr);
      if (it == buckets.end()) {
        t.empty_snrs.push_back(snr);
      } else {
        emit(snr, it->second);
      }
    }
  }
  return t;
}

SpectrumProfile spectrum_profile(const Tensor<double>& perturbations, const BandSpec& band) {
  if (perturbations.rank() != 3 || perturbations.dim(1) != 2 || perturbations.dim(2) != band.length) {
    throw ConfigError("spectrum profile expects [n, 2, " + std::to_string(band.length) + "] perturbations");
  }
  const std::size_t n = perturbations.dim(0), L = band.length;
  if (n == 0) throw ConfigError("spectrum profile needs at least one perturbation");
  std::vector<std::vector<double>> each(n);
  parallel_for_static(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t e) {
    each[static_cast<std::size_t>(e)] = power_spectrum(perturbations.data().data() + static_cast<std::size_t>(e) * 2 * L, L);
  });
  std::vector<double> mean(L, 0.0);
  for (const auto& p : each)
    for (std::size_t k = 0; k < L; ++k) mean[k] += p[k];
  for (double& v : mean) v /= static_cast<double>(n);

  SpectrumProfile out;
  out.energy = split(mean, band.half_count());
  const std::size_t half = L / 2;
  for (std::size_t j = 0; j < L; ++j) {
    const std::size_t k = (j + L - half) % L;
    const long signed_k = k >= (L + 1) / 2 ? static_cast<long>(k) - static_cast<long>(L) : static_cast<long>(k);
    out.mean_power.push_back(mean[k]);
    out.bin_index.push_back(static_cast<int>(k));
    out.freq_hz.push_back(static_cast<double>(signed_k) * band.sample_rate_hz / static_cast<double>(L));
  }
  return out;
}

MetricRow summarize(const std::string& attack, const Tensor<double>& clean, const Tensor<double>& adversarial,
                    const BandSpec& band) {
  if (clean.shape() != adversarial.shape() || clean.rank() != 3 || clean.dim(1) != 2 || clean.dim(2) != band.length) {
    throw ConfigError("summarize expects equally shaped [n, 2, L] clean and adversarial frames");
  }
  const std::size_t n = clean.dim(0), per = 2 * band.length;
  struct One {
    double fd = 0, oser = 0;
    BandEnergy e;
    bool has_oser = false;
  };
  std::vector<One> each(n);
  parallel_for_static(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t ei) {
    const auto e = static_cast<std::size_t>(ei);
    const auto c0 = clean.data().begin() + static_cast<std::ptrdiff_t>(e * per);
    const auto a0 = adversarial.data().begin() + static_cast<std::ptrdiff_t>(e * per);
    const Tensor<double> x(Shape{2, band.length}, std::vector<double>(c0, c0 + static_cast<std::ptrdiff_t>(per)));
    const Tensor<double> a(Shape{2, band.length}, std::vector<double>(a0, a0 + static_cast<std::ptrdiff_t>(per)));
    Tensor<double> d(Shape{2, band.length});
    for (std::size_t i = 0; i < per; ++i) d[i] = a[i] - x[i];
    One& o = each[e];
    o.fd = fitting_difference(x, a);
    o.e = band_energy(d, band);
    if (o.e.total() > 0) {
      o.oser = oser_db(d, band);
      o.has_oser = true;
    }
  });
  MetricRow r;
  r.attack = attack;
  r.n = n;
  std::size_t with_oser = 0;
  for (const auto& o : each) {
    r.mean_fd += o.fd;
    r.in_energy += o.e.in;
    r.out_energy += o.e.out;
    if (o.has_oser) {
      r.mean_oser_db += o.oser;
      ++with_oser;
    }
  }
  if (n > 0) {
    r.mean_fd /= static_cast<double>(n);
    r.in_energy /= static_cast<double>(n);
    r.out_energy /= static_cast<double>(n);
  }
  r.mean_oser_db = with_oser > 0 ? r.mean_oser_db / static_cast<double>(with_oser) : kOserFloorDb;
  return r;
}

std::string accuracy_csv(std::span<const AccuracyRow> rows) {
  std::string s = std::string(kAccuracyHeader) + "\n";
  for (const auto& r : rows) {
    s += std::to_string(r.snr_db) + "," + r.attack + "," + format_number(r.accuracy) + "," + std::to_string(r.n) + "\n";
  }
  return s;
}

std::string metrics_csv(std::span<const MetricRow> rows) {
  std::string s = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    s += r.attack + "," + format_number(r.mean_fd) + "," + format_number(r.mean_oser_db) + "," +
         format_number(r.in_energy) + "," + format_number(r.out_energy) + "\n";
  }
  return s;
}

std::string profile_csv(std::span<const NamedProfile> profiles) {
  std::string s = "bin_index,freq_hz";
  for (const auto& p : profiles) s += "," + p.attack;
  s += "\n";
  if (profiles.empty()) return s;
  const std::size_t L = profiles.front().profile.mean_power.size();
  for (const auto& p : profiles) {
    if (p.profile.mean_power.size() != L) throw ConfigError("profiles have different lengths");
  }
  for (std::size_t j = 0; j < L; ++j) {
    s += std::to_string(profiles.front().profile.bin_index[j]) + "," + format_number(profiles.front().profile.freq_hz[j]);
    for (const auto& p : profiles) s += "," + format_number(p.profile.mean_power[j]);
    s += "\n";
  }
  return s;
}

std::vector<AccuracyRow> parse_accuracy_csv(const std::string& text) {
  std::vector<AccuracyRow> out;
  std::size_t line = 1;
  for (const auto& f : read_rows(text, kAccuracyHeader)) {
    ++line;
    AccuracyRow r;
    r.snr_db = static_cast<int>(to_double(f[0], line));
    r.attack = f[1];
    r.accuracy = to_double(f[2], line);
    r.n = static_cast<std::size_t>(to_double(f[3], line));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MetricRow> parse_metrics_csv(const std::string& text) {
  std::vector<MetricRow> out;
  std::size_t line = 1;
  for (const auto& f : read_rows(text, kMetricsHeader)) {
    ++line;
    MetricRow r;
    r.attack = f[0];
    r.mean_fd = to_double(f[1], line);
    r.mean_oser_db = to_double(f[2], line);
    r.in_energy = to_double(f[3], line);
    r.out_energy = to_double(f[4], line);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace freqadv::metrics
