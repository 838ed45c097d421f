#include "freqadv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "binio.hpp"
#include "freqadv/errors.hpp"
#include "freqadv/parallel.hpp"

namespace freqadv::data {

using signal::cplx;

std::vector<int> default_snrs() {
  std::vector<int> s;
  for (int v = -20; v <= 18; v += 2) s.push_back(v);
  return s;
}

void Dataset::push_back(std::uint8_t label, std::int8_t snr, std::span<const float> f) {
  if (f.size() != 2 * frame_len) throw ConfigError("frame length does not match the dataset");
  labels.push_back(label);
  snrs.push_back(snr);
  iq.insert(iq.end(), f.begin(), f.end());
}

std::vector<cplx> synthesize_frame(signal::Modulation m, double snr_db, const GenerateConfig& cfg, SeededRng& rng) {
  const std::size_t sps = cfg.pulse.sps;
  if (sps == 0 || cfg.frame_len % sps != 0) throw ConfigError("frame_len must be a multiple of sps");
  const std::size_t pad = cfg.pulse.rrc_span_symbols;
  const std::size_t nsym = cfg.frame_len / sps + 2 * pad;
  const auto order = signal::alphabet_size(m);
  std::vector<std::uint32_t> symbols(nsym);
  for (auto& s : symbols) s = static_cast<std::uint32_t>(rng.below(order));

  auto wave = signal::modulate(m, symbols, cfg.pulse, cfg.sample_rate_hz);
  wave = signal::apply_rician(wave, cfg.channel, rng);
  const std::size_t start = pad * sps;
  wave.samples = std::vector<cplx>(wave.samples.begin() + static_cast<std::ptrdiff_t>(start),
                                   wave.samples.begin() + static_cast<std::ptrdiff_t>(start + cfg.frame_len));
  wave = signal::normalize_unit_power(wave);
  wave = signal::add_awgn(wave, snr_db, rng);
  return signal::normalize_unit_power(wave).samples;
}

Dataset generate_dataset(const GenerateConfig& cfg) {
  if (cfg.per_cell == 0 || cfg.snrs.empty()) throw ConfigError("dataset needs at least one example per cell");
  if (cfg.frame_len == 0 || (cfg.frame_len & (cfg.frame_len - 1)) != 0) {
    throw ConfigError("frame_len must be a power of two");
  }
  for (int s : cfg.snrs) {
    if (s < std::numeric_limits<std::int8_t>::min() || s > std::numeric_limits<std::int8_t>::max()) {
      throw ConfigError("snr " + std::to_string(s) + " does not fit the record format");
    }
  }
  cfg.channel.validate();

  const std::size_t per_class = cfg.snrs.size() * cfg.per_cell;
  const std::size_t n = kNumClasses * per_class;
  const std::size_t L = cfg.frame_len;
  Dataset ds;
  ds.frame_len = L;
  ds.sample_rate_hz = cfg.sample_rate_hz;
  ds.labels.resize(n);
  ds.snrs.resize(n);
  ds.iq.resize(n * 2 * L);

  parallel_for_static(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto label = i / per_class;
    const int snr = cfg.snrs[(i % per_class) / cfg.per_cell];
    SeededRng rng = SeededRng::derive(cfg.seed, i);
    const auto frame = synthesize_frame(static_cast<signal::Modulation>(label), snr, cfg, rng);
    ds.labels[i] = static_cast<std::uint8_t>(label);
    ds.snrs[i] = static_cast<std::int8_t>(snr);
    auto out = ds.frame(i);
    for (std::size_t t = 0; t < L; ++t) {
      out[t] = static_cast<float>(frame[t].real());
      out[L + t] = static_cast<float>(frame[t].imag());
    }
  });
  return ds;
}

Manifest make_manifest(const Dataset& ds, std::uint64_t seed, const std::string& channel_digest) {
  Manifest m;
  for (auto name : signal::kModulationNames) m.classes.emplace_back(name);
  m.frame_len = ds.frame_len;
  m.sample_rate_hz = ds.sample_rate_hz;
  m.num_records = ds.size();
  m.seed = seed;
  m.channel_digest = channel_digest;
  for (std::size_t i = 0; i < ds.size(); ++i) ++m.counts[{ds.labels[i], ds.snrs[i]}];
  return m;
}

namespace {

std::string manifest_text(const Manifest& m) {
  std::string t;
  auto line = [&](const std::string& k, const std::string& v) { t += k + "=" + v + "\n"; };
  line("format_version", std::to_string(m.version));
  std::string classes;
  for (std::size_t i = 0; i < m.classes.size(); ++i) classes += (i ? "," : "") + m.classes[i];
  line("classes", classes);
  line("frame_len", std::to_string(m.frame_len));
  char rate[64];
  std::snprintf(rate, sizeof rate, "%.17g", m.sample_rate_hz);
  line("sample_rate_hz", rate);
  line("num_records", std::to_string(m.num_records));
  line("seed", std::to_string(m.seed));
  line("channel_digest", m.channel_digest);
  line("payload_digest", m.payload_digest);
  for (const auto& [key, count] : m.counts) {
    const std::string name = key.first < static_cast<int>(m.classes.size()) ? m.classes[key.first] : std::to_string(key.first);
    line("count." + name + "." + std::to_string(key.second), std::to_string(count));
  }
  return t;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key, std::size_t line) {
  try {
    std::size_t used = 0;
    const auto r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw FormatError("manifest key '" + key + "' is not an unsigned integer", line);
  }
}

}  // namespace

Manifest save_dataset(const std::string& path, const Dataset& ds, Manifest manifest) {
  binio::Writer w;
  w.magic("AMC1");
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.frame_len));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kNumClasses));
  w.put<double>(ds.sample_rate_hz);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.put<std::uint8_t>(ds.labels[i]);
    w.put<std::int8_t>(ds.snrs[i]);
    for (float v : ds.frame(i)) w.put<float>(v);
  }
  binio::write_file(path, w.data());
  manifest.payload_digest = binio::hex64(binio::fnv1a(w.data().data(), w.data().size()));
  binio::write_text(path + ".manifest", manifest_text(manifest));
  return manifest;
}

Dataset load_dataset(const std::string& path) {
  binio::Reader r(binio::read_file(path));
  const auto magic_at = r.offset();
  if (r.str(4, "magic") != "AMC1") throw FormatError("bad magic in '" + path + "'", magic_at);
  const auto version_at = r.offset();
  if (r.get<std::uint32_t>("version") != kFormatVersion) throw FormatError("unsupported dataset version", version_at);
  Dataset ds;
  const auto len_at = r.offset();
  ds.frame_len = r.get<std::uint32_t>("frame_len");
  if (ds.frame_len == 0) throw FormatError("frame_len is zero", len_at);
  const auto n = r.get<std::uint32_t>("num_records");
  const auto classes_at = r.offset();
  const auto classes = r.get<std::uint32_t>("num_classes");
  if (classes != kNumClasses) throw FormatError("expected 8 classes", classes_at);
  ds.sample_rate_hz = r.get<double>("sample_rate_hz");
  const std::size_t record_bytes = 2 + 2 * ds.frame_len * sizeof(float);
  r.need(static_cast<std::size_t>(n) * record_bytes, "records");
  ds.labels.reserve(n);
  ds.snrs.reserve(n);
  ds.iq.reserve(static_cast<std::size_t>(n) * 2 * ds.frame_len);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto at = r.offset();
    const auto label = r.get<std::uint8_t>("label");
    if (label >= kNumClasses) throw FormatError("label " + std::to_string(label) + " out of range", at);
    ds.labels.push_back(label);
    ds.snrs.push_back(r.get<std::int8_t>("snr"));
    for (std::size_t t = 0; t < 2 * ds.frame_len; ++t) ds.iq.push_back(r.get<float>("samples"));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after the last record", r.offset());
  return ds;
}

Manifest load_manifest(const std::string& path) {
  const auto raw = binio::read_file(path);
  const auto pairs = binio::parse_key_values(std::string(raw.begin(), raw.end()), path);
  Manifest m;
  m.version = 0;
  std::size_t line = 0;
  for (const auto& [k, v] : pairs) {
    ++line;
    if (k == "format_version") {
      m.version = static_cast<std::uint32_t>(parse_u64(v, k, line));
    } else if (k == "classes") {
      m.classes.clear();
      std::size_t s = 0;
      while (s <= v.size()) {
        auto e = v.find(',', s);
        if (e == std::string::npos) e = v.size();
        m.classes.push_back(v.substr(s, e - s));
        s = e + 1;
      }
    } else if (k == "frame_len") {
      m.frame_len = parse_u64(v, k, line);
    } else if (k == "sample_rate_hz") {
      m.sample_rate_hz = std::stod(v);
    } else if (k == "num_records") {
      m.num_records = parse_u64(v, k, line);
    } else if (k == "seed") {
      m.seed = parse_u64(v, k, line);
    } else if (k == "channel_digest") {
      m.channel_digest = v;
    } else if (k == "payload_digest") {
      m.payload_digest = v;
    } else if (k.rfind("count.", 0) == 0) {
      const auto dot = k.find('.', 6);
      if (dot == std::string::npos) throw FormatError("malformed count key '" + k + "'", line);
      const std::string name = k.substr(6, dot - 6);
      const auto it = std::find(m.classes.begin(), m.classes.end(), name);
      if (it == m.classes.end()) throw FormatError("count for unknown class '" + name + "'", line);
      const int label = static_cast<int>(it - m.classes.begin());
      m.counts[{label, std::stoi(k.substr(dot + 1))}] = parse_u64(v, k, line);
    } else {
      throw FormatError("unknown manifest key '" + k + "'", line);
    }
  }
  if (m.version != kFormatVersion) throw FormatError("unsupported manifest version", 0);
  return m;
}

void verify_manifest(const Manifest& manifest, const Dataset& ds) {
  const auto rescan = make_manifest(ds, manifest.seed, manifest.channel_digest);
  if (manifest.num_records != ds.size()) throw FormatError("manifest record count disagrees with the payload", 0);
  if (manifest.counts != rescan.counts) throw FormatError("manifest per-cell counts disagree with the payload", 0);
  if (manifest.frame_len != ds.frame_len) throw FormatError("manifest frame_len disagrees with the payload", 0);
}

Split split_dataset(const Dataset& ds, std::uint64_t shuffle_seed) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < ds.size(); ++i) cells[{ds.labels[i], ds.snrs[i]}].push_back(i);
  Split split;
  std::uint64_t cell_no = 0;
  for (auto& [key, idx] : cells) {
    SeededRng rng = SeededRng::derive(shuffle_seed, cell_no++);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const std::size_t tenth = idx.size() / 10;
    split.valid.insert(split.valid.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(tenth));
    split.test.insert(split.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(tenth),
                      idx.begin() + static_cast<std::ptrdiff_t>(2 * tenth));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(2 * tenth), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.valid.begin(), split.valid.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<std::vector<std::size_t>> iterate_batches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                      std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  SeededRng rng(shuffle_seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    const auto e = std::min(order.size(), s + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s), order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return batches;
}

template <class T>
Tensor<T> gather(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t L = ds.frame_len;
  Tensor<T> out({indices.size(), 2, L});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= ds.size()) throw ConfigError("record index out of range");
    const auto f = ds.frame(indices[b]);
    std::copy(f.begin(), f.end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * 2 * L));
  }
  return out;
}

template Tensor<float> gather<float>(const Dataset&, std::span<const std::size_t>);
template Tensor<double> gather<double>(const Dataset&, std::span<const std::size_t>);

std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(ds.labels.at(i));
  return out;
}

std::vector<std::size_t> select_snr(const Dataset& ds, std::span<const std::size_t> indices, int snr_db) {
  std::vector<std::size_t> out;
  for (auto i : indices) {
    if (ds.snrs.at(i) == snr_db) out.push_back(i);
  }
  return out;
}

}  // namespace freqadv::data
