#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "freqadv/signal.hpp"
#include "freqadv/tensor.hpp"

namespace freqadv::data {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kNumClasses = signal::kNumModulations;

/// -20, -18, ..., 18 dB.
std::vector<int> default_snrs();

struct GenerateConfig {
  std::size_t per_cell = 100;  // examples per (class, snr)
  std::vector<int> snrs = default_snrs();
  std::size_t frame_len = 128;
  double sample_rate_hz = 8e6;
  signal::PulseConfig pulse;
  signal::ChannelParams channel;
  std::uint64_t seed = 1;
};

/// Labeled I/Q frames stored contiguously: record i occupies
/// iq[i*2*L, (i+1)*2*L), the I row followed by the Q row.
struct Dataset {
  std::size_t frame_len = 128;
  double sample_rate_hz = 8e6;
  std::vector<std::uint8_t> labels;
  std::vector<std::int8_t> snrs;
  std::vector<float> iq;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const float> frame(std::size_t i) const { return {iq.data() + i * 2 * frame_len, 2 * frame_len}; }
  std::span<float> frame(std::size_t i) { return {iq.data() + i * 2 * frame_len, 2 * frame_len}; }
  void push_back(std::uint8_t label, std::int8_t snr, std::span<const float> frame);
  bool operator==(const Dataset&) const = default;
};

struct Manifest {
  std::uint32_t version = kFormatVersion;
  std::vector<std::string> classes;
  std::size_t frame_len = 128;
  double sample_rate_hz = 8e6;
  std::size_t num_records = 0;
  std::uint64_t seed = 0;
  std::string channel_digest;
  std::string payload_digest;  // FNV-1a of the binary file
  std::map<std::pair<int, int>, std::size_t> counts;  // (label, snr_db) -> records

  bool operator==(const Manifest&) const = default;
};

/// One example through the full pipeline: random symbols, modulation, Rician
/// channel, crop, normalization, AWGN, normalization. Symbols cover the frame
/// plus rrc_span_symbols on each side so filter and delay transients fall outside the
/// crop.
std::vector<signal::cplx> synthesize_frame(signal::Modulation m, double snr_db, const GenerateConfig& cfg,
                                           SeededRng& rng);

/// Records are ordered by class, then SNR, then repetition. Example i uses
/// SeededRng::derive(cfg.seed, i).
Dataset generate_dataset(const GenerateConfig& cfg);

/// Counts per (label, snr) plus the given provenance fields.
Manifest make_manifest(const Dataset& ds, std::uint64_t seed, const std::string& channel_digest);

/// Writes `path` and `path.manifest`. The manifest's payload digest is filled
/// in from the written bytes and returned.
Manifest save_dataset(const std::string& path, const Dataset& ds, Manifest manifest);

/// FormatError (with byte offset) on bad magic, version, class count, label
/// or truncation; IoError when the file cannot be read.
Dataset load_dataset(const std::string& path);
Manifest load_manifest(const std::string& path);
/// Throws FormatError when the manifest counts disagree with a rescan.
void verify_manifest(const Manifest& manifest, const Dataset& ds);

struct Split {
  std::vector<std::size_t> train, valid, test;
};

/// Stratified 8:1:1 per (label, snr) cell: the cell is shuffled with
/// `shuffle_seed`, floor(n/10) go to valid, floor(n/10) to test, the rest to
/// train. Each list is sorted.
Split split_dataset(const Dataset& ds, std::uint64_t shuffle_seed);

/// Consecutive batches of a seeded permutation of `indices`. The final batch
/// may be short.
std::vector<std::vector<std::size_t>> iterate_batches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                      std::uint64_t shuffle_seed);

/// Frames of the given records as a [n, 2, L] tensor.
template <class T>
Tensor<T> gather(const Dataset& ds, std::span<const std::size_t> indices);
std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices);

/// Indices of records with the given SNR, in order.
std::vector<std::size_t> select_snr(const Dataset& ds, std::span<const std::size_t> indices, int snr_db);

}  // namespace freqadv::data
