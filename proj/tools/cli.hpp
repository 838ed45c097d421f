#pragma once

#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "freqadv/attacks.hpp"
#include "freqadv/dataset.hpp"
#include "freqadv/models.hpp"
#include "freqadv/training.hpp"

namespace freqadv::cli {

/// Everything an INI config can set. Seeds are not here: they all come from
/// --seed.
struct RunConfig {
  // [dataset]
  data::GenerateConfig dataset;
  // [train]
  models::Arch arch = models::Arch::baseline_cnn;
  training::TrainConfig train;
  // [attack]
  attacks::AttackConfig attack;
  std::string attack_split = "test";
  std::optional<int> attack_snr;  // unset attacks every SNR
  std::size_t attack_max_examples = 0;  // 0 = no cap
  // [eval]
  std::string eval_split = "test";
};

/// Parses sections [dataset], [train], [attack], [eval] of key = value
/// lines. Unknown sections or keys and malformed values are ConfigErrors.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);

/// Applies the master seed to every seeded stage.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

/// Indices of a named split ("train", "valid", "test" or "all") of a dataset
/// whose manifest carries `seed`.
std::vector<std::size_t> split_indices(const data::Dataset& ds, std::uint64_t seed, const std::string& name);

/// 0 ok, 1 usage or configuration, 2 data, format or io, 3 numeric.
int exit_code_for(const std::exception& e);

/// Full command line entry point. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace freqadv::cli
