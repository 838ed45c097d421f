#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "freqadv/models.hpp"

namespace freqadv::models {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Training provenance. Stored next to the checkpoint as `<path>.meta`
/// (key=value text) because the binary layout has no slot for it.
struct CheckpointMeta {
  std::string optimizer;
  std::uint64_t seed = 0;
  double valid_accuracy = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  Network<float> model;
  CheckpointMeta meta;
};

/// Writes `path` and `path.meta`. IoError when either cannot be written.
void save_checkpoint(const std::string& path, const Network<float>& model, const CheckpointMeta& meta);

/// Reads a checkpoint and its sidecar (a missing sidecar leaves the metadata
/// at defaults). FormatError on bad magic/version/arch id, truncation,
/// tensor names or shapes that differ from the architecture, or an arch id
/// other than `expected` when one is given.
Checkpoint load_checkpoint(const std::string& path, std::optional<Arch> expected = std::nullopt);

}  // namespace freqadv::models
