#include "freqadv/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <limits>

#include "binio.hpp"
#include "freqadv/errors.hpp"

namespace freqadv::models {

void save_checkpoint(const std::string& path, const Network<float>& model, const CheckpointMeta& meta) {
  binio::Writer w;
  w.magic("AMCM");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(model.arch()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    if (p.name.size() > std::numeric_limits<std::uint16_t>::max()) throw ConfigError("tensor name too long");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : p.value.data()) w.put<float>(v);
  }
  binio::write_file(path, w.data());

  char acc[64];
  std::snprintf(acc, sizeof acc, "%.17g", meta.valid_accuracy);
  binio::write_text(path + ".meta", "arch=" + std::string(arch_name(model.arch())) + "\noptimizer=" + meta.optimizer +
                                        "\nseed=" + std::to_string(meta.seed) + "\nvalid_accuracy=" + acc +
                                        "\nepochs_run=" + std::to_string(meta.epochs_run) +
                                        "\nbest_epoch=" + std::to_string(meta.best_epoch) + "\n");
}

Checkpoint load_checkpoint(const std::string& path, std::optional<Arch> expected) {
  binio::Reader r(binio::read_file(path));
  if (r.str(4, "magic") != "AMCM") throw FormatError("bad checkpoint magic in '" + path + "'", 0);
  if (r.get<std::uint32_t>("version") != kCheckpointVersion) throw FormatError("unsupported checkpoint version", 4);
  const auto arch_at = r.offset();
  const auto arch_id = r.get<std::uint8_t>("arch id");
  if (arch_id >= kNumArchs) throw FormatError("unknown architecture id " + std::to_string(arch_id), arch_at);
  const Arch arch = static_cast<Arch>(arch_id);
  if (expected && *expected != arch) {
    throw FormatError("checkpoint holds " + std::string(arch_name(arch)) + ", expected " +
                          std::string(arch_name(*expected)),
                      arch_at);
  }
  const auto specs = arch_params(arch);
  const auto count_at = r.offset();
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != specs.size()) {
    throw FormatError(std::string(arch_name(arch)) + " has " + std::to_string(specs.size()) + " tensors, file lists " +
                          std::to_string(count),
                      count_at);
  }
  std::vector<Parameter<float>> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto at = r.offset();
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    const auto rank = r.get<std::uint8_t>("tensor rank");
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(r.get<std::uint32_t>("tensor dims"));
    if (name != specs[i].name || shape != specs[i].shape) {
      throw FormatError("tensor '" + name + "' " + shape_string(shape) + " does not match '" + specs[i].name + "' " +
                            shape_string(specs[i].shape),
                        at);
    }
    std::vector<float> values(shape_size(shape));
    r.need(values.size() * sizeof(float), "tensor data");
    for (float& v : values) v = r.get<float>("tensor data");
    params.push_back({name, Tensor<float>(shape, std::move(values))});
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after the last tensor", r.offset());

  Checkpoint ck{Network<float>::from_params(arch, std::move(params)), {}};
  const std::string meta_path = path + ".meta";
  if (std::filesystem::exists(meta_path)) {
    const auto raw = binio::read_file(meta_path);
    for (const auto& [k, v] : binio::parse_key_values(std::string(raw.begin(), raw.end()), meta_path)) {
      try {
        if (k == "optimizer") ck.meta.optimizer = v;
        else if (k == "seed") ck.meta.seed = std::stoull(v);
        else if (k == "valid_accuracy") ck.meta.valid_accuracy = std::stod(v);
        else if (k == "epochs_run") ck.meta.epochs_run = std::stoull(v);
        else if (k == "best_epoch") ck.meta.best_epoch = std::stoull(v);
        else if (k == "arch" && v != arch_name(arch)) throw FormatError("sidecar names a different architecture", 0);
      } catch (const std::logic_error&) {
        throw FormatError("bad value for '" + k + "' in " + meta_path, 0);
      }
    }
  }
  return ck;
}

}  // namespace freqadv::models
