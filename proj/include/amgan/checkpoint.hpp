#pragma once

#include "amgan/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace amgan {

// Hyperparameters and run metadata stored in the JSON sidecar.
struct CheckpointMeta {
  GeneratorConfig config;
  bool no_attention = false;
  bool no_discriminator = false;
  bool no_acc = false;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  std::string target = "mr";
};

// Writes the binary tensor file at `path` and its sidecar at `path`.json.
void save_checkpoint(const GeneratorParams& g, const CheckpointMeta& meta, const std::filesystem::path& path);

struct LoadedCheckpoint {
  GeneratorParams generator;
  CheckpointMeta meta;
};

// Builds the generator from the sidecar configuration.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
// As above, but the sidecar must agree with `expected` field by field.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const GeneratorConfig& expected);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace amgan
