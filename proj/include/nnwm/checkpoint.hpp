#pragma once

#include <filesystem>

#include <json.hpp>

#include "nnwm/model.hpp"

namespace nnwm {

// Checkpoint file, little-endian throughout:
//   bytes 0..7   magic "NNWMCKPT"
//   u32          format version (1)
//   u64          length of the architecture/metadata JSON blob
//   ...          JSON blob: {"architecture": {...}, "metadata": {...}}
//   ...          raw IEEE-754 doubles for every parameter tensor, in layer
//                order, weight before bias
// Save -> load -> save is byte-identical.
struct Checkpoint {
  HostModel model;
  nlohmann::json metadata;
};

nlohmann::json architecture_json(const HostModel& model);
HostModel model_from_architecture(const nlohmann::json& arch);

void save_checkpoint(const std::filesystem::path& path, const HostModel& model,
                     const nlohmann::json& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nnwm
