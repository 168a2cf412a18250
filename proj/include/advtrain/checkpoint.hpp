#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "advtrain/model.hpp"

namespace advtrain {

inline constexpr const char* kCheckpointFormat = "advtrain-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// Checkpoints are JSON: a format/version tag, the dropout rate, per-layer
// activations and a name -> {shape, data} map. Doubles are written in
// shortest round-trip form, so save/load is bitwise exact.
nlohmann::json checkpoint_to_json(const ModelParams& params);
ModelParams checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace advtrain
