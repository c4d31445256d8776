#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "cagnet/labels.hpp"
#include "cagnet/model.hpp"

namespace cagnet {

inline constexpr int kCheckpointVersion = 1;

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct Checkpoint {
  ModelConfig config;
  Task task = Task::Valence;
  ModelParams<float> params;
};

// Layout: one line of compact JSON
//   {"format_version":1,"config":{...},"task":"valence",
//    "tensors":[{"path":"...","shape":[...]}, ...]}
// terminated by '\n', then every tensor as little-endian float32 in header
// order. Tensors are written in sorted path order.
void save_checkpoint(const ModelParams<float>& params, const ModelConfig& config, Task task,
                     const std::filesystem::path& path);

// Throws FormatError for an unsupported version, a truncated payload or a
// shape in the header that disagrees with the config (message names the path).
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cagnet
