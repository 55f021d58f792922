#pragma once

#include <string>

#include "masa/model.hpp"

namespace masa {

// Checkpoint format: magic, u64 header length, JSON header (schema version,
// architecture config, ordered parameter names and shapes), then one flat
// little-endian float64 array per parameter in registry order.
void save_weights(const std::string& path, const ModelConfig& cfg, const ModelParams& params);

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};
Checkpoint load_weights(const std::string& path);

}  // namespace masa
