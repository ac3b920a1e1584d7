#pragma once

#include <optional>
#include <string>

#include "salnet/model.hpp"
#include "salnet/train.hpp"

// Checkpoints are FCNW1 containers holding every ParamStore entry plus a
// "__config__" text block; optimizer state (Adam moments and step counter)
// rides along under "__optim__." names. Values round-trip bit-exactly.

namespace salnet {

struct LoadedCheckpoint {
  ModelConfig config;
  ParamStore params;
  std::optional<AdamState> optimizer;
};

void save_checkpoint(const ParamStore& params, const ModelConfig& config,
                     const AdamState* optimizer, const std::string& path);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace salnet
