#pragma once

#include <cstdint>
#include <string>

#include "ipccf/core.hpp"
#include "ipccf/model.hpp"

namespace ipccf {

/// Checkpoint layout: magic "IPCCF001", then num_users, num_items, d, K, L as
/// little-endian u64, then node embeddings, intent embeddings, fusion weights
/// and fusion bias as row-major little-endian f32.
struct CheckpointHeader {
  std::uint64_t num_users = 0;
  std::uint64_t num_items = 0;
  std::uint64_t dim = 0;
  std::uint64_t num_intents = 0;
  std::uint64_t num_layers = 0;
};

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const ModelParams& params);

struct Checkpoint {
  CheckpointHeader header;
  ModelParams params;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace ipccf
