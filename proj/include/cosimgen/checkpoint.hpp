#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cosimgen/nn/layers.hpp"
#include "cosimgen/tensor.hpp"

namespace cosimgen {

// Single-file binary container: magic, format version, JSON directory, then
// raw little-endian f64 blobs. Writes go through a temp file + rename so a
// crash never leaves a truncated checkpoint behind.
struct Checkpoint {
    uint32_t format_version = 1;
    std::string kind; // "diffusion" or "sr"
    int64_t step = 0;
    std::string config_text;  // TrainConfig snapshot, key = value text
    std::string palette_json; // empty when not applicable
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies parameter values into / out of a checkpoint tensor list by name.
void store_params(Checkpoint& ckpt, const nn::ParamRefs& params);
void restore_params(const Checkpoint& ckpt, const nn::ParamRefs& params);

} // namespace cosimgen
