#pragma once

#include <string>
#include <vector>

#include "cosimgen/tensor.hpp"

namespace cosimgen {

// Everything the trainer needs, with defaults matching the full preset.
struct TrainConfig {
    // model
    int input_size = 128;
    int base_width = 64;
    std::vector<int> multipliers = {1, 2, 4, 8};
    int embed_dim = 512; // D
    int class_feat_dim = 256;
    int sinusoid_dim = 256;
    int gn_groups = 8;
    std::string text_backend = "hashed";

    // diffusion
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    // optimization
    double learning_rate = 2e-4;
    int batch_size = 24;
    double beta = 0.1;        // adversarial weight in the total loss
    double lambda_perc = 0.1; // perceptual weight in the SR loss
    uint64_t seed = 0;
    int steps = 10000;
    double freeze_at = 0.2; // discriminator freeze point as a fraction of steps
    std::string discriminator_mode = "alternate_freeze"; // or "never_freeze"
    int checkpoint_every = 1000;
    int snapshot_every = 100;

    // super-resolution
    double noise_sigma = 0.02;
    std::vector<int> scales = {256, 512};

    void validate() const;
};

// key = value lines with # comments; [section] headers are accepted and
// ignored (keys are globally unique).
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
std::string train_config_to_text(const TrainConfig& cfg);

// Applies one "key=value" override string, as given on the CLI.
void apply_override(TrainConfig& cfg, const std::string& assignment);

} // namespace cosimgen
