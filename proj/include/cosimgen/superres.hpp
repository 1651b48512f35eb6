#pragma once

#include <vector>

#include "cosimgen/nn/layers.hpp"
#include "cosimgen/tensor.hpp"

namespace cosimgen {

// Fixed random-weight conv stack standing in for a pretrained backbone.
// Weights depend only on the seed, so features are reproducible everywhere.
class PerceptualExtractor {
public:
    explicit PerceptualExtractor(int in_channels, uint64_t seed = 0x5eed);

    // Level-6 features: output of the sixth convolution.
    Tensor features(const Tensor& x) const;
    // dL/dx given dL/dfeatures; the extractor itself is frozen.
    Tensor backward_input(const Tensor& x, const Tensor& g_feat) const;

private:
    std::vector<nn::Conv2d> convs_;
};

// mean |phi(x) - phi(y)|^2 at the level-6 tap.
double perceptual_loss(const PerceptualExtractor& extractor, const Tensor& x, const Tensor& y);

struct SrConfig {
    int channels = 6;
    int hidden = 64;
    int upscale = 2;
    double noise_sigma = 0.02;
    double lambda_perc = 0.1;
};

struct SrLossReport {
    double l_mse = 0.0;
    double l_perc = 0.0;
    double l_total = 0.0;
    double lambda = 0.1;
};

// Efficient sub-pixel CNN: 5x5 conv -> 3x3 conv -> 3x3 conv to r^2*C channels
// -> pixel shuffle -> clamp.
class SrModel {
public:
    SrModel(const SrConfig& cfg, Rng& rng);

    struct Cache {
        Tensor x, z1, a1, z2, a2, z3, shuffled; // shuffled is pre-clamp output
    };
    Tensor forward(const Tensor& x_lr) const;
    Tensor forward(const Tensor& x_lr, Cache& cache) const;
    // g_hr is dL/d(clamped output); clamp gates the gradient.
    Tensor backward(const Cache& cache, const Tensor& g_hr, bool acc = true);

    void append_params(const std::string& prefix, nn::ParamRefs& out);
    const SrConfig& config() const { return cfg_; }

private:
    SrConfig cfg_;
    nn::Conv2d c1_, c2_, c3_;
};

// One optimization-ready step: corrupt LR with N(0, sigma^2), predict HR,
// evaluate MSE + lambda * perceptual, accumulate model gradients.
SrLossReport sr_train_step(SrModel& model, const PerceptualExtractor& extractor, const Tensor& x_lr_gt,
                           const Tensor& x_hr_gt, double noise_sigma, double lambda, Rng& rng);

// Loss evaluation without gradient work, for held-out reporting.
SrLossReport sr_eval(const SrModel& model, const PerceptualExtractor& extractor, const Tensor& x_lr,
                     const Tensor& x_hr, double lambda);

// sr_forward applied twice: 128 -> 256 -> 512 with shared weights.
Tensor upscale_cascade(const SrModel& model, const Tensor& x_128, Tensor* intermediate_256 = nullptr);

} // namespace cosimgen
