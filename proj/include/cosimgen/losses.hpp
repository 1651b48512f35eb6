#pragma once

#include <vector>

#include "cosimgen/dataset.hpp"
#include "cosimgen/nn/layers.hpp"
#include "cosimgen/tensor.hpp"

namespace cosimgen {

struct LossReport {
    double l_diff = 0.0;
    double l_trip = 0.0;
    double l_adv = 0.0;
    double l_total = 0.0;
    double beta = 0.1;
};

// Mean squared error over all elements.
double diffusion_loss(const Tensor& eps_true, const Tensor& eps_pred);

// Derangement of batch indices for triplet negatives. Retries the draw while
// any index lands on a partner with identical condition bits; when the retry
// bound runs out the best draw is returned with collisions set.
struct NegativePermutation {
    std::vector<int> indices;
    bool collisions = false;
};
NegativePermutation permute_negatives(const std::vector<ConditionVector>& conditions, Rng& rng,
                                      int max_retries = 100);

// max(0, |a-p|^2 - |a-n|^2 + 1), single triple; callers average over a batch.
double triplet_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative);
double triplet_loss_grad(const Tensor& anchor, const Tensor& positive, const Tensor& negative, Tensor& g_anchor,
                         Tensor& g_positive, Tensor& g_negative);

struct DiscriminatorConfig {
    int in_channels = 6;
    std::vector<int> widths = {32, 64, 128, 256}; // one stride-2 conv per width
    int input_size = 128;
};

// Convolution-linear real/fake critic; output squashed to (0,1).
class Discriminator {
public:
    Discriminator(const DiscriminatorConfig& cfg, Rng& rng);

    struct Cache {
        std::vector<Tensor> conv_in;
        std::vector<Tensor> conv_out; // pre-activation
        Tensor pooled;
        int last_h = 0, last_w = 0;
    };
    double score(const Tensor& x) const; // D(x) in (0,1)
    double score(const Tensor& x, Cache& cache) const;
    // g_logit = dL/d(logit); returns dL/dx. Parameter grads only when acc.
    Tensor backward(const Cache& cache, double g_logit, bool acc = true);

    void append_params(const std::string& prefix, nn::ParamRefs& out);
    const DiscriminatorConfig& config() const { return cfg_; }

private:
    DiscriminatorConfig cfg_;
    std::vector<nn::Conv2d> convs_;
    nn::Dense head_;
};

// Pure score-level forms, used directly by the hand-arithmetic checks.
double adversarial_loss_from_score(double d_fake);
double discriminator_loss_from_scores(double d_real, double d_fake);

// 1 - D(x0_hat); gradient flows into x0_hat only, never into D's parameters.
double adversarial_loss(const Discriminator& d, const Tensor& x0_hat);
double adversarial_loss_grad(Discriminator& d, const Tensor& x0_hat, Tensor& g_x0_hat);

// -log D(real) - log(1 - D(fake)); fake is detached, so no input grad exists.
double discriminator_loss(Discriminator& d, const Tensor& real, const Tensor& fake, bool acc_grads = true);

LossReport total_loss(double l_diff, double l_trip, double l_adv, double beta = 0.1);

} // namespace cosimgen
