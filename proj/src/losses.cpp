#include "cosimgen/losses.hpp"

#include <cmath>

#include "cosimgen/common.hpp"

namespace cosimgen {

double diffusion_loss(const Tensor& eps_true, const Tensor& eps_pred) { return mse(eps_true, eps_pred); }

NegativePermutation permute_negatives(const std::vector<ConditionVector>& conditions, Rng& rng, int max_retries) {
    const int b = static_cast<int>(conditions.size());
    if (b < 2) throw ValidationError("permute_negatives: need batch size >= 2 to form negatives");
    NegativePermutation result;
    std::vector<int> perm(static_cast<size_t>(b));
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        for (int i = 0; i < b; ++i) perm[static_cast<size_t>(i)] = i;
        for (int i = b - 1; i > 0; --i)
            std::swap(perm[static_cast<size_t>(i)], perm[rng.uniform_index(static_cast<uint64_t>(i) + 1)]);
        bool fixed_point = false;
        for (int i = 0; i < b; ++i)
            if (perm[static_cast<size_t>(i)] == i) fixed_point = true;
        if (fixed_point) continue;
        bool bit_collision = false;
        for (int i = 0; i < b; ++i)
            if (conditions[static_cast<size_t>(perm[static_cast<size_t>(i)])] == conditions[static_cast<size_t>(i)])
                bit_collision = true;
        result.indices = perm;
        if (!bit_collision) {
            result.collisions = false;
            return result;
        }
        result.collisions = true;
    }
    // All retries had bit collisions (or only fixed-point draws); fall back to
    // a rotation, which is always a derangement.
    if (result.indices.empty()) {
        result.indices.resize(static_cast<size_t>(b));
        for (int i = 0; i < b; ++i) result.indices[static_cast<size_t>(i)] = (i + 1) % b;
        result.collisions = true;
    }
    return result;
}

double triplet_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative) {
    require(anchor.size() == positive.size() && anchor.size() == negative.size(),
            "triplet_loss: embedding widths differ");
    const double dp = squared_distance(anchor, positive);
    const double dn = squared_distance(anchor, negative);
    return std::max(0.0, dp - dn + 1.0);
}

double triplet_loss_grad(const Tensor& anchor, const Tensor& positive, const Tensor& negative, Tensor& g_anchor,
                         Tensor& g_positive, Tensor& g_negative) {
    const double loss = triplet_loss(anchor, positive, negative);
    g_anchor = Tensor(anchor.shape());
    g_positive = Tensor(positive.shape());
    g_negative = Tensor(negative.shape());
    if (loss <= 0.0) return loss;
    for (int64_t i = 0; i < anchor.size(); ++i) {
        g_anchor[i] = 2.0 * (negative[i] - positive[i]);
        g_positive[i] = -2.0 * (anchor[i] - positive[i]);
        g_negative[i] = 2.0 * (anchor[i] - negative[i]);
    }
    return loss;
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
    require(!cfg.widths.empty() && cfg.input_size > 0, "Discriminator: bad config");
    int cin = cfg.in_channels;
    int size = cfg.input_size;
    for (int w : cfg.widths) {
        convs_.emplace_back(cin, w, 3, 2, 1, rng, std::sqrt(2.0));
        cin = w;
        size = (size + 1) / 2;
        require(size >= 1, "Discriminator: too many stride-2 layers for input size");
    }
    head_ = nn::Dense(cin, 1, rng);
}

double Discriminator::score(const Tensor& x) const {
    Cache cache;
    return score(x, cache);
}

double Discriminator::score(const Tensor& x, Cache& cache) const {
    require(x.rank() == 3 && x.dim(0) == cfg_.in_channels && x.dim(1) == cfg_.input_size &&
                x.dim(2) == cfg_.input_size,
            "Discriminator: input shape mismatch");
    cache.conv_in.clear();
    cache.conv_out.clear();
    Tensor h = x;
    for (const auto& conv : convs_) {
        cache.conv_in.push_back(h);
        Tensor z = conv.forward(h);
        cache.conv_out.push_back(z);
        h = nn::silu(z);
    }
    cache.last_h = h.dim(1);
    cache.last_w = h.dim(2);
    cache.pooled = nn::global_avg_pool(h);
    const Tensor logit = head_.forward(cache.pooled);
    return nn::sigmoid(logit[0]);
}

Tensor Discriminator::backward(const Cache& cache, double g_logit, bool acc) {
    Tensor gl({1});
    gl[0] = g_logit;
    Tensor g = head_.backward(cache.pooled, gl, acc);
    g = nn::global_avg_pool_backward(g, cache.last_h, cache.last_w);
    for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
        g = nn::silu_backward(cache.conv_out[static_cast<size_t>(i)], g);
        g = convs_[static_cast<size_t>(i)].backward(cache.conv_in[static_cast<size_t>(i)], g, acc);
    }
    return g;
}

void Discriminator::append_params(const std::string& prefix, nn::ParamRefs& out) {
    for (size_t i = 0; i < convs_.size(); ++i) convs_[i].append_params(prefix + ".conv" + std::to_string(i), out);
    head_.append_params(prefix + ".head", out);
}

double adversarial_loss_from_score(double d_fake) { return 1.0 - d_fake; }

double discriminator_loss_from_scores(double d_real, double d_fake) {
    return -std::log(d_real) - std::log(1.0 - d_fake);
}

double adversarial_loss(const Discriminator& d, const Tensor& x0_hat) {
    return adversarial_loss_from_score(d.score(x0_hat));
}

double adversarial_loss_grad(Discriminator& d, const Tensor& x0_hat, Tensor& g_x0_hat) {
    Discriminator::Cache cache;
    const double p = d.score(x0_hat, cache);
    // dL/dp = -1 and dp/dlogit = p(1-p); the discriminator itself stays frozen.
    g_x0_hat = d.backward(cache, -p * (1.0 - p), /*acc=*/false);
    return adversarial_loss_from_score(p);
}

double discriminator_loss(Discriminator& d, const Tensor& real, const Tensor& fake, bool acc_grads) {
    Discriminator::Cache cache_real, cache_fake;
    const double p_real = d.score(real, cache_real);
    const double p_fake = d.score(fake, cache_fake);
    if (acc_grads) {
        // BCE through the logit: dL/dz_real = p_real - 1, dL/dz_fake = p_fake.
        d.backward(cache_real, p_real - 1.0, /*acc=*/true);
        d.backward(cache_fake, p_fake, /*acc=*/true);
    }
    return discriminator_loss_from_scores(p_real, p_fake);
}

LossReport total_loss(double l_diff, double l_trip, double l_adv, double beta) {
    // Rejects true negatives only; NaN passes through so the trainer's
    // non-finite abort sees the poisoned value.
    require(!(l_diff < 0.0) && !(l_trip < 0.0) && !(l_adv < 0.0), "total_loss: components must be non-negative");
    LossReport r;
    r.l_diff = l_diff;
    r.l_trip = l_trip;
    r.l_adv = l_adv;
    r.beta = beta;
    r.l_total = l_diff + l_trip + beta * l_adv;
    return r;
}

} // namespace cosimgen
