#include "cosimgen/superres.hpp"

#include <cmath>

#include "cosimgen/common.hpp"

namespace cosimgen {

PerceptualExtractor::PerceptualExtractor(int in_channels, uint64_t seed) {
    Rng rng = rng_for(seed, "perceptual-extractor");
    // Six convs, stride 2 at layers 2 and 4, widths chosen to stay cheap.
    const int widths[6] = {16, 16, 32, 32, 64, 64};
    const int strides[6] = {1, 2, 1, 2, 1, 1};
    int cin = in_channels;
    for (int i = 0; i < 6; ++i) {
        convs_.emplace_back(cin, widths[i], 3, strides[i], 1, rng, std::sqrt(2.0));
        cin = widths[i];
    }
}

Tensor PerceptualExtractor::features(const Tensor& x) const {
    Tensor h = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].forward(h);
        if (i + 1 < convs_.size()) h = nn::silu(h);
    }
    return h;
}

Tensor PerceptualExtractor::backward_input(const Tensor& x, const Tensor& g_feat) const {
    // Re-run the forward to recover per-layer inputs; the stack is small.
    std::vector<Tensor> inputs;
    std::vector<Tensor> preact;
    Tensor h = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
        inputs.push_back(h);
        h = convs_[i].forward(h);
        preact.push_back(h);
        if (i + 1 < convs_.size()) h = nn::silu(h);
    }
    Tensor g = g_feat;
    for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
        if (i + 1 < static_cast<int>(convs_.size())) g = nn::silu_backward(preact[static_cast<size_t>(i)], g);
        // const_cast stays local: acc=false guarantees no parameter writes.
        g = const_cast<nn::Conv2d&>(convs_[static_cast<size_t>(i)]).backward(inputs[static_cast<size_t>(i)], g, false);
    }
    return g;
}

double perceptual_loss(const PerceptualExtractor& extractor, const Tensor& x, const Tensor& y) {
    require(x.same_shape(y), "perceptual_loss: shape mismatch");
    return mse(extractor.features(x), extractor.features(y));
}

SrModel::SrModel(const SrConfig& cfg, Rng& rng)
    : cfg_(cfg),
      c1_(cfg.channels, cfg.hidden, 5, 1, 2, rng, std::sqrt(2.0)),
      c2_(cfg.hidden, cfg.hidden, 3, 1, 1, rng, std::sqrt(2.0)),
      c3_(cfg.hidden, cfg.channels * cfg.upscale * cfg.upscale, 3, 1, 1, rng) {
    require(cfg.upscale >= 1, "SrModel: bad upscale factor");
}

Tensor SrModel::forward(const Tensor& x_lr) const {
    Cache cache;
    return forward(x_lr, cache);
}

Tensor SrModel::forward(const Tensor& x_lr, Cache& cache) const {
    require(x_lr.rank() == 3 && x_lr.dim(0) == cfg_.channels, "sr_forward: input must be {6,h,w}");
    cache.x = x_lr;
    cache.z1 = c1_.forward(x_lr);
    cache.a1 = nn::silu(cache.z1);
    cache.z2 = c2_.forward(cache.a1);
    cache.a2 = nn::silu(cache.z2);
    cache.z3 = c3_.forward(cache.a2);
    cache.shuffled = nn::pixel_shuffle(cache.z3, cfg_.upscale);
    Tensor out(cache.shuffled.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = clamp_unit(cache.shuffled[i]);
    return out;
}

Tensor SrModel::backward(const Cache& cache, const Tensor& g_hr, bool acc) {
    require(g_hr.same_shape(cache.shuffled), "sr backward: gradient shape mismatch");
    Tensor g(cache.shuffled.shape());
    for (int64_t i = 0; i < g.size(); ++i) {
        const double v = cache.shuffled[i];
        g[i] = (v > -1.0 && v < 1.0) ? g_hr[i] : 0.0;
    }
    g = nn::pixel_shuffle_backward(g, cfg_.upscale);
    g = c3_.backward(cache.a2, g, acc);
    g = nn::silu_backward(cache.z2, g);
    g = c2_.backward(cache.a1, g, acc);
    g = nn::silu_backward(cache.z1, g);
    return c1_.backward(cache.x, g, acc);
}

void SrModel::append_params(const std::string& prefix, nn::ParamRefs& out) {
    c1_.append_params(prefix + ".c1", out);
    c2_.append_params(prefix + ".c2", out);
    c3_.append_params(prefix + ".c3", out);
}

SrLossReport sr_train_step(SrModel& model, const PerceptualExtractor& extractor, const Tensor& x_lr_gt,
                           const Tensor& x_hr_gt, double noise_sigma, double lambda, Rng& rng) {
    require(noise_sigma >= 0.0 && lambda >= 0.0, "sr_train_step: negative hyperparameters");
    Tensor noisy(x_lr_gt.shape());
    for (int64_t i = 0; i < noisy.size(); ++i) noisy[i] = x_lr_gt[i] + noise_sigma * rng.normal();

    SrModel::Cache cache;
    const Tensor pred = model.forward(noisy, cache);
    require(pred.same_shape(x_hr_gt), "sr_train_step: HR shape mismatch");

    SrLossReport report;
    report.lambda = lambda;
    report.l_mse = mse(pred, x_hr_gt);

    // d(MSE)/d(pred)
    Tensor g(pred.shape());
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (int64_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - x_hr_gt[i]);

    if (lambda > 0.0) {
        const Tensor f_pred = extractor.features(pred);
        const Tensor f_gt = extractor.features(x_hr_gt);
        report.l_perc = mse(f_pred, f_gt);
        Tensor g_feat(f_pred.shape());
        const double fscale = 2.0 * lambda / static_cast<double>(f_pred.size());
        for (int64_t i = 0; i < f_pred.size(); ++i) g_feat[i] = fscale * (f_pred[i] - f_gt[i]);
        g += extractor.backward_input(pred, g_feat);
    }
    report.l_total = report.l_mse + lambda * report.l_perc;
    model.backward(cache, g, /*acc=*/true);
    return report;
}

SrLossReport sr_eval(const SrModel& model, const PerceptualExtractor& extractor, const Tensor& x_lr,
                     const Tensor& x_hr, double lambda) {
    const Tensor pred = model.forward(x_lr);
    SrLossReport report;
    report.lambda = lambda;
    report.l_mse = mse(pred, x_hr);
    report.l_perc = lambda > 0.0 ? perceptual_loss(extractor, pred, x_hr) : 0.0;
    report.l_total = report.l_mse + lambda * report.l_perc;
    return report;
}

Tensor upscale_cascade(const SrModel& model, const Tensor& x_128, Tensor* intermediate_256) {
    Tensor mid = model.forward(x_128);
    if (intermediate_256) *intermediate_256 = mid;
    return model.forward(mid);
}

} // namespace cosimgen
