#include "cosimgen/diffusion.hpp"

#include <cmath>
#include <sstream>

#include "cosimgen/common.hpp"

namespace cosimgen {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    require(T >= 1, "make_schedule: T must be >= 1");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
            "make_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    s.alphas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    double abar = 1.0;
    for (int t = 0; t < T; ++t) {
        const double beta =
            (T == 1) ? beta_start : beta_start + (beta_end - beta_start) * t / static_cast<double>(T - 1);
        s.betas[static_cast<size_t>(t)] = beta;
        s.alphas[static_cast<size_t>(t)] = 1.0 - beta;
        abar *= 1.0 - beta;
        s.alpha_bars[static_cast<size_t>(t)] = abar;
    }
    return s;
}

Tensor q_sample(const Tensor& x0, const NoiseSchedule& schedule, int t, const Tensor& eps) {
    require(t >= 0 && t < schedule.T, "q_sample: t out of range");
    require(x0.same_shape(eps), "q_sample: x0/eps shape mismatch");
    const double abar = schedule.alpha_bars[static_cast<size_t>(t)];
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    Tensor out(x0.shape());
    for (int64_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

Tensor predict_x0_preclamp(const Tensor& x_t, const NoiseSchedule& schedule, int t, const Tensor& eps_hat) {
    require(t >= 0 && t < schedule.T, "predict_x0: t out of range");
    require(x_t.same_shape(eps_hat), "predict_x0: shape mismatch");
    const double abar = schedule.alpha_bars[static_cast<size_t>(t)];
    const double inv_a = 1.0 / std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    Tensor out(x_t.shape());
    for (int64_t i = 0; i < x_t.size(); ++i) out[i] = (x_t[i] - b * eps_hat[i]) * inv_a;
    return out;
}

Tensor predict_x0(const Tensor& x_t, const NoiseSchedule& schedule, int t, const Tensor& eps_hat) {
    Tensor out = predict_x0_preclamp(x_t, schedule, t, eps_hat);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = clamp_unit(out[i]);
    return out;
}

SampleResult sample(const EpsModelFn& model, const NoiseSchedule& schedule, int channels, int height, int width,
                    int snapshot_every, Rng& rng) {
    require(channels > 0 && height > 0 && width > 0, "sample: bad output shape");
    require(snapshot_every >= 1, "sample: snapshot_every must be >= 1");
    Tensor x = Tensor::randn({channels, height, width}, rng);
    SampleResult result;
    for (int t = schedule.T - 1; t >= 0; --t) {
        const Tensor eps_hat = model(x, t);
        require(eps_hat.same_shape(x), "sample: model output shape mismatch");
        if (!eps_hat.all_finite() || !x.all_finite()) {
            std::ostringstream os;
            os << "sample: non-finite values at step t=" << t << " (x min=" << x.min() << " max=" << x.max()
               << ", eps_hat min=" << eps_hat.min() << " max=" << eps_hat.max() << ")";
            throw ValidationError(os.str());
        }
        const double beta = schedule.betas[static_cast<size_t>(t)];
        const double alpha = schedule.alphas[static_cast<size_t>(t)];
        const double abar = schedule.alpha_bars[static_cast<size_t>(t)];
        // Snapshot cadence counts from the first reverse step (t = T-1).
        if ((schedule.T - 1 - t) % snapshot_every == 0)
            result.snapshots.push_back(predict_x0(x, schedule, t, eps_hat));
        const double coef = beta / std::sqrt(1.0 - abar);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
        Tensor next(x.shape());
        for (int64_t i = 0; i < x.size(); ++i) next[i] = inv_sqrt_alpha * (x[i] - coef * eps_hat[i]);
        if (t > 0) {
            const double sigma = std::sqrt(beta);
            for (int64_t i = 0; i < next.size(); ++i) next[i] += sigma * rng.normal();
        }
        x = std::move(next);
    }
    for (int64_t i = 0; i < x.size(); ++i) x[i] = clamp_unit(x[i]);
    result.output.data = std::move(x);
    return result;
}

} // namespace cosimgen
