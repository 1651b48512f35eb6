#pragma once

#include <functional>
#include <vector>

#include "cosimgen/dataset.hpp"
#include "cosimgen/tensor.hpp"

namespace cosimgen {

// Linear DDPM schedule plus the derived per-step constants.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;
};

NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

struct DiffusionState {
    PairTensor x_t;
    int t = 0;
    Tensor eps;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Tensor q_sample(const Tensor& x0, const NoiseSchedule& schedule, int t, const Tensor& eps);

// x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t), clamped to [-1,1].
Tensor predict_x0(const Tensor& x_t, const NoiseSchedule& schedule, int t, const Tensor& eps_hat);
Tensor predict_x0_preclamp(const Tensor& x_t, const NoiseSchedule& schedule, int t, const Tensor& eps_hat);

// eps-predictor under sampling: (x_t, t) -> eps_hat. The conditioning
// embedding is bound by the caller, which is what makes class and text
// conditioning share one code path.
using EpsModelFn = std::function<Tensor(const Tensor& x_t, int t)>;

struct SampleResult {
    PairTensor output;
    std::vector<Tensor> snapshots; // x0_hat every snapshot_every steps
};

// Ancestral DDPM reverse loop from pure noise. Takes no data sample on
// purpose; NaN at any step aborts with a diagnostic that names the step.
SampleResult sample(const EpsModelFn& model, const NoiseSchedule& schedule, int channels, int height, int width,
                    int snapshot_every, Rng& rng);

} // namespace cosimgen
