#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cosimgen/checkpoint.hpp"
#include "cosimgen/config.hpp"
#include "cosimgen/dataset.hpp"
#include "cosimgen/diffusion.hpp"
#include "cosimgen/encoders.hpp"
#include "cosimgen/losses.hpp"
#include "cosimgen/superres.hpp"
#include "cosimgen/unet.hpp"

namespace cosimgen {

// Adaptive moment estimation with bias correction; one instance per
// parameter group. Moment tensors ride along in checkpoints under prefix.
class AdamOptimizer {
public:
    AdamOptimizer(std::string prefix, nn::ParamRefs params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void zero_grad();
    void step();
    double lr() const { return lr_; }
    int64_t steps_taken() const { return t_; }

    void store_state(Checkpoint& ckpt) const;
    void restore_state(const Checkpoint& ckpt);

private:
    std::string prefix_;
    nn::ParamRefs params_;
    std::vector<Tensor> m_, v_;
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
};

void scale_grads(const nn::ParamRefs& params, double factor);

// Everything trained jointly for conditional pair generation. Construction is
// deterministic in cfg.seed; each component draws from its own named stream.
struct DiffusionModel {
    TrainConfig cfg;
    ClassPalette palette;
    EncoderConfig enc_cfg;
    TextEncoder text_enc;
    ClassEncoder class_enc;
    TimestepEncoder time_enc;
    UNet unet;
    Discriminator disc;
    NoiseSchedule schedule;

    DiffusionModel(const TrainConfig& cfg, const ClassPalette& palette);

    nn::ParamRefs generator_params();
    nn::ParamRefs discriminator_params();
    nn::ParamRefs all_params();
};

// Binds the model and one semantic embedding (class or text: the hot-swap
// surface) into the pure sampler interface.
EpsModelFn make_eps_fn(const DiffusionModel& model, const Tensor& sem_emb);

Checkpoint make_diffusion_checkpoint(DiffusionModel& model, int64_t step, const AdamOptimizer* gen_opt,
                                     const AdamOptimizer* disc_opt);
DiffusionModel diffusion_model_from_checkpoint(const Checkpoint& ckpt);

struct StepLog {
    int64_t step = 0;
    LossReport losses;
    double d_loss = 0.0;
    bool d_updated = false;
};

struct TrainDiffusionResult {
    std::vector<StepLog> trace;
    std::string checkpoint_path; // last checkpoint written
    bool aborted_non_finite = false;
    int64_t abort_step = -1;
};

// Full training loop: initial checkpoint, cfg.steps optimization steps,
// periodic + final checkpoints, NDJSON log lines to ndjson_log when given.
// A non-finite loss aborts immediately; the last good checkpoint survives.
TrainDiffusionResult train_diffusion(DiffusionModel& model, const std::vector<SamplePair>& dataset,
                                     const std::string& out_dir, std::ostream* ndjson_log = nullptr);

Checkpoint make_sr_checkpoint(SrModel& model, int64_t step, const TrainConfig& cfg, const AdamOptimizer* opt);
SrModel sr_model_from_checkpoint(const Checkpoint& ckpt);

struct TrainSrResult {
    std::vector<SrLossReport> trace;
    std::string checkpoint_path;
    bool aborted_non_finite = false;
    int64_t abort_step = -1;
};

// Two-scale SR training with shared weights: every step optimizes both the
// quarter->half and half->full reconstructions of one HR pair.
TrainSrResult train_sr(SrModel& model, const std::vector<Tensor>& hr_pairs, const TrainConfig& cfg,
                       const std::string& out_dir, std::ostream* ndjson_log = nullptr);

} // namespace cosimgen
