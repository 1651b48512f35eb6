#include "cosimgen/trainer.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>

#include "cosimgen/common.hpp"
#include "cosimgen/image_io.hpp"
#include "cosimgen/palette.hpp"

namespace cosimgen {

namespace {

std::string step_filename(const std::string& out_dir, const std::string& kind, int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%08" PRId64, step);
    return out_dir + "/" + kind + "_" + buf + ".ckpt";
}

EncoderConfig make_enc_cfg(const TrainConfig& cfg, int num_classes) {
    EncoderConfig e;
    e.embed_dim = cfg.embed_dim;
    e.class_feat_dim = cfg.class_feat_dim;
    e.sinusoid_dim = cfg.sinusoid_dim;
    e.num_classes = num_classes;
    e.num_timesteps = cfg.T;
    e.text_backend = cfg.text_backend;
    return e;
}

UNetConfig make_unet_cfg(const TrainConfig& cfg) {
    UNetConfig u;
    u.in_channels = 6;
    u.base_width = cfg.base_width;
    u.multipliers = cfg.multipliers;
    u.embed_dim = cfg.embed_dim;
    u.input_size = cfg.input_size;
    u.gn_groups = cfg.gn_groups;
    return u;
}

DiscriminatorConfig make_disc_cfg(const TrainConfig& cfg) {
    DiscriminatorConfig d;
    d.in_channels = 6;
    d.input_size = cfg.input_size;
    return d;
}

TextEncoder make_text_enc(const EncoderConfig& e, uint64_t seed) {
    Rng rng = rng_for(seed, "init/text");
    return TextEncoder(e, rng);
}
ClassEncoder make_class_enc(const EncoderConfig& e, uint64_t seed) {
    Rng rng = rng_for(seed, "init/class");
    return ClassEncoder(e, rng);
}
TimestepEncoder make_time_enc(const EncoderConfig& e, uint64_t seed) {
    Rng rng = rng_for(seed, "init/time");
    return TimestepEncoder(e, rng);
}
UNet make_unet(const TrainConfig& cfg, uint64_t seed) {
    Rng rng = rng_for(seed, "init/unet");
    return UNet(make_unet_cfg(cfg), rng);
}
Discriminator make_disc(const TrainConfig& cfg, uint64_t seed) {
    Rng rng = rng_for(seed, "init/disc");
    return Discriminator(make_disc_cfg(cfg), rng);
}

void write_ndjson(std::ostream* out, const StepLog& sl, double lr) {
    if (!out) return;
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "{\"step\":%" PRId64
                  ",\"l_diff\":%.17g,\"l_trip\":%.17g,\"l_adv\":%.17g,\"l_total\":%.17g,"
                  "\"d_loss\":%.17g,\"d_updated\":%s,\"lr\":%.17g}",
                  sl.step, sl.losses.l_diff, sl.losses.l_trip, sl.losses.l_adv, sl.losses.l_total, sl.d_loss,
                  sl.d_updated ? "true" : "false", lr);
    (*out) << buf << "\n";
    out->flush();
}

} // namespace

AdamOptimizer::AdamOptimizer(std::string prefix, nn::ParamRefs params, double lr, double beta1, double beta2,
                             double eps)
    : prefix_(std::move(prefix)), params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const nn::Parameter* p : params_) {
        require(p != nullptr && !p->name.empty(), "AdamOptimizer: unnamed parameter");
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void AdamOptimizer::zero_grad() {
    for (nn::Parameter* p : params_) p->zero_grad();
}

void AdamOptimizer::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        double* w = params_[i]->value.data();
        const double* g = params_[i]->grad.data();
        double* m = m_[i].data();
        double* v = v_[i].data();
        const int64_t n = params_[i]->value.size();
        for (int64_t e = 0; e < n; ++e) {
            m[e] = b1_ * m[e] + (1.0 - b1_) * g[e];
            v[e] = b2_ * v[e] + (1.0 - b2_) * g[e] * g[e];
            w[e] -= lr_ * (m[e] / c1) / (std::sqrt(v[e] / c2) + eps_);
        }
    }
}

void AdamOptimizer::store_state(Checkpoint& ckpt) const {
    Tensor t_tensor({1});
    t_tensor[0] = static_cast<double>(t_);
    ckpt.tensors.emplace_back(prefix_ + ".t", std::move(t_tensor));
    for (size_t i = 0; i < params_.size(); ++i) {
        ckpt.tensors.emplace_back(prefix_ + ".m:" + params_[i]->name, m_[i]);
        ckpt.tensors.emplace_back(prefix_ + ".v:" + params_[i]->name, v_[i]);
    }
}

void AdamOptimizer::restore_state(const Checkpoint& ckpt) {
    const Tensor* t_tensor = ckpt.find(prefix_ + ".t");
    require(t_tensor != nullptr && t_tensor->size() == 1, "AdamOptimizer: missing step counter " + prefix_ + ".t");
    t_ = static_cast<int64_t>((*t_tensor)[0]);
    for (size_t i = 0; i < params_.size(); ++i) {
        const Tensor* m = ckpt.find(prefix_ + ".m:" + params_[i]->name);
        const Tensor* v = ckpt.find(prefix_ + ".v:" + params_[i]->name);
        require(m != nullptr && v != nullptr, "AdamOptimizer: missing moments for " + params_[i]->name);
        require(m->same_shape(m_[i]) && v->same_shape(v_[i]), "AdamOptimizer: moment shape mismatch");
        m_[i] = *m;
        v_[i] = *v;
    }
}

void scale_grads(const nn::ParamRefs& params, double factor) {
    for (nn::Parameter* p : params) p->grad *= factor;
}

DiffusionModel::DiffusionModel(const TrainConfig& cfg_in, const ClassPalette& palette_in)
    : cfg(cfg_in), palette(palette_in), enc_cfg(make_enc_cfg(cfg_in, palette_in.num_classes)),
      text_enc(make_text_enc(enc_cfg, cfg_in.seed)), class_enc(make_class_enc(enc_cfg, cfg_in.seed)),
      time_enc(make_time_enc(enc_cfg, cfg_in.seed)), unet(make_unet(cfg_in, cfg_in.seed)),
      disc(make_disc(cfg_in, cfg_in.seed)), schedule(make_schedule(cfg_in.T, cfg_in.beta_start, cfg_in.beta_end)) {
    cfg.validate();
    require(palette.num_classes >= 1, "DiffusionModel: palette has no classes");
}

nn::ParamRefs DiffusionModel::generator_params() {
    nn::ParamRefs out;
    text_enc.append_params("text", out);
    class_enc.append_params("cls", out);
    time_enc.append_params("time", out);
    unet.append_params("unet", out);
    return out;
}

nn::ParamRefs DiffusionModel::discriminator_params() {
    nn::ParamRefs out;
    disc.append_params("disc", out);
    return out;
}

nn::ParamRefs DiffusionModel::all_params() {
    nn::ParamRefs out = generator_params();
    nn::ParamRefs d = discriminator_params();
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

EpsModelFn make_eps_fn(const DiffusionModel& model, const Tensor& sem_emb) {
    require(sem_emb.rank() == 1 && sem_emb.dim(0) == model.cfg.embed_dim, "make_eps_fn: embedding width mismatch");
    return [&model, sem_emb](const Tensor& x_t, int t) {
        TimestepEmbedding temb = model.time_enc.encode(t);
        return model.unet.forward(x_t, temb.vec, sem_emb);
    };
}

Checkpoint make_diffusion_checkpoint(DiffusionModel& model, int64_t step, const AdamOptimizer* gen_opt,
                                     const AdamOptimizer* disc_opt) {
    Checkpoint ckpt;
    ckpt.kind = "diffusion";
    ckpt.step = step;
    ckpt.config_text = train_config_to_text(model.cfg);
    ckpt.palette_json = palette_to_json(model.palette);
    store_params(ckpt, model.all_params());
    if (gen_opt) gen_opt->store_state(ckpt);
    if (disc_opt) disc_opt->store_state(ckpt);
    return ckpt;
}

DiffusionModel diffusion_model_from_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.kind == "diffusion", "expected a diffusion checkpoint, got kind '" + ckpt.kind + "'");
    TrainConfig cfg = parse_train_config(ckpt.config_text);
    ClassPalette palette = palette_from_json(ckpt.palette_json);
    DiffusionModel model(cfg, palette);
    restore_params(ckpt, model.all_params());
    return model;
}

TrainDiffusionResult train_diffusion(DiffusionModel& model, const std::vector<SamplePair>& dataset,
                                     const std::string& out_dir, std::ostream* ndjson_log) {
    const TrainConfig& cfg = model.cfg;
    require(!dataset.empty(), "train_diffusion: dataset is empty");
    const int S = cfg.input_size;
    for (const SamplePair& s : dataset)
        require(s.image.dim(1) == S && s.image.dim(2) == S, "train_diffusion: sample size != config input_size");
    std::filesystem::create_directories(out_dir);

    nn::ParamRefs gen_params = model.generator_params();
    nn::ParamRefs disc_params = model.discriminator_params();
    AdamOptimizer gen_opt("opt.gen", gen_params, cfg.learning_rate);
    AdamOptimizer disc_opt("opt.disc", disc_params, cfg.learning_rate);

    TrainDiffusionResult result;
    {
        Checkpoint init = make_diffusion_checkpoint(model, 0, &gen_opt, &disc_opt);
        result.checkpoint_path = step_filename(out_dir, "diffusion", 0);
        save_checkpoint(init, result.checkpoint_path);
    }

    const int B = cfg.batch_size;
    const int64_t freeze_steps = cfg.discriminator_mode == "never_freeze"
                                     ? static_cast<int64_t>(cfg.steps)
                                     : static_cast<int64_t>(std::llround(cfg.freeze_at * cfg.steps));
    const double numel = 6.0 * S * S;
    const int D = cfg.embed_dim;

    for (int64_t step = 0; step < cfg.steps; ++step) {
        Rng rng = rng_for(cfg.seed, "train/" + std::to_string(step));
        for (nn::Parameter* p : gen_params) p->zero_grad();
        for (nn::Parameter* p : disc_params) p->zero_grad();

        // Per-sample forward state kept around for the backward sweep.
        std::vector<const SamplePair*> batch(B);
        std::vector<int> ts(B);
        std::vector<Tensor> x0(B), eps(B), x_t(B), eps_hat(B), x0_pre(B), x0_hat(B), g_x0hat(B);
        std::vector<TimestepEncoder::Cache> tcache(B);
        std::vector<ClassEncoder::Cache> ccache(B);
        std::vector<TextEncoder::Cache> xcache(B);
        std::vector<UNet::Cache> ucache(B);
        std::vector<Tensor> temb(B), cemb(B), zemb(B);
        std::vector<ConditionVector> conds(B);

        double l_diff = 0.0, l_adv = 0.0;
        for (int i = 0; i < B; ++i) {
            batch[i] = &dataset[rng.uniform_index(dataset.size())];
            const SamplePair& s = *batch[i];
            conds[i] = s.condition;
            ts[i] = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(cfg.T)));
            x0[i] = pack_pair(s.image, s.mask_rgb).data;
            eps[i] = Tensor::randn({6, S, S}, rng);
            x_t[i] = q_sample(x0[i], model.schedule, ts[i], eps[i]);

            temb[i] = model.time_enc.encode(ts[i], tcache[i]).vec;
            cemb[i] = model.class_enc.encode(s.condition, ccache[i]).vec;
            zemb[i] = model.text_enc.encode(s.prompt, xcache[i]).vec;
            eps_hat[i] = model.unet.forward(x_t[i], temb[i], cemb[i], ucache[i]);

            l_diff += mse(eps[i], eps_hat[i]) / B;

            x0_pre[i] = predict_x0_preclamp(x_t[i], model.schedule, ts[i], eps_hat[i]);
            x0_hat[i] = x0_pre[i];
            for (int64_t e = 0; e < x0_hat[i].size(); ++e) x0_hat[i][e] = clamp_unit(x0_hat[i][e]);
            l_adv += adversarial_loss_grad(model.disc, x0_hat[i], g_x0hat[i]) / B;
        }

        // Triplet over the batch; B = 1 has no negatives to permute.
        double l_trip = 0.0;
        std::vector<Tensor> g_z(B, Tensor({D})), g_c(B, Tensor({D}));
        if (B >= 2) {
            NegativePermutation perm = permute_negatives(conds, rng);
            Tensor ga({D}), gp({D}), gn({D});
            for (int i = 0; i < B; ++i) {
                l_trip += triplet_loss_grad(zemb[i], cemb[i], cemb[static_cast<size_t>(perm.indices[i])], ga, gp,
                                            gn) /
                          B;
                const double inv_b = 1.0 / B;
                for (int64_t e = 0; e < D; ++e) {
                    g_z[i][e] += ga[e] * inv_b;
                    g_c[i][e] += gp[e] * inv_b;
                    g_c[static_cast<size_t>(perm.indices[i])][e] += gn[e] * inv_b;
                }
            }
        }

        LossReport report = total_loss(l_diff, l_trip, l_adv, cfg.beta);
        if (!std::isfinite(report.l_total)) {
            result.aborted_non_finite = true;
            result.abort_step = step;
            return result; // last good checkpoint stays on disk
        }

        // Generator backward: l_diff plus the clamp-gated adversarial chain
        // through x0_hat = (x_t - sqrt(1-abar) eps_hat) / sqrt(abar).
        for (int i = 0; i < B; ++i) {
            const double abar = model.schedule.alpha_bars[static_cast<size_t>(ts[i])];
            const double adv_factor = -std::sqrt(1.0 - abar) / std::sqrt(abar) * cfg.beta / B;
            Tensor gy({6, S, S});
            for (int64_t e = 0; e < gy.size(); ++e) {
                gy[e] = 2.0 * (eps_hat[i][e] - eps[i][e]) / (numel * B);
                if (x0_pre[i][e] > -1.0 && x0_pre[i][e] < 1.0) gy[e] += adv_factor * g_x0hat[i][e];
            }
            Tensor g_temb({D}), g_cemb({D});
            model.unet.backward(ucache[i], temb[i], cemb[i], gy, g_temb, g_cemb);
            g_cemb += g_c[i];
            model.class_enc.backward(ccache[i], g_cemb);
            model.time_enc.backward(tcache[i], g_temb);
            model.text_enc.backward(xcache[i], g_z[i]);
        }
        gen_opt.step();

        // Discriminator regime: one update per generator step until frozen.
        const bool d_active = step < freeze_steps;
        double d_loss = 0.0;
        if (d_active) {
            for (int i = 0; i < B; ++i) d_loss += discriminator_loss(model.disc, x0[i], x0_hat[i]) / B;
            if (std::isfinite(d_loss)) {
                scale_grads(disc_params, 1.0 / B);
                disc_opt.step();
            } else {
                result.aborted_non_finite = true;
                result.abort_step = step;
                return result;
            }
        }

        StepLog sl{step, report, d_loss, d_active};
        result.trace.push_back(sl);
        write_ndjson(ndjson_log, sl, cfg.learning_rate);

        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 != cfg.steps) {
            Checkpoint ckpt = make_diffusion_checkpoint(model, step + 1, &gen_opt, &disc_opt);
            result.checkpoint_path = step_filename(out_dir, "diffusion", step + 1);
            save_checkpoint(ckpt, result.checkpoint_path);
        }
    }

    if (cfg.steps > 0) {
        Checkpoint final_ckpt = make_diffusion_checkpoint(model, cfg.steps, &gen_opt, &disc_opt);
        result.checkpoint_path = step_filename(out_dir, "diffusion", cfg.steps);
        save_checkpoint(final_ckpt, result.checkpoint_path);
    }
    return result;
}

Checkpoint make_sr_checkpoint(SrModel& model, int64_t step, const TrainConfig& cfg, const AdamOptimizer* opt) {
    Checkpoint ckpt;
    ckpt.kind = "sr";
    ckpt.step = step;
    ckpt.config_text = train_config_to_text(cfg);
    nn::ParamRefs params;
    model.append_params("sr", params);
    store_params(ckpt, params);
    if (opt) opt->store_state(ckpt);
    return ckpt;
}

SrModel sr_model_from_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.kind == "sr", "expected an sr checkpoint, got kind '" + ckpt.kind + "'");
    TrainConfig cfg = parse_train_config(ckpt.config_text);
    SrConfig sr_cfg;
    sr_cfg.noise_sigma = cfg.noise_sigma;
    sr_cfg.lambda_perc = cfg.lambda_perc;
    // Width comes from the stored weights, not the config text: c1 is a
    // 5x5 conv with w {hidden, channels*25}.
    const Tensor* c1 = ckpt.find("sr.c1.w");
    require(c1 != nullptr && c1->shape().size() == 2 && c1->shape()[1] % 25 == 0,
            "sr checkpoint missing or malformed sr.c1.w");
    sr_cfg.hidden = c1->shape()[0];
    sr_cfg.channels = c1->shape()[1] / 25;
    Rng rng = rng_for(cfg.seed, "init/sr");
    SrModel model(sr_cfg, rng);
    nn::ParamRefs params;
    model.append_params("sr", params);
    restore_params(ckpt, params);
    return model;
}

TrainSrResult train_sr(SrModel& model, const std::vector<Tensor>& hr_pairs, const TrainConfig& cfg,
                       const std::string& out_dir, std::ostream* ndjson_log) {
    require(!hr_pairs.empty(), "train_sr: no training pairs");
    for (const Tensor& t : hr_pairs) {
        require(t.rank() == 3 && t.dim(0) == 6, "train_sr: pairs must be {6,H,W}");
        require(t.dim(1) % 4 == 0 && t.dim(2) % 4 == 0, "train_sr: pair size must be divisible by 4");
    }
    std::filesystem::create_directories(out_dir);

    nn::ParamRefs params;
    model.append_params("sr", params);
    AdamOptimizer opt("opt.sr", params, cfg.learning_rate);
    PerceptualExtractor extractor(model.config().channels);

    // Both supervision scales of every pair, precomputed once.
    std::vector<Tensor> full = hr_pairs, half, quarter;
    half.reserve(full.size());
    quarter.reserve(full.size());
    for (const Tensor& t : full) {
        half.push_back(downscale2x_box(t));
        quarter.push_back(downscale2x_box(half.back()));
    }

    TrainSrResult result;
    {
        Checkpoint init = make_sr_checkpoint(model, 0, cfg, &opt);
        result.checkpoint_path = step_filename(out_dir, "sr", 0);
        save_checkpoint(init, result.checkpoint_path);
    }

    for (int64_t step = 0; step < cfg.steps; ++step) {
        Rng rng = rng_for(cfg.seed, "sr-train/" + std::to_string(step));
        opt.zero_grad();
        const size_t idx = rng.uniform_index(full.size());

        SrLossReport low = sr_train_step(model, extractor, quarter[idx], half[idx], cfg.noise_sigma,
                                         cfg.lambda_perc, rng);
        SrLossReport high = sr_train_step(model, extractor, half[idx], full[idx], cfg.noise_sigma, cfg.lambda_perc,
                                          rng);
        SrLossReport avg;
        avg.l_mse = 0.5 * (low.l_mse + high.l_mse);
        avg.l_perc = 0.5 * (low.l_perc + high.l_perc);
        avg.l_total = 0.5 * (low.l_total + high.l_total);
        avg.lambda = cfg.lambda_perc;

        if (!std::isfinite(avg.l_total)) {
            result.aborted_non_finite = true;
            result.abort_step = step;
            return result;
        }
        scale_grads(params, 0.5);
        opt.step();
        result.trace.push_back(avg);

        if (ndjson_log) {
            char buf[256];
            std::snprintf(buf, sizeof(buf),
                          "{\"step\":%" PRId64 ",\"l_mse\":%.17g,\"l_perc\":%.17g,\"l_total\":%.17g,\"lr\":%.17g}",
                          step, avg.l_mse, avg.l_perc, avg.l_total, cfg.learning_rate);
            (*ndjson_log) << buf << "\n";
            ndjson_log->flush();
        }

        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 != cfg.steps) {
            Checkpoint ckpt = make_sr_checkpoint(model, step + 1, cfg, &opt);
            result.checkpoint_path = step_filename(out_dir, "sr", step + 1);
            save_checkpoint(ckpt, result.checkpoint_path);
        }
    }

    if (cfg.steps > 0) {
        Checkpoint final_ckpt = make_sr_checkpoint(model, cfg.steps, cfg, &opt);
        result.checkpoint_path = step_filename(out_dir, "sr", cfg.steps);
        save_checkpoint(final_ckpt, result.checkpoint_path);
    }
    return result;
}

} // namespace cosimgen
