// Acceptance gate: one line per criterion, nonzero exit when any fails.
// Criterion 6 trains the desk-preset model for 2000 steps and dominates the
// runtime; progress goes to stderr so logs show the run is alive.

#include <chrono>
#include <cstdarg>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cosimgen/common.hpp"
#include "cosimgen/config.hpp"
#include "cosimgen/dataset.hpp"
#include "cosimgen/diffusion.hpp"
#include "cosimgen/image_io.hpp"
#include "cosimgen/losses.hpp"
#include "cosimgen/metrics.hpp"
#include "cosimgen/palette.hpp"
#include "cosimgen/rng.hpp"
#include "cosimgen/superres.hpp"
#include "cosimgen/trainer.hpp"
#include "cosimgen/unet.hpp"

using namespace cosimgen;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail = "") {
    std::printf("criterion %d: %s - %s%s%s\n", idx, ok ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

void progress(const std::string& msg) {
    std::fprintf(stderr, "[acceptance] %s\n", msg.c_str());
    std::fflush(stderr);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
    va_list args;
    va_start(args, f);
    char buf[512];
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const std::string& tag) : path(fs::temp_directory_path() / ("cosimgen_accept_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() { fs::remove_all(path); }
};

// ---------------------------------------------------------------- criterion 1

bool criterion_palette() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(9001);
    std::map<int, ClassPalette> palettes;
    for (int trial = 0; trial < 1000; ++trial) {
        const int nc = 2 + static_cast<int>(rng.uniform_index(63)); // 2..64 classes
        auto it = palettes.find(nc);
        if (it == palettes.end()) it = palettes.emplace(nc, build_palette(nc)).first;
        const ClassPalette& p = it->second;

        ClassMap ids(64, 64);
        for (int& v : ids.ids) v = static_cast<int>(rng.uniform_index(static_cast<size_t>(nc)));
        RgbImage8 rgb = encode_mask(ids, p);
        ClassMap back = decode_mask(rgb, p);
        if (back.ids != ids.ids) return false;

        // additive noise with per-pixel norm strictly below min_pair_distance/2
        Tensor noisy({64, 64, 3});
        const double max_norm = p.min_pair_distance / 2.0 * 0.95;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                double d[3] = {rng.normal(), rng.normal(), rng.normal()};
                const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
                const double scale = rng.uniform() * max_norm / (n > 0 ? n : 1.0);
                for (int c = 0; c < 3; ++c) noisy.at(y, x, c) = rgb.pixel(y, x)[c] + d[c] * scale;
            }
        ClassMap noisy_back = decode_mask(noisy, p);
        if (noisy_back.ids != ids.ids) return false;
    }
    const double dt = seconds_since(t0);
    progress(fmt("criterion 1 finished in %.1f s", dt));
    return dt < 30.0;
}

// ---------------------------------------------------------------- criterion 2

bool criterion_fusion_oracle() {
    Rng rng(9002);
    const int widths[3] = {16, 32, 64};
    const int sizes[3] = {64, 32, 16};
    for (int level = 0; level < 3; ++level) {
        const int c = widths[level], s = sizes[level];
        for (int trial = 0; trial < 100; ++trial) {
            Tensor f = Tensor::randn({c, s, s}, rng);
            Tensor cmap = Tensor::randn({1, s, s}, rng);
            Tensor tmap = Tensor::randn({c, 1, 1}, rng);
            Tensor sp = spatial_fuse(f, cmap);
            Tensor sc = spectral_fuse(f, tmap);
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < s; ++y)
                    for (int x = 0; x < s; ++x) {
                        if (sp.at(ch, y, x) != f.at(ch, y, x) + cmap.at(0, y, x)) return false;
                        if (sc.at(ch, y, x) != f.at(ch, y, x) + tmap.at(ch, 0, 0)) return false;
                    }
        }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 3

bool criterion_forward_process(std::string& detail) {
    NoiseSchedule s = make_schedule(50, 1e-3, 0.25);
    Rng rng(9003);
    for (int t : {0, 7, 25, 49}) {
        Tensor x0 = Tensor::randn({6, 8, 8}, rng, 0.4);
        Tensor eps = Tensor::randn({6, 8, 8}, rng);
        Tensor xt = q_sample(x0, s, t, eps);
        Tensor back = predict_x0_preclamp(xt, s, t, eps);
        for (int64_t i = 0; i < x0.size(); ++i)
            if (std::fabs(back[i] - x0[i]) > 1e-9) {
                detail = fmt("roundtrip error at t=%d", t);
                return false;
            }
    }

    // x0 = 0, so Var(x_t) = 1 - abar_t; pool all elements across 1e4 draws
    for (int t : {10, 40}) {
        Tensor x0({1, 8, 8});
        double sum = 0.0, sum2 = 0.0;
        int64_t n = 0;
        for (int draw = 0; draw < 10000; ++draw) {
            Tensor eps = Tensor::randn({1, 8, 8}, rng);
            Tensor xt = q_sample(x0, s, t, eps);
            for (int64_t i = 0; i < xt.size(); ++i) {
                sum += xt[i];
                sum2 += xt[i] * xt[i];
                ++n;
            }
        }
        const double mean = sum / static_cast<double>(n);
        const double var = sum2 / static_cast<double>(n) - mean * mean;
        const double want = 1.0 - s.alpha_bars[static_cast<size_t>(t)];
        if (std::fabs(var - want) / want > 0.05) {
            detail = fmt("variance off at t=%d: got %.5f want %.5f", t, var, want);
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 4

bool criterion_loss_identities() {
    Tensor a({2, 2}), b({2, 2});
    if (diffusion_loss(a, b) != 0.0) return false;
    b.fill(1.0);
    if (diffusion_loss(a, b) != 1.0) return false;

    Tensor v({3});
    if (triplet_loss(v, v, v) != 1.0) return false; // positive == negative
    Tensor far({3});
    far[0] = 10.0;
    if (triplet_loss(v, v, far) != 0.0) return false;

    LossReport r = total_loss(1.0, 0.5, 0.2, 0.1);
    return r.l_total == 1.52;
}

// ---------------------------------------------------------------- criterion 5

// Central finite difference of f at slot.
double fd(double& slot, const std::function<double()>& f, double h = 1e-5) {
    const double saved = slot;
    slot = saved + h;
    const double up = f();
    slot = saved - h;
    const double down = f();
    slot = saved;
    return (up - down) / (2.0 * h);
}

double rel_err(double got, double want) {
    const double denom = std::max({std::fabs(got), std::fabs(want), 1e-8});
    return std::fabs(got - want) / denom;
}

bool criterion_gradient_audit(std::string& detail) {
    TrainConfig cfg;
    cfg.input_size = 16;
    cfg.base_width = 8;
    cfg.multipliers = {1, 2};
    cfg.embed_dim = 16;
    cfg.class_feat_dim = 8;
    cfg.sinusoid_dim = 8;
    cfg.gn_groups = 4;
    cfg.T = 10;
    cfg.steps = 1;
    ClassPalette palette = build_palette(4);
    DiffusionModel model(cfg, palette);

    Rng rng(9005);
    const double tol = 1e-3;

    // W_c through the class encoder
    {
        ConditionVector cond;
        cond.bits = {0, 1, 0, 1};
        Tensor probe = Tensor::randn({16}, rng);
        nn::ParamRefs params;
        model.class_enc.append_params("cls", params);
        for (nn::Parameter* p : params) p->zero_grad();
        ClassEncoder::Cache cache;
        (void)model.class_enc.encode(cond, cache);
        model.class_enc.backward(cache, probe);
        auto loss = [&] { return dot(model.class_enc.encode(cond).vec, probe); };
        nn::Parameter* wc = params[0]; // "cls.wc"
        int checked = 0;
        for (int64_t i = 8; i < 16 && checked < 3; i += 3, ++checked) { // row of class 1
            if (rel_err(wc->grad[i], fd(wc->value[i], loss)) >= tol) {
                detail = "W_c gradient mismatch";
                return false;
            }
        }
    }

    // text projection
    {
        PromptText prompt{"A photo of class_1, class_3"};
        Tensor probe = Tensor::randn({16}, rng);
        nn::ParamRefs params;
        model.text_enc.append_params("text", params);
        for (nn::Parameter* p : params) p->zero_grad();
        TextEncoder::Cache cache;
        (void)model.text_enc.encode(prompt, cache);
        model.text_enc.backward(cache, probe);
        auto loss = [&] { return dot(model.text_enc.encode(prompt).vec, probe); };
        int checked = 0;
        for (nn::Parameter* p : params) {
            const int64_t stride = std::max<int64_t>(1, p->value.size() / 2);
            for (int64_t i = 0; i < p->value.size() && checked < 4; i += stride, ++checked) {
                if (rel_err(p->grad[i], fd(p->value[i], loss)) >= tol) {
                    detail = "text projection gradient mismatch";
                    return false;
                }
            }
        }
        if (checked < 3) {
            detail = "text projection audit too small";
            return false;
        }
    }

    // spatial projectors, spectral projectors, and U-Net convs, through the
    // full U-Net forward
    {
        Tensor x = Tensor::randn({6, 16, 16}, rng, 0.5);
        Tensor temb = Tensor::randn({16}, rng, 0.5);
        Tensor cemb = Tensor::randn({16}, rng, 0.5);
        Tensor probe = Tensor::randn({6, 16, 16}, rng);

        nn::ParamRefs params;
        model.unet.append_params("unet", params);
        for (nn::Parameter* p : params) p->zero_grad();
        UNet::Cache cache;
        (void)model.unet.forward(x, temb, cemb, cache);
        Tensor g_temb({16}), g_cemb({16});
        (void)model.unet.backward(cache, temb, cemb, probe, g_temb, g_cemb);
        auto loss = [&] { return dot(model.unet.forward(x, temb, cemb), probe); };

        for (const char* needle : {".spatial.", ".spectral.", ".conv"}) {
            int checked = 0;
            for (nn::Parameter* p : params) {
                if (p->name.find(needle) == std::string::npos) continue;
                if (p->name.back() != 'w') continue;
                const int64_t stride = std::max<int64_t>(1, p->value.size() / 2);
                for (int64_t i = 0; i < p->value.size() && checked < 3; i += stride, ++checked) {
                    if (rel_err(p->grad[i], fd(p->value[i], loss)) >= tol) {
                        detail = fmt("U-Net gradient mismatch in group %s", needle);
                        return false;
                    }
                }
                if (checked >= 3) break;
            }
            if (checked < 3) {
                detail = fmt("fewer than 3 parameters audited for %s", needle);
                return false;
            }
        }
    }

    // adversarial loss leaves the discriminator untouched
    {
        nn::ParamRefs dparams = model.discriminator_params();
        for (nn::Parameter* p : dparams) p->zero_grad();
        Tensor x0_hat = Tensor::randn({6, 16, 16}, rng, 0.3);
        Tensor g_x0({6, 16, 16});
        (void)adversarial_loss_grad(model.disc, x0_hat, g_x0);
        for (nn::Parameter* p : dparams)
            for (int64_t i = 0; i < p->grad.size(); ++i)
                if (p->grad[i] != 0.0) {
                    detail = "adversarial loss leaked gradient into D";
                    return false;
                }
    }

    // discriminator loss leaves the generator untouched
    {
        nn::ParamRefs gparams = model.generator_params();
        for (nn::Parameter* p : gparams) p->zero_grad();
        Tensor temb = Tensor::randn({16}, rng, 0.5);
        Tensor cemb = Tensor::randn({16}, rng, 0.5);
        Tensor x = Tensor::randn({6, 16, 16}, rng, 0.5);
        Tensor fake = model.unet.forward(x, temb, cemb); // generator output, detached by construction
        Tensor real = Tensor::randn({6, 16, 16}, rng, 0.3);
        (void)discriminator_loss(model.disc, real, fake);
        for (nn::Parameter* p : gparams)
            for (int64_t i = 0; i < p->grad.size(); ++i)
                if (p->grad[i] != 0.0) {
                    detail = "discriminator loss leaked gradient into the generator";
                    return false;
                }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 6

TrainConfig desk_config() {
    TrainConfig cfg;
    cfg.input_size = 64;
    cfg.base_width = 16;
    cfg.multipliers = {1, 2, 4};
    cfg.embed_dim = 64;
    cfg.class_feat_dim = 32;
    cfg.sinusoid_dim = 32;
    cfg.gn_groups = 8;
    cfg.T = 50;
    cfg.beta_start = 1e-3;
    cfg.beta_end = 0.25;
    cfg.learning_rate = 2e-3;
    cfg.batch_size = 4;
    cfg.steps = 2000;
    cfg.checkpoint_every = 500;
    cfg.seed = 33;
    return cfg;
}

ClassMap decoded_mask_of(const PairTensor& pair, const ClassPalette& palette) {
    Tensor image, mask;
    unpack_pair(pair, image, mask);
    return decode_mask_chw(mask, palette);
}

bool criterion_overfit(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    ScratchDir data("shapes_data");
    ScratchDir run("shapes_run");

    ClassPalette palette = synthesize_shapes_dataset(data.path.string(), 8, 64, 900);
    DatasetManifest manifest = load_manifest(data.path.string());
    if (manifest.records.size() != 8) {
        detail = "shapes dataset did not load";
        return false;
    }
    std::vector<SamplePair> samples;
    for (const SampleRecord& rec : manifest.records) samples.push_back(load_sample(rec, palette, 64));

    TrainConfig cfg = desk_config();
    DiffusionModel model(cfg, palette);
    progress("criterion 6: training 2000 steps at the desk preset (the long part)");
    std::ofstream log((run.path / "train_log.ndjson").string());
    TrainDiffusionResult res = train_diffusion(model, samples, run.path.string(), &log);
    if (res.aborted_non_finite) {
        detail = fmt("training aborted non-finite at step %" PRId64, res.abort_step);
        return false;
    }
    progress(fmt("criterion 6: training done in %.0f s", seconds_since(t0)));

    // l_diff reduction: first 10 steps vs last 50
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 10; ++i) early += res.trace[static_cast<size_t>(i)].losses.l_diff / 10.0;
    for (size_t i = res.trace.size() - 50; i < res.trace.size(); ++i) late += res.trace[i].losses.l_diff / 50.0;
    const double reduction = early / late;
    if (!(reduction >= 10.0)) {
        detail = fmt("l_diff reduction %.2fx < 10x", reduction);
        return false;
    }

    // class-conditioned sampling: 16 samples cycling the three shape classes
    std::vector<ConditionVector> queried;
    std::vector<ClassMap> decoded;
    std::vector<std::set<int>> class_sets, text_sets;
    for (int i = 0; i < 16; ++i) {
        ConditionVector cond;
        cond.bits.assign(static_cast<size_t>(palette.num_classes), 0);
        const int cls = 1 + (i % 3);
        cond.bits[static_cast<size_t>(cls)] = 1;

        Tensor c_emb = model.class_enc.encode(cond).vec;
        Rng rng = rng_for(7000, "sample/" + std::to_string(i));
        SampleResult s = sample(make_eps_fn(model, c_emb), model.schedule, 6, 64, 64, cfg.T, rng);
        ClassMap m = decoded_mask_of(s.output, palette);
        queried.push_back(cond);
        decoded.push_back(m);
        class_sets.push_back(classes_present(m));

        // hot-swap: text embedding in the conditioning slot, same noise stream
        PromptText prompt = synthesize_prompt(cond, palette);
        Tensor z_emb = model.text_enc.encode(prompt).vec;
        Rng rng_text = rng_for(7000, "sample/" + std::to_string(i));
        SampleResult st = sample(make_eps_fn(model, z_emb), model.schedule, 6, 64, 64, cfg.T, rng_text);
        text_sets.push_back(classes_present(decoded_mask_of(st.output, palette)));
    }
    PpvReport rep = ppv(queried, decoded);
    if (!(rep.value >= 0.9)) {
        detail = fmt("PPV %.3f < 0.9 (reduction was %.1fx)", rep.value, reduction);
        return false;
    }

    int agree = 0;
    for (int i = 0; i < 16; ++i) agree += class_sets[static_cast<size_t>(i)] == text_sets[static_cast<size_t>(i)];
    const double agreement = agree / 16.0;
    const double dt = seconds_since(t0);
    progress(fmt("criterion 6: reduction %.1fx, PPV %.3f, hot-swap agreement %.2f, %.0f s total", reduction,
                 rep.value, agreement, dt));
    if (!(agreement >= 0.8)) {
        detail = fmt("hot-swap agreement %.2f < 0.8", agreement);
        return false;
    }
    if (dt > 7200.0) {
        detail = fmt("runtime %.0f s exceeds the 2 h CPU budget", dt);
        return false;
    }
    detail = fmt("reduction %.1fx, PPV %.3f, agreement %.2f, %.0f s", reduction, rep.value, agreement, dt);
    return true;
}

// ---------------------------------------------------------------- criterion 7

bool criterion_metrics(std::string& detail) {
    // FID(A, A) on random features
    {
        FeatureSet a;
        Rng rng(9007);
        a.matrix = Tensor::randn({12, 4}, rng);
        a.extractor_id = "t";
        if (!(frechet_distance(a, a) <= 1e-6)) {
            detail = "FID(A,A) > 1e-6";
            return false;
        }
    }
    // closed-form Frechet oracle: 1-d sets with unit ddof-1 variance, mean gap 3
    {
        const double s = 1.0 / std::sqrt(2.0);
        FeatureSet x, y;
        x.matrix = Tensor({2, 1});
        y.matrix = Tensor({2, 1});
        x.matrix[0] = -s;
        x.matrix[1] = s;
        y.matrix[0] = 3.0 - s;
        y.matrix[1] = 3.0 + s;
        x.extractor_id = y.extractor_id = "t";
        if (std::fabs(frechet_distance(x, y) - 9.0) > 1e-8) {
            detail = "closed-form FID oracle";
            return false;
        }
    }
    // KID against the double-loop oracle, n <= 16, f <= 4
    {
        Rng rng(9008);
        FeatureSet a, b;
        a.matrix = Tensor::randn({9, 4}, rng);
        b.matrix = Tensor::randn({16, 4}, rng);
        a.extractor_id = b.extractor_id = "t";
        auto kern = [&](const Tensor& X, int i, const Tensor& Y, int j, int f) {
            double d = 0.0;
            for (int k = 0; k < f; ++k) d += X[static_cast<int64_t>(i) * f + k] * Y[static_cast<int64_t>(j) * f + k];
            const double u = d / f + 1.0;
            return u * u * u;
        };
        const int n = 9, m = 16, f = 4;
        double kaa = 0.0, kbb = 0.0, kab = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) kaa += kern(a.matrix, i, a.matrix, j, f);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                if (i != j) kbb += kern(b.matrix, i, b.matrix, j, f);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) kab += kern(a.matrix, i, b.matrix, j, f);
        const double want = kaa / (9.0 * 8.0) + kbb / (16.0 * 15.0) - 2.0 * kab / (9.0 * 16.0);
        if (std::fabs(kernel_distance(a, b) - want) > 1e-8) {
            detail = "KID oracle mismatch";
            return false;
        }
    }
    // split-half bound
    {
        Rng rng(9009);
        Tensor all = Tensor::randn({16, 6}, rng);
        FeatureSet lo, hi;
        lo.matrix = Tensor({8, 6});
        hi.matrix = Tensor({8, 6});
        lo.extractor_id = hi.extractor_id = "t";
        for (int64_t i = 0; i < 48; ++i) {
            lo.matrix[i] = all[i];
            hi.matrix[i] = all[48 + i];
        }
        if (!(std::fabs(kernel_distance(lo, hi)) <= 3.0 / std::sqrt(8.0))) {
            detail = "KID split-half bound";
            return false;
        }
    }
    // sFID skip rule: a class with one crop on one side is skipped
    {
        MetricExtractor ext(3);
        ClassPalette pal = build_palette(3);
        auto block_map = [](int cls) {
            ClassMap m(24, 24);
            for (int y = 4; y < 20; ++y)
                for (int x = 4; x < 20; ++x) m.at(y, x) = cls;
            return m;
        };
        Rng rng(9010);
        std::vector<Tensor> ri, gi;
        std::vector<ClassMap> rm, gm;
        for (int i = 0; i < 3; ++i) {
            ri.push_back(Tensor::randn({3, 24, 24}, rng, 0.2));
            gi.push_back(Tensor::randn({3, 24, 24}, rng, 0.2));
            rm.push_back(block_map(1));
            gm.push_back(block_map(1));
        }
        rm[0] = block_map(2); // a single class-2 crop on the real side only
        SfidReport rep = semantic_fid(ri, rm, gi, gm, pal, ext);
        if (rep.per_class.count(2) != 0 || rep.skipped != std::vector<int>{2}) {
            detail = "sFID skip rule";
            return false;
        }
    }
    // PPV hand case
    {
        ClassMap m(10, 10);
        for (int x = 0; x < 10; ++x) {
            m.at(0, x) = 1;
            m.at(1, x) = 2;
        }
        ConditionVector c;
        c.bits = {0, 1, 1, 1};
        PpvReport rep = ppv({c}, {m});
        if (rep.value != 2.0 / 3.0) {
            detail = "PPV 2/3 hand case";
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 8

Tensor nearest_upsample2x(const Tensor& x) {
    Tensor y({x.dim(0), x.dim(1) * 2, x.dim(2) * 2});
    for (int c = 0; c < x.dim(0); ++c)
        for (int yy = 0; yy < y.dim(1); ++yy)
            for (int xx = 0; xx < y.dim(2); ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    return y;
}

// Smooth random field: bilinear blow-up of a coarse noise grid, clamped.
Tensor smooth_pair(int size, Rng& rng) {
    Tensor coarse = Tensor::randn({6, 4, 4}, rng, 0.6);
    Tensor fine = resize_bilinear(coarse, size, size);
    for (int64_t i = 0; i < fine.size(); ++i) fine[i] = clamp_unit(fine[i]);
    return fine;
}

bool criterion_superres(std::string& detail) {
    // shape contracts
    {
        Rng rng(9011);
        SrConfig scfg;
        SrModel m(scfg, rng);
        Tensor x = Tensor::randn({6, 16, 16}, rng, 0.3);
        if (m.forward(x).shape() != std::vector<int>{6, 32, 32}) {
            detail = "shape contract";
            return false;
        }
    }
    // sub-pixel index oracle: r=2 shuffle of a delta input
    {
        Tensor big({4, 1, 1});
        big[0] = 10.0;
        big[1] = 20.0;
        big[2] = 30.0;
        big[3] = 40.0;
        Tensor shuffled = nn::pixel_shuffle(big, 2);
        const double want[2][2] = {{10.0, 20.0}, {30.0, 40.0}};
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x)
                if (shuffled.at(0, y, x) != want[y][x]) {
                    detail = "sub-pixel oracle";
                    return false;
                }
    }
    // trained toy SR beats nearest-neighbor upsampling on held-out pairs
    {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(9012);
        std::vector<Tensor> train_pairs, held_out;
        for (int i = 0; i < 24; ++i) train_pairs.push_back(smooth_pair(32, rng));
        for (int i = 0; i < 8; ++i) held_out.push_back(smooth_pair(32, rng));

        TrainConfig cfg;
        // 800 steps leaves the net undertrained (mse still falling, above the
        // nearest-neighbor baseline); 3000 converges with a ~40% margin.
        cfg.steps = 3000;
        cfg.learning_rate = 1e-3;
        cfg.seed = 44;
        cfg.checkpoint_every = 3000;
        ScratchDir dir("sr_toy");
        SrConfig scfg;
        Rng mrng(9013);
        SrModel model(scfg, mrng);
        TrainSrResult res = train_sr(model, train_pairs, cfg, dir.path.string(), nullptr);
        if (res.aborted_non_finite) {
            detail = "toy SR training aborted";
            return false;
        }
        double sr_mse = 0.0, nn_mse = 0.0;
        for (const Tensor& hr : held_out) {
            Tensor lr = downscale2x_box(hr);
            sr_mse += mse(model.forward(lr), hr) / static_cast<double>(held_out.size());
            nn_mse += mse(nearest_upsample2x(lr), hr) / static_cast<double>(held_out.size());
        }
        progress(fmt("criterion 8: toy SR mse %.6f vs nearest-neighbor %.6f (%.0f s)", sr_mse, nn_mse,
                     seconds_since(t0)));
        if (!(sr_mse < nn_mse)) {
            detail = fmt("SR mse %.6f not below NN %.6f", sr_mse, nn_mse);
            return false;
        }
    }
    // cascade: 6x128x128 -> 6x512x512
    {
        Rng rng(9014);
        SrConfig scfg;
        SrModel m(scfg, rng);
        Tensor x = Tensor::randn({6, 128, 128}, rng, 0.2);
        Tensor mid;
        Tensor y = upscale_cascade(m, x, &mid);
        if (mid.shape() != std::vector<int>{6, 256, 256} || y.shape() != std::vector<int>{6, 512, 512}) {
            detail = "cascade shapes";
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 9

bool criterion_determinism(std::string& detail) {
    TrainConfig cfg;
    cfg.input_size = 16;
    cfg.base_width = 8;
    cfg.multipliers = {1, 2};
    cfg.embed_dim = 16;
    cfg.class_feat_dim = 8;
    cfg.sinusoid_dim = 8;
    cfg.gn_groups = 4;
    cfg.T = 4;
    cfg.beta_start = 1e-3;
    cfg.beta_end = 0.25;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 2;
    cfg.steps = 5;
    cfg.checkpoint_every = 5;
    cfg.seed = 55;
    ClassPalette palette = build_palette(4);

    ScratchDir data("det_data");
    (void)synthesize_shapes_dataset(data.path.string(), 4, 16, 901);
    DatasetManifest manifest = load_manifest(data.path.string());
    std::vector<SamplePair> samples;
    for (const SampleRecord& rec : manifest.records) samples.push_back(load_sample(rec, manifest.palette, 16));

    ScratchDir r1("det_run1"), r2("det_run2");
    DiffusionModel m1(cfg, manifest.palette), m2(cfg, manifest.palette);
    TrainDiffusionResult a = train_diffusion(m1, samples, r1.path.string(), nullptr);
    TrainDiffusionResult b = train_diffusion(m2, samples, r2.path.string(), nullptr);
    if (a.trace.size() != b.trace.size()) {
        detail = "trace lengths differ";
        return false;
    }
    for (size_t i = 0; i < a.trace.size(); ++i) {
        if (a.trace[i].losses.l_total != b.trace[i].losses.l_total || a.trace[i].d_loss != b.trace[i].d_loss) {
            detail = fmt("loss traces differ at step %zu", i);
            return false;
        }
    }

    ConditionVector cond;
    cond.bits = {0, 1, 0, 0};
    Tensor c1 = m1.class_enc.encode(cond).vec;
    Tensor c2 = m2.class_enc.encode(cond).vec;
    Rng s1 = rng_for(77, "sample/0"), s2 = rng_for(77, "sample/0");
    SampleResult o1 = sample(make_eps_fn(m1, c1), m1.schedule, 6, 16, 16, cfg.T, s1);
    SampleResult o2 = sample(make_eps_fn(m2, c2), m2.schedule, 6, 16, 16, cfg.T, s2);
    for (int64_t i = 0; i < o1.output.data.size(); ++i)
        if (o1.output.data[i] != o2.output.data[i]) {
            detail = "sample outputs differ bitwise";
            return false;
        }
    return true;
}

} // namespace

int main() {
    progress("acceptance gate starting");

    try {
        report(1, "palette round-trip, 1000 masks + noise, < 30 s", criterion_palette());
    } catch (const std::exception& e) {
        report(1, "palette round-trip", false, e.what());
    }

    try {
        report(2, "fusion equals the brute-force oracle exactly", criterion_fusion_oracle());
    } catch (const std::exception& e) {
        report(2, "fusion oracle", false, e.what());
    }

    try {
        std::string d;
        const bool ok = criterion_forward_process(d);
        report(3, "forward-process algebra and Monte-Carlo variance", ok, d);
    } catch (const std::exception& e) {
        report(3, "forward-process algebra", false, e.what());
    }

    try {
        report(4, "loss identities", criterion_loss_identities());
    } catch (const std::exception& e) {
        report(4, "loss identities", false, e.what());
    }

    try {
        std::string d;
        const bool ok = criterion_gradient_audit(d);
        report(5, "gradient audit (finite differences + isolation)", ok, d);
    } catch (const std::exception& e) {
        report(5, "gradient audit", false, e.what());
    }

    try {
        std::string d;
        const bool ok = criterion_overfit(d);
        report(6, "overfit + conditioning on the shapes dataset", ok, d);
    } catch (const std::exception& e) {
        report(6, "overfit + conditioning", false, e.what());
    }

    try {
        std::string d;
        const bool ok = criterion_metrics(d);
        report(7, "metric correctness against oracles", ok, d);
    } catch (const std::exception& e) {
        report(7, "metric correctness", false, e.what());
    }

    try {
        std::string d;
        const bool ok = criterion_superres(d);
        report(8, "super-resolution contracts and toy training", ok, d);
    } catch (const std::exception& e) {
        report(8, "super-resolution", false, e.what());
    }

    try {
        std::string d;
        const bool ok = criterion_determinism(d);
        report(9, "bit-identical reruns", ok, d);
    } catch (const std::exception& e) {
        report(9, "bit-identical reruns", false, e.what());
    }

    if (g_failures == 0) {
        std::printf("acceptance: all 9 criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criterion(s) failed\n", g_failures);
    return 1;
}
