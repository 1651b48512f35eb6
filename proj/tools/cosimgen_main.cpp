// cosimgen: palette building, training, sampling, super-resolution, and
// evaluation from one binary. Every command exits 0 on success and prints a
// single "error: ..." line on failure; input directories are never mutated.

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cosimgen/common.hpp"
#include "cosimgen/config.hpp"
#include "cosimgen/dataset.hpp"
#include "cosimgen/diffusion.hpp"
#include "cosimgen/image_io.hpp"
#include "cosimgen/metrics.hpp"
#include "cosimgen/palette.hpp"
#include "cosimgen/superres.hpp"
#include "cosimgen/trainer.hpp"

namespace fs = std::filesystem;
using namespace cosimgen;

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

RgbImage8 rgb_from_png(const PngData& png) {
    RgbImage8 img(png.height, png.width);
    img.px = png.px;
    return img;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

// Accepts class names or numeric ids; background (class 0) is not queryable.
ConditionVector parse_classes(const std::string& arg, const ClassPalette& palette) {
    ConditionVector cond;
    cond.bits.assign(static_cast<size_t>(palette.num_classes), 0);
    for (const std::string& tok : split_csv(arg)) {
        if (tok.empty()) throw ConfigError("empty class token in --classes");
        int id = palette.index_of(tok);
        if (id < 0 && !tok.empty() && std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
                return std::isdigit(c);
            }))
            id = std::stoi(tok);
        if (id < 1 || id >= palette.num_classes)
            throw ConfigError("unknown or non-queryable class '" + tok + "'");
        cond.bits[static_cast<size_t>(id)] = 1;
    }
    if (!cond.any()) throw ConfigError("--classes selected no classes");
    return cond;
}

TrainConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                           std::optional<uint64_t> seed, std::optional<int> steps) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
    for (const std::string& ov : overrides) apply_override(cfg, ov);
    if (seed) cfg.seed = *seed;
    if (steps) cfg.steps = *steps;
    cfg.validate();
    return cfg;
}

std::vector<SamplePair> load_training_samples(const std::string& data_dir, int target_size,
                                              ClassPalette& palette_out) {
    DatasetManifest manifest = load_manifest(data_dir);
    for (const std::string& w : manifest.warnings) std::cerr << "warning: " << w << "\n";
    require(!manifest.records.empty(), "dataset at '" + data_dir + "' has no usable samples");
    std::vector<SamplePair> samples;
    samples.reserve(manifest.records.size());
    for (const SampleRecord& rec : manifest.records)
        samples.push_back(load_sample(rec, manifest.palette, target_size));
    palette_out = manifest.palette;
    return samples;
}

void write_quadruple(const std::string& out_dir, const std::string& id, const Tensor& pair,
                     const ClassPalette& palette, const nlohmann::json& meta) {
    Tensor image({3, pair.dim(1), pair.dim(2)}), mask({3, pair.dim(1), pair.dim(2)});
    PairTensor pt{pair};
    unpack_pair(pt, image, mask);
    write_png_rgb(out_dir + "/" + id + "_image.png", image_from_chw(image));
    write_png_rgb(out_dir + "/" + id + "_mask.png", image_from_chw(mask));
    ClassMap ids = decode_mask_chw(mask, palette);
    std::vector<uint8_t> gray(ids.ids.size());
    for (size_t i = 0; i < gray.size(); ++i) gray[i] = static_cast<uint8_t>(ids.ids[i]);
    write_png_gray(out_dir + "/" + id + "_classmap.png", gray, ids.height, ids.width);
    std::ofstream meta_out(out_dir + "/" + id + "_meta.json");
    require(meta_out.good(), "cannot write " + out_dir + "/" + id + "_meta.json");
    meta_out << meta.dump(2) << "\n";
}

// One evaluation-side view of a directory: dataset layout (images/ + masks/)
// or sampler output layout (*_image.png [+ *_mask.png + *_meta.json]).
struct EvalSet {
    std::vector<Tensor> images; // {3,H,W} in [-1,1], native sizes
    std::vector<ClassMap> maps;
    std::vector<ConditionVector> queried;
    bool has_masks = false;
    bool has_queries = false;
};

EvalSet load_eval_dir(const std::string& dir, const ClassPalette& palette) {
    EvalSet set;
    if (fs::is_directory(fs::path(dir) / "images")) {
        DatasetManifest manifest = load_manifest(dir);
        for (const std::string& w : manifest.warnings) std::cerr << "warning: " << w << "\n";
        for (const SampleRecord& rec : manifest.records) {
            PngData png = read_png(rec.image_path);
            const int side = std::min(png.height, png.width);
            SamplePair s = load_sample(rec, palette, side);
            set.images.push_back(s.image);
            set.maps.push_back(decode_mask_chw(s.mask_rgb, palette));
            set.queried.push_back(s.condition);
        }
        set.has_masks = !set.maps.empty();
        set.has_queries = set.has_masks;
        return set;
    }

    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        const std::string tail = "_image.png";
        if (name.size() > tail.size() && name.substr(name.size() - tail.size()) == tail)
            stems.push_back(name.substr(0, name.size() - tail.size()));
    }
    std::sort(stems.begin(), stems.end());
    bool all_masks = !stems.empty();
    for (const std::string& stem : stems) {
        PngData png = read_png(dir + "/" + stem + "_image.png");
        require(png.channels == 3, dir + "/" + stem + "_image.png: expected RGB");
        set.images.push_back(chw_from_image(rgb_from_png(png)));

        const std::string mask_path = dir + "/" + stem + "_mask.png";
        if (fs::exists(mask_path)) {
            PngData mpng = read_png(mask_path);
            require(mpng.channels == 3, mask_path + ": expected RGB");
            require(mpng.height == png.height && mpng.width == png.width, mask_path + ": size mismatch");
            ClassMap ids = decode_mask(rgb_from_png(mpng), palette);
            set.maps.push_back(ids);

            ConditionVector cond;
            const std::string meta_path = dir + "/" + stem + "_meta.json";
            if (fs::exists(meta_path)) {
                std::ifstream in(meta_path);
                nlohmann::json meta = nlohmann::json::parse(in);
                if (meta.contains("queried")) {
                    cond.bits = meta["queried"].get<std::vector<int>>();
                    require(static_cast<int>(cond.bits.size()) == palette.num_classes,
                            meta_path + ": queried width != palette size");
                }
            }
            if (cond.bits.empty()) cond = derive_condition(ids, palette.num_classes);
            set.queried.push_back(cond);
        } else {
            all_masks = false;
        }
    }
    set.has_masks = all_masks && !stems.empty();
    set.has_queries = set.has_masks;
    return set;
}

int cmd_palette(int num_classes, const std::string& names_path, const std::string& out_path) {
    std::vector<std::string> names;
    if (!names_path.empty()) {
        std::ifstream in(names_path);
        require(in.good(), "cannot read names file '" + names_path + "'");
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (!line.empty()) names.push_back(line);
        }
    }
    ClassPalette palette = names.empty() ? build_palette(num_classes) : build_palette(num_classes, names);
    save_palette(palette, out_path);
    std::cout << "wrote " << out_path << " (" << palette.num_classes
              << " classes, min pair distance " << palette.min_pair_distance << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              std::optional<uint64_t> seed, std::optional<int> steps, const std::string& data_dir,
              const std::string& out_dir) {
    TrainConfig cfg = resolve_config(config_path, overrides, seed, steps);
    ClassPalette palette;
    std::vector<SamplePair> samples = load_training_samples(data_dir, cfg.input_size, palette);
    DiffusionModel model(cfg, palette);
    fs::create_directories(out_dir);
    std::ofstream log(out_dir + "/train_log.ndjson");
    require(log.good(), "cannot write " + out_dir + "/train_log.ndjson");
    TrainDiffusionResult result = train_diffusion(model, samples, out_dir, &log);
    if (result.aborted_non_finite) {
        std::cerr << "error: non-finite loss at step " << result.abort_step << "; last good checkpoint: "
                  << result.checkpoint_path << "\n";
        return 2;
    }
    std::cout << "trained " << cfg.steps << " steps; final checkpoint " << result.checkpoint_path << "\n";
    return 0;
}

int cmd_train_sr(const std::string& config_path, const std::vector<std::string>& overrides,
                 std::optional<uint64_t> seed, std::optional<int> steps, const std::string& data_dir,
                 const std::string& out_dir) {
    TrainConfig cfg = resolve_config(config_path, overrides, seed, steps);
    require(!cfg.scales.empty(), "config has no SR scales");
    ClassPalette palette;
    std::vector<SamplePair> samples = load_training_samples(data_dir, cfg.scales.back(), palette);
    std::vector<Tensor> hr;
    hr.reserve(samples.size());
    for (const SamplePair& s : samples) hr.push_back(pack_pair(s.image, s.mask_rgb).data);

    SrConfig sr_cfg;
    sr_cfg.noise_sigma = cfg.noise_sigma;
    sr_cfg.lambda_perc = cfg.lambda_perc;
    Rng rng = rng_for(cfg.seed, "init/sr");
    SrModel model(sr_cfg, rng);
    fs::create_directories(out_dir);
    std::ofstream log(out_dir + "/train_sr_log.ndjson");
    require(log.good(), "cannot write " + out_dir + "/train_sr_log.ndjson");
    TrainSrResult result = train_sr(model, hr, cfg, out_dir, &log);
    if (result.aborted_non_finite) {
        std::cerr << "error: non-finite loss at step " << result.abort_step << "; last good checkpoint: "
                  << result.checkpoint_path << "\n";
        return 2;
    }
    std::cout << "trained " << cfg.steps << " SR steps; final checkpoint " << result.checkpoint_path << "\n";
    return 0;
}

int cmd_sample(const std::string& ckpt_path, const std::string& prompt, const std::string& classes, int n,
               uint64_t seed, int snapshot_every, const std::string& out_dir) {
    require(prompt.empty() != classes.empty(), "exactly one of --prompt / --classes is required");
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    DiffusionModel model = diffusion_model_from_checkpoint(ckpt);
    const int S = model.cfg.input_size;

    Tensor sem_emb;
    nlohmann::json meta;
    if (!classes.empty()) {
        ConditionVector cond = parse_classes(classes, model.palette);
        sem_emb = model.class_enc.encode(cond).vec;
        meta["conditioning"] = "classes";
        meta["queried"] = cond.bits;
        nlohmann::json names = nlohmann::json::array();
        for (int k = 1; k < model.palette.num_classes; ++k)
            if (cond.bits[static_cast<size_t>(k)]) names.push_back(model.palette.class_names[static_cast<size_t>(k)]);
        meta["queried_names"] = names;
    } else {
        sem_emb = model.text_enc.encode(PromptText{prompt}).vec;
        meta["conditioning"] = "prompt";
        meta["prompt"] = prompt;
    }
    meta["checkpoint_step"] = ckpt.step;
    meta["T"] = model.schedule.T;
    meta["seed"] = seed;

    EpsModelFn eps_fn = make_eps_fn(model, sem_emb);
    const int snap = snapshot_every > 0 ? snapshot_every : model.schedule.T;
    fs::create_directories(out_dir);
    for (int i = 0; i < n; ++i) {
        Rng rng = rng_for(seed, "sample/" + std::to_string(i));
        SampleResult res = sample(eps_fn, model.schedule, 6, S, S, snap, rng);
        char id[32];
        std::snprintf(id, sizeof(id), "sample_%03d", i);
        nlohmann::json m = meta;
        m["id"] = id;
        m["index"] = i;
        ClassMap decoded = decode_mask_chw(
            [&] {
                Tensor img({3, S, S}), msk({3, S, S});
                unpack_pair(res.output, img, msk);
                return msk;
            }(),
            model.palette);
        nlohmann::json present = nlohmann::json::array();
        for (int cls : classes_present(decoded)) present.push_back(cls);
        m["decoded_present"] = present;
        write_quadruple(out_dir, id, res.output.data, model.palette, m);
        if (snapshot_every > 0) {
            for (size_t j = 0; j < res.snapshots.size(); ++j) {
                Tensor img({3, S, S}), msk({3, S, S});
                PairTensor pt{res.snapshots[j]};
                unpack_pair(pt, img, msk);
                char snap_name[64];
                std::snprintf(snap_name, sizeof(snap_name), "%s_snap_%03zu.png", id, j);
                write_png_rgb(out_dir + "/" + std::string(snap_name), image_from_chw(img));
            }
        }
    }
    std::cout << "wrote " << n << " sample quadruple(s) to " << out_dir << "\n";
    return 0;
}

int cmd_superres(const std::string& ckpt_path, const std::string& in_dir, const std::string& scales_csv,
                 const std::string& out_dir) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    SrModel model = sr_model_from_checkpoint(ckpt);
    TrainConfig ckpt_cfg = parse_train_config(ckpt.config_text);
    std::vector<int> scales = ckpt_cfg.scales;
    if (!scales_csv.empty()) {
        scales.clear();
        for (const std::string& tok : split_csv(scales_csv)) scales.push_back(std::stoi(tok));
    }
    require(!scales.empty(), "no SR scales given");

    // Inputs follow the sampler output layout; the palette rides in meta-less
    // setups via a palette.json next to the quadruples or in the checkpoint.
    ClassPalette palette;
    if (fs::exists(fs::path(in_dir) / "palette.json")) {
        palette = load_palette((fs::path(in_dir) / "palette.json").string());
    } else {
        require(!ckpt.palette_json.empty(), "no palette.json in input dir and none in checkpoint");
        palette = palette_from_json(ckpt.palette_json);
    }

    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(in_dir)) {
        const std::string name = entry.path().filename().string();
        const std::string tail = "_image.png";
        if (name.size() > tail.size() && name.substr(name.size() - tail.size()) == tail)
            stems.push_back(name.substr(0, name.size() - tail.size()));
    }
    std::sort(stems.begin(), stems.end());
    require(!stems.empty(), "no *_image.png inputs in '" + in_dir + "'");
    fs::create_directories(out_dir);

    for (const std::string& stem : stems) {
        PngData ipng = read_png(in_dir + "/" + stem + "_image.png");
        PngData mpng = read_png(in_dir + "/" + stem + "_mask.png");
        require(ipng.channels == 3 && mpng.channels == 3, stem + ": expected RGB image and mask");
        require(ipng.height == mpng.height && ipng.width == mpng.width, stem + ": image/mask size mismatch");
        Tensor pair = pack_pair(chw_from_image(rgb_from_png(ipng)), chw_from_image(rgb_from_png(mpng))).data;

        int size = pair.dim(1);
        for (int target : scales) {
            require(target == 2 * size, "scale " + std::to_string(target) + " does not double current size " +
                                            std::to_string(size));
            pair = model.forward(pair);
            size = target;
        }
        nlohmann::json meta;
        const std::string meta_path = in_dir + "/" + stem + "_meta.json";
        if (fs::exists(meta_path)) {
            std::ifstream in(meta_path);
            meta = nlohmann::json::parse(in);
        }
        meta["upscaled_to"] = size;
        write_quadruple(out_dir, stem, pair, palette, meta);
    }
    std::cout << "upscaled " << stems.size() << " pair(s) to " << out_dir << "\n";
    return 0;
}

int cmd_evaluate(const std::string& real_dir, const std::string& gen_dir, const std::string& palette_path,
                 uint64_t seed, const std::string& out_dir) {
    ClassPalette palette = load_palette(palette_path);
    EvalSet real = load_eval_dir(real_dir, palette);
    EvalSet gen = load_eval_dir(gen_dir, palette);
    require(!real.images.empty(), "no evaluable samples in '" + real_dir + "'");
    require(!gen.images.empty(), "no evaluable samples in '" + gen_dir + "'");

    MetricExtractor extractor(3);
    FeatureSet real_f = extractor.featurize(real.images);
    FeatureSet gen_f = extractor.featurize(gen.images);

    MetricsReport report;
    report.fid = frechet_distance(real_f, gen_f);
    report.kid = kernel_distance(real_f, gen_f);
    report.feat_dist = feature_distance(real_f, gen_f);
    Rng pair_rng = rng_for(seed, "evaluate/pairs");
    report.perc_dist = perceptual_pair_distance(real.images, gen.images, extractor, pair_rng);
    report.n_real = static_cast<int>(real.images.size());
    report.n_gen = static_cast<int>(gen.images.size());
    report.extractor_id = extractor.id();

    std::vector<std::string> notices;
    bool segmentation_done = false;
    if (gen.has_masks && real.has_masks) {
        SfidReport sfid = semantic_fid(real.images, real.maps, gen.images, gen.maps, palette, extractor);
        report.sfid_per_class = sfid.per_class;
        report.sfid_mean = sfid.mean;
        for (int cls : sfid.skipped)
            notices.push_back("sfid: class " + palette.class_names[static_cast<size_t>(cls)] +
                              " skipped (fewer than 2 crops on one side)");
        PpvReport p = ppv(gen.queried, gen.maps);
        report.ppv_value = p.value;
        report.ppv_strict = p.strict;
        CoOccurrence co = co_occurrence(gen.queried, gen.maps, palette.num_classes);
        fs::create_directories(out_dir);
        std::ofstream csv(out_dir + "/co_occurrence.csv");
        require(csv.good(), "cannot write " + out_dir + "/co_occurrence.csv");
        csv << co_occurrence_to_csv(co, palette);
        segmentation_done = true;
    } else {
        notices.push_back("segmentation metrics (ppv, sfid, co-occurrence) skipped: masks missing in " +
                          std::string(!gen.has_masks ? "generated" : "real") + " set");
    }

    fs::create_directories(out_dir);
    nlohmann::json j = nlohmann::json::parse(metrics_report_to_json(report));
    j["segmentation_metrics"] = segmentation_done;
    j["notices"] = notices;
    std::ofstream out(out_dir + "/metrics.json");
    require(out.good(), "cannot write " + out_dir + "/metrics.json");
    out << j.dump(2) << "\n";

    for (const std::string& n : notices) std::cout << "notice: " << n << "\n";
    std::cout << "fid " << report.fid << "  kid " << report.kid << "  report " << out_dir << "/metrics.json\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"co-generation of paired images and segmentation masks"};
    app.require_subcommand(1);

    // palette
    auto* sp = app.add_subcommand("palette", "build a deterministic class palette");
    int num_classes = 0;
    std::string names_path, palette_out;
    sp->add_option("--num-classes", num_classes, "total classes incl. background")->required();
    sp->add_option("--names", names_path, "file with one class name per line");
    sp->add_option("--out", palette_out, "output palette.json path")->required();

    // train / train-sr share flags
    std::string config_path, data_dir, out_dir;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed_opt;
    std::optional<int> steps_opt;
    uint64_t seed_val = 0;
    int steps_val = 0;
    auto add_train_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "training config file");
        cmd->add_option("--data", data_dir, "dataset root (images/, masks/, palette.json)")->required();
        cmd->add_option("--out", out_dir, "output directory")->required();
        cmd->add_option("--set", overrides, "config override key=value (repeatable)");
        cmd->add_option("--seed", seed_val, "seed override")->each([&](const std::string&) { seed_opt = seed_val; });
        cmd->add_option("--steps", steps_val, "step-count override")->each([&](const std::string&) {
            steps_opt = steps_val;
        });
    };
    auto* st = app.add_subcommand("train", "train the joint diffusion model");
    add_train_flags(st);
    auto* ss = app.add_subcommand("train-sr", "train the super-resolution stage");
    add_train_flags(ss);

    // sample
    auto* sa = app.add_subcommand("sample", "generate image/mask pairs from a checkpoint");
    std::string ckpt_path, prompt, classes;
    int n_samples = 1, snapshot_every = 0;
    uint64_t sample_seed = 0;
    sa->add_option("--checkpoint", ckpt_path, "diffusion checkpoint")->required();
    sa->add_option("--prompt", prompt, "text conditioning");
    sa->add_option("--classes", classes, "comma-separated class names or ids");
    sa->add_option("-n,--num", n_samples, "number of samples");
    sa->add_option("--seed", sample_seed, "sampling seed");
    sa->add_option("--snapshot-every", snapshot_every, "write x0 estimates every k steps (0 = off)");
    sa->add_option("--out", out_dir, "output directory")->required();

    // superres
    auto* su = app.add_subcommand("superres", "upscale sampler outputs through the SR cascade");
    std::string in_dir, scales_csv;
    su->add_option("--checkpoint", ckpt_path, "SR checkpoint")->required();
    su->add_option("--in", in_dir, "directory of sampler quadruples")->required();
    su->add_option("--scales", scales_csv, "comma-separated target sizes, each doubling the last");
    su->add_option("--out", out_dir, "output directory")->required();

    // evaluate
    auto* se = app.add_subcommand("evaluate", "compute generative metrics between two sets");
    std::string real_dir, gen_dir, palette_path;
    se->add_option("--real", real_dir, "reference set directory")->required();
    se->add_option("--gen", gen_dir, "generated set directory")->required();
    se->add_option("--palette", palette_path, "palette.json path")->required();
    se->add_option("--seed", sample_seed, "seed for pair sampling");
    se->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (sp->parsed()) return cmd_palette(num_classes, names_path, palette_out);
        if (st->parsed()) return cmd_train(config_path, overrides, seed_opt, steps_opt, data_dir, out_dir);
        if (ss->parsed()) return cmd_train_sr(config_path, overrides, seed_opt, steps_opt, data_dir, out_dir);
        if (sa->parsed()) return cmd_sample(ckpt_path, prompt, classes, n_samples, sample_seed, snapshot_every, out_dir);
        if (su->parsed()) return cmd_superres(ckpt_path, in_dir, scales_csv, out_dir);
        if (se->parsed()) return cmd_evaluate(real_dir, gen_dir, palette_path, sample_seed, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no command given\n";
    return 2;
}
