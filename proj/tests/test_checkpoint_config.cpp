#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "cosimgen/checkpoint.hpp"
#include "cosimgen/common.hpp"
#include "cosimgen/config.hpp"
#include "cosimgen/rng.hpp"
#include "test_helpers.hpp"

using namespace cosimgen;
using namespace cosimgen::testutil;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("cosimgen_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.kind = "diffusion";
    c.step = 42;
    c.config_text = "input_size = 16\nT = 4\n";
    c.palette_json = "{\"classes\":1}";
    Rng rng(801);
    c.tensors.emplace_back("unet.stem.w", Tensor::randn({4, 6, 3, 3}, rng));
    c.tensors.emplace_back("unet.stem.b", Tensor::randn({4}, rng));
    c.tensors.emplace_back("opt.gen.t", Tensor::randn({1}, rng));
    return c;
}

} // namespace

TEST_CASE("checkpoint round-trip is bit-identical") {
    TempDir tmp("ckpt_rt");
    Checkpoint c = sample_checkpoint();
    const std::string path = tmp.file("a.ckpt");
    save_checkpoint(c, path);
    Checkpoint r = load_checkpoint(path);
    CHECK(r.kind == c.kind);
    CHECK(r.step == c.step);
    CHECK(r.format_version == c.format_version);
    CHECK(r.config_text == c.config_text);
    CHECK(r.palette_json == c.palette_json);
    REQUIRE(r.tensors.size() == c.tensors.size());
    for (size_t i = 0; i < c.tensors.size(); ++i) {
        CHECK(r.tensors[i].first == c.tensors[i].first);
        CHECK(tensors_equal(r.tensors[i].second, c.tensors[i].second));
    }
    const Tensor* found = r.find("unet.stem.b");
    REQUIRE(found != nullptr);
    CHECK(found->shape() == std::vector<int>{4});
    CHECK(r.find("nope") == nullptr);
}

TEST_CASE("checkpoint loader rejects wrong magic and truncation") {
    TempDir tmp("ckpt_bad");
    const std::string bogus = tmp.file("bogus.ckpt");
    {
        std::ofstream out(bogus, std::ios::binary);
        out << "NOTACKPTxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_AS(load_checkpoint(bogus), ValidationError);

    const std::string good = tmp.file("good.ckpt");
    save_checkpoint(sample_checkpoint(), good);
    const auto full = fs::file_size(good);
    const std::string cut = tmp.file("cut.ckpt");
    {
        std::ifstream in(good, std::ios::binary);
        std::vector<char> head(static_cast<size_t>(full) - 16);
        in.read(head.data(), static_cast<std::streamsize>(head.size()));
        std::ofstream out(cut, std::ios::binary);
        out.write(head.data(), static_cast<std::streamsize>(head.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(cut), ValidationError);
    CHECK_THROWS_AS(load_checkpoint(tmp.file("missing.ckpt")), ValidationError);
}

TEST_CASE("store/restore params by name, with shape guard") {
    nn::Parameter w, b;
    w.name = "layer.w";
    b.name = "layer.b";
    Rng rng(802);
    w.init({3, 5});
    b.init({3});
    w.value = Tensor::randn({3, 5}, rng);
    b.value = Tensor::randn({3}, rng);

    Checkpoint c;
    c.kind = "diffusion";
    store_params(c, {&w, &b});

    nn::Parameter w2, b2;
    w2.name = "layer.w";
    b2.name = "layer.b";
    w2.init({3, 5});
    b2.init({3});
    restore_params(c, {&w2, &b2});
    CHECK(tensors_equal(w2.value, w.value));
    CHECK(tensors_equal(b2.value, b.value));

    nn::Parameter wrong;
    wrong.name = "layer.w";
    wrong.init({5, 3});
    CHECK_THROWS_AS(restore_params(c, {&wrong}), ValidationError);
    nn::Parameter missing;
    missing.name = "other.w";
    missing.init({3, 5});
    CHECK_THROWS_AS(restore_params(c, {&missing}), ValidationError);
}

TEST_CASE("train config text round-trips through parse") {
    TrainConfig cfg;
    cfg.input_size = 64;
    cfg.base_width = 16;
    cfg.multipliers = {1, 2, 4};
    cfg.embed_dim = 64;
    cfg.T = 50;
    cfg.beta_start = 1e-3;
    cfg.beta_end = 0.25;
    cfg.learning_rate = 2e-3;
    cfg.batch_size = 4;
    cfg.seed = 7;
    cfg.steps = 2000;
    cfg.text_backend = "hashed";
    const std::string text = train_config_to_text(cfg);
    TrainConfig back = parse_train_config(text);
    CHECK(back.input_size == cfg.input_size);
    CHECK(back.base_width == cfg.base_width);
    CHECK(back.multipliers == cfg.multipliers);
    CHECK(back.embed_dim == cfg.embed_dim);
    CHECK(back.T == cfg.T);
    CHECK(back.beta_start == cfg.beta_start);
    CHECK(back.beta_end == cfg.beta_end);
    CHECK(back.learning_rate == cfg.learning_rate);
    CHECK(back.batch_size == cfg.batch_size);
    CHECK(back.seed == cfg.seed);
    CHECK(back.steps == cfg.steps);
    // a second serialization is byte-stable
    CHECK(train_config_to_text(back) == text);
}

TEST_CASE("config parser: comments, sections, aliases, and errors") {
    TrainConfig cfg = parse_train_config("# comment\n[model]\nD = 48\ninput_size = 32\n\nT = 8\n");
    CHECK(cfg.embed_dim == 48); // D aliases embed_dim
    CHECK(cfg.input_size == 32);
    CHECK(cfg.T == 8);

    try {
        parse_train_config("input_size = 32\nbogus_key = 1\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
    }
    try {
        parse_train_config("input_size = 32\nnot a key value line\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos); // line number
    }
    CHECK_THROWS_AS(parse_train_config("T = seven\n"), ConfigError);
}

TEST_CASE("apply_override mutates one key and validates") {
    TrainConfig cfg;
    apply_override(cfg, "steps=123");
    CHECK(cfg.steps == 123);
    apply_override(cfg, "multipliers = 1,2");
    CHECK(cfg.multipliers == std::vector<int>{1, 2});
    CHECK_THROWS_AS(apply_override(cfg, "nonsense"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "bogus_key=3"), ConfigError);
}

TEST_CASE("validate rejects inconsistent settings") {
    TrainConfig ok;
    ok.validate();

    TrainConfig bad = ok;
    bad.input_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = ok;
    bad.T = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = ok;
    bad.beta_start = 0.5;
    bad.beta_end = 0.1; // must increase
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = ok;
    bad.multipliers = {};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = ok;
    bad.multipliers = {4, 2, 1}; // must be non-decreasing
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = ok;
    bad.discriminator_mode = "sometimes";
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = ok;
    bad.freeze_at = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("load_train_config reads from disk") {
    TempDir tmp("cfg_load");
    const std::string path = tmp.file("cfg.ini");
    {
        std::ofstream out(path);
        out << "input_size = 16\nbase_width = 8\nmultipliers = 1,2\nT = 4\n";
    }
    TrainConfig cfg = load_train_config(path);
    CHECK(cfg.input_size == 16);
    CHECK(cfg.base_width == 8);
    CHECK(cfg.multipliers == std::vector<int>{1, 2});
    CHECK_THROWS_AS(load_train_config(tmp.file("absent.ini")), ConfigError);
}

TEST_CASE("shipped preset files parse and validate") {
    TrainConfig desk = load_train_config(std::string(COSIMGEN_SOURCE_DIR) + "/configs/desk.ini");
    CHECK(desk.input_size == 64);
    CHECK(desk.base_width == 16);
    CHECK(desk.T == 50);
    CHECK(desk.scales == std::vector<int>{128, 256});

    TrainConfig full = load_train_config(std::string(COSIMGEN_SOURCE_DIR) + "/configs/full.ini");
    CHECK(full.input_size == 128);
    CHECK(full.multipliers == std::vector<int>{1, 2, 4, 8});
    CHECK(full.embed_dim == 512);
    CHECK(full.T == 1000);
    CHECK(full.scales == std::vector<int>{256, 512});
}
