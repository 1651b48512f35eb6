#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cosimgen/common.hpp"
#include "cosimgen/metrics.hpp"
#include "cosimgen/rng.hpp"
#include "test_helpers.hpp"

using namespace cosimgen;
using namespace cosimgen::testutil;

namespace {

FeatureSet feats(const std::vector<std::vector<double>>& rows, const std::string& id = "test") {
    FeatureSet s;
    const int n = static_cast<int>(rows.size());
    const int f = static_cast<int>(rows[0].size());
    s.matrix = Tensor({n, f});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < f; ++j) s.matrix[static_cast<int64_t>(i) * f + j] = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    s.extractor_id = id;
    return s;
}

FeatureSet random_feats(int n, int f, uint64_t seed, const std::string& id = "test") {
    FeatureSet s;
    Rng rng(seed);
    s.matrix = Tensor::randn({n, f}, rng);
    s.extractor_id = id;
    return s;
}

// Unbiased MMD^2, written as the obvious double loops.
double kid_oracle(const FeatureSet& a, const FeatureSet& b) {
    const int n = a.n(), m = b.n(), f = a.f();
    auto kern = [&](const Tensor& X, int i, const Tensor& Y, int j) {
        double dot = 0.0;
        for (int k = 0; k < f; ++k) dot += X[static_cast<int64_t>(i) * f + k] * Y[static_cast<int64_t>(j) * f + k];
        const double u = dot / f + 1.0;
        return u * u * u;
    };
    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) kaa += kern(a.matrix, i, a.matrix, j);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j) kbb += kern(b.matrix, i, b.matrix, j);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) kab += kern(a.matrix, i, b.matrix, j);
    return kaa / (static_cast<double>(n) * (n - 1)) + kbb / (static_cast<double>(m) * (m - 1)) -
           2.0 * kab / (static_cast<double>(n) * m);
}

ClassMap map_from_rows(const std::vector<std::vector<int>>& rows) {
    ClassMap m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) m.at(y, x) = rows[static_cast<size_t>(y)][static_cast<size_t>(x)];
    return m;
}

ConditionVector cond(std::vector<int> bits) {
    ConditionVector c;
    c.bits = std::move(bits);
    return c;
}

} // namespace

TEST_CASE("frechet distance: identical sets score ~0, closed-form pair scores 9") {
    FeatureSet a = random_feats(12, 4, 701);
    CHECK(frechet_distance(a, a) <= 1e-6);

    // 1-d features, ddof=1 variances both equal 1, so the trace term cancels
    // and only the squared mean gap (3^2) remains.
    const double s = 1.0 / std::sqrt(2.0);
    FeatureSet x = feats({{-s}, {s}});
    FeatureSet y = feats({{3.0 - s}, {3.0 + s}});
    CHECK(frechet_distance(x, y) == doctest::Approx(9.0).epsilon(1e-10));
}

TEST_CASE("kernel distance matches the double-loop oracle on small sets") {
    for (uint64_t seed : {702ull, 703ull, 704ull}) {
        FeatureSet a = random_feats(9, 4, seed);
        FeatureSet b = random_feats(16, 4, seed + 50);
        const double got = kernel_distance(a, b);
        const double want = kid_oracle(a, b);
        CHECK(std::fabs(got - want) < 1e-8);
    }
}

TEST_CASE("kernel distance: constant sets give exactly zero, split halves stay small") {
    FeatureSet c1 = feats({{2.0, -1.0}, {2.0, -1.0}, {2.0, -1.0}});
    FeatureSet c2 = feats({{2.0, -1.0}, {2.0, -1.0}});
    CHECK(kernel_distance(c1, c2) == 0.0);

    // split halves of one distribution: the unbiased estimator stays within
    // the advertised 3/sqrt(n) band
    FeatureSet all = random_feats(16, 6, 705);
    FeatureSet lo, hi;
    lo.matrix = Tensor({8, 6});
    hi.matrix = Tensor({8, 6});
    lo.extractor_id = hi.extractor_id = "test";
    for (int64_t i = 0; i < 48; ++i) {
        lo.matrix[i] = all.matrix[i];
        hi.matrix[i] = all.matrix[48 + i];
    }
    CHECK(std::fabs(kernel_distance(lo, hi)) <= 3.0 / std::sqrt(8.0));
}

TEST_CASE("feature distance is the mean gap: (0,0) vs (3,4) -> 5") {
    FeatureSet a = feats({{0.0, 0.0}, {0.0, 0.0}});
    FeatureSet b = feats({{3.0, 4.0}, {3.0, 4.0}});
    CHECK(feature_distance(a, b) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("metric comparisons refuse mismatched extractors") {
    FeatureSet a = random_feats(4, 3, 706, "ext-a");
    FeatureSet b = random_feats(4, 3, 707, "ext-b");
    CHECK_THROWS_AS(frechet_distance(a, b), ValidationError);
    CHECK_THROWS_AS(kernel_distance(a, b), ValidationError);
    CHECK_THROWS_AS(feature_distance(a, b), ValidationError);
}

TEST_CASE("perceptual pair distance: self-zero, symmetric, positive") {
    MetricExtractor ext(3);
    Rng rng(708);
    Tensor a = Tensor::randn({3, 16, 16}, rng, 0.3);
    Tensor b = Tensor::randn({3, 16, 16}, rng, 0.3);
    // FP contraction (-mfma) leaves a ~1e-36 residue in the normalized diff.
    CHECK(perceptual_pair_distance_single(ext, a, a) <= 1e-24);
    CHECK(perceptual_pair_distance_single(ext, a, b) ==
          doctest::Approx(perceptual_pair_distance_single(ext, b, a)).epsilon(1e-12));
    CHECK(perceptual_pair_distance_single(ext, a, b) > 0.0);
}

TEST_CASE("class crops: tight bbox, 4-connectivity, min-side filter") {
    // two disjoint regions of class 1: a 10x10 block and a 3x3 block (dropped,
    // under the 8-pixel minimum side); a diagonal touch does not merge regions
    ClassMap m(32, 32);
    for (int y = 2; y < 12; ++y)
        for (int x = 2; x < 12; ++x) m.at(y, x) = 1;
    for (int y = 20; y < 23; ++y)
        for (int x = 20; x < 23; ++x) m.at(y, x) = 1;
    Tensor img({3, 32, 32});
    for (int64_t i = 0; i < img.size(); ++i) img[i] = 0.25;

    std::vector<Tensor> crops = class_crops(img, m, 1, 16);
    REQUIRE(crops.size() == 1); // small block filtered out
    CHECK(crops[0].shape() == std::vector<int>{3, 16, 16});

    // diagonal-only contact: two 8x8 squares sharing one corner stay separate
    ClassMap diag(32, 32);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) diag.at(y, x) = 2;
    for (int y = 8; y < 16; ++y)
        for (int x = 8; x < 16; ++x) diag.at(y, x) = 2;
    std::vector<Tensor> two = class_crops(img, diag, 2, 16);
    CHECK(two.size() == 2);

    CHECK(class_crops(img, m, 5, 16).empty()); // absent class
}

TEST_CASE("semantic fid skips classes with fewer than two crops per side") {
    MetricExtractor ext(3);
    ClassPalette pal = build_palette(3);

    auto block_map = [](int cls) {
        ClassMap m(24, 24);
        for (int y = 4; y < 20; ++y)
            for (int x = 4; x < 20; ++x) m.at(y, x) = cls;
        return m;
    };
    Rng rng(709);
    std::vector<Tensor> real_imgs, gen_imgs;
    std::vector<ClassMap> real_maps, gen_maps;
    for (int i = 0; i < 3; ++i) {
        real_imgs.push_back(Tensor::randn({3, 24, 24}, rng, 0.2));
        gen_imgs.push_back(Tensor::randn({3, 24, 24}, rng, 0.2));
        real_maps.push_back(block_map(1));
        gen_maps.push_back(block_map(1));
    }
    // class 2 appears once on the real side only: must be skipped, not scored
    real_maps[0] = block_map(2);

    SfidReport rep = semantic_fid(real_imgs, real_maps, gen_imgs, gen_maps, pal, ext);
    CHECK(rep.per_class.count(1) == 1);
    CHECK(rep.per_class.count(2) == 0);
    REQUIRE(rep.skipped.size() == 1);
    CHECK(rep.skipped[0] == 2);
    CHECK(rep.mean == doctest::Approx(rep.per_class.at(1)).epsilon(1e-12));
}

TEST_CASE("ppv hand case: 2 of 3 queried classes realized") {
    // one sample queried {1, 2, 3}; generated map contains 1 and 2 only
    ClassMap m(10, 10);
    for (int x = 0; x < 10; ++x) {
        m.at(0, x) = 1;
        m.at(1, x) = 2;
    }
    std::vector<ConditionVector> queried = {cond({0, 1, 1, 1})};
    PpvReport rep = ppv(queried, {m});
    CHECK(rep.value == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(rep.pairs == 3);
    // strict: classes present (1, 2) are all queried -> 1.0
    CHECK(rep.strict == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ppv strict penalizes unqueried intruders") {
    ClassMap m(10, 10);
    for (int x = 0; x < 10; ++x) {
        m.at(0, x) = 1;
        m.at(1, x) = 3; // intruder: present but never queried
    }
    std::vector<ConditionVector> queried = {cond({0, 1, 0, 0})};
    PpvReport rep = ppv(queried, {m});
    CHECK(rep.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.strict == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ppv presence respects the min-fraction threshold") {
    // a single pixel of class 1 in a 64x64 map is 1/4096 < 0.001: absent
    ClassMap m(64, 64);
    m.at(0, 0) = 1;
    std::vector<ConditionVector> queried = {cond({0, 1})};
    CHECK(ppv(queried, {m}).value == 0.0);
    // five pixels cross the threshold (5/4096 > 0.001)
    for (int x = 0; x < 5; ++x) m.at(0, x) = 1;
    CHECK(ppv(queried, {m}).value == 1.0);
    CHECK_THROWS_AS(ppv({}, {}), ValidationError);
}

TEST_CASE("co-occurrence hand table with an undefined row") {
    // classes 0..2; class 1 queried twice, class 2 never queried.
    // sample A: queried {1}, realized {1}; sample B: queried {1}, realized {1, 2}
    ClassMap a = map_from_rows({{1, 1}, {0, 0}});
    ClassMap b = map_from_rows({{1, 2}, {0, 0}});
    std::vector<ConditionVector> conds = {cond({0, 1, 0}), cond({0, 1, 0})};
    CoOccurrence co = co_occurrence(conds, {a, b}, 3);
    REQUIRE(co.matrix.shape() == std::vector<int>{3, 3});
    CHECK(co.matrix[1 * 3 + 1] == doctest::Approx(1.0).epsilon(1e-12)); // P(1 | 1)
    CHECK(co.matrix[1 * 3 + 2] == doctest::Approx(0.5).epsilon(1e-12)); // P(2 | 1)
    // rows 0 and 2 were never queried
    CHECK(co.undefined_rows == std::vector<int>{0, 2});

    ClassPalette pal = build_palette(3);
    std::string csv = co_occurrence_to_csv(co, pal);
    std::istringstream lines(csv);
    std::string header, row0;
    std::getline(lines, header);
    std::getline(lines, row0);
    CHECK(header.find("queried") != std::string::npos);
    CHECK(row0.find("nan") != std::string::npos); // undefined row serialized as nan
}

TEST_CASE("metrics report serializes every headline key") {
    MetricsReport rep;
    rep.fid = 1.5;
    rep.kid = 0.25;
    rep.feat_dist = 2.0;
    rep.perc_dist = 0.125;
    rep.sfid_per_class[1] = 3.0;
    rep.sfid_mean = 3.0;
    rep.ppv_value = 0.75;
    rep.ppv_strict = 0.5;
    rep.n_real = 10;
    rep.n_gen = 12;
    rep.extractor_id = "ext";
    const std::string js = metrics_report_to_json(rep);
    for (const char* key : {"\"fid\"", "\"kid\"", "\"feat_dist\"", "\"perc_dist\"", "\"sfid_mean\"",
                            "\"sfid_per_class\"", "\"ppv\"", "\"ppv_strict\"", "\"n_real\"", "\"n_gen\"",
                            "\"extractor_id\""})
        CHECK(js.find(key) != std::string::npos);
}

TEST_CASE("extractor features are deterministic and sized as promised") {
    MetricExtractor ext(3);
    Rng rng(710);
    Tensor img = Tensor::randn({3, 20, 20}, rng, 0.3); // non-native size: resized internally
    Tensor f1 = ext.features(img);
    Tensor f2 = ext.features(img);
    CHECK(tensors_equal(f1, f2));
    CHECK(f1.rank() == 1);
    CHECK(f1.dim(0) == ext.feature_dim());

    FeatureSet set = ext.featurize({img, img});
    CHECK(set.n() == 2);
    CHECK(set.f() == ext.feature_dim());
    CHECK(set.extractor_id == ext.id());
}
