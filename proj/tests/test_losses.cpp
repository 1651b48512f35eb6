#include <doctest.h>

#include <cmath>
#include <set>

#include "cosimgen/common.hpp"
#include "cosimgen/losses.hpp"
#include "cosimgen/rng.hpp"
#include "test_helpers.hpp"

using namespace cosimgen;
using namespace cosimgen::testutil;

namespace {

std::vector<ConditionVector> make_conds(const std::vector<std::vector<int>>& bits) {
    std::vector<ConditionVector> out;
    for (const auto& b : bits) {
        ConditionVector c;
        c.bits = b;
        out.push_back(c);
    }
    return out;
}

} // namespace

TEST_CASE("diffusion loss: zero and unit hand cases are exact") {
    Tensor a({2, 2, 2}), b({2, 2, 2});
    CHECK(diffusion_loss(a, b) == 0.0);
    b.fill(1.0);
    CHECK(diffusion_loss(a, b) == 1.0);
    b.fill(2.0);
    CHECK(diffusion_loss(a, b) == 4.0);
    CHECK_THROWS_AS(diffusion_loss(a, Tensor({2, 2})), ValidationError);
}

TEST_CASE("triplet loss hand cases, including loss = 1 at positive == negative") {
    Tensor a({2}), p({2}), n({2});
    // identical everything: |a-p|^2 - |a-n|^2 + 1 = 1
    CHECK(triplet_loss(a, a, a) == 1.0);
    // far negative: margin satisfied, loss 0
    n[0] = 10.0;
    CHECK(triplet_loss(a, p, n) == 0.0);
    // p at distance^2 = 4, n at distance^2 = 1: 4 - 1 + 1 = 4
    p[0] = 2.0;
    n = Tensor({2});
    n[0] = 1.0;
    CHECK(triplet_loss(a, p, n) == 4.0);
}

TEST_CASE("triplet gradients match finite differences and vanish when inactive") {
    Rng rng(501);
    Tensor a = Tensor::randn({5}, rng), p = Tensor::randn({5}, rng), n = Tensor::randn({5}, rng);
    // force the hinge active: place n close to a, p far
    for (int i = 0; i < 5; ++i) {
        n[i] = a[i] + 0.01;
        p[i] = a[i] + 1.0;
    }
    Tensor ga({5}), gp({5}), gn({5});
    const double l = triplet_loss_grad(a, p, n, ga, gp, gn);
    CHECK(l > 0.0);
    auto loss = [&] { return triplet_loss(a, p, n); };
    for (int i = 0; i < 5; ++i) {
        CHECK(rel_err(ga[i], central_diff(a[i], loss)) < 1e-6);
        CHECK(rel_err(gp[i], central_diff(p[i], loss)) < 1e-6);
        CHECK(rel_err(gn[i], central_diff(n[i], loss)) < 1e-6);
    }

    // inactive hinge: zero gradients everywhere
    for (int i = 0; i < 5; ++i) {
        p[i] = a[i];
        n[i] = a[i] + 100.0;
    }
    triplet_loss_grad(a, p, n, ga, gp, gn);
    for (int i = 0; i < 5; ++i) {
        CHECK(ga[i] == 0.0);
        CHECK(gp[i] == 0.0);
        CHECK(gn[i] == 0.0);
    }
}

TEST_CASE("permute_negatives: derangement property over 1000 draws") {
    // batch of 8; indices 0 and 7 share a bit pattern, the rest are distinct
    auto conds8 = make_conds({{0, 1, 0, 0},
                              {0, 0, 1, 0},
                              {0, 0, 0, 1},
                              {0, 1, 1, 0},
                              {0, 1, 0, 1},
                              {0, 0, 1, 1},
                              {0, 1, 1, 1},
                              {0, 1, 0, 0}});
    Rng rng(502);
    for (int trial = 0; trial < 1000; ++trial) {
        NegativePermutation perm = permute_negatives(conds8, rng);
        REQUIRE(perm.indices.size() == 8);
        std::set<int> seen(perm.indices.begin(), perm.indices.end());
        CHECK(seen.size() == 8); // a permutation
        for (int i = 0; i < 8; ++i) CHECK(perm.indices[static_cast<size_t>(i)] != i);
    }
    // indices 0 and 7 share bits, so some draws may collide but stay deranged
    Rng rng2(503);
    int collisions = 0;
    for (int trial = 0; trial < 200; ++trial) {
        NegativePermutation perm = permute_negatives(conds8, rng2);
        for (int i = 0; i < 8; ++i) CHECK(perm.indices[static_cast<size_t>(i)] != i);
        collisions += perm.collisions ? 1 : 0;
    }
    CHECK(collisions == 0); // retry loop resolves the single duplicate pair
}

TEST_CASE("permute_negatives: B=2 swaps; identical batches flag collisions; B<2 throws") {
    auto two = make_conds({{0, 1}, {0, 1}});
    Rng rng(504);
    NegativePermutation perm = permute_negatives(two, rng);
    CHECK(perm.indices == std::vector<int>{1, 0});
    CHECK(perm.collisions); // only derangement available pairs identical bits

    auto same4 = make_conds({{0, 1}, {0, 1}, {0, 1}, {0, 1}});
    NegativePermutation p4 = permute_negatives(same4, rng);
    CHECK(p4.collisions);
    for (int i = 0; i < 4; ++i) CHECK(p4.indices[static_cast<size_t>(i)] != i);

    auto one = make_conds({{0, 1}});
    CHECK_THROWS_AS(permute_negatives(one, rng), ValidationError);
}

TEST_CASE("score-level adversarial identities") {
    CHECK(adversarial_loss_from_score(0.5) == 0.5);
    CHECK(adversarial_loss_from_score(1.0) == 0.0);
    CHECK(discriminator_loss_from_scores(0.5, 0.5) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
    CHECK(discriminator_loss_from_scores(1.0, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("total loss identity with beta = 0.1") {
    LossReport r = total_loss(1.0, 0.5, 0.2, 0.1);
    CHECK(r.l_total == 1.52);
    CHECK(r.beta == 0.1);
    LossReport z = total_loss(0.0, 0.0, 0.0, 0.1);
    CHECK(z.l_total == 0.0);
    CHECK_THROWS_AS(total_loss(-1.0, 0.0, 0.0, 0.1), ValidationError);
}

TEST_CASE("discriminator: spatial reduction to a probability, score in (0,1)") {
    DiscriminatorConfig cfg;
    cfg.input_size = 32;
    Rng rng(505);
    Discriminator d(cfg, rng);
    Rng dat(506);
    Tensor x = Tensor::randn({6, 32, 32}, dat, 0.5);
    const double s = d.score(x);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(d.score(x) == s); // deterministic
    CHECK_THROWS_AS(d.score(Tensor({6, 16, 16})), ValidationError);
}

TEST_CASE("adversarial loss backpropagates into x0_hat but never into D") {
    DiscriminatorConfig cfg;
    cfg.input_size = 16;
    cfg.widths = {8, 16};
    Rng rng(507);
    Discriminator d(cfg, rng);
    nn::ParamRefs dparams;
    d.append_params("disc", dparams);
    for (nn::Parameter* p : dparams) p->zero_grad();

    Rng dat(508);
    Tensor x0_hat = Tensor::randn({6, 16, 16}, dat, 0.3);
    Tensor g_x0({6, 16, 16});
    const double l = adversarial_loss_grad(d, x0_hat, g_x0);
    CHECK(l == doctest::Approx(1.0 - d.score(x0_hat)).epsilon(1e-12));

    // zero gradient on every discriminator parameter
    for (nn::Parameter* p : dparams)
        for (int64_t i = 0; i < p->grad.size(); ++i) CHECK(p->grad[i] == 0.0);

    // input gradient matches finite differences of 1 - D(x)
    auto loss = [&] { return adversarial_loss(d, x0_hat); };
    for (int64_t i = 0; i < x0_hat.size(); i += 173) CHECK(rel_err(g_x0[i], central_diff(x0_hat[i], loss)) < 1e-4);
}

TEST_CASE("discriminator loss trains D on real vs detached fake") {
    DiscriminatorConfig cfg;
    cfg.input_size = 16;
    cfg.widths = {8, 16};
    Rng rng(509);
    Discriminator d(cfg, rng);
    nn::ParamRefs dparams;
    d.append_params("disc", dparams);
    for (nn::Parameter* p : dparams) p->zero_grad();

    Rng dat(510);
    Tensor real = Tensor::randn({6, 16, 16}, dat, 0.3);
    Tensor fake = Tensor::randn({6, 16, 16}, dat, 0.3);
    const double l = discriminator_loss(d, real, fake);
    CHECK(l == doctest::Approx(-std::log(d.score(real)) - std::log(1.0 - d.score(fake))).epsilon(1e-10));

    double grad_norm = 0.0;
    for (nn::Parameter* p : dparams)
        for (int64_t i = 0; i < p->grad.size(); ++i) grad_norm += p->grad[i] * p->grad[i];
    CHECK(grad_norm > 0.0);

    // finite-difference audit on a few D parameters
    auto loss = [&] { return discriminator_loss_from_scores(d.score(real), d.score(fake)); };
    nn::Parameter* w0 = dparams[0];
    for (int64_t i = 0; i < 3; ++i) CHECK(rel_err(w0->grad[i], central_diff(w0->value[i], loss)) < 1e-4);
}
