#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mltn/errors.hpp"
#include "mltn/layers.hpp"
#include "mltn/mps.hpp"
#include "mltn/rng.hpp"

using namespace mltn;
using testutil::grad_close;
using testutil::max_rel_err;

namespace {

Tensor random_sites(Rng& rng, std::size_t s, std::size_t d, double lo = -1.0,
                    double hi = 1.0) {
    Tensor t({s, d});
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// Reference logits: assemble the full weight tensor and contract it against
// the joint feature map, independently of the chain evaluator.
Tensor full_tensor_logits(const MpsBlock& block, const Tensor& sites) {
    Tensor theta = mps_to_full_tensor(block);
    std::vector<Tensor> vecs;
    for (std::size_t j = 0; j < block.n_sites; ++j) {
        Tensor v({block.feature_dim});
        for (std::size_t i = 0; i < block.feature_dim; ++i)
            v[i] = sites[j * block.feature_dim + i];
        vecs.push_back(std::move(v));
    }
    Tensor phi = joint_feature_map_oracle(vecs);
    std::size_t cells = phi.size();
    Tensor theta_flat = reshape(theta, {cells, block.output_dim});
    Tensor phi_flat = reshape(phi, {cells});
    return contract_index(phi_flat, 0, theta_flat, 0);  // [m]
}

}  // namespace

TEST_SUITE_BEGIN("mps");

TEST_CASE("local feature map closed-form values") {
    Tensor x({3}, {0.0, 1.0, 0.5});
    Tensor mapped = local_feature_map(x, FeatureMapKind::Sinusoidal);
    CHECK(mapped.shape() == std::vector<std::size_t>{3, 2});
    CHECK(mapped.at({0, 0}) == doctest::Approx(1.0));
    CHECK(mapped.at({0, 1}) == doctest::Approx(0.0));
    CHECK(mapped.at({1, 0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mapped.at({1, 1}) == doctest::Approx(1.0));
    // evaluate the closed form at 0.5
    CHECK(mapped.at({2, 0}) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(mapped.at({2, 1}) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("sinusoidal rows are unit norm and domain is checked") {
    Rng rng(2);
    Tensor x({20});
    for (auto& v : x.values()) v = rng.uniform();
    Tensor mapped = local_feature_map(x, FeatureMapKind::Sinusoidal);
    for (std::size_t i = 0; i < 20; ++i) {
        const double n = mapped[2 * i] * mapped[2 * i] +
                         mapped[2 * i + 1] * mapped[2 * i + 1];
        CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
    }
    Tensor bad({1}, {1.5});
    CHECK_THROWS_AS(local_feature_map(bad, FeatureMapKind::Sinusoidal),
                    DomainError);
}

TEST_CASE("joint feature map oracle") {
    Tensor v({3}, {1, 2, 3});
    Tensor single = joint_feature_map_oracle({v});
    CHECK(single.values() == v.values());

    Tensor e0({2}, {1, 0});
    Tensor e1({2}, {0, 1});
    Tensor basis = joint_feature_map_oracle({e0, e1});
    CHECK(basis.at({0, 1}) == 1.0);
    CHECK(basis.at({0, 0}) == 0.0);
    CHECK(basis.at({1, 0}) == 0.0);
    CHECK(basis.at({1, 1}) == 0.0);

    Rng rng(4);
    std::vector<Tensor> vs;
    for (int j = 0; j < 3; ++j) {
        Tensor t({2});
        for (auto& x : t.values()) x = rng.uniform(-1, 1);
        vs.push_back(t);
    }
    Tensor phi = joint_feature_map_oracle(vs);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 2; ++k)
                CHECK(phi.at({i, j, k}) ==
                      doctest::Approx(vs[0][i] * vs[1][j] * vs[2][k]));
}

TEST_CASE("joint feature map size cap") {
    std::vector<Tensor> vs(21, Tensor({2}, {1, 1}));
    CHECK_THROWS_AS(joint_feature_map_oracle(vs), SizeLimit);
}

TEST_CASE("identity chain emits the first basis vector") {
    const std::size_t S = 4, d = 2, bd = 3, m = 3, c = 2;
    MpsBlock block = MpsBlock::with_shape(S, d, bd, m, c);
    // Feature 0 of every site carries the identity pattern; the input
    // selects feature 0 everywhere.
    block.site_tensors[0].at({0, 0}) = 1.0;
    for (std::size_t p = 0; p < bd; ++p)
        block.site_tensors[1].at({0, p, p}) = 1.0;
    for (std::size_t p = 0; p < bd; ++p)
        block.site_tensors[2].at({0, p, p, 0}) = 1.0;
    block.site_tensors[3].at({0, 0}) = 1.0;

    Tensor sites({S, d});
    for (std::size_t j = 0; j < S; ++j) sites.at({j, 0}) = 1.0;
    Tensor logits = mps_forward(block, sites);
    CHECK(logits[0] == doctest::Approx(1.0));
    CHECK(logits[1] == doctest::Approx(0.0));
    CHECK(logits[2] == doctest::Approx(0.0));
}

TEST_CASE("forward matches the full-tensor oracle") {
    Rng rng(17);
    int done = 0;
    while (done < 40) {
        const std::size_t S = 2 + rng.below(5);
        const std::size_t d = 1 + rng.below(3);
        const std::size_t bd = 1 + rng.below(4);
        const std::size_t m = 1 + rng.below(3);
        const std::size_t c = rng.below(S);
        MpsBlock block =
            MpsBlock::random_at(S, d, bd, m, c, rng, 0.3, 0.7);
        Tensor sites = random_sites(rng, S, d);
        Tensor got = mps_forward(block, sites);
        Tensor want = full_tensor_logits(block, sites);
        CHECK(max_rel_err(got, want) < 1e-10);
        ++done;
    }
}

TEST_CASE("logits are multilinear in each site tensor") {
    Rng rng(23);
    MpsBlock block = MpsBlock::random(5, 2, 3, 2, rng, 0.2);
    Tensor sites = random_sites(rng, 5, 2);
    Tensor base = mps_forward(block, sites);
    for (std::size_t j = 0; j < 5; ++j) {
        MpsBlock scaled = block;
        scaled.site_tensors[j].scale(-2.5);
        Tensor got = mps_forward(scaled, sites);
        Tensor want = base;
        want.scale(-2.5);
        CHECK(max_rel_err(got, want) < 1e-12);
    }
}

TEST_CASE("stabilised and raw contraction agree when nothing overflows") {
    Rng rng(29);
    for (int rep = 0; rep < 10; ++rep) {
        MpsBlock block = MpsBlock::random(6, 2, 3, 2, rng, 0.4, 0.9);
        Tensor sites = random_sites(rng, 6, 2);
        Tensor stab = mps_forward(block, sites);
        MpsBlock raw = block;
        raw.stabilized = false;
        Tensor plain = mps_forward(raw, sites);
        CHECK(max_rel_err(stab, plain) < 1e-10);
    }
}

TEST_CASE("all-zero partial raises NumericalError") {
    Rng rng(31);
    MpsBlock block = MpsBlock::random(4, 2, 2, 2, rng);
    Tensor sites({4, 2});  // all zeros -> site matrices vanish
    CHECK_THROWS_AS(mps_forward(block, sites), NumericalError);
}

TEST_CASE("forward rejects mismatched site shapes") {
    Rng rng(37);
    MpsBlock block = MpsBlock::random(4, 2, 2, 2, rng);
    CHECK_THROWS_AS(mps_forward(block, Tensor({4, 3})), ShapeMismatch);
    CHECK_THROWS_AS(mps_forward(block, Tensor({3, 2})), ShapeMismatch);
}

TEST_CASE("zero upstream gradient gives exactly zero gradients") {
    Rng rng(41);
    MpsBlock block = MpsBlock::random(5, 2, 3, 2, rng, 0.3);
    Tensor sites = random_sites(rng, 5, 2);
    MpsCache cache;
    mps_forward(block, sites, &cache);
    MpsGrads grads = mps_backward(block, cache, Tensor({2}));
    for (const Tensor& g : grads.site_grads)
        for (double v : g.values()) CHECK(v == 0.0);
    for (double v : grads.input_grad.values()) CHECK(v == 0.0);
}

TEST_CASE("site and input gradients match central finite differences") {
    Rng rng(43);
    for (int rep = 0; rep < 6; ++rep) {
        const std::size_t S = 3, d = 2, bd = 2, m = 2;
        const std::size_t c = rng.below(S);
        MpsBlock block = MpsBlock::random_at(S, d, bd, m, c, rng, 0.3, 0.8);
        Tensor sites = random_sites(rng, S, d, 0.1, 1.0);
        Tensor g({m});
        for (auto& v : g.values()) v = rng.uniform(-1, 1);

        MpsCache cache;
        mps_forward(block, sites, &cache);
        MpsGrads grads = mps_backward(block, cache, g);

        auto objective = [&]() {
            Tensor logits = mps_forward(block, sites);
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) acc += g[k] * logits[k];
            return acc;
        };
        const double h = 1e-5;
        for (std::size_t j = 0; j < S; ++j) {
            Tensor& a = block.site_tensors[j];
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double fd = testutil::fd_grad(&a[i], h, objective);
                CHECK(grad_close(grads.site_grads[j][i], fd, 1e-5, 1e-9));
            }
        }
        for (std::size_t i = 0; i < sites.size(); ++i) {
            const double fd = testutil::fd_grad(&sites[i], h, objective);
            CHECK(grad_close(grads.input_grad[i], fd, 1e-5, 1e-9));
        }
    }
}

TEST_CASE("identity-chain input gradient matches finite differences") {
    const std::size_t S = 4, d = 2, bd = 3, m = 3, c = 2;
    MpsBlock block = MpsBlock::with_shape(S, d, bd, m, c);
    block.site_tensors[0].at({0, 0}) = 1.0;
    for (std::size_t p = 0; p < bd; ++p)
        block.site_tensors[1].at({0, p, p}) = 1.0;
    for (std::size_t p = 0; p < bd; ++p)
        block.site_tensors[2].at({0, p, p, 0}) = 1.0;
    block.site_tensors[3].at({0, 0}) = 1.0;
    Tensor sites({S, d});
    for (std::size_t j = 0; j < S; ++j) sites.at({j, 0}) = 1.0;
    Tensor g({m}, {1.0, -0.5, 2.0});

    MpsCache cache;
    mps_forward(block, sites, &cache);
    MpsGrads grads = mps_backward(block, cache, g);
    auto objective = [&]() {
        Tensor logits = mps_forward(block, sites);
        double acc = 0.0;
        for (std::size_t k = 0; k < m; ++k) acc += g[k] * logits[k];
        return acc;
    };
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const double fd = testutil::fd_grad(&sites[i], 1e-5, objective);
        CHECK(grad_close(grads.input_grad[i], fd, 1e-5, 1e-9));
    }
}

TEST_CASE("backward rejects mismatched caches") {
    Rng rng(47);
    MpsBlock block = MpsBlock::random(4, 2, 2, 2, rng);
    Tensor sites = random_sites(rng, 4, 2);
    MpsCache cache;
    mps_forward(block, sites, &cache);
    CHECK_THROWS_AS(mps_backward(block, cache, Tensor({3})), CacheMismatch);
    MpsBlock other = MpsBlock::random(5, 2, 2, 2, rng);
    CHECK_THROWS_AS(mps_backward(other, cache, Tensor({2})), CacheMismatch);
}

TEST_CASE("bond-1 full tensor factorises as an outer product") {
    Rng rng(53);
    MpsBlock block = MpsBlock::random_at(2, 3, 1, 2, 1, rng, 0.5);
    Tensor theta = mps_to_full_tensor(block);  // [3, 3, 2]
    const Tensor& a0 = block.site_tensors[0];  // [3, 1]
    const Tensor& a1 = block.site_tensors[1];  // [3, 1, 2]
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 2; ++k)
                CHECK(theta.at({i, j, k}) ==
                      doctest::Approx(a0.at({i, 0}) * a1.at({j, 0, k})));
}

TEST_CASE("full tensor size cap") {
    MpsBlock block = MpsBlock::with_shape(21, 2, 1, 1, 10);
    CHECK_THROWS_AS(mps_to_full_tensor(block), SizeLimit);
}

TEST_CASE("parameter count follows the site-shape convention") {
    MpsBlock block = MpsBlock::with_shape(4, 2, 3, 2, 2);
    CHECK(mps_param_count(block) == 66);  // 2*3 + 2*9 + 2*9*2 + 2*3

    MpsBlock unit = MpsBlock::with_shape(5, 3, 1, 1, 2);
    CHECK(mps_param_count(unit) == 5 * 3);

    // Adding one interior site adds exactly d * beta^2.
    for (std::size_t s = 4; s < 8; ++s) {
        MpsBlock a = MpsBlock::with_shape(s, 2, 3, 4, 1);
        MpsBlock b = MpsBlock::with_shape(s + 1, 2, 3, 4, 1);
        CHECK(mps_param_count(b) - mps_param_count(a) == 2 * 9);
    }
}

TEST_SUITE_END();
