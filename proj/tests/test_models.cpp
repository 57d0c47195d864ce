#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "mltn/errors.hpp"
#include "mltn/models.hpp"
#include "mltn/optim.hpp"
#include "mltn/rng.hpp"

using namespace mltn;
using testutil::grad_close;
using testutil::max_rel_err;

namespace {

Tensor random_batch(Rng& rng, std::size_t b, std::size_t h, std::size_t w) {
    Tensor t({b, h, w});
    for (auto& v : t.values()) v = rng.uniform();
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("models");

TEST_CASE("mltn dimension chain reproduces the 128->32->8->2 pipeline") {
    Rng rng(1);
    MltnModel model = MltnModel::make(128, 128, {4, 4, 4}, 5, 2,
                                      FeatureMapKind::SqueezeIdentity, rng);
    REQUIRE(model.layers.size() == 3);
    CHECK(model.layers[0].mps.n_sites == 1024);  // 32x32 site grid
    CHECK(model.layers[0].mps.feature_dim == 16);
    CHECK(model.layers[0].mps.output_dim == 1024);
    CHECK(model.layers[0].out_side == 32);
    CHECK(model.layers[1].mps.n_sites == 64);  // 8x8
    CHECK(model.layers[1].mps.feature_dim == 16);
    CHECK(model.layers[1].out_side == 8);
    CHECK(model.layers[2].mps.n_sites == 4);  // 2x2
    CHECK(model.layers[2].mps.feature_dim == 16);
    CHECK(model.layers[2].mps.output_dim == 2);
}

TEST_CASE("dimension chain invariant holds for arbitrary valid stride lists") {
    Rng rng(2);
    const std::size_t h = 32, w = 32;
    MltnModel model = MltnModel::make(h, w, {2, 4, 2}, 3, 2,
                                      FeatureMapKind::SqueezeIdentity, rng);
    std::size_t pixels = h * w;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const std::size_t k = model.layers[l].squeeze.stride;
        pixels /= k * k;
        CHECK(model.layers[l].mps.n_sites == pixels);
        CHECK(model.layers[l].mps.feature_dim == k * k);
    }
}

TEST_CASE("invalid stride chains are rejected before training") {
    Rng rng(3);
    CHECK_THROWS_AS(MltnModel::make(128, 128, {16, 16}, 5, 2,
                                    FeatureMapKind::SqueezeIdentity, rng),
                    ConfigError);
    CHECK_THROWS_AS(MltnModel::make(12, 12, {5}, 5, 2,
                                    FeatureMapKind::SqueezeIdentity, rng),
                    ConfigError);
}

TEST_CASE("single-layer stride-1 sinusoidal model equals the tenetx chain") {
    const std::size_t h = 4, w = 4;
    Rng rng_a(99), rng_b(99);
    MltnModel mltn = MltnModel::make(h, w, {1}, 3, 2,
                                     FeatureMapKind::Sinusoidal, rng_a);
    TenetxModel tenetx =
        TenetxModel::make(h, w, 3, 2, FeatureMapKind::Sinusoidal, rng_b);

    Rng data(5);
    Tensor batch = random_batch(data, 3, h, w);
    Tensor a = mltn.forward(batch, Mode::Eval, false);
    Tensor b = tenetx.forward(batch);
    CHECK(max_rel_err(a, b) == 0.0);  // identical weights, identical path
}

TEST_CASE("eval-mode batch rows are independent") {
    Rng rng(7);
    MltnModel model = MltnModel::make(8, 8, {2, 2}, 2, 2,
                                      FeatureMapKind::SqueezeIdentity, rng);
    Rng data(8);
    Tensor batch = random_batch(data, 2, 8, 8);
    Tensor both = model.forward(batch, Mode::Eval, false);
    for (std::size_t b = 0; b < 2; ++b) {
        Tensor one({1, 8, 8});
        std::copy(batch.data() + b * 64, batch.data() + (b + 1) * 64, one.data());
        Tensor single = model.forward(one, Mode::Eval, false);
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(single[k] == both[b * 2 + k]);
    }
}

TEST_CASE("every mltn parameter gradient matches finite differences") {
    Rng rng(11);
    MltnModel model = MltnModel::make(8, 8, {2, 2}, 2, 2,
                                      FeatureMapKind::SqueezeIdentity, rng);
    Rng data(12);
    Tensor batch = random_batch(data, 2, 8, 8);
    const std::vector<int> labels = {0, 1};

    MltnCache cache;
    Tensor logits = model.forward(batch, Mode::Train, false, &cache);
    Tensor grad_logits;
    cross_entropy_with_logits(logits, labels, &grad_logits);
    ParamGrads grads = model.backward(cache, grad_logits);

    auto loss = [&]() {
        Tensor l = model.forward(batch, Mode::Train, false);
        return cross_entropy_with_logits(l, labels);
    };
    std::vector<ParamRef> params = model.parameters();
    REQUIRE(params.size() == grads.size());
    std::size_t checked = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].size; ++i) {
            const double fd = testutil::fd_grad(&params[p].data[i], 1e-5, loss);
            const bool ok = grad_close(grads[p][i], fd, 1e-4, 1e-6);
            if (!ok)
                MESSAGE("param ", params[p].name, "[", i, "] analytic ",
                        grads[p][i], " fd ", fd);
            CHECK(ok);
            ++checked;
        }
    }
    CHECK(checked == model.param_count());
}

TEST_CASE("mltn input gradients match finite differences") {
    Rng rng(13);
    MltnModel model = MltnModel::make(8, 8, {2, 2}, 2, 2,
                                      FeatureMapKind::SqueezeIdentity, rng);
    Rng data(14);
    Tensor batch = random_batch(data, 1, 8, 8);
    const std::vector<int> labels = {1};

    MltnCache cache;
    Tensor logits = model.forward(batch, Mode::Train, false, &cache);
    Tensor grad_logits;
    cross_entropy_with_logits(logits, labels, &grad_logits);
    Tensor input_grad;
    model.backward(cache, grad_logits, &input_grad);

    auto loss = [&]() {
        Tensor l = model.forward(batch, Mode::Train, false);
        return cross_entropy_with_logits(l, labels);
    };
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double fd = testutil::fd_grad(&batch[i], 1e-6, loss);
        CHECK(grad_close(input_grad[i], fd, 1e-4, 1e-6));
    }
}

TEST_CASE("duplicated batch doubles the gradient under eval-mode norm") {
    Rng rng(17);
    MltnModel model = MltnModel::make(8, 8, {2, 2}, 2, 2,
                                      FeatureMapKind::SqueezeIdentity, rng);
    // Make eval mode non-trivial.
    model.layers[0].bn.running_mean = 0.3;
    model.layers[0].bn.running_var = 1.7;
    Rng data(18);
    Tensor one = random_batch(data, 1, 8, 8);
    Tensor two({2, 8, 8});
    std::copy(one.data(), one.data() + 64, two.data());
    std::copy(one.data(), one.data() + 64, two.data() + 64);

    Tensor g1({1, 2}, {0.7, -1.1});
    Tensor g2({2, 2}, {0.7, -1.1, 0.7, -1.1});

    MltnCache c1, c2;
    model.forward(one, Mode::Eval, false, &c1);
    model.forward(two, Mode::Eval, false, &c2);
    ParamGrads a = model.backward(c1, g1);
    ParamGrads b = model.backward(c2, g2);
    for (std::size_t p = 0; p < a.size(); ++p)
        for (std::size_t i = 0; i < a[p].size(); ++i)
            CHECK(b[p][i] == doctest::Approx(2.0 * a[p][i]).epsilon(1e-13));
}

TEST_CASE("zero upstream gradient zeroes every mltn parameter gradient") {
    Rng rng(19);
    MltnModel model = MltnModel::make(8, 8, {2, 2}, 2, 2,
                                      FeatureMapKind::SqueezeIdentity, rng);
    Rng data(20);
    Tensor batch = random_batch(data, 2, 8, 8);
    MltnCache cache;
    model.forward(batch, Mode::Train, false, &cache);
    ParamGrads grads = model.backward(cache, Tensor({2, 2}));
    for (const Tensor& g : grads)
        for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("whole-image patch equals a stride-1 squeeze layer") {
    // A patch covering the full image makes the patched pipeline collapse to
    // squeeze(k=1) + feature map + one MPS, i.e. a single-chain layer.
    Rng rng(23);
    const std::size_t h = 4, w = 4;
    MpsBlock block = MpsBlock::random(h * w, 2, 3, 1, rng, 1e-2,
                                      std::numbers::pi / 4.0);
    Rng data(24);
    Tensor img({h, w});
    for (auto& v : img.values()) v = data.uniform();

    // Patched route: one k=4 patch, flattened row-major, then the local map.
    Tensor patch_rows = squeeze(img, SqueezeSpec{4, h, w});  // [1, 16]
    Tensor pix = reshape(patch_rows, {h * w});
    Tensor patched = mps_forward(block, local_feature_map(pix, FeatureMapKind::Sinusoidal));

    // Single-chain route: stride-1 squeeze then the same map.
    Tensor sites = squeeze(img, SqueezeSpec{1, h, w});  // [16, 1]
    Tensor mapped = reshape(local_feature_map(sites, FeatureMapKind::Sinusoidal),
                            {h * w, std::size_t{2}});
    Tensor chain = mps_forward(block, mapped);
    CHECK(patched[0] == chain[0]);
}

TEST_CASE("parameter counters are exact under the site-shape convention") {
    Rng rng(29);
    MltnModel mltn = MltnModel::make(128, 128, {4, 4, 4}, 5, 2,
                                     FeatureMapKind::SqueezeIdentity, rng);
    LotenetModel lotenet = LotenetModel::make(128, 128, {4, 4, 4}, 5, 2,
                                              FeatureMapKind::Sinusoidal, rng);
    // Enumerated from the stated shapes: mltn layers 818160 + 50160 + 1360
    // plus 4 batch-norm scalars; lotenet patches 1024*720 + 64*360 + head
    // 1360 plus 4 batch-norm scalars.
    CHECK(mltn.param_count() == 869684);
    CHECK(lotenet.param_count() == 761684);
    // The inter-layer output sites dominate the mltn count at these
    // settings, so the patched baseline is smaller here.
    CHECK(lotenet.param_count() < mltn.param_count());

    // At a coarse first stride the layered model undercuts the single
    // full-resolution chain.
    MltnModel coarse = MltnModel::make(128, 128, {16, 4}, 5, 2,
                                       FeatureMapKind::SqueezeIdentity, rng);
    TenetxModel tenetx =
        TenetxModel::make(128, 128, 5, 2, FeatureMapKind::Sinusoidal, rng);
    CHECK(coarse.param_count() < tenetx.param_count());
}

TEST_CASE("lotenet gradients match finite differences") {
    Rng rng(31);
    LotenetModel model = LotenetModel::make(4, 4, {2, 1}, 2, 2,
                                            FeatureMapKind::Sinusoidal, rng);
    Rng data(32);
    Tensor batch = random_batch(data, 2, 4, 4);
    const std::vector<int> labels = {1, 0};

    LotenetCache cache;
    Tensor logits = model.forward(batch, Mode::Train, false, &cache);
    Tensor grad_logits;
    cross_entropy_with_logits(logits, labels, &grad_logits);
    ParamGrads grads = model.backward(cache, grad_logits);

    auto loss = [&]() {
        Tensor l = model.forward(batch, Mode::Train, false);
        return cross_entropy_with_logits(l, labels);
    };
    std::vector<ParamRef> params = model.parameters();
    REQUIRE(params.size() == grads.size());
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p].size; ++i) {
            const double fd = testutil::fd_grad(&params[p].data[i], 1e-5, loss);
            CHECK(grad_close(grads[p][i], fd, 1e-4, 1e-6));
        }
}

TEST_CASE("tenetx gradients match finite differences") {
    Rng rng(37);
    TenetxModel model =
        TenetxModel::make(3, 3, 2, 2, FeatureMapKind::Sinusoidal, rng);
    Rng data(38);
    Tensor batch = random_batch(data, 2, 3, 3);
    const std::vector<int> labels = {0, 1};

    TenetxCache cache;
    Tensor logits = model.forward(batch, &cache);
    Tensor grad_logits;
    cross_entropy_with_logits(logits, labels, &grad_logits);
    ParamGrads grads = model.backward(cache, grad_logits);

    auto loss = [&]() {
        return cross_entropy_with_logits(model.forward(batch), labels);
    };
    std::vector<ParamRef> params = model.parameters();
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p].size; ++i) {
            const double fd = testutil::fd_grad(&params[p].data[i], 1e-5, loss);
            CHECK(grad_close(grads[p][i], fd, 1e-4, 1e-6));
        }
}

TEST_CASE("single identity mlp layer selects input entries") {
    Rng rng(41);
    MlpModel model = MlpModel::make(4, {2}, rng);
    model.weights[0].fill(0.0);
    model.weights[0].at({0, 0}) = 1.0;
    model.weights[0].at({1, 1}) = 1.0;
    model.biases[0].fill(0.0);
    Tensor x({1, 4}, {3.5, -2.0, 7.0, 1.0});
    Tensor logits = model.forward(x);
    CHECK(logits[0] == 3.5);
    CHECK(logits[1] == -2.0);
}

TEST_CASE("zero input and zero bias give zero logits") {
    Rng rng(43);
    MlpModel model = MlpModel::make(6, {4, 2}, rng);
    for (auto& b : model.biases) b.fill(0.0);
    Tensor x({2, 6});
    Tensor logits = model.forward(x);
    for (double v : logits.values()) CHECK(v == 0.0);
}

TEST_CASE("mlp gradients match finite differences") {
    Rng rng(47);
    MlpModel model = MlpModel::make(16, {8, 4, 2}, rng);
    Rng data(48);
    Tensor batch({3, 16});
    for (auto& v : batch.values()) v = data.uniform(-1, 1);
    const std::vector<int> labels = {0, 1, 1};

    MlpCache cache;
    Tensor logits = model.forward(batch, &cache);
    Tensor grad_logits;
    cross_entropy_with_logits(logits, labels, &grad_logits);
    ParamGrads grads = model.backward(cache, grad_logits);

    auto loss = [&]() {
        return cross_entropy_with_logits(model.forward(batch), labels);
    };
    std::vector<ParamRef> params = model.parameters();
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p].size; ++i) {
            const double fd = testutil::fd_grad(&params[p].data[i], 1e-5, loss);
            CHECK(grad_close(grads[p][i], fd, 1e-4, 1e-6));
        }
}

TEST_SUITE_END();
