#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mltn/errors.hpp"
#include "mltn/optim.hpp"
#include "mltn/rng.hpp"

using namespace mltn;
using testutil::grad_close;

TEST_SUITE_BEGIN("optim");

TEST_CASE("cross entropy closed-form values") {
    // uniform softmax
    Tensor a({1, 2}, {0.0, 0.0});
    CHECK(cross_entropy_with_logits(a, {0}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(cross_entropy_with_logits(a, {1}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // saturated correct prediction
    Tensor b({1, 2}, {30.0, -30.0});
    CHECK(cross_entropy_with_logits(b, {0}) < 1e-12);

    // ln(1 + e^2) for logits [1, -1] and label 1
    Tensor c({1, 2}, {1.0, -1.0});
    CHECK(cross_entropy_with_logits(c, {1}) ==
          doctest::Approx(std::log(1.0 + std::exp(2.0))).epsilon(1e-12));
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(3);
    Tensor logits({4, 3});
    for (auto& v : logits.values()) v = rng.uniform(-2, 2);
    const std::vector<int> labels = {0, 2, 1, 2};
    Tensor grad;
    cross_entropy_with_logits(logits, labels, &grad);
    auto loss = [&]() { return cross_entropy_with_logits(logits, labels); };
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double fd = testutil::fd_grad(&logits[i], 1e-6, loss);
        CHECK(grad_close(grad[i], fd, 1e-6, 1e-10));
    }
}

TEST_CASE("cross entropy is shift invariant per sample") {
    Rng rng(5);
    Tensor logits({2, 4});
    for (auto& v : logits.values()) v = rng.uniform(-3, 3);
    const std::vector<int> labels = {3, 1};
    const double base = cross_entropy_with_logits(logits, labels);
    Tensor shifted = logits;
    for (std::size_t k = 0; k < 4; ++k) shifted[k] += 123.456;
    for (std::size_t k = 0; k < 4; ++k) shifted[4 + k] -= 55.5;
    const double moved = cross_entropy_with_logits(shifted, labels);
    CHECK(std::fabs(base - moved) < 1e-12);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    Tensor logits({1, 2});
    CHECK_THROWS_AS(cross_entropy_with_logits(logits, {2}), LabelOutOfRange);
    CHECK_THROWS_AS(cross_entropy_with_logits(logits, {-1}), LabelOutOfRange);
}

TEST_CASE("adam leaves parameters alone on zero gradient") {
    double value = 1.25;
    std::vector<ParamRef> params{{"p", &value, 1, {1}}};
    AdamState st = AdamState::for_params(params, 1e-3);
    ParamGrads grads;
    grads.emplace_back(std::vector<std::size_t>{1});
    adam_step(params, grads, st);
    CHECK(value == 1.25);
    CHECK(st.step == 1);
}

TEST_CASE("first adam step moves by roughly lr times the gradient sign") {
    double value = 1.0;
    std::vector<ParamRef> params{{"p", &value, 1, {1}}};
    AdamState st = AdamState::for_params(params, 1e-3);
    ParamGrads grads;
    grads.emplace_back(std::vector<std::size_t>{1});
    grads[0][0] = 0.5;
    adam_step(params, grads, st);
    // m-hat = 0.5, v-hat = 0.25: update = lr * 0.5 / (0.5 + eps)
    const double expected = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
    CHECK(value == doctest::Approx(expected).epsilon(1e-12));
    CHECK(value == doctest::Approx(0.999).epsilon(1e-7));
}

TEST_CASE("constant positive gradients move the parameter monotonically down") {
    double value = 0.7;
    std::vector<ParamRef> params{{"p", &value, 1, {1}}};
    AdamState st = AdamState::for_params(params, 1e-2);
    ParamGrads grads;
    grads.emplace_back(std::vector<std::size_t>{1});
    double prev = value;
    for (int i = 0; i < 5; ++i) {
        grads[0][0] = 0.3;
        adam_step(params, grads, st);
        CHECK(value < prev);
        prev = value;
    }
}

TEST_CASE("adam update direction is scale free for constant gradients") {
    for (double scale : {1e-6, 1.0, 1e6}) {
        double value = 0.0;
        std::vector<ParamRef> params{{"p", &value, 1, {1}}};
        AdamState st = AdamState::for_params(params, 1e-3);
        ParamGrads grads;
        grads.emplace_back(std::vector<std::size_t>{1});
        for (int i = 0; i < 50; ++i) {
            grads[0][0] = scale;
            adam_step(params, grads, st);
        }
        // after warmup the per-step move approaches -lr regardless of scale
        CHECK(value < 0.0);
        CHECK(std::fabs(value + 50 * 1e-3) / (50 * 1e-3) < 0.2);
    }
}

TEST_CASE("adam rejects shape mismatches") {
    double value = 0.0;
    std::vector<ParamRef> params{{"p", &value, 1, {1}}};
    AdamState st = AdamState::for_params(params, 1e-3);
    ParamGrads grads;
    grads.emplace_back(std::vector<std::size_t>{2});
    CHECK_THROWS_AS(adam_step(params, grads, st), ShapeMismatch);
}

TEST_CASE("gradient clipping") {
    ParamGrads small;
    small.emplace_back(std::vector<std::size_t>{2});
    small[0][0] = 0.3;
    small[0][1] = 0.4;  // norm 0.5
    CHECK(clip_grad_norm(small, 1.0) == doctest::Approx(0.5));
    CHECK(small[0][0] == 0.3);
    CHECK(small[0][1] == 0.4);

    ParamGrads big;
    big.emplace_back(std::vector<std::size_t>{2});
    big[0][0] = 3.0;
    big[0][1] = 4.0;
    CHECK(clip_grad_norm(big, 1.0) == doctest::Approx(5.0));
    CHECK(big[0][0] == doctest::Approx(0.6));
    CHECK(big[0][1] == doctest::Approx(0.8));
}

TEST_CASE("clipping caps the norm and is idempotent") {
    Rng rng(7);
    ParamGrads grads;
    grads.emplace_back(std::vector<std::size_t>{8});
    grads.emplace_back(std::vector<std::size_t>{3});
    for (auto& g : grads)
        for (auto& v : g.values()) v = rng.uniform(-4, 4);
    const double pre = clip_grad_norm(grads, 1.5);
    double post_sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.values()) post_sq += v * v;
    CHECK(std::sqrt(post_sq) ==
          doctest::Approx(std::min(pre, 1.5)).epsilon(1e-12));
    ParamGrads copy = grads;
    clip_grad_norm(grads, 1.5);
    for (std::size_t p = 0; p < grads.size(); ++p)
        CHECK(testutil::max_rel_err(grads[p], copy[p]) < 1e-12);
}

TEST_SUITE_END();
