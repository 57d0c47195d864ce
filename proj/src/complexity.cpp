#include "mltn/complexity.hpp"

#include <cmath>

#include "mltn/errors.hpp"
#include "mltn/flops.hpp"

namespace mltn {

namespace {

// The counters feed the forward pass a constant mid-range image: the multiply
// count is structure-only, the fill merely keeps stabilised partials nonzero.
constexpr double kProbeFill = 0.1;

double log_term(const ComplexityInput& c) {
    return std::log(c.n) / std::log(std::pow(c.k, 2.0 * c.l));
}

}  // namespace

void ComplexityInput::validate() const {
    if (n <= 0 || k <= 0 || l <= 0 || d <= 0 || beta <= 0)
        throw DomainError("complexity inputs must be positive");
    if (std::pow(k, 2.0 * l) <= 1.0)
        throw DomainError("k^(2L) must exceed 1 for the log term");
}

double flops_mltn(const ComplexityInput& c) {
    c.validate();
    return (log_term(c) + (c.l - 1.0)) * c.k * c.k * c.d * c.beta * c.beta;
}

double flops_lotenet(const ComplexityInput& c) {
    c.validate();
    double patch_ops = 0.0;
    const long layers = std::lround(c.l);
    for (long l = 1; l < layers; ++l)
        patch_ops += c.n / std::pow(c.k, 2.0 * static_cast<double>(l));
    return (log_term(c) + patch_ops) * c.k * c.k * c.d * c.beta * c.beta;
}

double flops_tenetx(const ComplexityInput& c) {
    c.validate();
    return c.n * c.d * c.beta * c.beta;
}

double flops_mlp(const ComplexityInput& c) {
    c.validate();
    return c.n * c.l;
}

std::uint64_t measured_flops(MltnModel& model) {
    Tensor probe =
        Tensor::full({1, model.input_height(), model.input_width()}, kProbeFill);
    flops::ScopedCounter counter;
    model.forward(probe, Mode::Eval, false);
    return counter.count();
}

std::uint64_t measured_flops(LotenetModel& model) {
    Tensor probe =
        Tensor::full({1, model.input_height(), model.input_width()}, kProbeFill);
    flops::ScopedCounter counter;
    model.forward(probe, Mode::Eval, false);
    return counter.count();
}

std::uint64_t measured_flops(const TenetxModel& model) {
    Tensor probe =
        Tensor::full({1, model.input_height(), model.input_width()}, kProbeFill);
    flops::ScopedCounter counter;
    model.forward(probe);
    return counter.count();
}

std::uint64_t measured_flops(const MlpModel& model, std::size_t height,
                             std::size_t width) {
    Tensor probe = Tensor::full({1, height, width}, kProbeFill);
    flops::ScopedCounter counter;
    model.forward(probe);
    return counter.count();
}

}  // namespace mltn
