#pragma once

#include <cstdint>

#include "mltn/models.hpp"

namespace mltn {

// Inputs to the analytic forward-cost formulas. d is deliberately an
// explicit argument rather than being derived from k.
struct ComplexityInput {
    double n = 0;     // pixel count N
    double k = 0;     // kernel stride
    double l = 0;     // layer count L
    double d = 0;     // feature dimension
    double beta = 0;  // bond dimension

    void validate() const;
};

// (log N / log k^{2L} + (L-1)) * k^2 * d * beta^2
double flops_mltn(const ComplexityInput& c);

// (log N / log k^{2L} + sum_{l=1..L-1} N / k^{2l}) * k^2 * d * beta^2
double flops_lotenet(const ComplexityInput& c);

// N * d * beta^2
double flops_tenetx(const ComplexityInput& c);

// N * L
double flops_mlp(const ComplexityInput& c);

// Exact multiply counts from an instrumented forward pass over one sample
// (eval mode). The count depends only on the model structure, never on
// parameter or input values.
std::uint64_t measured_flops(MltnModel& model);
std::uint64_t measured_flops(LotenetModel& model);
std::uint64_t measured_flops(const TenetxModel& model);
std::uint64_t measured_flops(const MlpModel& model, std::size_t height,
                             std::size_t width);

}  // namespace mltn
