#pragma once

#include <cstdint>
#include <vector>

#include "mltn/models.hpp"
#include "mltn/tensor.hpp"

namespace mltn {

// Mean-over-batch softmax cross entropy, stabilised by max subtraction.
// Returns the loss and fills grad_logits with (softmax - onehot) / B.
double cross_entropy_with_logits(const Tensor& logits,
                                 const std::vector<int>& labels,
                                 Tensor* grad_logits = nullptr);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;  // first moments, one per parameter
    std::vector<std::vector<double>> v;  // second moments

    static AdamState for_params(const std::vector<ParamRef>& params, double lr);
};

// One bias-corrected Adam update applied in place through the parameter
// views. Gradient shapes must mirror the parameters exactly.
void adam_step(std::vector<ParamRef>& params, const ParamGrads& grads,
               AdamState& state);

// Scales all gradients by max_norm/g when the global L2 norm g exceeds
// max_norm. Returns the pre-clip norm.
double clip_grad_norm(ParamGrads& grads, double max_norm);

}  // namespace mltn
