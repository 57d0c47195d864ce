#pragma once

#include <cstddef>

#include "mltn/tensor.hpp"

namespace mltn {

enum class FeatureMapKind {
    SqueezeIdentity,  // no per-pixel lift; feature dim comes from the squeeze
    Sinusoidal,       // x in [0,1] -> [cos(pi x / 2), sin(pi x / 2)], d = 2
};

// Appends a feature axis. SqueezeIdentity appends an extent-1 axis;
// Sinusoidal appends the unit-norm 2-vector and rejects inputs outside [0,1].
Tensor local_feature_map(const Tensor& pixels, FeatureMapKind kind);

// Jacobian-vector product of the map: given d(loss)/d(mapped), returns
// d(loss)/d(pixels).
Tensor local_feature_map_backward(const Tensor& pixels, FeatureMapKind kind,
                                  const Tensor& grad_mapped);

std::size_t feature_map_dim(FeatureMapKind kind);

// Block re-tiling of an H-by-W image into (H/k)(W/k) sites of k*k features.
// Sites run row-major over the block grid; features run row-major inside
// each block.
struct SqueezeSpec {
    std::size_t stride = 1;  // k
    std::size_t height = 0;  // H
    std::size_t width = 0;   // W

    std::size_t n_sites() const { return (height / stride) * (width / stride); }
    std::size_t site_dim() const { return stride * stride; }
    void validate() const;
};

Tensor squeeze(const Tensor& image, const SqueezeSpec& spec);

// Exact inverse of squeeze: sites [S, k*k] back to the H-by-W image.
Tensor unsqueeze(const Tensor& sites, const SqueezeSpec& spec);

// Row-major reshape of an S-vector into a side-by-side image; S must equal
// side squared.
Tensor rearrange(const Tensor& vec, std::size_t side);

// Single-channel batch normalisation over (batch, height, width). Training
// mode standardises with batch statistics (biased variance) and updates the
// running estimates; eval mode uses the running estimates.
class BatchNorm {
public:
    BatchNorm() = default;
    explicit BatchNorm(double momentum, double epsilon)
        : momentum_(momentum), epsilon_(epsilon) {}

    struct Cache {
        Tensor normalized;  // x-hat, same shape as the input
        double inv_std = 0.0;
        bool training = true;
    };

    // input is any shape; statistics are taken over every element (one
    // channel). update_running=false keeps running statistics untouched,
    // which training-mode gradient checks rely on.
    Tensor forward(const Tensor& input, bool training, bool update_running,
                   Cache* cache = nullptr);

    // Backward matching the cached forward. Training mode differentiates
    // through the batch statistics; eval mode treats them as constants.
    // Fills grad_gamma/grad_beta and returns grad wrt the input.
    Tensor backward(const Cache& cache, const Tensor& grad_out,
                    double* grad_gamma, double* grad_beta) const;

    double gamma = 1.0;
    double beta = 0.0;
    double running_mean = 0.0;
    double running_var = 1.0;

    double momentum() const { return momentum_; }
    double epsilon() const { return epsilon_; }

private:
    double momentum_ = 0.1;
    double epsilon_ = 1e-5;
};

}  // namespace mltn
