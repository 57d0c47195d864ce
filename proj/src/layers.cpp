#include "mltn/layers.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mltn/errors.hpp"
#include "mltn/flops.hpp"

namespace mltn {

namespace {
constexpr double kHalfPi = std::numbers::pi / 2.0;
}

std::size_t feature_map_dim(FeatureMapKind kind) {
    return kind == FeatureMapKind::Sinusoidal ? 2 : 1;
}

Tensor local_feature_map(const Tensor& pixels, FeatureMapKind kind) {
    const std::size_t d = feature_map_dim(kind);
    std::vector<std::size_t> shape = pixels.shape();
    shape.push_back(d);
    Tensor out(shape);
    if (kind == FeatureMapKind::SqueezeIdentity) {
        for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = pixels[i];
        return out;
    }
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double x = pixels[i];
        if (x < 0.0 || x > 1.0)
            throw DomainError("sinusoidal feature map needs values in [0,1], got " +
                              std::to_string(x));
        out[2 * i] = std::cos(kHalfPi * x);
        out[2 * i + 1] = std::sin(kHalfPi * x);
    }
    flops::add(pixels.size());  // the pi/2 scaling
    return out;
}

Tensor local_feature_map_backward(const Tensor& pixels, FeatureMapKind kind,
                                  const Tensor& grad_mapped) {
    if (grad_mapped.size() != pixels.size() * feature_map_dim(kind))
        throw ShapeMismatch("feature-map gradient size mismatch");
    Tensor out(pixels.shape());
    if (kind == FeatureMapKind::SqueezeIdentity) {
        for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = grad_mapped[i];
        return out;
    }
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double x = pixels[i];
        out[i] = kHalfPi * (-std::sin(kHalfPi * x) * grad_mapped[2 * i] +
                            std::cos(kHalfPi * x) * grad_mapped[2 * i + 1]);
    }
    return out;
}

void SqueezeSpec::validate() const {
    if (stride == 0 || height == 0 || width == 0)
        throw ConfigError("squeeze spec dimensions must be positive");
    if (height % stride != 0 || width % stride != 0)
        throw ShapeMismatch("stride " + std::to_string(stride) +
                            " does not divide image " + std::to_string(height) +
                            "x" + std::to_string(width));
}

Tensor squeeze(const Tensor& image, const SqueezeSpec& spec) {
    spec.validate();
    if (image.rank() != 2 || image.shape()[0] != spec.height ||
        image.shape()[1] != spec.width)
        throw ShapeMismatch("squeeze expects an image of shape [" +
                            std::to_string(spec.height) + "," +
                            std::to_string(spec.width) + "]");
    const std::size_t k = spec.stride;
    const std::size_t bh = spec.height / k;
    const std::size_t bw = spec.width / k;
    Tensor out({bh * bw, k * k});
    const double* src = image.data();
    double* dst = out.data();
    for (std::size_t by = 0; by < bh; ++by)
        for (std::size_t bx = 0; bx < bw; ++bx) {
            double* site = dst + (by * bw + bx) * k * k;
            for (std::size_t dy = 0; dy < k; ++dy)
                for (std::size_t dx = 0; dx < k; ++dx)
                    site[dy * k + dx] = src[(by * k + dy) * spec.width + bx * k + dx];
        }
    return out;
}

Tensor unsqueeze(const Tensor& sites, const SqueezeSpec& spec) {
    spec.validate();
    const std::size_t k = spec.stride;
    if (sites.rank() != 2 || sites.shape()[0] != spec.n_sites() ||
        sites.shape()[1] != k * k)
        throw ShapeMismatch("unsqueeze expects sites of shape [" +
                            std::to_string(spec.n_sites()) + "," +
                            std::to_string(k * k) + "]");
    const std::size_t bh = spec.height / k;
    const std::size_t bw = spec.width / k;
    Tensor out({spec.height, spec.width});
    const double* src = sites.data();
    double* dst = out.data();
    for (std::size_t by = 0; by < bh; ++by)
        for (std::size_t bx = 0; bx < bw; ++bx) {
            const double* site = src + (by * bw + bx) * k * k;
            for (std::size_t dy = 0; dy < k; ++dy)
                for (std::size_t dx = 0; dx < k; ++dx)
                    dst[(by * k + dy) * spec.width + bx * k + dx] = site[dy * k + dx];
        }
    return out;
}

Tensor rearrange(const Tensor& vec, std::size_t side) {
    if (vec.rank() != 1)
        throw ShapeMismatch("rearrange expects a rank-1 vector");
    if (vec.size() != side * side)
        throw ShapeMismatch("cannot rearrange " + std::to_string(vec.size()) +
                            " values into a " + std::to_string(side) + "x" +
                            std::to_string(side) + " image");
    return Tensor({side, side}, vec.values());
}

Tensor BatchNorm::forward(const Tensor& input, bool training,
                          bool update_running, Cache* cache) {
    const std::size_t n = input.size();
    double mean, var;
    if (training) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += input[i];
        mean = s / static_cast<double>(n);
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = input[i] - mean;
            sq += d * d;
        }
        var = sq / static_cast<double>(n);
        if (update_running) {
            running_mean = (1.0 - momentum_) * running_mean + momentum_ * mean;
            running_var = (1.0 - momentum_) * running_var + momentum_ * var;
        }
    } else {
        mean = running_mean;
        var = running_var;
    }
    const double inv_std = 1.0 / std::sqrt(var + epsilon_);
    Tensor out(input.shape());
    Tensor normalized(input.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double xh = (input[i] - mean) * inv_std;
        normalized[i] = xh;
        out[i] = gamma * xh + beta;
    }
    flops::add(2 * n);
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = inv_std;
        cache->training = training;
    }
    return out;
}

Tensor BatchNorm::backward(const Cache& cache, const Tensor& grad_out,
                           double* grad_gamma, double* grad_beta) const {
    const Tensor& xh = cache.normalized;
    if (!grad_out.same_shape(xh))
        throw CacheMismatch("batch-norm gradient shape mismatch");
    const std::size_t n = grad_out.size();
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum_dy += grad_out[i];
        sum_dy_xh += grad_out[i] * xh[i];
    }
    if (grad_gamma) *grad_gamma += sum_dy_xh;
    if (grad_beta) *grad_beta += sum_dy;

    Tensor grad_in(grad_out.shape());
    const double scale = gamma * cache.inv_std;
    if (cache.training) {
        const double mean_dy = sum_dy / static_cast<double>(n);
        const double mean_dy_xh = sum_dy_xh / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            grad_in[i] = scale * (grad_out[i] - mean_dy - xh[i] * mean_dy_xh);
    } else {
        for (std::size_t i = 0; i < n; ++i) grad_in[i] = scale * grad_out[i];
    }
    return grad_in;
}

}  // namespace mltn
