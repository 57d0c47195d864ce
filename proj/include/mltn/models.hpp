#pragma once

#include <string>
#include <variant>
#include <vector>

#include "mltn/layers.hpp"
#include "mltn/mps.hpp"
#include "mltn/rng.hpp"
#include "mltn/tensor.hpp"

namespace mltn {

enum class Mode { Train, Eval };

// Flat view of one trainable parameter (or state buffer).
struct ParamRef {
    std::string name;
    double* data = nullptr;
    std::size_t size = 0;
    std::vector<std::size_t> shape;
};

// Gradients aligned index-for-index with a model's parameters().
using ParamGrads = std::vector<Tensor>;

// ---------------------------------------------------------------------------
// Multi-layered tensor network: per layer squeeze -> single MPS contraction
// -> rearrange back to image space with batch normalisation between layers;
// the final layer emits class logits.

struct MltnLayer {
    SqueezeSpec squeeze;
    MpsBlock mps;
    BatchNorm bn;       // unused on the final layer
    std::size_t out_side = 0;  // image side after rearrange (non-final)
};

struct MltnLayerCache {
    std::vector<Tensor> premap;  // pre-feature-map sites, layer 0 only
    std::vector<MpsCache> mps;   // one per sample
    BatchNorm::Cache bn;
};

struct MltnCache {
    Mode mode = Mode::Train;
    std::size_t batch = 0;
    std::vector<MltnLayerCache> layers;
};

class MltnModel {
public:
    static MltnModel make(std::size_t height, std::size_t width,
                          const std::vector<std::size_t>& strides,
                          std::size_t bond_dim, std::size_t class_count,
                          FeatureMapKind map, Rng& rng, double noise_std = 1e-2,
                          double identity_scale = 1.0);

    // batch is [B, H, W]. update_running only matters in training mode.
    Tensor forward(const Tensor& batch, Mode mode, bool update_running = true,
                   MltnCache* cache = nullptr);

    // grad_logits is [B, m]; returns per-parameter gradients summed over the
    // batch. input_grad, when non-null, receives d(loss)/d(batch).
    ParamGrads backward(const MltnCache& cache, const Tensor& grad_logits,
                        Tensor* input_grad = nullptr) const;

    std::vector<ParamRef> parameters();
    std::vector<ParamRef> buffers();
    std::size_t param_count() const;

    std::size_t input_height() const { return height_; }
    std::size_t input_width() const { return width_; }
    std::size_t class_count() const { return classes_; }
    FeatureMapKind feature_map() const { return map_; }

    std::vector<MltnLayer> layers;

private:
    std::size_t height_ = 0, width_ = 0, classes_ = 0;
    FeatureMapKind map_ = FeatureMapKind::SqueezeIdentity;
};

// ---------------------------------------------------------------------------
// Patched baseline: every non-final layer tiles the image into k-by-k pixel
// patches, one independent MPS per patch emits a scalar, and the scalars are
// re-assembled into the next image. The final layer is a single squeeze+MPS
// head, as in MltnModel.

struct LotenetLayer {
    std::size_t patch = 0;  // k
    std::size_t in_h = 0, in_w = 0;
    FeatureMapKind map = FeatureMapKind::SqueezeIdentity;
    std::vector<MpsBlock> blocks;  // (in_h/k)*(in_w/k), unshared weights
    BatchNorm bn;
};

struct LotenetLayerCache {
    std::vector<Tensor> premap;            // [sample*patch] pre-map features
    std::vector<std::vector<MpsCache>> mps;  // [sample][patch]
    BatchNorm::Cache bn;
};

struct LotenetCache {
    Mode mode = Mode::Train;
    std::size_t batch = 0;
    std::vector<LotenetLayerCache> layers;
    std::vector<MpsCache> head;
};

class LotenetModel {
public:
    static LotenetModel make(std::size_t height, std::size_t width,
                             const std::vector<std::size_t>& strides,
                             std::size_t bond_dim, std::size_t class_count,
                             FeatureMapKind first_layer_map, Rng& rng,
                             double noise_std = 1e-2);

    Tensor forward(const Tensor& batch, Mode mode, bool update_running = true,
                   LotenetCache* cache = nullptr);
    ParamGrads backward(const LotenetCache& cache, const Tensor& grad_logits) const;

    std::vector<ParamRef> parameters();
    std::vector<ParamRef> buffers();
    std::size_t param_count() const;

    std::size_t input_height() const { return height_; }
    std::size_t input_width() const { return width_; }
    std::size_t class_count() const { return classes_; }

    std::vector<LotenetLayer> layers;  // the L-1 patched layers
    SqueezeSpec head_squeeze;
    MpsBlock head;

private:
    std::size_t height_ = 0, width_ = 0, classes_ = 0;
};

// ---------------------------------------------------------------------------
// Single-chain baseline: one MPS over the flattened, feature-mapped image.

struct TenetxCache {
    std::vector<Tensor> premap;  // flattened pixels per sample
    std::vector<MpsCache> mps;
};

class TenetxModel {
public:
    static TenetxModel make(std::size_t height, std::size_t width,
                            std::size_t bond_dim, std::size_t class_count,
                            FeatureMapKind map, Rng& rng,
                            double noise_std = 1e-2);

    Tensor forward(const Tensor& batch, TenetxCache* cache = nullptr) const;
    ParamGrads backward(const TenetxCache& cache, const Tensor& grad_logits) const;

    std::vector<ParamRef> parameters();
    std::size_t param_count() const { return chain.param_count(); }

    std::size_t input_height() const { return height_; }
    std::size_t input_width() const { return width_; }
    std::size_t class_count() const { return chain.output_dim; }
    FeatureMapKind feature_map() const { return map_; }

    MpsBlock chain;

private:
    std::size_t height_ = 0, width_ = 0;
    FeatureMapKind map_ = FeatureMapKind::Sinusoidal;
};

// ---------------------------------------------------------------------------
// Dense baseline: fully connected layers with ReLU between them.

struct MlpCache {
    Tensor input;                  // [B, N]
    std::vector<Tensor> pre;       // pre-activation per layer
    std::vector<Tensor> post;      // post-activation per layer (inputs to next)
};

class MlpModel {
public:
    // widths lists every layer's output size; the last entry is the class
    // count.
    static MlpModel make(std::size_t input_dim,
                         const std::vector<std::size_t>& widths, Rng& rng);

    Tensor forward(const Tensor& batch, MlpCache* cache = nullptr) const;
    ParamGrads backward(const MlpCache& cache, const Tensor& grad_logits) const;

    std::vector<ParamRef> parameters();
    std::size_t param_count() const;

    std::size_t input_dim() const { return input_dim_; }
    std::size_t class_count() const { return weights.empty() ? 0 : weights.back().shape()[0]; }

    std::vector<Tensor> weights;  // [out, in] per layer
    std::vector<Tensor> biases;   // [out] per layer

private:
    std::size_t input_dim_ = 0;
};

}  // namespace mltn
