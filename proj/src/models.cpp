#include "mltn/models.hpp"

#include <cmath>
#include <numbers>

#include "mltn/errors.hpp"
#include "mltn/flops.hpp"

namespace mltn {

namespace {

// Site tensors start near a unit-gain configuration; this scale keeps long
// sinusoidal chains near log-scale zero (mean of cos+sin over [0,1] is 4/pi).
constexpr double kSinusoidalIdentityScale = std::numbers::pi / 4.0;

std::size_t exact_sqrt(std::size_t n) {
    auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    return r * r == n ? r : 0;
}

Tensor slice_sample(const Tensor& batch, std::size_t b) {
    const std::size_t h = batch.shape()[1];
    const std::size_t w = batch.shape()[2];
    Tensor img({h, w});
    const double* src = batch.data() + b * h * w;
    std::copy(src, src + h * w, img.data());
    return img;
}

Tensor row_vector(const Tensor& mat, std::size_t r) {
    const std::size_t m = mat.shape()[1];
    Tensor v({m});
    const double* src = mat.data() + r * m;
    std::copy(src, src + m, v.data());
    return v;
}

void check_batch_shape(const Tensor& batch, std::size_t h, std::size_t w,
                       const char* who) {
    if (batch.rank() != 3 || batch.shape()[1] != h || batch.shape()[2] != w)
        throw ShapeMismatch(std::string(who) + " expects a batch of shape [B," +
                            std::to_string(h) + "," + std::to_string(w) + "]");
}

void require_finite(const Tensor& t, const std::string& where) {
    // Instrumented counting passes only care about the multiply count, so
    // value overflow is not an error there.
    if (flops::enabled()) return;
    if (!t.all_finite())
        throw NumericalError("non-finite values produced by " + where);
}

}  // namespace

// ---------------------------------------------------------------------------
// MltnModel

MltnModel MltnModel::make(std::size_t height, std::size_t width,
                          const std::vector<std::size_t>& strides,
                          std::size_t bond_dim, std::size_t class_count,
                          FeatureMapKind map, Rng& rng, double noise_std,
                          double identity_scale) {
    if (strides.empty()) throw ConfigError("at least one layer stride required");
    if (class_count < 2) throw ConfigError("class count must be >= 2");
    if (bond_dim < 1) throw ConfigError("bond dimension must be >= 1");

    MltnModel model;
    model.height_ = height;
    model.width_ = width;
    model.classes_ = class_count;
    model.map_ = map;

    std::size_t h = height, w = width;
    const std::size_t n_layers = strides.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t k = strides[l];
        if (k == 0 || h % k != 0 || w % k != 0)
            throw ConfigError("layer " + std::to_string(l + 1) + ": stride " +
                              std::to_string(k) + " does not divide " +
                              std::to_string(h) + "x" + std::to_string(w));
        const std::size_t sites = (h / k) * (w / k);
        if (sites < 2)
            throw ConfigError("layer " + std::to_string(l + 1) +
                              ": squeeze leaves fewer than 2 sites");
        const bool final_layer = l + 1 == n_layers;
        const std::size_t d =
            k * k * (l == 0 ? feature_map_dim(map) : 1);
        const std::size_t out_dim = final_layer ? class_count : sites;
        std::size_t side = 0;
        if (!final_layer) {
            side = exact_sqrt(sites);
            if (side == 0)
                throw ConfigError("layer " + std::to_string(l + 1) + ": " +
                                  std::to_string(sites) +
                                  " sites cannot rearrange to a square image");
        }
        MltnLayer layer;
        layer.squeeze = SqueezeSpec{k, h, w};
        double scale = identity_scale;
        if (l == 0 && map == FeatureMapKind::Sinusoidal)
            scale = kSinusoidalIdentityScale / static_cast<double>(k * k);
        layer.mps = MpsBlock::random(sites, d, bond_dim, out_dim, rng, noise_std,
                                     scale);
        layer.bn = BatchNorm(0.1, 1e-5);
        layer.out_side = side;
        model.layers.push_back(std::move(layer));
        if (!final_layer) h = w = side;
    }
    return model;
}

Tensor MltnModel::forward(const Tensor& batch, Mode mode, bool update_running,
                          MltnCache* cache) {
    check_batch_shape(batch, height_, width_, "mltn forward");
    const std::size_t B = batch.shape()[0];
    const std::size_t n_layers = layers.size();
    if (cache) {
        cache->mode = mode;
        cache->batch = B;
        cache->layers.assign(n_layers, MltnLayerCache{});
    }

    Tensor cur = batch;
    Tensor logits;
    for (std::size_t l = 0; l < n_layers; ++l) {
        MltnLayer& ly = layers[l];
        const bool final_layer = l + 1 == n_layers;
        MltnLayerCache* lc = cache ? &cache->layers[l] : nullptr;
        if (lc) {
            lc->mps.resize(B);
            if (l == 0 && map_ == FeatureMapKind::Sinusoidal) lc->premap.resize(B);
        }

        Tensor stacked;  // next image stack or logits
        if (final_layer)
            stacked = Tensor({B, ly.mps.output_dim});
        else
            stacked = Tensor({B, ly.out_side, ly.out_side});

        for (std::size_t b = 0; b < B; ++b) {
            Tensor sites = squeeze(slice_sample(cur, b), ly.squeeze);
            if (l == 0 && map_ == FeatureMapKind::Sinusoidal) {
                if (lc) lc->premap[b] = sites;
                Tensor mapped = local_feature_map(sites, map_);
                sites = reshape(mapped, {ly.mps.n_sites, ly.mps.feature_dim});
            }
            Tensor v = mps_forward(ly.mps, sites, lc ? &lc->mps[b] : nullptr);
            std::copy(v.data(), v.data() + v.size(),
                      stacked.data() + b * v.size());
        }
        require_finite(stacked, "layer " + std::to_string(l + 1) + " contraction");

        if (final_layer) {
            logits = std::move(stacked);
        } else {
            cur = ly.bn.forward(stacked, mode == Mode::Train,
                                update_running && mode == Mode::Train,
                                lc ? &lc->bn : nullptr);
        }
    }
    return logits;
}

ParamGrads MltnModel::backward(const MltnCache& cache, const Tensor& grad_logits,
                               Tensor* input_grad) const {
    const std::size_t n_layers = layers.size();
    if (cache.layers.size() != n_layers)
        throw CacheMismatch("cache layer count does not match model");
    const std::size_t B = cache.batch;
    if (grad_logits.rank() != 2 || grad_logits.shape()[0] != B ||
        grad_logits.shape()[1] != classes_)
        throw CacheMismatch("grad_logits must be [batch, classes]");

    // Pre-size gradients to mirror parameters() ordering: per layer all site
    // tensors, then gamma/beta for non-final layers.
    ParamGrads grads;
    std::vector<std::size_t> site_base(n_layers), gamma_idx(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        site_base[l] = grads.size();
        for (const Tensor& t : layers[l].mps.site_tensors)
            grads.emplace_back(t.shape());
        if (l + 1 < n_layers) {
            gamma_idx[l] = grads.size();
            grads.emplace_back(std::vector<std::size_t>{1});
            grads.emplace_back(std::vector<std::size_t>{1});
        }
    }

    // Per-sample gradients of the current layer's MPS outputs.
    std::vector<Tensor> grad_v(B);
    for (std::size_t b = 0; b < B; ++b) grad_v[b] = row_vector(grad_logits, b);

    for (std::size_t l = n_layers; l-- > 0;) {
        const MltnLayer& ly = layers[l];
        const MltnLayerCache& lc = cache.layers[l];
        if (lc.mps.size() != B) throw CacheMismatch("per-sample cache missing");
        const bool want_input = l > 0 || input_grad != nullptr;

        Tensor grad_img;  // grad wrt this layer's input image stack
        if (want_input)
            grad_img = Tensor({B, ly.squeeze.height, ly.squeeze.width});

        for (std::size_t b = 0; b < B; ++b) {
            MpsGrads g = mps_backward(ly.mps, lc.mps[b], grad_v[b], want_input);
            for (std::size_t j = 0; j < g.site_grads.size(); ++j)
                grads[site_base[l] + j].add_scaled(g.site_grads[j], 1.0);
            if (!want_input) continue;
            Tensor grad_sites = std::move(g.input_grad);
            if (l == 0 && map_ == FeatureMapKind::Sinusoidal) {
                const Tensor& premap = lc.premap[b];
                grad_sites = local_feature_map_backward(
                    premap, map_,
                    reshape(grad_sites, {premap.size(), std::size_t{2}}));
                grad_sites =
                    reshape(grad_sites, {ly.squeeze.n_sites(), ly.squeeze.site_dim()});
            }
            Tensor gi = unsqueeze(grad_sites, ly.squeeze);
            std::copy(gi.data(), gi.data() + gi.size(),
                      grad_img.data() + b * gi.size());
        }

        if (l > 0) {
            // grad_img is the gradient at the previous layer's BN output.
            const MltnLayer& prev = layers[l - 1];
            Tensor grad_pre =
                prev.bn.backward(cache.layers[l - 1].bn, grad_img,
                                 grads[gamma_idx[l - 1]].data(),
                                 grads[gamma_idx[l - 1] + 1].data());
            const std::size_t out = prev.mps.output_dim;
            for (std::size_t b = 0; b < B; ++b) {
                Tensor gv({out});
                std::copy(grad_pre.data() + b * out, grad_pre.data() + (b + 1) * out,
                          gv.data());
                grad_v[b] = std::move(gv);
            }
        } else if (input_grad) {
            *input_grad = std::move(grad_img);
        }
    }
    return grads;
}

std::vector<ParamRef> MltnModel::parameters() {
    std::vector<ParamRef> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        for (std::size_t j = 0; j < layers[l].mps.site_tensors.size(); ++j) {
            Tensor& t = layers[l].mps.site_tensors[j];
            out.push_back({prefix + "/site" + std::to_string(j), t.data(),
                           t.size(), t.shape()});
        }
        if (l + 1 < layers.size()) {
            out.push_back({prefix + "/bn/gamma", &layers[l].bn.gamma, 1, {1}});
            out.push_back({prefix + "/bn/beta", &layers[l].bn.beta, 1, {1}});
        }
    }
    return out;
}

std::vector<ParamRef> MltnModel::buffers() {
    std::vector<ParamRef> out;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        out.push_back({prefix + "/bn/running_mean", &layers[l].bn.running_mean, 1, {1}});
        out.push_back({prefix + "/bn/running_var", &layers[l].bn.running_var, 1, {1}});
    }
    return out;
}

std::size_t MltnModel::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        n += layers[l].mps.param_count();
        if (l + 1 < layers.size()) n += 2;  // gamma, beta
    }
    return n;
}

// ---------------------------------------------------------------------------
// LotenetModel

LotenetModel LotenetModel::make(std::size_t height, std::size_t width,
                                const std::vector<std::size_t>& strides,
                                std::size_t bond_dim, std::size_t class_count,
                                FeatureMapKind first_layer_map, Rng& rng,
                                double noise_std) {
    if (strides.empty()) throw ConfigError("at least one layer stride required");
    if (class_count < 2) throw ConfigError("class count must be >= 2");

    LotenetModel model;
    model.height_ = height;
    model.width_ = width;
    model.classes_ = class_count;

    std::size_t h = height, w = width;
    const std::size_t n_layers = strides.size();
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
        const std::size_t k = strides[l];
        if (k < 2)
            throw ConfigError("patched layer " + std::to_string(l + 1) +
                              ": patch side must be >= 2");
        if (h % k != 0 || w % k != 0)
            throw ConfigError("patched layer " + std::to_string(l + 1) +
                              ": patch " + std::to_string(k) +
                              " does not tile " + std::to_string(h) + "x" +
                              std::to_string(w));
        LotenetLayer layer;
        layer.patch = k;
        layer.in_h = h;
        layer.in_w = w;
        layer.map = l == 0 ? first_layer_map : FeatureMapKind::SqueezeIdentity;
        const std::size_t patches = (h / k) * (w / k);
        const std::size_t d = feature_map_dim(layer.map);
        const double scale = layer.map == FeatureMapKind::Sinusoidal
                                 ? kSinusoidalIdentityScale
                                 : 1.0;
        layer.blocks.reserve(patches);
        for (std::size_t p = 0; p < patches; ++p)
            layer.blocks.push_back(
                MpsBlock::random(k * k, d, bond_dim, 1, rng, noise_std, scale));
        layer.bn = BatchNorm(0.1, 1e-5);
        model.layers.push_back(std::move(layer));
        h /= k;
        w /= k;
    }

    const std::size_t k = strides.back();
    if (k == 0 || h % k != 0 || w % k != 0)
        throw ConfigError("head layer: stride " + std::to_string(k) +
                          " does not divide " + std::to_string(h) + "x" +
                          std::to_string(w));
    const std::size_t sites = (h / k) * (w / k);
    if (sites < 2) throw ConfigError("head layer: fewer than 2 sites");
    model.head_squeeze = SqueezeSpec{k, h, w};
    model.head =
        MpsBlock::random(sites, k * k, bond_dim, class_count, rng, noise_std);
    return model;
}

Tensor LotenetModel::forward(const Tensor& batch, Mode mode, bool update_running,
                             LotenetCache* cache) {
    check_batch_shape(batch, height_, width_, "lotenet forward");
    const std::size_t B = batch.shape()[0];
    if (cache) {
        cache->mode = mode;
        cache->batch = B;
        cache->layers.assign(layers.size(), LotenetLayerCache{});
        cache->head.clear();
        cache->head.resize(B);
    }

    Tensor cur = batch;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        LotenetLayer& ly = layers[l];
        const std::size_t k = ly.patch;
        const std::size_t patches = ly.blocks.size();
        const std::size_t oh = ly.in_h / k;
        const std::size_t ow = ly.in_w / k;
        LotenetLayerCache* lc = cache ? &cache->layers[l] : nullptr;
        if (lc) {
            lc->mps.assign(B, std::vector<MpsCache>(patches));
            if (ly.map == FeatureMapKind::Sinusoidal)
                lc->premap.resize(B * patches);
        }
        const SqueezeSpec tile{k, ly.in_h, ly.in_w};
        Tensor stacked({B, oh, ow});
        for (std::size_t b = 0; b < B; ++b) {
            Tensor patch_rows = squeeze(slice_sample(cur, b), tile);  // [P, k*k]
            for (std::size_t p = 0; p < patches; ++p) {
                Tensor pix({k * k});
                std::copy(patch_rows.data() + p * k * k,
                          patch_rows.data() + (p + 1) * k * k, pix.data());
                Tensor sites;
                if (ly.map == FeatureMapKind::Sinusoidal) {
                    if (lc) lc->premap[b * patches + p] = pix;
                    sites = local_feature_map(pix, ly.map);  // [k*k, 2]
                } else {
                    sites = reshape(pix, {k * k, std::size_t{1}});
                }
                Tensor v = mps_forward(ly.blocks[p], sites,
                                       lc ? &lc->mps[b][p] : nullptr);
                stacked[b * patches + p] = v[0];
            }
        }
        require_finite(stacked, "patched layer " + std::to_string(l + 1));
        cur = ly.bn.forward(stacked, mode == Mode::Train,
                            update_running && mode == Mode::Train,
                            lc ? &lc->bn : nullptr);
    }

    Tensor logits({B, head.output_dim});
    for (std::size_t b = 0; b < B; ++b) {
        Tensor sites = squeeze(slice_sample(cur, b), head_squeeze);
        Tensor v = mps_forward(head, sites, cache ? &cache->head[b] : nullptr);
        std::copy(v.data(), v.data() + v.size(), logits.data() + b * v.size());
    }
    require_finite(logits, "head layer");
    return logits;
}

ParamGrads LotenetModel::backward(const LotenetCache& cache,
                                  const Tensor& grad_logits) const {
    const std::size_t B = cache.batch;
    if (grad_logits.rank() != 2 || grad_logits.shape()[0] != B ||
        grad_logits.shape()[1] != classes_)
        throw CacheMismatch("grad_logits must be [batch, classes]");
    if (cache.layers.size() != layers.size() || cache.head.size() != B)
        throw CacheMismatch("cache does not match model");

    ParamGrads grads;
    std::vector<std::size_t> layer_base(layers.size()), gamma_idx(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layer_base[l] = grads.size();
        for (const MpsBlock& blk : layers[l].blocks)
            for (const Tensor& t : blk.site_tensors) grads.emplace_back(t.shape());
        gamma_idx[l] = grads.size();
        grads.emplace_back(std::vector<std::size_t>{1});
        grads.emplace_back(std::vector<std::size_t>{1});
    }
    const std::size_t head_base = grads.size();
    for (const Tensor& t : head.site_tensors) grads.emplace_back(t.shape());

    // Head backward; its input gradient seeds the patched stack.
    const bool has_patched = !layers.empty();
    Tensor grad_img;
    if (has_patched)
        grad_img = Tensor({B, head_squeeze.height, head_squeeze.width});
    for (std::size_t b = 0; b < B; ++b) {
        MpsGrads g = mps_backward(head, cache.head[b], row_vector(grad_logits, b),
                                  has_patched);
        for (std::size_t j = 0; j < g.site_grads.size(); ++j)
            grads[head_base + j].add_scaled(g.site_grads[j], 1.0);
        if (has_patched) {
            Tensor gi = unsqueeze(g.input_grad, head_squeeze);
            std::copy(gi.data(), gi.data() + gi.size(),
                      grad_img.data() + b * gi.size());
        }
    }

    for (std::size_t l = layers.size(); l-- > 0;) {
        const LotenetLayer& ly = layers[l];
        const std::size_t k = ly.patch;
        const std::size_t patches = ly.blocks.size();
        // grad_img currently holds the gradient at this layer's BN output.
        Tensor grad_pre = ly.bn.backward(cache.layers[l].bn, grad_img,
                                         grads[gamma_idx[l]].data(),
                                         grads[gamma_idx[l] + 1].data());
        const bool want_input = l > 0;
        Tensor next_grad;
        if (want_input) next_grad = Tensor({B, ly.in_h, ly.in_w});
        const SqueezeSpec tile{k, ly.in_h, ly.in_w};
        for (std::size_t b = 0; b < B; ++b) {
            Tensor patch_grads({patches, k * k});
            for (std::size_t p = 0; p < patches; ++p) {
                Tensor gv({1});
                gv[0] = grad_pre[b * patches + p];
                MpsGrads g = mps_backward(ly.blocks[p], cache.layers[l].mps[b][p],
                                          gv, want_input);
                for (std::size_t j = 0; j < g.site_grads.size(); ++j)
                    grads[layer_base[l] + p * (k * k) + j].add_scaled(
                        g.site_grads[j], 1.0);
                if (!want_input) continue;
                Tensor gs = std::move(g.input_grad);  // [k*k, d]
                if (ly.map == FeatureMapKind::Sinusoidal) {
                    gs = local_feature_map_backward(
                        cache.layers[l].premap[b * patches + p], ly.map, gs);
                } else {
                    gs = reshape(gs, {k * k});
                }
                std::copy(gs.data(), gs.data() + k * k,
                          patch_grads.data() + p * k * k);
            }
            if (want_input) {
                Tensor gi = unsqueeze(patch_grads, tile);
                std::copy(gi.data(), gi.data() + gi.size(),
                          next_grad.data() + b * gi.size());
            }
        }
        grad_img = std::move(next_grad);
    }
    return grads;
}

std::vector<ParamRef> LotenetModel::parameters() {
    std::vector<ParamRef> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        for (std::size_t p = 0; p < layers[l].blocks.size(); ++p)
            for (std::size_t j = 0; j < layers[l].blocks[p].site_tensors.size(); ++j) {
                Tensor& t = layers[l].blocks[p].site_tensors[j];
                out.push_back({prefix + "/patch" + std::to_string(p) + "/site" +
                                   std::to_string(j),
                               t.data(), t.size(), t.shape()});
            }
        out.push_back({prefix + "/bn/gamma", &layers[l].bn.gamma, 1, {1}});
        out.push_back({prefix + "/bn/beta", &layers[l].bn.beta, 1, {1}});
    }
    for (std::size_t j = 0; j < head.site_tensors.size(); ++j) {
        Tensor& t = head.site_tensors[j];
        out.push_back({"head/site" + std::to_string(j), t.data(), t.size(),
                       t.shape()});
    }
    return out;
}

std::vector<ParamRef> LotenetModel::buffers() {
    std::vector<ParamRef> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        out.push_back({prefix + "/bn/running_mean", &layers[l].bn.running_mean, 1, {1}});
        out.push_back({prefix + "/bn/running_var", &layers[l].bn.running_var, 1, {1}});
    }
    return out;
}

std::size_t LotenetModel::param_count() const {
    std::size_t n = 0;
    for (const LotenetLayer& ly : layers) {
        for (const MpsBlock& blk : ly.blocks) n += blk.param_count();
        n += 2;
    }
    return n + head.param_count();
}

// ---------------------------------------------------------------------------
// TenetxModel

TenetxModel TenetxModel::make(std::size_t height, std::size_t width,
                              std::size_t bond_dim, std::size_t class_count,
                              FeatureMapKind map, Rng& rng, double noise_std) {
    if (class_count < 2) throw ConfigError("class count must be >= 2");
    const std::size_t pixels = height * width;
    if (pixels < 2) throw ConfigError("image must have at least 2 pixels");
    TenetxModel model;
    model.height_ = height;
    model.width_ = width;
    model.map_ = map;
    const double scale = map == FeatureMapKind::Sinusoidal
                             ? kSinusoidalIdentityScale
                             : 1.0;
    model.chain = MpsBlock::random(pixels, feature_map_dim(map), bond_dim,
                                   class_count, rng, noise_std, scale);
    return model;
}

Tensor TenetxModel::forward(const Tensor& batch, TenetxCache* cache) const {
    check_batch_shape(batch, height_, width_, "tenetx forward");
    const std::size_t B = batch.shape()[0];
    const std::size_t pixels = height_ * width_;
    if (cache) {
        cache->mps.clear();
        cache->mps.resize(B);
        cache->premap.assign(B, Tensor());
    }
    Tensor logits({B, chain.output_dim});
    for (std::size_t b = 0; b < B; ++b) {
        Tensor flat({pixels});
        std::copy(batch.data() + b * pixels, batch.data() + (b + 1) * pixels,
                  flat.data());
        Tensor sites;
        if (map_ == FeatureMapKind::Sinusoidal) {
            if (cache) cache->premap[b] = flat;
            sites = local_feature_map(flat, map_);
        } else {
            sites = reshape(flat, {pixels, std::size_t{1}});
        }
        Tensor v = mps_forward(chain, sites, cache ? &cache->mps[b] : nullptr);
        std::copy(v.data(), v.data() + v.size(), logits.data() + b * v.size());
    }
    require_finite(logits, "tenetx chain");
    return logits;
}

ParamGrads TenetxModel::backward(const TenetxCache& cache,
                                 const Tensor& grad_logits) const {
    const std::size_t B = cache.mps.size();
    if (grad_logits.rank() != 2 || grad_logits.shape()[0] != B ||
        grad_logits.shape()[1] != chain.output_dim)
        throw CacheMismatch("grad_logits must be [batch, classes]");
    ParamGrads grads;
    for (const Tensor& t : chain.site_tensors) grads.emplace_back(t.shape());
    for (std::size_t b = 0; b < B; ++b) {
        MpsGrads g =
            mps_backward(chain, cache.mps[b], row_vector(grad_logits, b), false);
        for (std::size_t j = 0; j < g.site_grads.size(); ++j)
            grads[j].add_scaled(g.site_grads[j], 1.0);
    }
    return grads;
}

std::vector<ParamRef> TenetxModel::parameters() {
    std::vector<ParamRef> out;
    for (std::size_t j = 0; j < chain.site_tensors.size(); ++j) {
        Tensor& t = chain.site_tensors[j];
        out.push_back({"chain/site" + std::to_string(j), t.data(), t.size(),
                       t.shape()});
    }
    return out;
}

// ---------------------------------------------------------------------------
// MlpModel

MlpModel MlpModel::make(std::size_t input_dim,
                        const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.empty()) throw ConfigError("MLP needs at least one layer");
    MlpModel model;
    model.input_dim_ = input_dim;
    std::size_t in = input_dim;
    for (std::size_t out : widths) {
        if (out == 0) throw ConfigError("MLP layer width must be positive");
        Tensor w({out, in});
        const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = rng.normal(0.0, std_dev);
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(std::vector<std::size_t>{out});
        in = out;
    }
    return model;
}

Tensor MlpModel::forward(const Tensor& batch, MlpCache* cache) const {
    Tensor x;
    if (batch.rank() == 3)
        x = reshape(batch, {batch.shape()[0], batch.shape()[1] * batch.shape()[2]});
    else if (batch.rank() == 2)
        x = batch;
    else
        throw ShapeMismatch("mlp forward expects [B, N] or [B, H, W]");
    if (x.shape()[1] != input_dim_)
        throw ShapeMismatch("mlp expects " + std::to_string(input_dim_) +
                            " inputs, got " + std::to_string(x.shape()[1]));
    const std::size_t B = x.shape()[0];
    if (cache) {
        cache->input = x;
        cache->pre.clear();
        cache->post.clear();
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const Tensor& w = weights[l];
        const std::size_t out = w.shape()[0];
        const std::size_t in = w.shape()[1];
        Tensor z({B, out});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < out; ++o) {
                const double* wr = w.data() + o * in;
                const double* xr = x.data() + b * in;
                double acc = biases[l][o];
                for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
                z[b * out + o] = acc;
            }
        flops::add(static_cast<std::uint64_t>(B) * out * in);
        if (cache) cache->pre.push_back(z);
        if (l + 1 < weights.size()) {
            for (std::size_t i = 0; i < z.size(); ++i)
                if (z[i] < 0.0) z[i] = 0.0;
        }
        if (cache) cache->post.push_back(z);
        x = std::move(z);
    }
    return x;
}

ParamGrads MlpModel::backward(const MlpCache& cache,
                              const Tensor& grad_logits) const {
    const std::size_t B = cache.input.shape()[0];
    if (cache.pre.size() != weights.size())
        throw CacheMismatch("mlp cache does not match model");
    if (grad_logits.rank() != 2 || grad_logits.shape()[0] != B ||
        grad_logits.shape()[1] != weights.back().shape()[0])
        throw CacheMismatch("grad_logits must be [batch, classes]");

    ParamGrads grads;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        grads.emplace_back(weights[l].shape());
        grads.emplace_back(biases[l].shape());
    }

    Tensor gz = grad_logits;
    for (std::size_t l = weights.size(); l-- > 0;) {
        const Tensor& w = weights[l];
        const std::size_t out = w.shape()[0];
        const std::size_t in = w.shape()[1];
        const Tensor& x = l == 0 ? cache.input : cache.post[l - 1];
        Tensor& gw = grads[2 * l];
        Tensor& gb = grads[2 * l + 1];
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < out; ++o) {
                const double g = gz[b * out + o];
                gb[o] += g;
                const double* xr = x.data() + b * in;
                double* gwr = gw.data() + o * in;
                for (std::size_t i = 0; i < in; ++i) gwr[i] += g * xr[i];
            }
        if (l == 0) break;
        Tensor gx({B, in});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < out; ++o) {
                const double g = gz[b * out + o];
                const double* wr = w.data() + o * in;
                double* gxr = gx.data() + b * in;
                for (std::size_t i = 0; i < in; ++i) gxr[i] += g * wr[i];
            }
        // ReLU mask from the previous layer's pre-activation.
        const Tensor& pre = cache.pre[l - 1];
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (pre[i] <= 0.0) gx[i] = 0.0;
        gz = std::move(gx);
    }
    return grads;
}

std::vector<ParamRef> MlpModel::parameters() {
    std::vector<ParamRef> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back({"fc" + std::to_string(l) + "/weight", weights[l].data(),
                       weights[l].size(), weights[l].shape()});
        out.push_back({"fc" + std::to_string(l) + "/bias", biases[l].data(),
                       biases[l].size(), biases[l].shape()});
    }
    return out;
}

std::size_t MlpModel::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].size() + biases[l].size();
    return n;
}

}  // namespace mltn
