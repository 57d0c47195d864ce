#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mltn/checkpoint.hpp"
#include "mltn/data.hpp"
#include "mltn/models.hpp"
#include "mltn/optim.hpp"

namespace mltn {

enum class ModelKind { Mltn, Lotenet, Tenetx, Mlp };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// One validated record of every run hyperparameter. Defaults mirror the
// training protocol the models were tuned under: batch 512, up to 200
// epochs, patience 10, bond dimension 5, learning rate 5e-6 for mltn and
// 5e-4 for the baselines.
struct TrainConfig {
    ModelKind model = ModelKind::Mltn;
    std::vector<std::size_t> strides;          // per-layer; {2,2} when empty
    std::vector<std::size_t> mlp_hidden = {64, 32, 16};  // hidden widths
    std::size_t bond_dim = 5;
    std::size_t class_count = 2;
    std::optional<FeatureMapKind> feature_map;  // default depends on model
    std::size_t batch_size = 512;
    double lr = 0.0;  // 0 = model default
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    std::size_t folds = 5;
    std::size_t val_fold = 0;
    std::uint64_t seed = 42;
    double clip_norm = 0.0;  // 0 = clipping off
    double noise_std = 1e-2;

    // Dataset: IDX paths take precedence; otherwise a synthetic blob set.
    std::string images_path;
    std::string labels_path;
    std::size_t synth_count = 640;
    std::size_t synth_size = 16;

    std::string out_dir = "runs/latest";

    std::vector<std::size_t> effective_strides() const {
        return strides.empty() ? std::vector<std::size_t>{2, 2} : strides;
    }
    double effective_lr() const {
        if (lr > 0.0) return lr;
        return model == ModelKind::Mltn ? 5e-6 : 5e-4;
    }
    FeatureMapKind effective_map() const {
        if (feature_map) return *feature_map;
        return model == ModelKind::Mltn ? FeatureMapKind::SqueezeIdentity
                                        : FeatureMapKind::Sinusoidal;
    }

    std::string to_text() const;
    static TrainConfig from_text(const std::string& text);
};

// Model-kind dispatch wrapper used by the harness, the CLI and the python
// bindings.
struct AnyModel {
    std::variant<MltnModel, LotenetModel, TenetxModel, MlpModel> impl;

    ModelKind kind() const;
    std::vector<ParamRef> parameters();
    std::vector<ParamRef> buffers();
    std::size_t param_count() const;
    Tensor forward(const Tensor& batch, Mode mode, bool update_running,
                   struct AnyCache* cache);
    ParamGrads backward(const AnyCache& cache, const Tensor& grad_logits);
};

struct AnyCache {
    std::variant<std::monostate, MltnCache, LotenetCache, TenetxCache, MlpCache>
        impl;
};

AnyModel build_model(const TrainConfig& cfg, std::size_t height,
                     std::size_t width);

Dataset load_dataset(const TrainConfig& cfg);

struct EpochRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double val_auroc = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochRow> history;
    std::size_t best_epoch = 0;
    double best_val_acc = 0.0;
    double best_val_auroc = 0.0;
    double mean_epoch_seconds = 0.0;
    std::size_t param_count = 0;
    std::string checkpoint_path;
    std::string metrics_path;
};

inline constexpr const char* kMetricsHeader =
    "epoch,train_loss,val_loss,val_acc,val_auroc,seconds";

// Trains with early stopping on validation accuracy. Writes metrics.csv,
// best.ckpt and summary.json into run_dir.
TrainResult run_training(const TrainConfig& cfg, const Dataset& dataset,
                         const std::string& run_dir);

struct CrossvalResult {
    std::vector<TrainResult> folds;
    double mean_auroc = 0.0;
    double std_auroc = 0.0;
    double mean_epoch_seconds = 0.0;
};

// One training run per fold (fold f validates on fold f); aggregates are
// written to run_dir/aggregate.json.
CrossvalResult run_crossval(const TrainConfig& cfg, const Dataset& dataset,
                            const std::string& run_dir);

struct BenchRow {
    std::string model;
    std::size_t n = 0, k = 0, l = 0, d = 0, beta = 0;
    std::size_t params = 0;
    double analytic_flops = 0.0;
    std::uint64_t measured_mults = 0;
    double epoch_seconds = 0.0;
};

// Analytic cost, instrumented multiply count, parameter count and measured
// per-epoch wall time for one model on a fixed synthetic batch.
BenchRow bench_model(const TrainConfig& cfg, std::size_t height,
                     std::size_t width, std::size_t batch_count);

// Checkpoint plumbing shared by the harness and CLI.
Checkpoint snapshot(const TrainConfig& cfg, AnyModel& model,
                    const AdamState* opt, std::size_t epoch,
                    double best_metric);
void restore(AnyModel& model, const Checkpoint& ckpt, AdamState* opt = nullptr);

}  // namespace mltn
