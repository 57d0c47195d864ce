#include "mltn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "mltn/complexity.hpp"
#include "mltn/errors.hpp"
#include "mltn/metrics.hpp"

namespace mltn {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string fmt_sizes(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoull(item));
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

double chunked_eval(AnyModel& model, const Dataset& ds,
                    const std::vector<std::size_t>& idx, std::size_t chunk,
                    Tensor* all_logits, std::vector<int>* all_labels) {
    const std::size_t h = ds.height(), w = ds.width();
    const std::size_t m =
        all_logits ? all_logits->shape()[1] : std::size_t{0};
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += chunk) {
        const std::size_t stop = std::min(idx.size(), start + chunk);
        Tensor batch({stop - start, h, w});
        std::vector<int> labels(stop - start);
        for (std::size_t i = start; i < stop; ++i) {
            const double* src = ds.images.data() + idx[i] * h * w;
            std::copy(src, src + h * w, batch.data() + (i - start) * h * w);
            labels[i - start] = ds.labels[idx[i]];
        }
        Tensor logits = model.forward(batch, Mode::Eval, false, nullptr);
        loss_sum += cross_entropy_with_logits(logits, labels) *
                    static_cast<double>(stop - start);
        if (all_logits) {
            std::copy(logits.data(), logits.data() + logits.size(),
                      all_logits->data() + start * m);
        }
        if (all_labels)
            std::copy(labels.begin(), labels.end(),
                      all_labels->begin() + static_cast<std::ptrdiff_t>(start));
    }
    return loss_sum / static_cast<double>(idx.size());
}

void write_csv_row(std::ostream& out, const EpochRow& r) {
    out << r.epoch << ',' << std::setprecision(12) << r.train_loss << ','
        << r.val_loss << ',' << r.val_acc << ',' << r.val_auroc << ','
        << r.seconds << '\n';
}

}  // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Mltn: return "mltn";
        case ModelKind::Lotenet: return "lotenet";
        case ModelKind::Tenetx: return "tenetx";
        case ModelKind::Mlp: return "mlp";
    }
    return "mltn";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "mltn") return ModelKind::Mltn;
    if (name == "lotenet") return ModelKind::Lotenet;
    if (name == "tenetx") return ModelKind::Tenetx;
    if (name == "mlp") return ModelKind::Mlp;
    throw ConfigError("unknown model '" + name +
                      "' (expected mltn|lotenet|tenetx|mlp)");
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os << "[model]\n";
    os << "kind = " << mltn::to_string(model) << "\n";
    os << "strides = " << fmt_sizes(strides) << "\n";
    os << "mlp_hidden = " << fmt_sizes(mlp_hidden) << "\n";
    os << "bond = " << bond_dim << "\n";
    os << "classes = " << class_count << "\n";
    if (feature_map)
        os << "feature = "
           << (*feature_map == FeatureMapKind::Sinusoidal ? "sinusoidal"
                                                          : "identity")
           << "\n";
    os << "noise_std = " << fmt_double(noise_std) << "\n";
    os << "[train]\n";
    os << "batch = " << batch_size << "\n";
    os << "lr = " << fmt_double(lr) << "\n";
    os << "epochs = " << max_epochs << "\n";
    os << "patience = " << patience << "\n";
    os << "folds = " << folds << "\n";
    os << "val_fold = " << val_fold << "\n";
    os << "seed = " << seed << "\n";
    os << "clip = " << fmt_double(clip_norm) << "\n";
    os << "[data]\n";
    os << "images = " << images_path << "\n";
    os << "labels = " << labels_path << "\n";
    os << "synth_count = " << synth_count << "\n";
    os << "synth_size = " << synth_size << "\n";
    os << "out = " << out_dir << "\n";
    return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
    TrainConfig cfg;
    cfg.strides.clear();
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '[' || line[0] == '#' || line[0] == ';')
            continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("malformed config line: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "kind") cfg.model = model_kind_from_string(val);
        else if (key == "strides") cfg.strides = parse_sizes(val);
        else if (key == "mlp_hidden") cfg.mlp_hidden = parse_sizes(val);
        else if (key == "bond") cfg.bond_dim = std::stoull(val);
        else if (key == "classes") cfg.class_count = std::stoull(val);
        else if (key == "feature")
            cfg.feature_map = val == "sinusoidal" ? FeatureMapKind::Sinusoidal
                                                  : FeatureMapKind::SqueezeIdentity;
        else if (key == "noise_std") cfg.noise_std = std::stod(val);
        else if (key == "batch") cfg.batch_size = std::stoull(val);
        else if (key == "lr") cfg.lr = std::stod(val);
        else if (key == "epochs") cfg.max_epochs = std::stoull(val);
        else if (key == "patience") cfg.patience = std::stoull(val);
        else if (key == "folds") cfg.folds = std::stoull(val);
        else if (key == "val_fold") cfg.val_fold = std::stoull(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "clip") cfg.clip_norm = std::stod(val);
        else if (key == "images") cfg.images_path = val;
        else if (key == "labels") cfg.labels_path = val;
        else if (key == "synth_count") cfg.synth_count = std::stoull(val);
        else if (key == "synth_size") cfg.synth_size = std::stoull(val);
        else if (key == "out") cfg.out_dir = val;
        else
            throw FormatError("unknown config key: " + key);
    }
    return cfg;
}

ModelKind AnyModel::kind() const {
    if (std::holds_alternative<MltnModel>(impl)) return ModelKind::Mltn;
    if (std::holds_alternative<LotenetModel>(impl)) return ModelKind::Lotenet;
    if (std::holds_alternative<TenetxModel>(impl)) return ModelKind::Tenetx;
    return ModelKind::Mlp;
}

std::vector<ParamRef> AnyModel::parameters() {
    return std::visit([](auto& m) { return m.parameters(); }, impl);
}

std::vector<ParamRef> AnyModel::buffers() {
    std::vector<ParamRef> out;
    if (auto* m = std::get_if<MltnModel>(&impl)) out = m->buffers();
    if (auto* m = std::get_if<LotenetModel>(&impl)) out = m->buffers();
    return out;
}

std::size_t AnyModel::param_count() const {
    return std::visit([](const auto& m) { return m.param_count(); }, impl);
}

Tensor AnyModel::forward(const Tensor& batch, Mode mode, bool update_running,
                         AnyCache* cache) {
    if (auto* m = std::get_if<MltnModel>(&impl)) {
        MltnCache* c = nullptr;
        if (cache) c = &cache->impl.emplace<MltnCache>();
        return m->forward(batch, mode, update_running, c);
    }
    if (auto* m = std::get_if<LotenetModel>(&impl)) {
        LotenetCache* c = nullptr;
        if (cache) c = &cache->impl.emplace<LotenetCache>();
        return m->forward(batch, mode, update_running, c);
    }
    if (auto* m = std::get_if<TenetxModel>(&impl)) {
        TenetxCache* c = nullptr;
        if (cache) c = &cache->impl.emplace<TenetxCache>();
        return m->forward(batch, c);
    }
    auto& m = std::get<MlpModel>(impl);
    MlpCache* c = nullptr;
    if (cache) c = &cache->impl.emplace<MlpCache>();
    return m.forward(batch, c);
}

ParamGrads AnyModel::backward(const AnyCache& cache, const Tensor& grad_logits) {
    if (auto* m = std::get_if<MltnModel>(&impl)) {
        const auto* c = std::get_if<MltnCache>(&cache.impl);
        if (!c) throw CacheMismatch("cache kind does not match model");
        return m->backward(*c, grad_logits);
    }
    if (auto* m = std::get_if<LotenetModel>(&impl)) {
        const auto* c = std::get_if<LotenetCache>(&cache.impl);
        if (!c) throw CacheMismatch("cache kind does not match model");
        return m->backward(*c, grad_logits);
    }
    if (auto* m = std::get_if<TenetxModel>(&impl)) {
        const auto* c = std::get_if<TenetxCache>(&cache.impl);
        if (!c) throw CacheMismatch("cache kind does not match model");
        return m->backward(*c, grad_logits);
    }
    auto& m = std::get<MlpModel>(impl);
    const auto* c = std::get_if<MlpCache>(&cache.impl);
    if (!c) throw CacheMismatch("cache kind does not match model");
    return m.backward(*c, grad_logits);
}

AnyModel build_model(const TrainConfig& cfg, std::size_t height,
                     std::size_t width) {
    Rng rng(cfg.seed);
    AnyModel any;
    switch (cfg.model) {
        case ModelKind::Mltn:
            any.impl = MltnModel::make(height, width, cfg.effective_strides(),
                                       cfg.bond_dim, cfg.class_count,
                                       cfg.effective_map(), rng, cfg.noise_std);
            break;
        case ModelKind::Lotenet:
            any.impl = LotenetModel::make(height, width, cfg.effective_strides(),
                                          cfg.bond_dim, cfg.class_count,
                                          cfg.effective_map(), rng,
                                          cfg.noise_std);
            break;
        case ModelKind::Tenetx:
            any.impl = TenetxModel::make(height, width, cfg.bond_dim,
                                         cfg.class_count, cfg.effective_map(),
                                         rng, cfg.noise_std);
            break;
        case ModelKind::Mlp: {
            std::vector<std::size_t> widths = cfg.mlp_hidden;
            widths.push_back(cfg.class_count);
            any.impl = MlpModel::make(height * width, widths, rng);
            break;
        }
    }
    // With norm clipping requested, bound the backward log-scale factors so
    // near-singular site matrices yield clampable gradients instead of inf.
    // The slack below exp-overflow leaves room for the batch-norm backward
    // (1/sqrt(eps) and x-hat factors) between chained blocks.
    if (cfg.clip_norm > 0.0) {
        const double cap = 500.0;
        if (auto* m = std::get_if<MltnModel>(&any.impl))
            for (MltnLayer& ly : m->layers) ly.mps.grad_log_cap = cap;
        if (auto* m = std::get_if<LotenetModel>(&any.impl)) {
            for (LotenetLayer& ly : m->layers)
                for (MpsBlock& b : ly.blocks) b.grad_log_cap = cap;
            m->head.grad_log_cap = cap;
        }
        if (auto* m = std::get_if<TenetxModel>(&any.impl))
            m->chain.grad_log_cap = cap;
    }
    return any;
}

Dataset load_dataset(const TrainConfig& cfg) {
    if (!cfg.images_path.empty()) {
        if (cfg.labels_path.empty())
            throw ConfigError("images path given without labels path");
        return load_idx(cfg.images_path, cfg.labels_path);
    }
    return synth_blobs(cfg.synth_count, cfg.synth_size, cfg.synth_size,
                       cfg.seed);
}

Checkpoint snapshot(const TrainConfig& cfg, AnyModel& model,
                    const AdamState* opt, std::size_t epoch,
                    double best_metric) {
    Checkpoint ckpt;
    ckpt.config_text = cfg.to_text();
    auto push = [&](const std::string& name, const std::vector<std::size_t>& shape,
                    const double* data, std::size_t size) {
        NamedTensor t;
        t.name = name;
        t.shape = shape;
        t.data.assign(data, data + size);
        ckpt.tensors.push_back(std::move(t));
    };
    for (const ParamRef& p : model.parameters())
        push(p.name, p.shape, p.data, p.size);
    for (const ParamRef& p : model.buffers())
        push(p.name, p.shape, p.data, p.size);
    if (opt) {
        for (std::size_t i = 0; i < opt->m.size(); ++i) {
            push("opt/m" + std::to_string(i), {opt->m[i].size()},
                 opt->m[i].data(), opt->m[i].size());
            push("opt/v" + std::to_string(i), {opt->v[i].size()},
                 opt->v[i].data(), opt->v[i].size());
        }
        const double step = static_cast<double>(opt->step);
        push("opt/step", {1}, &step, 1);
    }
    const double ep = static_cast<double>(epoch);
    push("meta/epoch", {1}, &ep, 1);
    push("meta/best", {1}, &best_metric, 1);
    return ckpt;
}

void restore(AnyModel& model, const Checkpoint& ckpt, AdamState* opt) {
    auto pull = [&](const ParamRef& p) {
        const NamedTensor* t = ckpt.find(p.name);
        if (!t) throw FormatError("checkpoint is missing tensor " + p.name);
        if (t->data.size() != p.size)
            throw FormatError("checkpoint tensor " + p.name +
                              " has wrong size");
        std::copy(t->data.begin(), t->data.end(), p.data);
    };
    for (const ParamRef& p : model.parameters()) pull(p);
    for (const ParamRef& p : model.buffers()) pull(p);
    if (opt) {
        for (std::size_t i = 0; i < opt->m.size(); ++i) {
            const NamedTensor* m = ckpt.find("opt/m" + std::to_string(i));
            const NamedTensor* v = ckpt.find("opt/v" + std::to_string(i));
            if (!m || !v) throw FormatError("checkpoint is missing optimiser state");
            opt->m[i] = m->data;
            opt->v[i] = v->data;
        }
        if (const NamedTensor* s = ckpt.find("opt/step"))
            opt->step = static_cast<std::uint64_t>(s->data[0]);
    }
}

TrainResult run_training(const TrainConfig& cfg, const Dataset& dataset,
                         const std::string& run_dir) {
    dataset.validate();
    const std::size_t T = dataset.count();
    const std::size_t h = dataset.height(), w = dataset.width();
    if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
    if (cfg.val_fold >= cfg.folds)
        throw ConfigError("validation fold out of range");

    // Model construction validates the whole dimension chain up front.
    AnyModel model = build_model(cfg, h, w);
    std::vector<ParamRef> params = model.parameters();
    AdamState adam = AdamState::for_params(params, cfg.effective_lr());

    const std::vector<int> fold_of = dataset.fold_of.size() == T
                                         ? dataset.fold_of
                                         : kfold_split(T, cfg.folds, cfg.seed);
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < T; ++i) {
        if (fold_of[i] == static_cast<int>(cfg.val_fold))
            val_idx.push_back(i);
        else
            train_idx.push_back(i);
    }
    if (train_idx.empty() || val_idx.empty())
        throw ConfigError("empty train or validation split");

    fs::create_directories(run_dir);
    TrainResult result;
    result.param_count = model.param_count();
    result.metrics_path = (fs::path(run_dir) / "metrics.csv").string();
    result.checkpoint_path = (fs::path(run_dir) / "best.ckpt").string();
    std::ofstream csv(result.metrics_path);
    if (!csv) throw DataError("cannot write " + result.metrics_path);
    csv << kMetricsHeader << '\n';

    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::size_t best_epoch = 0;
    double best_acc = -1.0;
    double best_auroc = 0.0;
    double total_seconds = 0.0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        for (std::size_t i = train_idx.size(); i-- > 1;)
            std::swap(train_idx[i], train_idx[shuffle_rng.below(i + 1)]);

        double train_loss_sum = 0.0;
        for (std::size_t start = 0; start < train_idx.size();
             start += cfg.batch_size) {
            const std::size_t stop =
                std::min(train_idx.size(), start + cfg.batch_size);
            Tensor batch({stop - start, h, w});
            std::vector<int> labels(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                const double* src = dataset.images.data() + train_idx[i] * h * w;
                std::copy(src, src + h * w, batch.data() + (i - start) * h * w);
                labels[i - start] = dataset.labels[train_idx[i]];
            }
            AnyCache cache;
            Tensor logits = model.forward(batch, Mode::Train, true, &cache);
            Tensor grad_logits;
            const double loss =
                cross_entropy_with_logits(logits, labels, &grad_logits);
            if (!std::isfinite(loss))
                throw NumericalError("non-finite training loss at epoch " +
                                     std::to_string(epoch));
            train_loss_sum += loss * static_cast<double>(stop - start);
            ParamGrads grads = model.backward(cache, grad_logits);
            for (const Tensor& g : grads)
                if (!g.all_finite())
                    throw NumericalError("non-finite gradients at epoch " +
                                         std::to_string(epoch));
            if (cfg.clip_norm > 0.0) clip_grad_norm(grads, cfg.clip_norm);
            adam_step(params, grads, adam);
        }

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = train_loss_sum / static_cast<double>(train_idx.size());

        Tensor val_logits({val_idx.size(), cfg.class_count});
        std::vector<int> val_labels(val_idx.size());
        row.val_loss = chunked_eval(model, dataset, val_idx, cfg.batch_size,
                                    &val_logits, &val_labels);
        row.val_acc = accuracy(val_logits, val_labels);
        if (cfg.class_count == 2) {
            std::vector<double> scores(val_idx.size());
            for (std::size_t i = 0; i < val_idx.size(); ++i) {
                const double l0 = val_logits[2 * i], l1 = val_logits[2 * i + 1];
                scores[i] = 1.0 / (1.0 + std::exp(l0 - l1));
            }
            row.val_auroc = auroc(scores, val_labels);
        } else {
            row.val_auroc = std::nan("");
        }

        row.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        total_seconds += row.seconds;
        write_csv_row(csv, row);
        csv.flush();
        result.history.push_back(row);

        if (row.val_acc > best_acc) {
            best_acc = row.val_acc;
            best_auroc = row.val_auroc;
            best_epoch = epoch;
            save_checkpoint(snapshot(cfg, model, &adam, epoch, best_acc),
                            result.checkpoint_path);
        }
        if (epoch - best_epoch >= cfg.patience) break;
    }

    result.best_epoch = best_epoch;
    result.best_val_acc = best_acc;
    result.best_val_auroc = best_auroc;
    result.mean_epoch_seconds =
        total_seconds / static_cast<double>(result.history.size());

    json summary;
    summary["model"] = mltn::to_string(cfg.model);
    summary["params"] = result.param_count;
    summary["epochs_run"] = result.history.size();
    summary["best_epoch"] = result.best_epoch;
    summary["best_val_acc"] = result.best_val_acc;
    summary["best_val_auroc"] = result.best_val_auroc;
    summary["mean_epoch_seconds"] = result.mean_epoch_seconds;
    summary["seed"] = cfg.seed;
    summary["val_fold"] = cfg.val_fold;
    std::ofstream sj(fs::path(run_dir) / "summary.json");
    sj << summary.dump(2) << '\n';
    return result;
}

CrossvalResult run_crossval(const TrainConfig& cfg, const Dataset& dataset,
                            const std::string& run_dir) {
    CrossvalResult result;
    for (std::size_t f = 0; f < cfg.folds; ++f) {
        TrainConfig fold_cfg = cfg;
        fold_cfg.val_fold = f;
        const std::string fold_dir =
            (fs::path(run_dir) / ("fold" + std::to_string(f))).string();
        result.folds.push_back(run_training(fold_cfg, dataset, fold_dir));
    }
    const double n = static_cast<double>(result.folds.size());
    for (const TrainResult& r : result.folds) {
        result.mean_auroc += r.best_val_auroc;
        result.mean_epoch_seconds += r.mean_epoch_seconds;
    }
    result.mean_auroc /= n;
    result.mean_epoch_seconds /= n;
    double var = 0.0;
    for (const TrainResult& r : result.folds) {
        const double d = r.best_val_auroc - result.mean_auroc;
        var += d * d;
    }
    result.std_auroc = std::sqrt(var / n);

    json agg;
    agg["folds"] = json::array();
    for (std::size_t f = 0; f < result.folds.size(); ++f) {
        const TrainResult& r = result.folds[f];
        agg["folds"].push_back({{"fold", f},
                                {"auroc", r.best_val_auroc},
                                {"acc", r.best_val_acc},
                                {"best_epoch", r.best_epoch},
                                {"mean_epoch_seconds", r.mean_epoch_seconds}});
    }
    agg["mean_auroc"] = result.mean_auroc;
    agg["std_auroc"] = result.std_auroc;
    agg["mean_epoch_seconds"] = result.mean_epoch_seconds;
    fs::create_directories(run_dir);
    std::ofstream out(fs::path(run_dir) / "aggregate.json");
    out << agg.dump(2) << '\n';
    return result;
}

BenchRow bench_model(const TrainConfig& cfg, std::size_t height,
                     std::size_t width, std::size_t batch_count) {
    AnyModel model = build_model(cfg, height, width);
    BenchRow row;
    row.model = mltn::to_string(cfg.model);
    row.n = height * width;
    const std::vector<std::size_t> strides = cfg.effective_strides();
    row.k = strides.front();
    row.beta = cfg.bond_dim;
    switch (cfg.model) {
        case ModelKind::Mltn:
            row.l = strides.size();
            row.d = strides.front() * strides.front() *
                    feature_map_dim(cfg.effective_map());
            break;
        case ModelKind::Lotenet:
            row.l = strides.size();
            row.d = feature_map_dim(cfg.effective_map());
            break;
        case ModelKind::Tenetx:
            row.l = 1;
            row.d = feature_map_dim(cfg.effective_map());
            break;
        case ModelKind::Mlp:
            row.l = cfg.mlp_hidden.size() + 1;
            row.d = 1;
            break;
    }
    row.params = model.param_count();

    const ComplexityInput ci{static_cast<double>(row.n),
                             static_cast<double>(row.k),
                             static_cast<double>(row.l),
                             static_cast<double>(row.d),
                             static_cast<double>(row.beta)};
    switch (cfg.model) {
        case ModelKind::Mltn: row.analytic_flops = flops_mltn(ci); break;
        case ModelKind::Lotenet: row.analytic_flops = flops_lotenet(ci); break;
        case ModelKind::Tenetx: row.analytic_flops = flops_tenetx(ci); break;
        case ModelKind::Mlp: row.analytic_flops = flops_mlp(ci); break;
    }
    switch (cfg.model) {
        case ModelKind::Mltn:
            row.measured_mults = measured_flops(std::get<MltnModel>(model.impl));
            break;
        case ModelKind::Lotenet:
            row.measured_mults =
                measured_flops(std::get<LotenetModel>(model.impl));
            break;
        case ModelKind::Tenetx:
            row.measured_mults =
                measured_flops(std::get<TenetxModel>(model.impl));
            break;
        case ModelKind::Mlp:
            row.measured_mults =
                measured_flops(std::get<MlpModel>(model.impl), height, width);
            break;
    }

    // Per-epoch wall time over a fixed synthetic batch: median of three
    // epochs of forward + backward + optimiser step.
    Dataset ds = synth_blobs(batch_count, height, width, cfg.seed);
    std::vector<ParamRef> params = model.parameters();
    AdamState adam = AdamState::for_params(params, cfg.effective_lr());
    std::vector<double> times;
    for (int rep = 0; rep < 3; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t start = 0; start < batch_count;
             start += cfg.batch_size) {
            const std::size_t stop =
                std::min(batch_count, start + cfg.batch_size);
            Tensor batch({stop - start, height, width});
            std::vector<int> labels(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                const double* src = ds.images.data() + i * height * width;
                std::copy(src, src + height * width,
                          batch.data() + (i - start) * height * width);
                labels[i - start] = ds.labels[i];
            }
            AnyCache cache;
            Tensor logits = model.forward(batch, Mode::Train, true, &cache);
            Tensor grad_logits;
            cross_entropy_with_logits(logits, labels, &grad_logits);
            ParamGrads grads = model.backward(cache, grad_logits);
            adam_step(params, grads, adam);
        }
        times.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count());
    }
    std::sort(times.begin(), times.end());
    row.epoch_seconds = times[1];
    return row;
}

}  // namespace mltn
