// Command-line front end: train / crossval / bench / inspect / synth.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "mltn/complexity.hpp"
#include "mltn/data.hpp"
#include "mltn/errors.hpp"
#include "mltn/train.hpp"

namespace {

using namespace mltn;

struct CliOptions {
    TrainConfig cfg;
    std::string model_name = "mltn";
    std::vector<std::size_t> strides;
    std::string feature;
    std::vector<std::string> bench_models = {"mltn", "lotenet", "tenetx", "mlp"};
    std::size_t bench_batch = 64;
    std::size_t bench_size = 64;
    std::size_t synth_count = 640;
    std::size_t synth_size = 16;
};

void add_common_options(CLI::App* sub, CliOptions& opt) {
    sub->add_option("--model", opt.model_name, "mltn|lotenet|tenetx|mlp");
    sub->add_option("--strides", opt.strides,
                    "per-layer kernel strides, e.g. --strides 2,2")
        ->delimiter(',');
    sub->add_option("--bond", opt.cfg.bond_dim, "bond dimension");
    sub->add_option("--classes", opt.cfg.class_count, "number of classes");
    sub->add_option("--feature", opt.feature,
                    "local feature map: identity|sinusoidal");
    sub->add_option("--lr", opt.cfg.lr, "learning rate (0 = model default)");
    sub->add_option("--batch", opt.cfg.batch_size, "batch size");
    sub->add_option("--epochs", opt.cfg.max_epochs, "maximum epochs");
    sub->add_option("--patience", opt.cfg.patience,
                    "early-stopping patience (epochs)");
    sub->add_option("--folds", opt.cfg.folds, "cross-validation folds");
    sub->add_option("--val-fold", opt.cfg.val_fold,
                    "fold held out for validation");
    sub->add_option("--seed", opt.cfg.seed, "random seed");
    sub->add_option("--clip", opt.cfg.clip_norm,
                    "gradient clipping max norm (0 = off)");
    sub->add_option("--noise-std", opt.cfg.noise_std,
                    "initialisation noise standard deviation");
    sub->add_option("--images", opt.cfg.images_path, "IDX image file");
    sub->add_option("--labels", opt.cfg.labels_path, "IDX label file");
    sub->add_option("--synth-count", opt.cfg.synth_count,
                    "synthetic sample count (when no IDX files given)");
    sub->add_option("--synth-size", opt.cfg.synth_size,
                    "synthetic image side length");
    sub->add_option("--out", opt.cfg.out_dir, "output directory");
}

void finalize(CliOptions& opt) {
    opt.cfg.model = model_kind_from_string(opt.model_name);
    if (!opt.strides.empty()) opt.cfg.strides = opt.strides;
    if (!opt.feature.empty()) {
        if (opt.feature == "identity")
            opt.cfg.feature_map = FeatureMapKind::SqueezeIdentity;
        else if (opt.feature == "sinusoidal")
            opt.cfg.feature_map = FeatureMapKind::Sinusoidal;
        else
            throw ConfigError("unknown feature map '" + opt.feature + "'");
    }
}

int cmd_train(CliOptions& opt) {
    finalize(opt);
    Dataset ds = load_dataset(opt.cfg);
    TrainResult r = run_training(opt.cfg, ds, opt.cfg.out_dir);
    std::cout << "run dir:    " << opt.cfg.out_dir << "\n"
              << "epochs:     " << r.history.size() << "\n"
              << "best epoch: " << r.best_epoch << "\n"
              << "val acc:    " << r.best_val_acc << "\n"
              << "val auroc:  " << r.best_val_auroc << "\n"
              << "checkpoint: " << r.checkpoint_path << "\n";
    return 0;
}

int cmd_crossval(CliOptions& opt) {
    finalize(opt);
    Dataset ds = load_dataset(opt.cfg);
    CrossvalResult r = run_crossval(opt.cfg, ds, opt.cfg.out_dir);
    AnyModel model = build_model(opt.cfg, ds.height(), ds.width());
    std::cout << "model      #param(M)  time(s)  AUROC\n";
    std::cout << std::left << std::setw(11) << to_string(opt.cfg.model)
              << std::setw(11) << std::setprecision(3)
              << (static_cast<double>(model.param_count()) / 1e6)
              << std::setw(9) << std::setprecision(3) << r.mean_epoch_seconds
              << std::setprecision(4) << r.mean_auroc << " +/- "
              << std::setprecision(2) << r.std_auroc << "\n";
    return 0;
}

int cmd_bench(CliOptions& opt) {
    finalize(opt);
    std::filesystem::create_directories(opt.cfg.out_dir);
    const std::string csv_path =
        (std::filesystem::path(opt.cfg.out_dir) / "bench.csv").string();
    std::ofstream csv(csv_path);
    csv << "model,n,k,l,d,beta,params,analytic_flops,measured_mults,"
           "epoch_seconds\n";
    for (const std::string& name : opt.bench_models) {
        TrainConfig cfg = opt.cfg;
        cfg.model = model_kind_from_string(name);
        cfg.feature_map = opt.cfg.feature_map;
        BenchRow row =
            bench_model(cfg, opt.bench_size, opt.bench_size, opt.bench_batch);
        csv << row.model << ',' << row.n << ',' << row.k << ',' << row.l << ','
            << row.d << ',' << row.beta << ',' << row.params << ','
            << std::setprecision(12) << row.analytic_flops << ','
            << row.measured_mults << ',' << row.epoch_seconds << '\n';
        std::cout << row.model << ": params=" << row.params
                  << " analytic=" << row.analytic_flops
                  << " measured=" << row.measured_mults
                  << " epoch_s=" << row.epoch_seconds << "\n";
    }
    std::cout << "wrote " << csv_path << "\n";
    return 0;
}

int cmd_inspect(CliOptions& opt) {
    finalize(opt);
    const std::size_t side =
        opt.cfg.images_path.empty() ? opt.cfg.synth_size : 0;
    std::size_t h = side, w = side;
    if (!opt.cfg.images_path.empty()) {
        Dataset ds = load_dataset(opt.cfg);
        h = ds.height();
        w = ds.width();
    }
    AnyModel model = build_model(opt.cfg, h, w);
    std::cout << "model: " << to_string(opt.cfg.model) << "  input: " << h
              << "x" << w << "  classes: " << opt.cfg.class_count << "\n";
    std::cout << "parameters: " << model.param_count() << "\n";
    if (auto* m = std::get_if<MltnModel>(&model.impl)) {
        for (std::size_t l = 0; l < m->layers.size(); ++l) {
            const MltnLayer& ly = m->layers[l];
            std::cout << "layer " << l + 1 << ": squeeze k=" << ly.squeeze.stride
                      << " on " << ly.squeeze.height << "x" << ly.squeeze.width
                      << " -> sites=" << ly.mps.n_sites
                      << " d=" << ly.mps.feature_dim
                      << " bond=" << ly.mps.bond_dim
                      << " out=" << ly.mps.output_dim;
            if (ly.out_side)
                std::cout << " -> image " << ly.out_side << "x" << ly.out_side;
            std::cout << " (params " << ly.mps.param_count() << ")\n";
        }
    } else if (auto* m = std::get_if<LotenetModel>(&model.impl)) {
        for (std::size_t l = 0; l < m->layers.size(); ++l) {
            const LotenetLayer& ly = m->layers[l];
            std::cout << "layer " << l + 1 << ": " << ly.blocks.size()
                      << " patches of " << ly.patch << "x" << ly.patch << " on "
                      << ly.in_h << "x" << ly.in_w
                      << ", per-patch sites=" << ly.blocks.front().n_sites
                      << " d=" << ly.blocks.front().feature_dim << "\n";
        }
        std::cout << "head: sites=" << m->head.n_sites
                  << " d=" << m->head.feature_dim
                  << " out=" << m->head.output_dim << "\n";
    } else if (auto* m = std::get_if<TenetxModel>(&model.impl)) {
        std::cout << "chain: sites=" << m->chain.n_sites
                  << " d=" << m->chain.feature_dim
                  << " bond=" << m->chain.bond_dim
                  << " out=" << m->chain.output_dim << "\n";
    } else if (auto* m = std::get_if<MlpModel>(&model.impl)) {
        for (std::size_t l = 0; l < m->weights.size(); ++l)
            std::cout << "fc" << l << ": " << m->weights[l].shape()[1] << " -> "
                      << m->weights[l].shape()[0] << "\n";
    }
    return 0;
}

int cmd_synth(CliOptions& opt) {
    finalize(opt);
    std::filesystem::create_directories(opt.cfg.out_dir);
    Dataset ds = synth_blobs(opt.synth_count, opt.synth_size, opt.synth_size,
                             opt.cfg.seed);
    const auto img = std::filesystem::path(opt.cfg.out_dir) / "images.idx";
    const auto lab = std::filesystem::path(opt.cfg.out_dir) / "labels.idx";
    write_idx(ds, img.string(), lab.string());
    std::cout << "wrote " << img.string() << " and " << lab.string() << " ("
              << ds.count() << " samples, " << ds.height() << "x" << ds.width()
              << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor-network image classifiers: training, evaluation and "
                 "cost analysis"};
    app.set_config("--config", "", "read options from a key = value file");
    app.require_subcommand(1);

    CliOptions opt;
    CLI::App* train = app.add_subcommand("train", "train one model");
    add_common_options(train, opt);
    CLI::App* crossval =
        app.add_subcommand("crossval", "k-fold cross-validation");
    add_common_options(crossval, opt);
    CLI::App* bench = app.add_subcommand(
        "bench", "analytic cost, measured multiplies and epoch timings");
    add_common_options(bench, opt);
    bench->add_option("--bench-models", opt.bench_models,
                      "comma-separated model list")
        ->delimiter(',');
    bench->add_option("--bench-batch", opt.bench_batch,
                      "synthetic batch size for timing");
    bench->add_option("--bench-size", opt.bench_size,
                      "synthetic image side for timing");
    CLI::App* inspect = app.add_subcommand(
        "inspect", "print parameter counts and the per-layer dimension chain");
    add_common_options(inspect, opt);
    CLI::App* synth =
        app.add_subcommand("synth", "write a synthetic dataset as IDX files");
    add_common_options(synth, opt);
    synth->add_option("--count", opt.synth_count, "sample count");
    synth->add_option("--size", opt.synth_size, "image side length");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(opt);
        if (crossval->parsed()) return cmd_crossval(opt);
        if (bench->parsed()) return cmd_bench(opt);
        if (inspect->parsed()) return cmd_inspect(opt);
        if (synth->parsed()) return cmd_synth(opt);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
