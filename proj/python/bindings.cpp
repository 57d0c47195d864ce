#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <variant>

#include "mltn/complexity.hpp"
#include "mltn/data.hpp"
#include "mltn/errors.hpp"
#include "mltn/layers.hpp"
#include "mltn/metrics.hpp"
#include "mltn/models.hpp"
#include "mltn/mps.hpp"
#include "mltn/optim.hpp"
#include "mltn/rng.hpp"
#include "mltn/train.hpp"

namespace py = pybind11;
using namespace mltn;

namespace {

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const NpArray& arr) {
    py::buffer_info info = arr.request();
    if (info.ndim < 1) throw ShapeMismatch("expected an array of rank >= 1");
    std::vector<std::size_t> shape(info.shape.begin(), info.shape.end());
    const double* data = static_cast<const double*>(info.ptr);
    return Tensor(shape, std::vector<double>(data, data + arr.size()));
}

py::array_t<double> to_array(const Tensor& t) {
    py::array_t<double> out(t.shape());
    std::copy(t.data(), t.data() + t.size(),
              static_cast<double*>(out.request().ptr));
    return out;
}

FeatureMapKind map_from_name(const std::string& name) {
    if (name == "identity") return FeatureMapKind::SqueezeIdentity;
    if (name == "sinusoidal") return FeatureMapKind::Sinusoidal;
    throw ConfigError("unknown feature map '" + name + "'");
}

// Thin ownership wrapper so every model family shares one python surface.
struct PyModel {
    AnyModel model;
    std::size_t height = 0, width = 0;

    py::array_t<double> forward(const NpArray& batch, bool training) {
        Tensor logits = model.forward(to_tensor(batch),
                                      training ? Mode::Train : Mode::Eval,
                                      training, nullptr);
        return to_array(logits);
    }
    std::size_t param_count() const { return model.param_count(); }
    std::uint64_t measured() {
        if (auto* m = std::get_if<MltnModel>(&model.impl))
            return measured_flops(*m);
        if (auto* m = std::get_if<LotenetModel>(&model.impl))
            return measured_flops(*m);
        if (auto* m = std::get_if<TenetxModel>(&model.impl))
            return measured_flops(*m);
        return measured_flops(std::get<MlpModel>(model.impl), height, width);
    }
};

PyModel make_model(const std::string& kind, std::size_t height,
                   std::size_t width, const std::vector<std::size_t>& strides,
                   std::size_t bond, std::size_t classes,
                   const std::string& feature, std::uint64_t seed,
                   double noise_std) {
    TrainConfig cfg;
    cfg.model = model_kind_from_string(kind);
    cfg.strides = strides;
    cfg.bond_dim = bond;
    cfg.class_count = classes;
    if (!feature.empty()) cfg.feature_map = map_from_name(feature);
    cfg.seed = seed;
    cfg.noise_std = noise_std;
    PyModel pm;
    pm.model = build_model(cfg, height, width);
    pm.height = height;
    pm.width = width;
    return pm;
}

}  // namespace

PYBIND11_MODULE(_mltn, m) {
    m.doc() = "Tensor-network image classifiers: dense tensor primitives, MPS "
              "contraction with analytic gradients, squeeze/rearrange "
              "transforms, cost estimators and data utilities";

    py::register_exception<Error>(m, "MltnError");

    // tensor primitives
    m.def("matmul", [](const NpArray& a, const NpArray& b) {
        return to_array(matmul(to_tensor(a), to_tensor(b)));
    });
    m.def("contract_index",
          [](const NpArray& a, std::size_t axis_a, const NpArray& b,
             std::size_t axis_b) {
              return to_array(
                  contract_index(to_tensor(a), axis_a, to_tensor(b), axis_b));
          });
    m.def("outer", [](const NpArray& a, const NpArray& b) {
        return to_array(outer(to_tensor(a), to_tensor(b)));
    });

    // feature maps and spatial transforms
    m.def("sinusoidal_feature_map", [](const NpArray& x) {
        return to_array(local_feature_map(to_tensor(x),
                                          FeatureMapKind::Sinusoidal));
    });
    m.def("joint_feature_map", [](const std::vector<NpArray>& vecs) {
        std::vector<Tensor> ts;
        ts.reserve(vecs.size());
        for (const auto& v : vecs) ts.push_back(to_tensor(v));
        return to_array(joint_feature_map_oracle(ts));
    });
    m.def("squeeze", [](const NpArray& image, std::size_t stride) {
        Tensor img = to_tensor(image);
        if (img.rank() != 2) throw ShapeMismatch("expected a 2-d image");
        return to_array(
            squeeze(img, SqueezeSpec{stride, img.shape()[0], img.shape()[1]}));
    }, py::arg("image"), py::arg("stride"));
    m.def("unsqueeze", [](const NpArray& sites, std::size_t stride,
                          std::size_t height, std::size_t width) {
        return to_array(
            unsqueeze(to_tensor(sites), SqueezeSpec{stride, height, width}));
    });
    m.def("rearrange", [](const NpArray& vec, std::size_t side) {
        return to_array(rearrange(to_tensor(vec), side));
    });

    // MPS block
    py::class_<MpsBlock>(m, "MpsBlock")
        .def(py::init([](std::size_t n_sites, std::size_t feature_dim,
                         std::size_t bond_dim, std::size_t output_dim,
                         py::object output_site, std::uint64_t seed,
                         double noise_std, double identity_scale) {
                 Rng rng(seed);
                 const std::size_t c = output_site.is_none()
                                           ? n_sites / 2
                                           : output_site.cast<std::size_t>();
                 return MpsBlock::random_at(n_sites, feature_dim, bond_dim,
                                            output_dim, c, rng, noise_std,
                                            identity_scale);
             }),
             py::arg("n_sites"), py::arg("feature_dim"), py::arg("bond_dim"),
             py::arg("output_dim"), py::arg("output_site") = py::none(),
             py::arg("seed") = 0, py::arg("noise_std") = 1e-2,
             py::arg("identity_scale") = 1.0)
        .def_readonly("n_sites", &MpsBlock::n_sites)
        .def_readonly("feature_dim", &MpsBlock::feature_dim)
        .def_readonly("bond_dim", &MpsBlock::bond_dim)
        .def_readonly("output_dim", &MpsBlock::output_dim)
        .def_readonly("output_site", &MpsBlock::output_site)
        .def_readwrite("stabilized", &MpsBlock::stabilized)
        .def("param_count", &MpsBlock::param_count)
        .def("forward",
             [](const MpsBlock& b, const NpArray& sites) {
                 return to_array(mps_forward(b, to_tensor(sites)));
             })
        .def("forward_backward",
             [](const MpsBlock& b, const NpArray& sites,
                const NpArray& grad_logits) {
                 MpsCache cache;
                 Tensor logits = mps_forward(b, to_tensor(sites), &cache);
                 MpsGrads grads =
                     mps_backward(b, cache, to_tensor(grad_logits), true);
                 py::list site_grads;
                 for (const Tensor& g : grads.site_grads)
                     site_grads.append(to_array(g));
                 return py::make_tuple(to_array(logits), site_grads,
                                       to_array(grads.input_grad));
             })
        .def("to_full", [](const MpsBlock& b) {
            return to_array(mps_to_full_tensor(b));
        });

    // model families
    py::class_<PyModel>(m, "Model")
        .def("forward", &PyModel::forward, py::arg("batch"),
             py::arg("training") = false)
        .def("param_count", &PyModel::param_count)
        .def("measured_flops", &PyModel::measured);
    m.def("make_model", &make_model, py::arg("kind"), py::arg("height"),
          py::arg("width"), py::arg("strides") = std::vector<std::size_t>{},
          py::arg("bond") = 5, py::arg("classes") = 2, py::arg("feature") = "",
          py::arg("seed") = 42, py::arg("noise_std") = 1e-2);

    // loss
    m.def("cross_entropy_with_logits",
          [](const NpArray& logits, const std::vector<int>& labels) {
              Tensor grad;
              const double loss =
                  cross_entropy_with_logits(to_tensor(logits), labels, &grad);
              return py::make_tuple(loss, to_array(grad));
          });

    // metrics and data
    m.def("auroc", &auroc, py::arg("scores"), py::arg("labels"));
    m.def("kfold_split", &kfold_split, py::arg("count"), py::arg("folds"),
          py::arg("seed"));
    m.def("synth_blobs", [](std::size_t count, std::size_t height,
                            std::size_t width, std::uint64_t seed) {
        Dataset ds = synth_blobs(count, height, width, seed);
        return py::make_tuple(to_array(ds.images), ds.labels);
    });
    m.def("load_idx", [](const std::string& images, const std::string& labels) {
        Dataset ds = load_idx(images, labels);
        return py::make_tuple(to_array(ds.images), ds.labels);
    });
    m.def("write_idx", [](const NpArray& images, const std::vector<int>& labels,
                          const std::string& images_path,
                          const std::string& labels_path) {
        Dataset ds;
        ds.images = to_tensor(images);
        ds.labels = labels;
        write_idx(ds, images_path, labels_path);
    });

    // analytic cost formulas
    auto ci = [](double n, double k, double l, double d, double beta) {
        return ComplexityInput{n, k, l, d, beta};
    };
    m.def("flops_mltn", [ci](double n, double k, double l, double d,
                             double beta) { return flops_mltn(ci(n, k, l, d, beta)); },
          py::arg("n"), py::arg("k"), py::arg("l"), py::arg("d"), py::arg("beta"));
    m.def("flops_lotenet", [ci](double n, double k, double l, double d,
                                double beta) { return flops_lotenet(ci(n, k, l, d, beta)); },
          py::arg("n"), py::arg("k"), py::arg("l"), py::arg("d"), py::arg("beta"));
    m.def("flops_tenetx", [ci](double n, double k, double l, double d,
                               double beta) { return flops_tenetx(ci(n, k, l, d, beta)); },
          py::arg("n"), py::arg("k"), py::arg("l") = 1, py::arg("d") = 2,
          py::arg("beta") = 5);
    m.def("flops_mlp", [ci](double n, double k, double l, double d,
                            double beta) { return flops_mlp(ci(n, k, l, d, beta)); },
          py::arg("n"), py::arg("k") = 2, py::arg("l") = 4, py::arg("d") = 1,
          py::arg("beta") = 1);

    m.attr("__version__") = "0.1.0";
}
