#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <sstream>

#include "vtcc/config.hpp"
#include "vtcc/dataset.hpp"
#include "vtcc/gradcheck_suite.hpp"
#include "vtcc/losses.hpp"
#include "vtcc/metrics.hpp"
#include "vtcc/parallel.hpp"
#include "vtcc/trainer.hpp"

namespace py = pybind11;
using namespace vtcc;

namespace {

using Bytes = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
using Doubles = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Ints = py::array_t<int, py::array::c_style | py::array::forcecast>;

TrainConfig make_config(const std::string& text, const std::map<std::string, std::string>& overrides) {
    TrainConfig config = parse_config_text(text);
    for (const auto& [key, value] : overrides) apply_setting(config, key, value);
    config.validate();
    return config;
}

py::tuple dataset_to_numpy(const Dataset& d) {
    Bytes images({d.size(), static_cast<int64_t>(d.channels), static_cast<int64_t>(d.side), static_cast<int64_t>(d.side)});
    std::memcpy(images.mutable_data(), d.pixels.data(), d.pixels.size());
    Ints labels(static_cast<py::ssize_t>(d.labels.size()));
    std::copy(d.labels.begin(), d.labels.end(), labels.mutable_data());
    return py::make_tuple(images, labels);
}

// images: uint8 [N×C×S×S]; labels: optional int [N], -1 for unlabeled.
Dataset dataset_from_numpy(const Bytes& images, const std::optional<Ints>& labels) {
    if (images.ndim() != 4 || images.shape(2) != images.shape(3))
        throw std::invalid_argument("images must have shape [N, C, S, S]");
    Dataset d;
    d.channels = static_cast<int>(images.shape(1));
    d.side = static_cast<int>(images.shape(2));
    d.pixels.assign(images.data(), images.data() + images.size());
    d.labels.assign(static_cast<size_t>(images.shape(0)), -1);
    if (labels) {
        if (labels->ndim() != 1 || labels->shape(0) != images.shape(0))
            throw std::invalid_argument("labels must have shape [N]");
        std::copy(labels->data(), labels->data() + labels->size(), d.labels.begin());
    }
    return d;
}

TensorD matrix(const Doubles& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    return TensorD::from_vector({a.shape(0), a.shape(1)}, std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<int> labels_of(const Ints& a) { return {a.data(), a.data() + a.size()}; }

py::dict stats_dict(const StepStats& s) {
    py::dict d;
    d["step"] = s.step;
    d["epoch"] = s.epoch;
    d["batch"] = s.batch;
    d["instance_loss"] = s.instance_loss;
    d["cluster_loss"] = s.cluster_loss;
    d["total_loss"] = s.total_loss;
    d["entropy_a"] = s.entropy_a;
    d["entropy_b"] = s.entropy_b;
    d["grad_norm"] = s.grad_norm;
    return d;
}

py::dict metrics_dict(const MetricsReport& m) {
    py::dict d;
    d["nmi"] = m.nmi;
    d["acc"] = m.acc;
    d["ari"] = m.ari;
    d["cluster_sizes"] = m.cluster_sizes;
    d["n"] = m.n;
    return d;
}

py::dict embeddings_dict(const Embeddings& e) {
    Doubles probabilities({e.n, static_cast<int64_t>(e.clusters)});
    std::copy(e.probabilities.begin(), e.probabilities.end(), probabilities.mutable_data());
    Doubles instance({e.n, static_cast<int64_t>(e.dim)});
    std::copy(e.instance.begin(), e.instance.end(), instance.mutable_data());
    Ints assignments(static_cast<py::ssize_t>(e.assignments.size()));
    std::copy(e.assignments.begin(), e.assignments.end(), assignments.mutable_data());
    py::dict d;
    d["probabilities"] = probabilities;
    d["instance"] = instance;
    d["assignments"] = assignments;
    return d;
}

}  // namespace

PYBIND11_MODULE(_vtcc, m) {
    m.doc() = "Vision Transformer contrastive clustering engine";
    tune_allocator();

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DatasetError>(m, "DatasetError", PyExc_IOError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("desk_config", [] { return TrainConfig::desk().to_text(); }, "Config text of the desk profile.");
    m.def("large_config", [] { return TrainConfig::large().to_text(); }, "Config text of the ViT-Small profile.");
    m.def(
        "normalize_config",
        [](const std::string& text, const std::map<std::string, std::string>& overrides) {
            return make_config(text, overrides).to_text();
        },
        py::arg("text"), py::arg("overrides") = std::map<std::string, std::string>{},
        "Parses config text over the desk profile, applies overrides, validates, and returns the full text.");

    m.def(
        "synthetic_dataset",
        [](int classes, int per_class, int side, uint64_t seed, double noise) {
            SyntheticSpec spec;
            spec.classes = classes;
            spec.per_class = per_class;
            spec.side = side;
            spec.seed = seed;
            spec.noise = noise;
            spec.validate();
            return dataset_to_numpy(generate_synthetic(spec));
        },
        py::arg("classes") = 4, py::arg("per_class") = 128, py::arg("side") = 32, py::arg("seed") = 7,
        py::arg("noise") = 0.05, "Returns (images uint8 [N,1,S,S], labels int [N]).");
    m.def(
        "read_records", [](const std::string& path) { return dataset_to_numpy(read_binary_records(path)); },
        py::arg("path"));
    m.def(
        "write_records",
        [](const std::string& path, const Bytes& images, const std::optional<Ints>& labels) {
            write_binary_records(dataset_from_numpy(images, labels), path);
        },
        py::arg("path"), py::arg("images"), py::arg("labels") = py::none());

    m.def(
        "instance_contrastive_loss",
        [](const Doubles& za, const Doubles& zb, double tau) {
            LossConfig cfg;
            cfg.tau_instance = tau;
            return instance_contrastive_loss(matrix(za), matrix(zb), cfg).item();
        },
        py::arg("z_a"), py::arg("z_b"), py::arg("tau") = 0.5);
    m.def(
        "cluster_contrastive_loss",
        [](const Doubles& ya, const Doubles& yb, double tau, double entropy_weight) {
            LossConfig cfg;
            cfg.tau_cluster = tau;
            cfg.entropy_weight = entropy_weight;
            return cluster_contrastive_loss(matrix(ya), matrix(yb), cfg).item();
        },
        py::arg("y_a"), py::arg("y_b"), py::arg("tau") = 1.0, py::arg("entropy_weight") = 1.0);

    m.def("nmi", [](const Ints& p, const Ints& t) { return nmi(labels_of(p), labels_of(t)); });
    m.def("acc", [](const Ints& p, const Ints& t) { return clustering_accuracy(labels_of(p), labels_of(t)); });
    m.def("ari", [](const Ints& p, const Ints& t) { return ari(labels_of(p), labels_of(t)); });
    m.def(
        "kmeans",
        [](const Doubles& points, int k, uint64_t seed) {
            if (points.ndim() != 2) throw std::invalid_argument("points must be 2-D");
            const auto r = kmeans({points.data(), static_cast<size_t>(points.size())}, points.shape(0), points.shape(1),
                                  k, seed);
            return py::make_tuple(r.labels, r.inertia);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0, "Returns (labels, inertia).");

    m.def("gradcheck", [](uint64_t seed) {
        const auto report = run_gradcheck_suite(seed);
        py::list rows;
        for (const auto& r : report.results) rows.append(py::make_tuple(r.name, r.max_rel_error, r.tolerance));
        return py::make_tuple(report.passed(), rows);
    }, py::arg("seed") = 0, "Returns (passed, [(name, max_rel_error, tolerance)]).");

    m.def("set_threads", &set_thread_count, py::arg("threads"));

    py::class_<Trainer>(m, "Trainer")
        .def(py::init([](const std::string& config_text, const std::map<std::string, std::string>& overrides,
                         const std::optional<Bytes>& images, const std::optional<Ints>& labels) {
                 const TrainConfig config = make_config(config_text, overrides);
                 Dataset data = images ? dataset_from_numpy(*images, labels) : load_dataset(config.data);
                 return Trainer(config, std::move(data));
             }),
             py::arg("config") = std::string(), py::arg("overrides") = std::map<std::string, std::string>{},
             py::arg("images") = py::none(), py::arg("labels") = py::none(),
             "Data comes from the config unless images (uint8 [N,C,S,S]) are given.")
        .def_static(
            "resume",
            [](const std::string& path, const std::optional<Bytes>& images, const std::optional<Ints>& labels) {
                const TrainConfig stored = load_model(path).config;
                Dataset data = images ? dataset_from_numpy(*images, labels) : load_dataset(stored.data);
                return Trainer::resume(path, std::move(data));
            },
            py::arg("path"), py::arg("images") = py::none(), py::arg("labels") = py::none())
        .def("step", [](Trainer& t) { return stats_dict(t.step()); })
        .def("run_epoch",
             [](Trainer& t) {
                 const EpochStats e = t.run_epoch();
                 py::dict d;
                 d["epoch"] = e.epoch;
                 d["total_loss"] = e.total_loss;
                 d["instance_loss"] = e.instance_loss;
                 d["cluster_loss"] = e.cluster_loss;
                 d["entropy"] = e.entropy;
                 return d;
             })
        .def("train", [](Trainer& t) { return t.train().to_json(); }, "Runs to the epoch budget; returns the report JSON.")
        .def("evaluate",
             [](Trainer& t) {
                 const EvalReport r = t.evaluate_now();
                 py::dict d = metrics_dict(r.metrics);
                 d["mass_entropy"] = r.mass_entropy;
                 return d;
             })
        .def("infer", [](Trainer& t) { return embeddings_dict(t.infer_now()); })
        .def("save", [](Trainer& t, const std::string& path) { t.save(path); }, py::arg("path"))
        .def_property_readonly("config", [](const Trainer& t) { return t.config().to_text(); })
        .def_property_readonly("step_count", [](const Trainer& t) { return t.progress().step; })
        .def_property_readonly("epoch", [](const Trainer& t) { return t.progress().epoch; })
        .def_property_readonly("batches_per_epoch", &Trainer::batches_per_epoch);

    m.def(
        "infer",
        [](const std::string& checkpoint, const Bytes& images) {
            LoadedModel loaded = load_model(checkpoint);
            return embeddings_dict(infer(loaded.model, dataset_from_numpy(images, std::nullopt), loaded.config));
        },
        py::arg("checkpoint"), py::arg("images"), "Eval-mode outputs of a checkpoint on uint8 images.");
}
