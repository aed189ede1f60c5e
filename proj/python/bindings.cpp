#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "dsg/errors.hpp"
#include "dsg/pipeline.hpp"

namespace py = pybind11;
using namespace dsg;

namespace {

using SignMatrix = Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> to_eigen(const SquareMatrix<T>& m) {
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(m.n, m.n);
    std::copy(m.entries.begin(), m.entries.end(), out.data());
    return out;
}

SignMatrix code_signs(const CodeSet& codes) {
    SignMatrix out(static_cast<Eigen::Index>(codes.n()), static_cast<Eigen::Index>(codes.code_len()));
    for (std::size_t i = 0; i < codes.n(); ++i)
        for (std::size_t j = 0; j < codes.code_len(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<std::int8_t>(codes.sign(i, j));
    return out;
}

LabelSet make_labels(std::vector<std::string> ids, std::vector<std::vector<int>> labels) {
    LabelSet out;
    out.ids = std::move(ids);
    out.labels = std::move(labels);
    out.finalize();
    return out;
}

py::dict eval_dict(const EvalReport& r) {
    return py::module_::import("json").attr("loads")(to_json(r).dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Distilled smooth guidance hashing";

    auto base = py::register_exception<Error>(m, "Error");
    auto validation = py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", validation.ptr());

    py::class_<FeatureSet>(m, "FeatureSet")
        .def(py::init<std::vector<std::string>, RowMatrix>(), py::arg("ids"), py::arg("data"))
        .def_property_readonly("n", &FeatureSet::n)
        .def_property_readonly("dim", &FeatureSet::dim)
        .def_property_readonly("ids", &FeatureSet::ids)
        .def_property_readonly("data", &FeatureSet::data)
        .def("normalized", &FeatureSet::normalized)
        .def("subset", [](const FeatureSet& f, const std::vector<std::string>& ids) { return f.subset(ids); });

    m.def("load_features", [](const std::filesystem::path& p, bool normalize) {
        return load_features(p, LoadOptions{normalize});
    }, py::arg("path"), py::arg("normalize") = true);
    m.def("save_features", &save_features, py::arg("features"), py::arg("path"));

    py::class_<LabelSet>(m, "LabelSet")
        .def(py::init(&make_labels), py::arg("ids"), py::arg("labels"))
        .def_readonly("ids", &LabelSet::ids)
        .def_readonly("labels", &LabelSet::labels)
        .def_readonly("num_classes", &LabelSet::num_classes);
    m.def("load_labels", &load_labels);
    m.def("save_labels", &save_labels);

    py::class_<CodeSet>(m, "CodeSet")
        .def_static("from_signs", [](std::vector<std::string> ids, const SignMatrix& s) {
            return CodeSet::from_signs(std::move(ids), s);
        })
        .def_property_readonly("n", &CodeSet::n)
        .def_property_readonly("code_len", &CodeSet::code_len)
        .def_property_readonly("ids", &CodeSet::ids)
        .def_property_readonly("packed", [](const CodeSet& c) {
            return py::bytes(reinterpret_cast<const char*>(c.packed().data()), c.packed().size());
        })
        .def("signs", &code_signs);
    m.def("load_codes", &load_codes);
    m.def("save_codes", &save_codes);

    py::class_<DistanceStats>(m, "DistanceStats")
        .def_readonly("m_l", &DistanceStats::m_l)
        .def_readonly("sigma_l", &DistanceStats::sigma_l)
        .def_readonly("m_r", &DistanceStats::m_r)
        .def_readonly("sigma_r", &DistanceStats::sigma_r)
        .def_readonly("alpha", &DistanceStats::alpha)
        .def_readonly("beta", &DistanceStats::beta)
        .def_readonly("d_l", &DistanceStats::d_l)
        .def_readonly("d_r", &DistanceStats::d_r)
        .def_readonly("t", &DistanceStats::t)
        .def_readonly("sample_pairs", &DistanceStats::sample_pairs);
    m.def("make_distance_stats", &make_distance_stats, py::arg("m_l"), py::arg("sigma_l"), py::arg("m_r"),
          py::arg("sigma_r"), py::arg("t"), py::arg("alpha"), py::arg("beta"), py::arg("sample_pairs") = 0);
    m.def("cosine_distance", [](const std::vector<double>& x, const std::vector<double>& y) {
        return cosine_distance(x, y);
    });
    m.def("pairwise_distance_sample", &pairwise_distance_sample, py::arg("features"),
          py::arg("max_pairs") = kDefaultMaxPairs, py::arg("seed") = 0);
    m.def("fit_distance_stats", [](const std::vector<double>& d, double t, double alpha, double beta) {
        return fit_distance_stats(d, t, alpha, beta);
    }, py::arg("distances"), py::arg("t") = kDefaultThreshold, py::arg("alpha") = kDefaultAlpha,
          py::arg("beta") = kDefaultBeta);
    m.def("pseudo_label", &pseudo_label);
    m.def("smooth_weight", &smooth_weight);
    m.def("pseudo_graph", [](const FeatureSet& f, const DistanceStats& s) { return to_eigen(build_pseudo_graph(f, s)); });
    m.def("smooth_weights", [](const FeatureSet& f, const DistanceStats& s) {
        return to_eigen(build_smooth_weights(f, s));
    });

    py::class_<ClusterAssignment>(m, "ClusterAssignment")
        .def_readonly("k", &ClusterAssignment::k)
        .def_readonly("labels", &ClusterAssignment::labels)
        .def_readonly("centroids", &ClusterAssignment::centroids)
        .def_readonly("inertia", &ClusterAssignment::inertia)
        .def_readonly("iterations", &ClusterAssignment::iterations);
    m.def("kmeans", &kmeans, py::arg("features"), py::arg("k"), py::arg("seed") = 0,
          py::arg("max_iters") = kDefaultKMeansIters);
    m.def("distilled_weights", [](const FeatureSet& f, const DistanceStats& s, const ClusterAssignment& c,
                                  const std::string& ablation) {
        return to_eigen(build_distilled_weights(f, s, c, parse_ablation(ablation)));
    }, py::arg("features"), py::arg("stats"), py::arg("clusters"), py::arg("ablation") = "full");

    py::class_<HashModelConfig>(m, "HashModelConfig")
        .def(py::init<>())
        .def_readwrite("in_dim", &HashModelConfig::in_dim)
        .def_readwrite("code_len", &HashModelConfig::code_len)
        .def_readwrite("hidden_dims", &HashModelConfig::hidden_dims)
        .def_readwrite("batch_size", &HashModelConfig::batch_size)
        .def_readwrite("learning_rate", &HashModelConfig::learning_rate)
        .def_readwrite("momentum", &HashModelConfig::momentum)
        .def_readwrite("epochs", &HashModelConfig::epochs)
        .def_readwrite("seed", &HashModelConfig::seed)
        .def_readwrite("include_diagonal", &HashModelConfig::include_diagonal)
        .def_property("ablation", [](const HashModelConfig& c) { return std::string(to_string(c.ablation)); },
                      [](HashModelConfig& c, const std::string& a) { c.ablation = parse_ablation(a); });

    py::class_<HashModel>(m, "HashModel")
        .def_readonly("config", &HashModel::config)
        .def("parameter_count", &HashModel::parameter_count);
    py::class_<TrainReport>(m, "TrainReport")
        .def_readonly("epoch_losses", &TrainReport::epoch_losses)
        .def_readonly("final_loss", &TrainReport::final_loss)
        .def_readonly("epochs_run", &TrainReport::epochs_run);

    m.def("init_model", &init_model);
    m.def("forward", &forward);
    m.def("batch_loss", &batch_loss, py::arg("v"), py::arg("s"), py::arg("w"), py::arg("include_diagonal") = true);
    m.def("train", &train, py::arg("model"), py::arg("features"), py::arg("stats"), py::arg("clusters"),
          py::arg("config"));
    m.def("encode", &encode);
    m.def("save_model", &save_model);
    m.def("load_model", &load_model);

    m.def("average_precision", &average_precision);
    m.def("hamming_distance", [](const CodeSet& a, std::size_t i, const CodeSet& b, std::size_t j) {
        return hamming_distance(a.code(i), b.code(j), a.code_len());
    });
    m.def("evaluate", [](const CodeSet& q, const CodeSet& db, const LabelSet& ql, const LabelSet& dl,
                         std::size_t r_cutoff, std::size_t topn_max, std::size_t topn_step) {
        EvalConfig cfg;
        cfg.r_cutoff = r_cutoff;
        cfg.topn_max = topn_max;
        cfg.topn_step = topn_step;
        return eval_dict(evaluate(q, db, ql, dl, cfg));
    }, py::arg("query_codes"), py::arg("db_codes"), py::arg("query_labels"), py::arg("db_labels"),
          py::arg("r_cutoff") = 5000, py::arg("topn_max") = 1000, py::arg("topn_step") = 100);

    m.def("generate_synthetic", [](std::size_t clusters, std::size_t points, std::size_t dim, double noise,
                                   std::uint64_t seed) {
        SynthSpec spec;
        spec.num_clusters = clusters;
        spec.points_per_cluster = points;
        spec.dim = dim;
        spec.noise_scale = noise;
        spec.seed = seed;
        return generate_synthetic(spec);
    }, py::arg("clusters") = 10, py::arg("points") = 100, py::arg("dim") = 128, py::arg("noise") = 0.05,
          py::arg("seed") = 0);
    m.def("run_pipeline_json", [](const std::string& config) {
        return to_json(run_pipeline(pipeline_config_from_json(nlohmann::json::parse(config)))).dump();
    });
}
