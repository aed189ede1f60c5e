#include "dsg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dsg/errors.hpp"

namespace dsg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void require_file(const fs::path& path, const char* what) {
    if (!fs::is_regular_file(path))
        throw IoError(std::string(what) + " file not found: " + path.string());
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

// Reraises a stage failure with stage/artifact context, keeping the error class
// that decides the CLI exit code.
template <typename Fn>
auto in_stage(const std::string& stage, const fs::path& artifact, Fn&& fn) {
    const std::string ctx = "[" + stage + " -> " + artifact.string() + "] ";
    try {
        return fn();
    } catch (const DivergenceError& e) {
        throw DivergenceError(ctx + e.what());
    } catch (const IoError& e) {
        throw IoError(ctx + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(ctx + e.what());
    } catch (const std::exception& e) {
        throw Error(ctx + e.what());
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic data

void SynthSpec::validate() const {
    if (num_clusters < 1 || points_per_cluster < 1 || dim < 1)
        throw ValidationError("synthetic dataset counts must be >= 1");
    if (num_clusters * points_per_cluster < 2)
        throw ValidationError("synthetic dataset needs at least 2 points");
    if (!(center_scale > 0.0) || !std::isfinite(center_scale))
        throw ValidationError("center_scale must be positive");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
        throw ValidationError("noise_scale must be >= 0");
}

std::pair<FeatureSet, LabelSet> generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto dim = static_cast<Eigen::Index>(spec.dim);

    RowMatrix centers(static_cast<Eigen::Index>(spec.num_clusters), dim);
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        do {
            for (Eigen::Index j = 0; j < dim; ++j) centers(c, j) = gauss(rng);
        } while (centers.row(c).norm() == 0.0);
        centers.row(c) *= spec.center_scale / centers.row(c).norm();
    }

    const double sigma = spec.noise_scale * spec.center_scale / std::sqrt(static_cast<double>(spec.dim));
    const std::size_t n = spec.num_clusters * spec.points_per_cluster;
    const int width = static_cast<int>(std::to_string(n - 1).size());
    RowMatrix data(static_cast<Eigen::Index>(n), dim);
    std::vector<std::string> ids;
    LabelSet labels;
    for (std::size_t c = 0; c < spec.num_clusters; ++c) {
        for (std::size_t p = 0; p < spec.points_per_cluster; ++p) {
            const auto row = static_cast<Eigen::Index>(c * spec.points_per_cluster + p);
            for (Eigen::Index j = 0; j < dim; ++j)
                data(row, j) = centers(static_cast<Eigen::Index>(c), j) + sigma * gauss(rng);
            data.row(row) /= data.row(row).norm();
            std::ostringstream id;
            id << 'p' << std::setw(width) << std::setfill('0') << row;
            ids.push_back(id.str());
            labels.labels.push_back({static_cast<int>(c)});
        }
    }
    labels.ids = ids;
    labels.num_classes = static_cast<int>(spec.num_clusters);
    labels.finalize();
    return {FeatureSet(std::move(ids), std::move(data)), std::move(labels)};
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const DistanceStats& s) {
    return json{{"m_l", s.m_l},         {"sigma_l", s.sigma_l}, {"m_r", s.m_r},
                {"sigma_r", s.sigma_r}, {"alpha", s.alpha},     {"beta", s.beta},
                {"d_l", s.d_l},         {"d_r", s.d_r},         {"t", s.t},
                {"sample_pairs", s.sample_pairs}};
}

DistanceStats stats_from_json(const json& j) {
    try {
        DistanceStats s;
        j.at("m_l").get_to(s.m_l);
        j.at("sigma_l").get_to(s.sigma_l);
        j.at("m_r").get_to(s.m_r);
        j.at("sigma_r").get_to(s.sigma_r);
        j.at("alpha").get_to(s.alpha);
        j.at("beta").get_to(s.beta);
        j.at("d_l").get_to(s.d_l);
        j.at("d_r").get_to(s.d_r);
        j.at("t").get_to(s.t);
        j.at("sample_pairs").get_to(s.sample_pairs);
        if (!(0.0 <= s.d_l && s.d_l <= s.t && s.t <= s.d_r && s.d_r <= 2.0))
            throw ValidationError("stats thresholds violate 0 <= d_l <= t <= d_r <= 2");
        return s;
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid stats JSON: ") + e.what());
    }
}

void save_stats(const DistanceStats& stats, const fs::path& path) { write_json(to_json(stats), path); }

DistanceStats load_stats(const fs::path& path) { return stats_from_json(read_json(path)); }

json to_json(const EvalReport& r) {
    json topn = json::array();
    for (const auto& [n, p] : r.topn_curve) topn.push_back({{"n", n}, {"precision", p}});
    json pr = json::array();
    for (const auto& p : r.pr_curve)
        pr.push_back({{"radius", p.radius}, {"recall", p.recall}, {"precision", p.precision}});
    return json{{"map", r.map},
                {"num_queries", r.num_queries},
                {"num_excluded", r.num_excluded},
                {"topn_curve", topn},
                {"pr_curve", pr}};
}

json to_json(const TrainReport& r) {
    // Wall time is left out so reports stay byte-identical across reruns.
    return json{{"epoch_losses", r.epoch_losses},
                {"final_loss", r.final_loss},
                {"epochs_run", r.epochs_run}};
}

void write_curves(const EvalReport& report, const fs::path& dir) {
    {
        std::ofstream out(dir / "topn.csv", std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + (dir / "topn.csv").string());
        out << "N,precision\n" << std::setprecision(17);
        for (const auto& [n, p] : report.topn_curve) out << n << ',' << p << '\n';
    }
    std::ofstream out(dir / "pr.csv", std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + (dir / "pr.csv").string());
    out << "radius,recall,precision\n" << std::setprecision(17);
    for (const auto& p : report.pr_curve) out << p.radius << ',' << p.recall << ',' << p.precision << '\n';
}

// ---------------------------------------------------------------------------
// Stages

DistanceStats run_stats(const fs::path& features_path, const StatsOptions& o, const fs::path& out_json) {
    auto features = load_features(features_path, {o.normalize});
    auto sample = pairwise_distance_sample(features, o.max_pairs, o.seed);
    auto stats = fit_distance_stats(sample, o.t, o.alpha, o.beta);
    save_stats(stats, out_json);
    return stats;
}

ClusterAssignment run_cluster(const fs::path& features_path, const ClusterOptions& o,
                              const fs::path& out_labels_csv, const fs::path& out_centroids) {
    auto features = load_features(features_path, {o.normalize});
    auto clusters = kmeans(features, o.k, o.seed, o.max_iters);
    save_cluster_csv(features, clusters, out_labels_csv);
    std::vector<std::string> ids;
    for (std::size_t c = 0; c < clusters.k; ++c) ids.push_back("c" + std::to_string(c));
    write_dsgf(out_centroids, ids, clusters.centroids);
    return clusters;
}

TrainReport run_train(const fs::path& features_path, const fs::path& stats_path,
                      const fs::path& clusters_path, const TrainOptions& o, const fs::path& out_model) {
    if (o.bits < CodeSet::kMinCodeLen || o.bits > CodeSet::kMaxCodeLen)
        throw ValidationError("bits must lie in [8, 4096] to be stored as codes");
    auto features = load_features(features_path, {o.normalize});
    auto stats = load_stats(stats_path);
    auto clusters = load_cluster_csv(features, clusters_path);

    HashModelConfig config;
    config.in_dim = features.dim();
    config.code_len = o.bits;
    config.hidden_dims = o.hidden_dims;
    config.batch_size = o.batch_size;
    config.learning_rate = o.learning_rate;
    config.momentum = o.momentum;
    config.epochs = o.epochs;
    config.seed = o.seed;
    config.ablation = o.ablation;
    config.include_diagonal = o.include_diagonal;
    config.validate();
    if (config.batch_size > features.n())
        throw ValidationError("batch_size exceeds the number of training samples");

    auto model = init_model(config);
    auto report = train(model, features, stats, clusters, config);
    save_model(model, out_model);
    return report;
}

CodeSet run_encode(const fs::path& model_path, const fs::path& features_path,
                   const fs::path& out_codes, bool normalize) {
    auto model = load_model(model_path);
    auto features = load_features(features_path, {normalize});
    if (features.dim() != model.config.in_dim)
        throw ValidationError("feature dimensionality does not match the model input");
    auto codes = encode(model, features);
    save_codes(codes, out_codes);
    return codes;
}

EvalReport run_eval(const fs::path& query_codes, const fs::path& db_codes, const fs::path& query_labels,
                    const fs::path& db_labels, const EvalConfig& config, const fs::path& out_json,
                    const fs::path& curves_dir) {
    auto q = load_codes(query_codes);
    auto d = load_codes(db_codes);
    auto ql = load_labels(query_labels);
    auto dl = load_labels(db_labels);
    auto report = evaluate(q, d, ql, dl, config);
    write_json(to_json(report), out_json);
    write_curves(report, curves_dir);
    return report;
}

// ---------------------------------------------------------------------------
// Pipeline config

void PipelineConfig::validate() const {
    if (!(t > 0.0 && t < 2.0)) throw ValidationError("t must lie in (0, 2)");
    if (k < 2) throw ValidationError("k must be >= 2");
    if (bits < CodeSet::kMinCodeLen || bits > CodeSet::kMaxCodeLen)
        throw ValidationError("bits must lie in [8, 4096] to be stored as codes");
    if (!(query_fraction > 0.0 && query_fraction < 1.0))
        throw ValidationError("query_fraction must lie in (0, 1)");
    if (output_dir.empty()) throw ValidationError("output_dir is required");
    EvalConfig{r_cutoff, topn_max, topn_step, true}.validate();
    HashModelConfig probe;
    probe.in_dim = 1;
    probe.code_len = bits;
    probe.hidden_dims = hidden_dims;
    probe.batch_size = batch_size;
    probe.learning_rate = learning_rate;
    probe.momentum = momentum;
    probe.epochs = epochs;
    probe.validate();
    require_file(features, "features");
    require_file(labels, "labels");
    if (split) require_file(*split, "split");
}

PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig c;
    try {
        c.features = j.at("features").get<std::string>();
        c.labels = j.at("labels").get<std::string>();
        if (j.contains("split") && !j.at("split").is_null()) c.split = j.at("split").get<std::string>();
        c.output_dir = j.at("output_dir").get<std::string>();
        c.normalize = j.value("normalize", c.normalize);
        c.t = j.value("t", c.t);
        c.alpha = j.value("alpha", c.alpha);
        c.beta = j.value("beta", c.beta);
        c.max_pairs = j.value("max_pairs", c.max_pairs);
        c.k = j.value("k", c.k);
        c.kmeans_max_iters = j.value("kmeans_max_iters", c.kmeans_max_iters);
        c.bits = j.value("bits", c.bits);
        c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("lr", c.learning_rate);
        c.momentum = j.value("momentum", c.momentum);
        c.ablation = parse_ablation(j.value("ablation", std::string(to_string(c.ablation))));
        c.include_diagonal = j.value("include_diagonal", c.include_diagonal);
        c.query_fraction = j.value("query_fraction", c.query_fraction);
        if (j.contains("seeds")) {
            const auto& s = j.at("seeds");
            c.seeds.split = s.value("split", c.seeds.split);
            c.seeds.stats = s.value("stats", c.seeds.stats);
            c.seeds.cluster = s.value("cluster", c.seeds.cluster);
            c.seeds.train = s.value("train", c.seeds.train);
        }
        c.r_cutoff = j.value("r_cutoff", c.r_cutoff);
        c.topn_max = j.value("topn_max", c.topn_max);
        c.topn_step = j.value("topn_step", c.topn_step);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid pipeline config: ") + e.what());
    }
    return c;
}

json to_json(const PipelineConfig& c) {
    json j{{"features", c.features.string()},
           {"labels", c.labels.string()},
           {"split", c.split ? json(c.split->string()) : json(nullptr)},
           {"output_dir", c.output_dir.string()},
           {"normalize", c.normalize},
           {"t", c.t},
           {"alpha", c.alpha},
           {"beta", c.beta},
           {"max_pairs", c.max_pairs},
           {"k", c.k},
           {"kmeans_max_iters", c.kmeans_max_iters},
           {"bits", c.bits},
           {"hidden_dims", c.hidden_dims},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"lr", c.learning_rate},
           {"momentum", c.momentum},
           {"ablation", std::string(to_string(c.ablation))},
           {"include_diagonal", c.include_diagonal},
           {"query_fraction", c.query_fraction},
           {"seeds",
            {{"split", c.seeds.split},
             {"stats", c.seeds.stats},
             {"cluster", c.seeds.cluster},
             {"train", c.seeds.train}}},
           {"r_cutoff", c.r_cutoff},
           {"topn_max", c.topn_max},
           {"topn_step", c.topn_step}};
    return j;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    return pipeline_config_from_json(read_json(path));
}

SplitSpec derive_split(const FeatureSet& features, double query_fraction, std::uint64_t seed) {
    std::vector<std::string> ids = features.ids();
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    auto n_query = static_cast<std::size_t>(std::llround(query_fraction * static_cast<double>(ids.size())));
    n_query = std::clamp<std::size_t>(n_query, 1, ids.size() - 1);
    SplitSpec split;
    split.query.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_query));
    split.retrieval.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_query), ids.end());
    split.train = split.retrieval;
    return split;
}

EvalReport run_pipeline(const PipelineConfig& config) {
    config.validate();
    const fs::path out = config.output_dir;

    // Everything that can be checked without running a stage is checked here,
    // before the output directory is touched.
    auto raw = in_stage("load", config.features, [&] { return load_features(config.features, {false}); });
    auto labels = in_stage("load", config.labels, [&] { return load_labels(config.labels); });
    SplitSpec split = config.split
        ? in_stage("load", *config.split, [&] { return load_split(*config.split); })
        : derive_split(raw, config.query_fraction, config.seeds.split);
    in_stage("split", config.split.value_or(out / artifacts::kSplit), [&] {
        split.validate(raw);
        for (const auto* list : {&split.query, &split.retrieval})
            for (const auto& id : *list) labels.of(id);
        if (split.train.size() < std::max<std::size_t>(config.batch_size, config.k))
            throw ValidationError("training split smaller than batch_size or k");
        return 0;
    });

    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());

    save_split(split, out / artifacts::kSplit);
    // Raw rows are copied bit-for-bit, so each stage sees the original floats.
    save_features(raw.subset(split.train), out / artifacts::kTrainFeatures);
    save_features(raw.subset(split.query), out / artifacts::kQueryFeatures);
    save_features(raw.subset(split.retrieval), out / artifacts::kDbFeatures);

    StatsOptions so{config.t, config.alpha, config.beta, config.max_pairs, config.seeds.stats,
                    config.normalize};
    in_stage("stats", out / artifacts::kStats, [&] {
        return run_stats(out / artifacts::kTrainFeatures, so, out / artifacts::kStats);
    });

    ClusterOptions co{config.k, config.seeds.cluster, config.kmeans_max_iters, config.normalize};
    in_stage("cluster", out / artifacts::kClusters, [&] {
        return run_cluster(out / artifacts::kTrainFeatures, co, out / artifacts::kClusters,
                           out / artifacts::kCentroids);
    });

    TrainOptions to;
    to.bits = config.bits;
    to.hidden_dims = config.hidden_dims;
    to.epochs = config.epochs;
    to.batch_size = config.batch_size;
    to.learning_rate = config.learning_rate;
    to.momentum = config.momentum;
    to.ablation = config.ablation;
    to.include_diagonal = config.include_diagonal;
    to.seed = config.seeds.train;
    to.normalize = config.normalize;
    auto train_report = in_stage("train", out / artifacts::kModel, [&] {
        return run_train(out / artifacts::kTrainFeatures, out / artifacts::kStats,
                         out / artifacts::kClusters, to, out / artifacts::kModel);
    });
    write_json(to_json(train_report), out / artifacts::kTrainReport);

    in_stage("encode", out / artifacts::kQueryCodes, [&] {
        return run_encode(out / artifacts::kModel, out / artifacts::kQueryFeatures,
                          out / artifacts::kQueryCodes, config.normalize);
    });
    in_stage("encode", out / artifacts::kDbCodes, [&] {
        return run_encode(out / artifacts::kModel, out / artifacts::kDbFeatures,
                          out / artifacts::kDbCodes, config.normalize);
    });

    EvalConfig ec_cfg{config.r_cutoff, config.topn_max, config.topn_step, true};
    auto report = in_stage("eval", out / artifacts::kReport, [&] {
        return evaluate(load_codes(out / artifacts::kQueryCodes), load_codes(out / artifacts::kDbCodes),
                        labels, labels, ec_cfg);
    });

    json j = to_json(report);
    j["config"] = to_json(config);
    j["seeds"] = j["config"]["seeds"];
    j["final_train_loss"] = train_report.final_loss;
    write_json(j, out / artifacts::kReport);
    write_curves(report, out);
    return report;
}

}  // namespace dsg
