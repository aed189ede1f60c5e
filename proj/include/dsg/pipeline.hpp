#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dsg/dataset_io.hpp"
#include "dsg/distillation.hpp"
#include "dsg/hash_model.hpp"
#include "dsg/retrieval_eval.hpp"
#include "dsg/similarity_graph.hpp"

namespace dsg {

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthSpec {
    std::size_t num_clusters = 10;
    std::size_t points_per_cluster = 100;
    std::size_t dim = 128;
    double center_scale = 1.0;
    // Expected norm of the noise vector relative to the center norm; each
    // coordinate gets N(0, (noise_scale * center_scale)^2 / dim).
    double noise_scale = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

// Centers uniform on the sphere of radius center_scale, points = center +
// isotropic Gaussian noise, then L2-normalized. Label = generating cluster.
std::pair<FeatureSet, LabelSet> generate_synthetic(const SynthSpec& spec);

// ---------------------------------------------------------------------------
// JSON forms of stage outputs

nlohmann::json to_json(const DistanceStats& stats);
DistanceStats stats_from_json(const nlohmann::json& j);
void save_stats(const DistanceStats& stats, const std::filesystem::path& path);
DistanceStats load_stats(const std::filesystem::path& path);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const TrainReport& report);

// ---------------------------------------------------------------------------
// Stage runners shared by the CLI subcommands and run_pipeline. Each one loads
// and validates every input before it creates any output file.

struct StatsOptions {
    double t = kDefaultThreshold;
    double alpha = kDefaultAlpha;
    double beta = kDefaultBeta;
    std::uint64_t max_pairs = kDefaultMaxPairs;
    std::uint64_t seed = 0;
    bool normalize = true;
};
DistanceStats run_stats(const std::filesystem::path& features, const StatsOptions& options,
                        const std::filesystem::path& out_json);

struct ClusterOptions {
    std::size_t k = kDefaultClusters;
    std::uint64_t seed = 0;
    std::size_t max_iters = kDefaultKMeansIters;
    bool normalize = true;
};
ClusterAssignment run_cluster(const std::filesystem::path& features, const ClusterOptions& options,
                              const std::filesystem::path& out_labels_csv,
                              const std::filesystem::path& out_centroids);

struct TrainOptions {
    std::size_t bits = 64;
    std::vector<std::size_t> hidden_dims;
    std::size_t epochs = 50;
    std::size_t batch_size = 24;
    double learning_rate = 0.001;
    double momentum = 0.9;
    Ablation ablation = Ablation::full;
    bool include_diagonal = true;
    std::uint64_t seed = 0;
    bool normalize = true;
};
TrainReport run_train(const std::filesystem::path& features, const std::filesystem::path& stats,
                      const std::filesystem::path& clusters, const TrainOptions& options,
                      const std::filesystem::path& out_model);

CodeSet run_encode(const std::filesystem::path& model, const std::filesystem::path& features,
                   const std::filesystem::path& out_codes, bool normalize = true);

// Writes the report JSON to out_json and topn.csv / pr.csv into curves_dir.
EvalReport run_eval(const std::filesystem::path& query_codes, const std::filesystem::path& db_codes,
                    const std::filesystem::path& query_labels,
                    const std::filesystem::path& db_labels, const EvalConfig& config,
                    const std::filesystem::path& out_json, const std::filesystem::path& curves_dir);

void write_curves(const EvalReport& report, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// End to end

struct PipelineSeeds {
    std::uint64_t split = 0;
    std::uint64_t stats = 0;
    std::uint64_t cluster = 0;
    std::uint64_t train = 0;
};

struct PipelineConfig {
    std::filesystem::path features;
    std::filesystem::path labels;
    std::optional<std::filesystem::path> split;  // derived from query_fraction when absent
    std::filesystem::path output_dir;
    bool normalize = true;

    double t = kDefaultThreshold;
    double alpha = kDefaultAlpha;
    double beta = kDefaultBeta;
    std::uint64_t max_pairs = kDefaultMaxPairs;

    std::size_t k = kDefaultClusters;
    std::size_t kmeans_max_iters = kDefaultKMeansIters;

    std::size_t bits = 64;
    std::vector<std::size_t> hidden_dims;
    std::size_t epochs = 50;
    std::size_t batch_size = 24;
    double learning_rate = 0.001;
    double momentum = 0.9;
    Ablation ablation = Ablation::full;
    bool include_diagonal = true;

    double query_fraction = 0.1;
    PipelineSeeds seeds;

    std::size_t r_cutoff = 5000;
    std::size_t topn_max = 1000;
    std::size_t topn_step = 100;

    // Range checks on parameters plus existence of the input files.
    void validate() const;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Fixed artifact names inside PipelineConfig::output_dir.
namespace artifacts {
inline constexpr const char* kSplit = "split.json";
inline constexpr const char* kTrainFeatures = "train_features.dsgf";
inline constexpr const char* kQueryFeatures = "query_features.dsgf";
inline constexpr const char* kDbFeatures = "db_features.dsgf";
inline constexpr const char* kStats = "stats.json";
inline constexpr const char* kClusters = "clusters.csv";
inline constexpr const char* kCentroids = "centroids.dsgf";
inline constexpr const char* kModel = "model.dsgm";
inline constexpr const char* kTrainReport = "train_report.json";
inline constexpr const char* kQueryCodes = "query_codes.dsgc";
inline constexpr const char* kDbCodes = "db_codes.dsgc";
inline constexpr const char* kReport = "report.json";
}  // namespace artifacts

// Seeded split when config.split is absent: a query_fraction share of ids
// become queries, the rest form both the retrieval and the training set.
SplitSpec derive_split(const FeatureSet& features, double query_fraction, std::uint64_t seed);

// Runs stats -> cluster -> train -> encode -> eval, persisting every artifact.
// Stage failures are rethrown with the stage name and artifact path prepended.
EvalReport run_pipeline(const PipelineConfig& config);

}  // namespace dsg
