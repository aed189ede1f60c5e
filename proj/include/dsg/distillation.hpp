#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dsg/dataset_io.hpp"
#include "dsg/similarity_graph.hpp"

namespace dsg {

inline constexpr std::size_t kDefaultClusters = 70;
inline constexpr std::size_t kDefaultKMeansIters = 300;

struct ClusterAssignment {
    std::size_t k = 0;
    std::vector<std::int32_t> labels;  // one per sample, in [0, k)
    RowMatrix centroids;               // k x dim
    double inertia = 0.0;              // sum of squared point-to-centroid distances
    // Inertia after initialization and after every subsequent assignment step.
    std::vector<double> inertia_history;
    std::size_t iterations = 0;

    std::size_t n() const { return labels.size(); }
};

// Lloyd's algorithm from a seeded k-means++ start on squared Euclidean
// distance. Stops at an assignment fixpoint or after max_iters updates.
// Ties in assignment go to the lowest centroid index; an empty cluster takes
// the point farthest from its own centroid.
ClusterAssignment kmeans(const FeatureSet& features, std::size_t k, std::uint64_t seed = 0,
                         std::size_t max_iters = kDefaultKMeansIters);

// Centroids and inertia recomputed from fixed labels (e.g. read back from CSV).
ClusterAssignment assignment_from_labels(const FeatureSet& features,
                                         std::vector<std::int32_t> labels);

// CSV with header `id,cluster`, rows in feature order.
void save_cluster_csv(const FeatureSet& features, const ClusterAssignment& clusters,
                      const std::filesystem::path& path);
// Reads `id,cluster` rows and aligns them to `features` by id.
ClusterAssignment load_cluster_csv(const FeatureSet& features, const std::filesystem::path& path);

inline int cluster_sign(std::int32_t c_i, std::int32_t c_j) { return c_i == c_j ? 1 : -1; }

inline int distill_mask(int s, int c) { return s == c ? 1 : 0; }

// Which weight terms enter the loss: full = W1 * W2, v1 = W2 only, v2 = all ones.
enum class Ablation : std::uint8_t { full = 0, v1 = 1, v2 = 2 };

std::string_view to_string(Ablation ablation);
Ablation parse_ablation(std::string_view name);

// Distilled weight for a pair at cosine distance d with cluster labels c_i, c_j.
double distilled_weight(double d, std::int32_t c_i, std::int32_t c_j, const DistanceStats& stats,
                        Ablation ablation);

// Per-pair form over a feature set; i == j gives 1 for every ablation.
double distilled_weight(std::size_t i, std::size_t j, const FeatureSet& features,
                        const DistanceStats& stats, const ClusterAssignment& clusters,
                        Ablation ablation);

using RelationshipMatrix = SquareMatrix<std::int8_t>;  // C
using DistilledWeights = SquareMatrix<double>;         // W

RelationshipMatrix build_relationship_matrix(const ClusterAssignment& clusters,
                                             std::size_t cap = kMaterializationCap);
DistilledWeights build_distilled_weights(const FeatureSet& features, const DistanceStats& stats,
                                         const ClusterAssignment& clusters, Ablation ablation,
                                         std::size_t cap = kMaterializationCap);

}  // namespace dsg
