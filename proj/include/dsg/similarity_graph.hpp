#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dsg/dataset_io.hpp"

namespace dsg {

// Dense n x n matrix, row-major. Only built for n up to kMaterializationCap.
template <typename T>
struct SquareMatrix {
    std::size_t n = 0;
    std::vector<T> entries;

    SquareMatrix() = default;
    explicit SquareMatrix(std::size_t size, T fill = T{}) : n(size), entries(size * size, fill) {}

    T& operator()(std::size_t i, std::size_t j) { return entries[i * n + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
};

using PseudoGraph = SquareMatrix<std::int8_t>;    // S, entries in {-1, +1}
using SmoothWeights = SquareMatrix<double>;       // W1, entries in [0, 1]

inline constexpr std::size_t kMaterializationCap = 20000;
inline constexpr std::size_t kDefaultMaxPairs = 10'000'000;

inline constexpr double kDefaultThreshold = 0.1;
inline constexpr double kDefaultAlpha = 2.0;
inline constexpr double kDefaultBeta = 2.0;

// Two-half-Gaussian summary of the pairwise cosine distance distribution
// together with the thresholds derived from it. Invariant after construction
// through make_distance_stats: 0 <= d_l <= t <= d_r <= 2.
struct DistanceStats {
    double m_l = 0.0;
    double sigma_l = 0.0;
    double m_r = 0.0;
    double sigma_r = 0.0;
    double alpha = kDefaultAlpha;
    double beta = kDefaultBeta;
    double d_l = 0.0;
    double d_r = 0.0;
    double t = kDefaultThreshold;
    std::uint64_t sample_pairs = 0;

    friend bool operator==(const DistanceStats&, const DistanceStats&) = default;
};

// Computes d_l = m_l - alpha*sigma_l and d_r = m_r + beta*sigma_r, then clamps
// them so that 0 <= d_l <= t <= d_r <= 2.
DistanceStats make_distance_stats(double m_l, double sigma_l, double m_r, double sigma_r,
                                  double t, double alpha, double beta,
                                  std::uint64_t sample_pairs = 0);

// 1 - x.y / (|x||y|), accumulated in double and clamped into [0, 2].
double cosine_distance(std::span<const double> x, std::span<const double> y);

// Cosine distances between rows of one FeatureSet with cached squared norms.
// Bit-identical to cosine_distance on the same rows; (i, i) is exactly 0.
class CosineDistances {
public:
    explicit CosineDistances(const FeatureSet& features);

    double operator()(std::size_t i, std::size_t j) const;
    std::size_t n() const { return sq_norms_.size(); }

private:
    const FeatureSet* features_;
    std::vector<double> sq_norms_;
};

// All unordered-pair distances when n(n-1)/2 <= max_pairs, otherwise a seeded
// uniform sample of max_pairs distinct pairs. Output is ordered by pair index
// (i < j, row-major) either way.
std::vector<double> pairwise_distance_sample(const FeatureSet& features,
                                             std::uint64_t max_pairs = kDefaultMaxPairs,
                                             std::uint64_t seed = 0);

// Histogram-peak estimate of the two half-Gaussians (200 bins, 5-bin moving
// average, peaks at least 10 bins apart), falling back to a split at the
// sample mean when two peaks cannot be found. Needs >= 1000 distances.
DistanceStats fit_distance_stats(std::span<const double> distances, double t = kDefaultThreshold,
                                 double alpha = kDefaultAlpha, double beta = kDefaultBeta);

inline constexpr std::size_t kMinFitSamples = 1000;

// +1 when d <= t, -1 otherwise.
inline int pseudo_label(double d, const DistanceStats& stats) { return d <= stats.t ? 1 : -1; }

// Quadratic confidence weight: 1 outside (d_l, d_r), 0 at t.
double smooth_weight(double d, const DistanceStats& stats);

PseudoGraph build_pseudo_graph(const FeatureSet& features, const DistanceStats& stats,
                               std::size_t cap = kMaterializationCap);
SmoothWeights build_smooth_weights(const FeatureSet& features, const DistanceStats& stats,
                                   std::size_t cap = kMaterializationCap);

// Symmetric distance matrix with a zero diagonal; same cap as the builders.
SquareMatrix<double> distance_matrix(const FeatureSet& features,
                                     std::size_t cap = kMaterializationCap);

}  // namespace dsg
