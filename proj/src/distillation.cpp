#include "dsg/distillation.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <random>

#include "dsg/errors.hpp"

namespace dsg {

namespace {

double squared_distance(std::span<const double> x, const RowMatrix& centroids, Eigen::Index c) {
    double acc = 0.0;
    const double* p = centroids.data() + c * centroids.cols();
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double diff = x[k] - p[k];
        acc += diff * diff;
    }
    return acc;
}

// Lowest-index argmin over centroids.
std::int32_t nearest(std::span<const double> x, const RowMatrix& centroids) {
    std::int32_t best = 0;
    double best_d = squared_distance(x, centroids, 0);
    for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
        const double d = squared_distance(x, centroids, c);
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::int32_t>(c);
        }
    }
    return best;
}

RowMatrix kmeanspp_init(const FeatureSet& features, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = features.n();
    RowMatrix centroids(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(features.dim()));
    std::vector<bool> taken(n, false);
    auto place = [&](std::size_t c, std::size_t point) {
        taken[point] = true;
        auto row = features.row(point);
        for (std::size_t j = 0; j < row.size(); ++j)
            centroids(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = row[j];
    };

    place(0, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    std::vector<double> closest(n);
    for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(features.row(i), centroids, 0);

    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : closest) total += v;
        std::size_t chosen = n;
        if (total > 0.0) {
            const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            double running = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (closest[i] <= 0.0) continue;
                running += closest[i];
                chosen = i;
                if (running > u) break;
            }
        } else {
            // Every remaining point coincides with a chosen center.
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i]) free.push_back(i);
            chosen = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
        }
        place(c, chosen);
        for (std::size_t i = 0; i < n; ++i)
            closest[i] = std::min(closest[i], squared_distance(features.row(i), centroids,
                                                               static_cast<Eigen::Index>(c)));
    }
    return centroids;
}

// Moves the farthest point of a multi-member cluster into each empty cluster
// and centers that cluster on it.
void repair_empty(const FeatureSet& features, std::vector<std::int32_t>& labels,
                  RowMatrix& centroids) {
    const auto k = static_cast<std::size_t>(centroids.rows());
    std::vector<std::size_t> counts(k, 0);
    for (auto l : labels) ++counts[static_cast<std::size_t>(l)];
    for (std::size_t e = 0; e < k; ++e) {
        if (counts[e] != 0) continue;
        std::size_t far = labels.size();
        double far_d = -1.0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const auto c = static_cast<std::size_t>(labels[i]);
            if (counts[c] < 2) continue;
            const double d = squared_distance(features.row(i), centroids, labels[i]);
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        --counts[static_cast<std::size_t>(labels[far])];
        labels[far] = static_cast<std::int32_t>(e);
        ++counts[e];
        auto row = features.row(far);
        for (std::size_t j = 0; j < row.size(); ++j)
            centroids(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(j)) = row[j];
    }
}

std::vector<std::int32_t> assign(const FeatureSet& features, RowMatrix& centroids) {
    std::vector<std::int32_t> labels(features.n());
    for (std::size_t i = 0; i < features.n(); ++i) labels[i] = nearest(features.row(i), centroids);
    repair_empty(features, labels, centroids);
    return labels;
}

RowMatrix cluster_means(const FeatureSet& features, const std::vector<std::int32_t>& labels,
                        std::size_t k) {
    RowMatrix sums = RowMatrix::Zero(static_cast<Eigen::Index>(k),
                                     static_cast<Eigen::Index>(features.dim()));
    std::vector<double> counts(k, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto row = features.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) sums(labels[i], static_cast<Eigen::Index>(j)) += row[j];
        counts[static_cast<std::size_t>(labels[i])] += 1.0;
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0.0) sums.row(static_cast<Eigen::Index>(c)) /= counts[c];
    }
    return sums;
}

double inertia_of(const FeatureSet& features, const std::vector<std::int32_t>& labels,
                  const RowMatrix& centroids) {
    double acc = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        acc += squared_distance(features.row(i), centroids, labels[i]);
    return acc;
}

}  // namespace

ClusterAssignment kmeans(const FeatureSet& features, std::size_t k, std::uint64_t seed,
                         std::size_t max_iters) {
    if (k < 2) throw DomainError("k-means needs k >= 2");
    if (k > features.n())
        throw DomainError("k-means with k=" + std::to_string(k) + " exceeds sample count " +
                          std::to_string(features.n()));

    std::mt19937_64 rng(seed);
    ClusterAssignment out;
    out.k = k;
    RowMatrix centroids = kmeanspp_init(features, k, rng);
    auto labels = assign(features, centroids);
    out.inertia_history.push_back(inertia_of(features, labels, centroids));

    std::size_t iter = 0;
    while (iter < max_iters) {
        ++iter;
        centroids = cluster_means(features, labels, k);
        auto next = assign(features, centroids);
        out.inertia_history.push_back(inertia_of(features, next, centroids));
        if (next == labels) break;
        labels = std::move(next);
    }

    out.iterations = iter;
    out.centroids = cluster_means(features, labels, k);
    out.inertia = inertia_of(features, labels, out.centroids);
    out.inertia_history.push_back(out.inertia);
    out.labels = std::move(labels);
    return out;
}

ClusterAssignment assignment_from_labels(const FeatureSet& features,
                                         std::vector<std::int32_t> labels) {
    if (labels.size() != features.n())
        throw ValidationError("cluster labels do not match feature count");
    std::int32_t max_label = -1;
    for (auto l : labels) {
        if (l < 0) throw ValidationError("negative cluster label");
        max_label = std::max(max_label, l);
    }
    ClusterAssignment out;
    out.k = static_cast<std::size_t>(max_label) + 1;
    out.centroids = cluster_means(features, labels, out.k);
    out.inertia = inertia_of(features, labels, out.centroids);
    out.inertia_history.push_back(out.inertia);
    out.labels = std::move(labels);
    return out;
}

void save_cluster_csv(const FeatureSet& features, const ClusterAssignment& clusters,
                      const std::filesystem::path& path) {
    if (clusters.n() != features.n())
        throw ValidationError("cluster labels do not match feature count");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "id,cluster\n";
    for (std::size_t i = 0; i < features.n(); ++i)
        out << features.ids()[i] << ',' << clusters.labels[i] << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

ClusterAssignment load_cluster_csv(const FeatureSet& features, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(in, line) || (line != "id,cluster" && line != "id,cluster\r"))
        throw FormatError("cluster CSV must start with header 'id,cluster': " + path.string());

    std::vector<std::int32_t> labels(features.n(), -1);
    std::size_t seen = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw ValidationError("malformed cluster row: " + line);
        const std::size_t row = features.index_of(line.substr(0, comma));
        std::int32_t value = -1;
        const char* first = line.data() + comma + 1;
        const char* last = line.data() + line.size();
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last || value < 0)
            throw ValidationError("invalid cluster label in row: " + line);
        if (labels[row] != -1) throw ValidationError("duplicate id in cluster CSV: " + line);
        labels[row] = value;
        ++seen;
    }
    if (seen != features.n())
        throw ValidationError("cluster CSV covers " + std::to_string(seen) + " of " +
                              std::to_string(features.n()) + " samples");
    return assignment_from_labels(features, std::move(labels));
}

std::string_view to_string(Ablation ablation) {
    switch (ablation) {
        case Ablation::full: return "full";
        case Ablation::v1: return "v1";
        case Ablation::v2: return "v2";
    }
    return "full";
}

Ablation parse_ablation(std::string_view name) {
    if (name == "full") return Ablation::full;
    if (name == "v1") return Ablation::v1;
    if (name == "v2") return Ablation::v2;
    throw ValidationError("unknown ablation '" + std::string(name) + "' (expected full, v1 or v2)");
}

double distilled_weight(double d, std::int32_t c_i, std::int32_t c_j, const DistanceStats& stats,
                        Ablation ablation) {
    if (ablation == Ablation::v2) return 1.0;
    const int mask = distill_mask(pseudo_label(d, stats), cluster_sign(c_i, c_j));
    if (ablation == Ablation::v1) return mask;
    return mask == 0 ? 0.0 : smooth_weight(d, stats);
}

double distilled_weight(std::size_t i, std::size_t j, const FeatureSet& features,
                        const DistanceStats& stats, const ClusterAssignment& clusters,
                        Ablation ablation) {
    if (i == j) return 1.0;
    const double d = cosine_distance(features.row(i), features.row(j));
    return distilled_weight(d, clusters.labels[i], clusters.labels[j], stats, ablation);
}

RelationshipMatrix build_relationship_matrix(const ClusterAssignment& clusters, std::size_t cap) {
    if (clusters.n() > cap)
        throw CapacityError("relationship matrix exceeds materialization cap");
    RelationshipMatrix c(clusters.n());
    for (std::size_t i = 0; i < c.n; ++i)
        for (std::size_t j = 0; j < c.n; ++j)
            c(i, j) = static_cast<std::int8_t>(cluster_sign(clusters.labels[i], clusters.labels[j]));
    return c;
}

DistilledWeights build_distilled_weights(const FeatureSet& features, const DistanceStats& stats,
                                         const ClusterAssignment& clusters, Ablation ablation,
                                         std::size_t cap) {
    if (clusters.n() != features.n())
        throw ValidationError("cluster labels do not match feature count");
    auto dist = distance_matrix(features, cap);
    DistilledWeights w(dist.n);
    for (std::size_t i = 0; i < w.n; ++i)
        for (std::size_t j = 0; j < w.n; ++j)
            w(i, j) = distilled_weight(dist(i, j), clusters.labels[i], clusters.labels[j], stats,
                                       ablation);
    return w;
}

}  // namespace dsg
