#include "dsg/similarity_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <tuple>

#include "dsg/errors.hpp"

namespace dsg {

namespace {

constexpr std::size_t kHistogramBins = 200;
constexpr std::size_t kSmoothingWindow = 5;
constexpr std::size_t kMinPeakSeparation = 10;

double finish_cosine(double dot, double sq_x, double sq_y) {
    double d = 1.0 - dot / std::sqrt(sq_x * sq_y);
    return std::clamp(d, 0.0, 2.0);
}

double dot(std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) acc += x[k] * y[k];
    return acc;
}

void check_capacity(std::size_t n, std::size_t cap) {
    if (n > cap)
        throw CapacityError("dense " + std::to_string(n) + "x" + std::to_string(n) +
                            " matrix exceeds materialization cap " + std::to_string(cap) +
                            "; use the per-pair evaluators instead");
}

}  // namespace

DistanceStats make_distance_stats(double m_l, double sigma_l, double m_r, double sigma_r,
                                  double t, double alpha, double beta,
                                  std::uint64_t sample_pairs) {
    if (!(t > 0.0 && t < 2.0)) throw DomainError("threshold t must lie in (0, 2)");
    DistanceStats s;
    s.m_l = m_l;
    s.sigma_l = sigma_l;
    s.m_r = m_r;
    s.sigma_r = sigma_r;
    s.alpha = alpha;
    s.beta = beta;
    s.t = t;
    s.sample_pairs = sample_pairs;
    s.d_l = std::clamp(std::min(m_l - alpha * sigma_l, t), 0.0, 2.0);
    s.d_r = std::clamp(std::max(m_r + beta * sigma_r, t), 0.0, 2.0);
    return s;
}

double cosine_distance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw DomainError("cosine distance of vectors with different dimensionality");
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        xy += x[k] * y[k];
        xx += x[k] * x[k];
        yy += y[k] * y[k];
    }
    if (xx == 0.0 || yy == 0.0) throw DomainError("cosine distance of a zero vector");
    return finish_cosine(xy, xx, yy);
}

CosineDistances::CosineDistances(const FeatureSet& features) : features_(&features) {
    sq_norms_.reserve(features.n());
    for (std::size_t i = 0; i < features.n(); ++i) {
        auto r = features.row(i);
        sq_norms_.push_back(dot(r, r));
    }
}

double CosineDistances::operator()(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    return finish_cosine(dot(features_->row(i), features_->row(j)), sq_norms_[i], sq_norms_[j]);
}

std::vector<double> pairwise_distance_sample(const FeatureSet& features, std::uint64_t max_pairs,
                                             std::uint64_t seed) {
    const std::uint64_t n = features.n();
    const std::uint64_t total = n * (n - 1) / 2;
    CosineDistances dist(features);
    std::vector<double> out;

    if (total <= max_pairs) {
        out.reserve(total);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) out.push_back(dist(i, j));
        return out;
    }

    // Draw with replacement, deduplicate, top up. The procedure commutes with any
    // relabeling of pair indices, so the resulting subset is uniform.
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
    std::vector<std::uint64_t> chosen;
    chosen.reserve(max_pairs);
    while (chosen.size() < max_pairs) {
        const auto missing = max_pairs - chosen.size();
        for (std::uint64_t k = 0; k < missing; ++k) chosen.push_back(pick(rng));
        std::sort(chosen.begin(), chosen.end());
        chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
    }

    // Pair index k enumerates (i, j), i < j, row by row.
    out.reserve(max_pairs);
    std::uint64_t row = 0, row_start = 0;
    for (auto k : chosen) {
        while (k >= row_start + (n - 1 - row)) {
            row_start += n - 1 - row;
            ++row;
        }
        out.push_back(dist(row, row + 1 + (k - row_start)));
    }
    return out;
}

DistanceStats fit_distance_stats(std::span<const double> distances, double t, double alpha,
                                 double beta) {
    if (!(t > 0.0 && t < 2.0)) throw DomainError("threshold t must lie in (0, 2)");
    if (distances.size() < kMinFitSamples)
        throw SampleSizeError("distance statistics need at least " +
                              std::to_string(kMinFitSamples) + " distances, got " +
                              std::to_string(distances.size()) + "; raise max_pairs or add samples");

    // Sorted copy: all later sums run in a fixed order, so the fit does not
    // depend on the order of the input list.
    std::vector<double> d(distances.begin(), distances.end());
    for (double v : d) {
        if (!std::isfinite(v)) throw DomainError("non-finite distance in sample");
    }
    std::sort(d.begin(), d.end());
    const double lo = d.front(), hi = d.back();
    if (!(hi > lo)) throw DegenerateDistributionError("all distances are equal; cannot fit");

    const double width = (hi - lo) / kHistogramBins;
    std::vector<double> counts(kHistogramBins, 0.0);
    for (double v : d) {
        auto bin = static_cast<std::size_t>((v - lo) / width);
        counts[std::min(bin, kHistogramBins - 1)] += 1.0;
    }

    // Centered moving average; the window is truncated at the histogram edges.
    std::vector<double> smooth(kHistogramBins);
    constexpr std::size_t half = kSmoothingWindow / 2;
    for (std::size_t i = 0; i < kHistogramBins; ++i) {
        std::size_t a = i >= half ? i - half : 0;
        std::size_t b = std::min(i + half, kHistogramBins - 1);
        double acc = 0.0;
        for (std::size_t k = a; k <= b; ++k) acc += counts[k];
        smooth[i] = acc / static_cast<double>(b - a + 1);
    }

    std::vector<std::size_t> peaks;
    for (std::size_t i = 0; i < kHistogramBins; ++i) {
        bool rises = i == 0 || smooth[i] > smooth[i - 1];
        bool falls = i + 1 == kHistogramBins || smooth[i] >= smooth[i + 1];
        if (rises && falls && smooth[i] > 0.0) peaks.push_back(i);
    }
    std::stable_sort(peaks.begin(), peaks.end(),
                     [&](std::size_t a, std::size_t b) { return smooth[a] > smooth[b]; });

    double m_l = 0.0, sigma_l = 0.0, m_r = 0.0, sigma_r = 0.0;
    std::optional<std::size_t> second;
    if (!peaks.empty()) {
        for (std::size_t k = 1; k < peaks.size(); ++k) {
            std::size_t gap = peaks[k] > peaks[0] ? peaks[k] - peaks[0] : peaks[0] - peaks[k];
            if (gap >= kMinPeakSeparation) {
                second = peaks[k];
                break;
            }
        }
    }

    if (second) {
        auto center = [&](std::size_t bin) { return lo + (static_cast<double>(bin) + 0.5) * width; };
        m_l = center(std::min(peaks[0], *second));
        m_r = center(std::max(peaks[0], *second));
        double acc = 0.0;
        std::size_t count = 0;
        for (double v : d) {
            if (v > m_l) break;
            acc += (m_l - v) * (m_l - v);
            ++count;
        }
        sigma_l = count ? std::sqrt(acc / static_cast<double>(count)) : 0.0;
        acc = 0.0;
        count = 0;
        for (auto it = d.rbegin(); it != d.rend() && *it >= m_r; ++it) {
            acc += (*it - m_r) * (*it - m_r);
            ++count;
        }
        sigma_r = count ? std::sqrt(acc / static_cast<double>(count)) : 0.0;
    } else {
        const double mu = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
        auto split = std::upper_bound(d.begin(), d.end(), mu);
        auto moments = [](auto first, auto last) {
            const auto count = static_cast<double>(std::distance(first, last));
            double mean = std::accumulate(first, last, 0.0) / count;
            double var = 0.0;
            for (auto it = first; it != last; ++it) var += (*it - mean) * (*it - mean);
            return std::pair{mean, std::sqrt(var / count)};
        };
        std::tie(m_l, sigma_l) = moments(d.begin(), split);
        std::tie(m_r, sigma_r) = moments(split, d.end());
    }

    return make_distance_stats(m_l, sigma_l, m_r, sigma_r, t, alpha, beta, d.size());
}

double smooth_weight(double d, const DistanceStats& stats) {
    if (d <= stats.d_l || d >= stats.d_r) return 1.0;
    if (d <= stats.t) {
        const double num = stats.t - d;
        const double den = stats.t - stats.d_l;
        return (num * num) / (den * den);
    }
    const double num = d - stats.t;
    const double den = stats.d_r - stats.t;
    return (num * num) / (den * den);
}

SquareMatrix<double> distance_matrix(const FeatureSet& features, std::size_t cap) {
    check_capacity(features.n(), cap);
    CosineDistances dist(features);
    SquareMatrix<double> out(features.n(), 0.0);
    for (std::size_t i = 0; i < out.n; ++i) {
        for (std::size_t j = i + 1; j < out.n; ++j) {
            const double v = dist(i, j);
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

PseudoGraph build_pseudo_graph(const FeatureSet& features, const DistanceStats& stats,
                               std::size_t cap) {
    auto dist = distance_matrix(features, cap);
    PseudoGraph s(dist.n);
    for (std::size_t k = 0; k < dist.entries.size(); ++k)
        s.entries[k] = static_cast<std::int8_t>(pseudo_label(dist.entries[k], stats));
    return s;
}

SmoothWeights build_smooth_weights(const FeatureSet& features, const DistanceStats& stats,
                                   std::size_t cap) {
    auto dist = distance_matrix(features, cap);
    SmoothWeights w(dist.n);
    for (std::size_t k = 0; k < dist.entries.size(); ++k)
        w.entries[k] = smooth_weight(dist.entries[k], stats);
    return w;
}

}  // namespace dsg
