#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dsg/dataset_io.hpp"

namespace dsg {

struct EvalConfig {
    std::size_t r_cutoff = 5000;   // R in MAP@R
    std::size_t topn_max = 1000;
    std::size_t topn_step = 100;   // Top-N grid: step, 2*step, ..., topn_max
    bool multi_label = true;

    void validate() const;
};

struct PrPoint {
    std::size_t radius = 0;
    double recall = 0.0;
    double precision = 0.0;
};

struct EvalReport {
    double map = 0.0;
    std::vector<std::pair<std::size_t, double>> topn_curve;  // (N, precision)
    std::vector<PrPoint> pr_curve;                            // radius 0..L
    std::size_t num_queries = 0;   // queries that entered the averages
    std::size_t num_excluded = 0;  // queries without any relevant database item
};

// True when the two label sets intersect. Label vectors must be sorted.
// Single-label data is the same predicate on singleton sets.
bool ground_truth_relevant(std::span<const int> q_labels, std::span<const int> r_labels,
                           bool multi_label = true);

// Differing bits among the first code_len bits; padding bits are ignored.
std::size_t hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                             std::size_t code_len);

// Database indices by ascending Hamming distance. Ties go to the smaller
// tie_key (defaults to the row index).
std::vector<std::size_t> rank_by_hamming(std::span<const std::uint8_t> query, const CodeSet& database);
std::vector<std::size_t> rank_by_hamming(std::span<const std::uint8_t> query, const CodeSet& database,
                                         std::span<const std::size_t> tie_keys);

// AP over the top min(r_cutoff, size) positions, normalized by the number of
// relevant items inside that window; 0 when none appear.
double average_precision(const std::vector<bool>& relevance, std::size_t r_cutoff);

// Hamming-ranking evaluation joined on ids. Database ties are broken by the
// lexicographic rank of the database id, so row order does not matter.
EvalReport evaluate(const CodeSet& query_codes, const CodeSet& db_codes,
                    const LabelSet& query_labels, const LabelSet& db_labels,
                    const EvalConfig& config);

}  // namespace dsg
