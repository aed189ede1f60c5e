#include "dsg/retrieval_eval.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <string>

#include "dsg/errors.hpp"

namespace dsg {

void EvalConfig::validate() const {
    if (r_cutoff < 1) throw ValidationError("r_cutoff must be >= 1");
    if (topn_max < 1) throw ValidationError("topn_max must be >= 1");
    if (topn_step < 1) throw ValidationError("topn_step must be >= 1");
}

bool ground_truth_relevant(std::span<const int> q_labels, std::span<const int> r_labels,
                           bool multi_label) {
    if (q_labels.empty() || r_labels.empty()) throw DomainError("empty label set");
    if (!multi_label && (q_labels.size() != 1 || r_labels.size() != 1))
        throw DomainError("single-label mode needs exactly one label per sample");
    auto a = q_labels.begin();
    auto b = r_labels.begin();
    while (a != q_labels.end() && b != r_labels.end()) {
        if (*a == *b) return true;
        if (*a < *b) ++a; else ++b;
    }
    return false;
}

std::size_t hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                             std::size_t code_len) {
    const std::size_t bytes = (code_len + 7) / 8;
    if (a.size() != bytes || b.size() != bytes)
        throw DomainError("hamming distance of codes with mismatched length");
    std::size_t sum = 0;
    std::size_t i = 0;
    for (; i + 8 <= bytes; i += 8) {
        std::uint64_t wa, wb;
        std::memcpy(&wa, a.data() + i, 8);
        std::memcpy(&wb, b.data() + i, 8);
        sum += static_cast<std::size_t>(std::popcount(wa ^ wb));
    }
    for (; i < bytes; ++i) {
        unsigned x = a[i] ^ b[i];
        if (i + 1 == bytes && code_len % 8 != 0) x &= (0xFF00u >> (code_len % 8)) & 0xFFu;
        sum += static_cast<std::size_t>(std::popcount(x));
    }
    return sum;
}

std::vector<std::size_t> rank_by_hamming(std::span<const std::uint8_t> query, const CodeSet& database,
                                         std::span<const std::size_t> tie_keys) {
    const std::size_t n = database.n();
    if (tie_keys.size() != n) throw DomainError("tie key count does not match database size");
    std::vector<std::size_t> dist(n);
    for (std::size_t i = 0; i < n; ++i)
        dist[i] = hamming_distance(query, database.code(i), database.code_len());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return dist[x] != dist[y] ? dist[x] < dist[y] : tie_keys[x] < tie_keys[y];
    });
    return order;
}

std::vector<std::size_t> rank_by_hamming(std::span<const std::uint8_t> query, const CodeSet& database) {
    std::vector<std::size_t> keys(database.n());
    std::iota(keys.begin(), keys.end(), std::size_t{0});
    return rank_by_hamming(query, database, keys);
}

double average_precision(const std::vector<bool>& relevance, std::size_t r_cutoff) {
    const std::size_t top = std::min(r_cutoff, relevance.size());
    std::size_t hits = 0;
    double acc = 0.0;
    for (std::size_t k = 0; k < top; ++k) {
        if (!relevance[k]) continue;
        ++hits;
        acc += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    return hits == 0 ? 0.0 : acc / static_cast<double>(hits);
}

EvalReport evaluate(const CodeSet& query_codes, const CodeSet& db_codes,
                    const LabelSet& query_labels, const LabelSet& db_labels,
                    const EvalConfig& config) {
    config.validate();
    if (query_codes.code_len() != db_codes.code_len())
        throw ValidationError("query and database code lengths differ");
    const std::size_t len = db_codes.code_len();
    const std::size_t n_db = db_codes.n();
    if (n_db == 0) throw ValidationError("empty database");

    std::vector<const std::vector<int>*> db_lab(n_db);
    for (std::size_t i = 0; i < n_db; ++i) db_lab[i] = &db_labels.of(db_codes.ids()[i]);

    // Database rows visited in id order, so equal distances rank by id.
    std::vector<std::size_t> by_id(n_db);
    std::iota(by_id.begin(), by_id.end(), std::size_t{0});
    std::sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) {
        return db_codes.ids()[a] < db_codes.ids()[b];
    });

    std::vector<std::size_t> grid;
    for (std::size_t n = config.topn_step; n <= config.topn_max; n += config.topn_step) grid.push_back(n);
    if (grid.empty() || grid.back() != config.topn_max) grid.push_back(config.topn_max);

    EvalReport report;
    std::vector<double> topn_sum(grid.size(), 0.0);
    std::vector<double> rel_at(len + 1, 0.0), all_at(len + 1, 0.0);
    double total_relevant = 0.0;
    double ap_sum = 0.0;

    std::vector<std::size_t> dist(n_db);
    std::vector<bool> relevant(n_db);
    std::vector<std::vector<std::size_t>> buckets(len + 1);
    std::vector<bool> ranked_rel;
    ranked_rel.reserve(n_db);

    for (std::size_t q = 0; q < query_codes.n(); ++q) {
        const auto& q_lab = query_labels.of(query_codes.ids()[q]);
        const auto q_code = query_codes.code(q);
        std::size_t q_relevant = 0;
        for (std::size_t i = 0; i < n_db; ++i) {
            dist[i] = hamming_distance(q_code, db_codes.code(i), len);
            relevant[i] = ground_truth_relevant(q_lab, *db_lab[i], config.multi_label);
            q_relevant += relevant[i];
        }
        if (q_relevant == 0) {
            ++report.num_excluded;
            continue;
        }
        ++report.num_queries;

        for (auto& b : buckets) b.clear();
        for (auto i : by_id) buckets[dist[i]].push_back(i);
        ranked_rel.clear();
        for (std::size_t rho = 0; rho <= len; ++rho) {
            for (auto i : buckets[rho]) {
                ranked_rel.push_back(relevant[i]);
                all_at[rho] += 1.0;
                rel_at[rho] += relevant[i] ? 1.0 : 0.0;
            }
        }
        total_relevant += static_cast<double>(q_relevant);
        ap_sum += average_precision(ranked_rel, config.r_cutoff);

        std::size_t hits = 0, pos = 0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const std::size_t upto = std::min(grid[g], n_db);
            for (; pos < upto; ++pos) hits += ranked_rel[pos];
            topn_sum[g] += static_cast<double>(hits) / static_cast<double>(upto);
        }
    }

    const double counted = static_cast<double>(report.num_queries);
    report.map = report.num_queries ? ap_sum / counted : 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g)
        report.topn_curve.emplace_back(grid[g], report.num_queries ? topn_sum[g] / counted : 0.0);

    double cum_rel = 0.0, cum_all = 0.0;
    for (std::size_t rho = 0; rho <= len; ++rho) {
        cum_rel += rel_at[rho];
        cum_all += all_at[rho];
        PrPoint p;
        p.radius = rho;
        p.recall = total_relevant > 0.0 ? cum_rel / total_relevant : 0.0;
        p.precision = cum_all > 0.0 ? cum_rel / cum_all : 0.0;
        report.pr_curve.push_back(p);
    }
    return report;
}

}  // namespace dsg
