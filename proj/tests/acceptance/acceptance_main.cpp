// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsg/pipeline.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dsg;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;
using SignMatrix = Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DSG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RowMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    RowMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
}

std::pair<RowMatrix, RowMatrix> random_targets(Eigen::Index m, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RowMatrix s(m, m), w(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i; j < m; ++j) {
            s(i, j) = s(j, i) = (i == j || u(rng) < 0.5) ? 1.0 : -1.0;
            w(i, j) = w(j, i) = i == j ? 1.0 : u(rng);
        }
    return {s, w};
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        HashModelConfig cfg;
        cfg.in_dim = 2 + rng() % 15;
        cfg.code_len = 1 + rng() % 8;
        if (inst % 2 == 1) cfg.hidden_dims = {2 + rng() % 6};
        cfg.include_diagonal = inst % 5 != 4;
        cfg.seed = rng();
        const auto m = static_cast<Eigen::Index>(2 + rng() % 5);
        auto model = init_model(cfg);
        auto x = random_matrix(m, static_cast<Eigen::Index>(cfg.in_dim), rng);
        auto [s, w] = random_targets(m, rng);
        std::vector<double> analytic;
        for (const auto& layer : batch_gradient(model, x, s, w).gradients) {
            analytic.insert(analytic.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
            analytic.insert(analytic.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
        }
        auto numeric = oracle::finite_difference_gradient(model, x, s, w, 1e-5);
        for (std::size_t i = 0; i < analytic.size(); ++i)
            worst = std::max(worst, std::abs(analytic[i] - numeric[i]) /
                                        std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6}));
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-5 && secs < 10.0,
            "20 instances, max relative error " + fmt(worst, 3) + " (< 1e-5), " + fmt(secs, 3) + " s (< 10 s)"};
}

Outcome oracle_equivalence() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto f = dsg::testing::random_features(50, 8, seed);
        std::mt19937_64 rng(seed);
        auto clusters = kmeans(f, 6, seed);
        auto stats = make_distance_stats(0.5, 0.1, 1.1, 0.1, 0.8, 1.0, 1.0);
        auto s = build_pseudo_graph(f, stats);
        auto w1 = build_smooth_weights(f, stats);
        for (std::size_t i = 0; i < f.n(); ++i)
            for (std::size_t j = 0; j < f.n(); ++j) {
                const double d = i == j ? 0.0 : oracle::cosine(oracle::row(f, i), oracle::row(f, j));
                const int sp = oracle::pseudo(d, stats.t);
                const int c = clusters.labels[i] == clusters.labels[j] ? 1 : -1;
                const double ws = oracle::smooth(d, stats.d_l, stats.t, stats.d_r);
                worst = std::max(worst, std::abs(static_cast<double>(s(i, j) - sp)));
                worst = std::max(worst, std::abs(w1(i, j) - ws));
                worst = std::max(worst, std::abs(distilled_weight(i, j, f, stats, clusters, Ablation::full) -
                                                 ws * (sp == c ? 1.0 : 0.0)));
            }
        RowMatrix v = random_matrix(50, 16, rng).array().tanh().matrix();
        auto [ts, tw] = random_targets(50, rng);
        worst = std::max(worst, std::abs(batch_loss(v, ts, tw) -
                                         oracle::loss(oracle::to_nested(v), oracle::to_nested(ts), oracle::to_nested(tw))));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 5.0,
            "5 x 50-point instances, max deviation " + fmt(worst, 3) + " (<= 1e-12), " + fmt(secs, 3) + " s (< 5 s)"};
}

Outcome smooth_weight_values() {
    auto s = make_distance_stats(0.05, 0.0, 0.3, 0.0, 0.1, 0.0, 0.0);
    bool ok = smooth_weight(s.d_l, s) == 1.0 && smooth_weight(s.t, s) == 0.0 && smooth_weight(s.d_r, s) == 1.0;
    // 0.075, 0.05 and 0.1 are not representable in binary floating point; the
    // tolerance is four units in the last place of 0.25.
    const double quarter = smooth_weight(0.075, s);
    const double ulp_tol = 4.0 * std::numeric_limits<double>::epsilon() * 0.25;
    ok = ok && std::abs(quarter - 0.25) <= ulp_tol;

    double prev = smooth_weight(0.0, s), max_jump = 0.0;
    for (int i = 1; i < 10000; ++i) {
        const double w = smooth_weight(i * 1e-4, s);
        max_jump = std::max(max_jump, std::abs(w - prev));
        prev = w;
    }
    const bool continuous = max_jump < 1e-3;
    std::ostringstream detail;
    detail << "w(d_l)=" << smooth_weight(s.d_l, s) << " w(t)=" << smooth_weight(s.t, s)
           << " w(d_r)=" << smooth_weight(s.d_r, s) << " w(0.075)=" << std::setprecision(17) << quarter
           << std::setprecision(6) << "; grid step 1e-4 on [0,1) max jump " << max_jump
           << " (< 1e-3; slope bound 2/(t-d_l) = " << 2.0 / (s.t - s.d_l) << ")";
    return {ok && continuous, detail.str()};
}

Outcome distillation_mask() {
    bool ok = distill_mask(1, 1) == 1 && distill_mask(1, -1) == 0 && distill_mask(-1, 1) == 0 &&
              distill_mask(-1, -1) == 1;
    std::size_t checked = 0, contradictions = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto f = dsg::testing::random_features(60, 5, seed);
        auto clusters = kmeans(f, 5, seed);
        auto stats = make_distance_stats(0.5, 0.1, 1.1, 0.1, 0.8, 1.0, 1.0);
        auto s = build_pseudo_graph(f, stats);
        auto c = build_relationship_matrix(clusters);
        for (auto ablation : {Ablation::full, Ablation::v1}) {
            auto w = build_distilled_weights(f, stats, clusters, ablation);
            for (std::size_t i = 0; i < f.n(); ++i)
                for (std::size_t j = 0; j < f.n(); ++j) {
                    ++checked;
                    if (s(i, j) != c(i, j)) {
                        ++contradictions;
                        ok = ok && w(i, j) == 0.0;
                    }
                }
        }
    }
    return {ok, "4 sign combinations exact; W = 0 on all " + std::to_string(contradictions) + " of " +
                    std::to_string(checked) + " contradictory pairs"};
}

Outcome map_oracle() {
    std::mt19937_64 rng(77);
    auto codes = [&](std::size_t n, const std::string& prefix) {
        SignMatrix s(static_cast<Eigen::Index>(n), 12);
        for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = (rng() & 1) ? 1 : -1;
        return CodeSet::from_signs(dsg::testing::make_ids(n, prefix), s);
    };
    auto labels = [&](const std::vector<std::string>& ids) {
        LabelSet l;
        l.ids = ids;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            int a = static_cast<int>(rng() % 6), b = static_cast<int>(rng() % 6);
            l.labels.push_back(a == b ? std::vector<int>{a} : std::vector<int>{std::min(a, b), std::max(a, b)});
        }
        l.num_classes = 6;
        l.finalize();
        return l;
    };
    auto q = codes(30, "q");
    auto db = codes(200, "d");
    auto ql = labels(q.ids());
    auto dl = labels(db.ids());
    EvalConfig cfg;
    cfg.r_cutoff = 60;
    const double got = evaluate(q, db, ql, dl, cfg).map;
    const double want = oracle::map_at_r(q, db, ql, dl, 60);
    const double hand = average_precision({true, false, true}, 3);
    const bool ok = std::abs(got - want) <= 1e-12 && std::abs(hand - 5.0 / 6.0) <= 1e-15;
    return {ok, "30 x 200 MAP " + fmt(got, 12) + " vs oracle " + fmt(want, 12) + "; [t,f,t]@3 = " + fmt(hand, 12)};
}

// Random codes and sign-of-random-projection codes for the query/db split of
// a finished pipeline run, scored by the same evaluator.
std::pair<double, double> baselines(const fs::path& run_dir, const fs::path& labels_path, std::size_t bits,
                                    std::size_t r_cutoff, std::uint64_t seed) {
    auto q = load_features(run_dir / artifacts::kQueryFeatures);
    auto db = load_features(run_dir / artifacts::kDbFeatures);
    auto labels = load_labels(labels_path);
    EvalConfig cfg;
    cfg.r_cutoff = r_cutoff;

    std::mt19937_64 rng(seed);
    auto random_codes = [&](const FeatureSet& f) {
        SignMatrix s(static_cast<Eigen::Index>(f.n()), static_cast<Eigen::Index>(bits));
        for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = (rng() & 1) ? 1 : -1;
        return CodeSet::from_signs(f.ids(), s);
    };
    const double random_map = evaluate(random_codes(q), random_codes(db), labels, labels, cfg).map;

    RowMatrix proj = random_matrix(static_cast<Eigen::Index>(q.dim()), static_cast<Eigen::Index>(bits), rng);
    auto project = [&](const FeatureSet& f) {
        RowMatrix z = f.data() * proj;
        SignMatrix s(z.rows(), z.cols());
        for (Eigen::Index i = 0; i < z.size(); ++i) s.data()[i] = z.data()[i] >= 0.0 ? 1 : -1;
        return CodeSet::from_signs(f.ids(), s);
    };
    const double srp_map = evaluate(project(q), project(db), labels, labels, cfg).map;
    return {random_map, srp_map};
}

void write_config(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    out << j.dump(2);
}

nlohmann::json desk_config(const fs::path& dir, const std::string& ablation) {
    return {{"features", (dir / "features.dsgf").string()},
            {"labels", (dir / "labels.csv").string()},
            {"output_dir", (dir / ("run_" + ablation)).string()},
            {"t", 0.1},
            {"alpha", 2.0},
            {"beta", 2.0},
            {"k", 10},
            {"bits", 16},
            {"epochs", 100},
            {"batch_size", 24},
            {"lr", 0.001},
            {"momentum", 0.9},
            {"ablation", ablation},
            {"r_cutoff", 1000}};
}

double read_map(const fs::path& report) {
    nlohmann::json j;
    std::ifstream(report) >> j;
    return j.at("map").get<double>();
}

Outcome desk_scale(const fs::path& root) {
    const auto t0 = Clock::now();
    const fs::path dir = root / "desk";
    fs::create_directories(dir);
    if (run_cli("synth --clusters 10 --points 100 --dim 128 --noise 0.05 --out-features " +
                (dir / "features.dsgf").string() + " --out-labels " + (dir / "labels.csv").string()) != 0)
        return {false, "dsg synth failed"};
    write_config(dir / "config.json", desk_config(dir, "full"));
    if (run_cli("pipeline --config " + (dir / "config.json").string()) != 0) return {false, "dsg pipeline failed"};
    const double secs = seconds_since(t0);
    const double map = read_map(dir / "run_full" / artifacts::kReport);
    auto [random_map, srp_map] = baselines(dir / "run_full", dir / "labels.csv", 16, 1000, 12345);
    const bool ok = map >= 0.80 && map - random_map >= 0.15 && map - srp_map >= 0.15 && secs < 120.0;
    return {ok, "MAP@1000 " + fmt(map) + " (>= 0.80); random-code " + fmt(random_map) + ", sign-random-projection " +
                    fmt(srp_map) + " (need margin >= 0.15 over both); " + fmt(secs, 3) + " s (< 120 s)"};
}

Outcome ablation_ordering(const fs::path& root) {
    double sum[3] = {0, 0, 0};
    const char* names[3] = {"full", "v1", "v2"};
    std::ostringstream per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const fs::path dir = root / ("ablation_" + std::to_string(seed));
        fs::create_directories(dir);
        SynthSpec spec;
        spec.noise_scale = 0.15;
        spec.seed = seed;
        auto [f, l] = generate_synthetic(spec);
        save_features(f, dir / "features.dsgf");
        save_labels(l, dir / "labels.csv");
        per_seed << " seed " << seed << ":";
        for (int a = 0; a < 3; ++a) {
            auto cfg = pipeline_config_from_json(desk_config(dir, names[a]));
            cfg.seeds = {seed, seed, seed, seed};
            const double map = run_pipeline(cfg).map;
            sum[a] += map;
            per_seed << ' ' << names[a] << '=' << fmt(map, 5);
        }
        per_seed << ';';
    }
    const double full = sum[0] / 5, v1 = sum[1] / 5, v2 = sum[2] / 5;
    return {full >= v1 && v1 >= v2, "noise 0.15, 5 seeds, mean MAP full " + fmt(full) + " v1 " + fmt(v1) + " v2 " +
                                        fmt(v2) + " (need full >= v1 >= v2);" + per_seed.str()};
}

Outcome determinism(const fs::path& root) {
    const fs::path dir = root / "determinism";
    fs::create_directories(dir);
    SynthSpec spec;
    spec.seed = 9;
    auto [f, l] = generate_synthetic(spec);
    save_features(f, dir / "features.dsgf");
    save_labels(l, dir / "labels.csv");
    auto cfg = pipeline_config_from_json(desk_config(dir, "full"));
    cfg.epochs = 30;
    cfg.seeds = {5, 6, 7, 8};
    const std::vector<const char*> files{artifacts::kModel, artifacts::kQueryCodes, artifacts::kDbCodes,
                                         artifacts::kReport, artifacts::kStats, artifacts::kClusters,
                                         artifacts::kTrainReport};
    run_pipeline(cfg);
    std::vector<std::string> first;
    for (const char* name : files) first.push_back(dsg::testing::read_bytes(cfg.output_dir / name));
    fs::rename(cfg.output_dir, dir / "first_run");
    run_pipeline(cfg);
    std::size_t identical = 0;
    for (std::size_t i = 0; i < files.size(); ++i)
        identical += dsg::testing::read_bytes(cfg.output_dir / files[i]) == first[i];
    return {identical == files.size(), std::to_string(identical) + " of " + std::to_string(files.size()) +
                                           " artifacts byte-identical across two runs"};
}

}  // namespace

int main() {
    dsg::testing::TempDir scratch("acceptance");
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"gradient-check", gradient_check},
        {"loss-weight-oracle-equivalence", oracle_equivalence},
        {"smooth-weight-analytic-values", smooth_weight_values},
        {"distillation-mask", distillation_mask},
        {"map-oracle", map_oracle},
        {"desk-scale-end-to-end", [&] { return desk_scale(scratch.path()); }},
        {"ablation-ordering", [&] { return ablation_ordering(scratch.path()); }},
        {"determinism", [&] { return determinism(scratch.path()); }},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
              << " acceptance criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
