// dsg: command-line driver for the hashing pipeline.
//
//   dsg synth    -> features.dsgf + labels.csv
//   dsg stats    -> stats.json
//   dsg cluster  -> clusters.csv + centroids.dsgf
//   dsg train    -> model.dsgm
//   dsg encode   -> codes.dsgc
//   dsg eval     -> report.json, topn.csv, pr.csv
//   dsg pipeline -> all of the above from one JSON config
//
// Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numerical divergence.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dsg/errors.hpp"
#include "dsg/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2, kDivergence = 3 };

template <typename T>
void override_if(const std::optional<T>& value, T& target) {
    if (value) target = *value;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distilled smooth guidance hashing: learn binary codes from feature vectors"};
    app.require_subcommand(1);

    // synth
    dsg::SynthSpec synth;
    std::string synth_features = "features.dsgf", synth_labels = "labels.csv";
    auto* cmd_synth = app.add_subcommand("synth", "Generate a seeded synthetic clustered dataset");
    cmd_synth->add_option("--clusters", synth.num_clusters, "Number of clusters")->capture_default_str();
    cmd_synth->add_option("--points", synth.points_per_cluster, "Points per cluster")->capture_default_str();
    cmd_synth->add_option("--dim", synth.dim, "Feature dimensionality")->capture_default_str();
    cmd_synth->add_option("--noise", synth.noise_scale, "Noise norm relative to center norm")->capture_default_str();
    cmd_synth->add_option("--center-scale", synth.center_scale, "Radius of the center sphere")->capture_default_str();
    cmd_synth->add_option("--seed", synth.seed, "RNG seed")->capture_default_str();
    cmd_synth->add_option("--out-features", synth_features, "Output DSGF file")->capture_default_str();
    cmd_synth->add_option("--out-labels", synth_labels, "Output label CSV")->capture_default_str();

    // stats
    std::string stats_features, stats_out = "stats.json";
    dsg::StatsOptions stats_opts;
    bool stats_no_norm = false;
    auto* cmd_stats = app.add_subcommand("stats", "Fit cosine-distance statistics and thresholds");
    cmd_stats->add_option("--features", stats_features, "Input DSGF file")->required();
    cmd_stats->add_option("--t", stats_opts.t, "Pseudo-label threshold")->capture_default_str();
    cmd_stats->add_option("--alpha", stats_opts.alpha, "Left threshold multiplier")->capture_default_str();
    cmd_stats->add_option("--beta", stats_opts.beta, "Right threshold multiplier")->capture_default_str();
    cmd_stats->add_option("--max-pairs", stats_opts.max_pairs, "Distance sample cap")->capture_default_str();
    cmd_stats->add_option("--seed", stats_opts.seed, "Sampling seed")->capture_default_str();
    cmd_stats->add_flag("--no-normalize", stats_no_norm, "Skip L2 row normalization on load");
    cmd_stats->add_option("--out", stats_out, "Output JSON")->capture_default_str();

    // cluster
    std::string cluster_features, cluster_labels = "clusters.csv", cluster_centroids = "centroids.dsgf";
    dsg::ClusterOptions cluster_opts;
    bool cluster_no_norm = false;
    auto* cmd_cluster = app.add_subcommand("cluster", "K-means clustering of the features");
    cmd_cluster->add_option("--features", cluster_features, "Input DSGF file")->required();
    cmd_cluster->add_option("--k", cluster_opts.k, "Number of clusters")->capture_default_str();
    cmd_cluster->add_option("--seed", cluster_opts.seed, "k-means++ seed")->capture_default_str();
    cmd_cluster->add_option("--max-iters", cluster_opts.max_iters, "Lloyd iteration cap")->capture_default_str();
    cmd_cluster->add_flag("--no-normalize", cluster_no_norm, "Skip L2 row normalization on load");
    cmd_cluster->add_option("--out-labels", cluster_labels, "Output id,cluster CSV")->capture_default_str();
    cmd_cluster->add_option("--out-centroids", cluster_centroids, "Output centroid DSGF")->capture_default_str();

    // train
    std::string train_features, train_stats, train_clusters, train_out = "model.dsgm";
    std::string train_ablation = "full";
    dsg::TrainOptions train_opts;
    bool train_no_norm = false, train_no_diag = false;
    auto* cmd_train = app.add_subcommand("train", "Train the hash head");
    cmd_train->add_option("--features", train_features, "Training DSGF file")->required();
    cmd_train->add_option("--stats", train_stats, "Stats JSON from 'dsg stats'")->required();
    cmd_train->add_option("--clusters", train_clusters, "Cluster CSV from 'dsg cluster'")->required();
    cmd_train->add_option("--bits", train_opts.bits, "Code length L")->capture_default_str();
    cmd_train->add_option("--hidden", train_opts.hidden_dims, "Hidden layer widths");
    cmd_train->add_option("--epochs", train_opts.epochs, "Epochs")->capture_default_str();
    cmd_train->add_option("--batch-size", train_opts.batch_size, "Mini-batch size")->capture_default_str();
    cmd_train->add_option("--lr", train_opts.learning_rate, "Learning rate")->capture_default_str();
    cmd_train->add_option("--momentum", train_opts.momentum, "Momentum")->capture_default_str();
    cmd_train->add_option("--ablation", train_ablation, "full | v1 | v2")->capture_default_str();
    cmd_train->add_flag("--exclude-diagonal", train_no_diag, "Drop i == j terms from the loss");
    cmd_train->add_option("--seed", train_opts.seed, "Init/shuffle seed")->capture_default_str();
    cmd_train->add_flag("--no-normalize", train_no_norm, "Skip L2 row normalization on load");
    cmd_train->add_option("--out", train_out, "Output DSGM checkpoint")->capture_default_str();

    // encode
    std::string enc_model, enc_features, enc_out = "codes.dsgc";
    bool enc_no_norm = false;
    auto* cmd_encode = app.add_subcommand("encode", "Encode features into packed binary codes");
    cmd_encode->add_option("--model", enc_model, "DSGM checkpoint")->required();
    cmd_encode->add_option("--features", enc_features, "Input DSGF file")->required();
    cmd_encode->add_option("--out", enc_out, "Output DSGC file")->capture_default_str();
    cmd_encode->add_flag("--no-normalize", enc_no_norm, "Skip L2 row normalization on load");

    // eval
    std::string ev_q, ev_db, ev_ql, ev_dbl, ev_out = "report.json", ev_curves;
    dsg::EvalConfig ev_cfg;
    bool ev_single = false;
    auto* cmd_eval = app.add_subcommand("eval", "Hamming-ranking retrieval evaluation");
    cmd_eval->add_option("--query-codes", ev_q, "Query DSGC file")->required();
    cmd_eval->add_option("--db-codes", ev_db, "Database DSGC file")->required();
    cmd_eval->add_option("--query-labels", ev_ql, "Query label CSV")->required();
    cmd_eval->add_option("--db-labels", ev_dbl, "Database label CSV")->required();
    cmd_eval->add_option("--r", ev_cfg.r_cutoff, "R for MAP@R")->capture_default_str();
    cmd_eval->add_option("--topn-max", ev_cfg.topn_max, "Largest N of the Top-N curve")->capture_default_str();
    cmd_eval->add_option("--topn-step", ev_cfg.topn_step, "Top-N grid step")->capture_default_str();
    cmd_eval->add_flag("--single-label", ev_single, "Require exactly one label per sample");
    cmd_eval->add_option("--out", ev_out, "Output report JSON")->capture_default_str();
    cmd_eval->add_option("--curves-dir", ev_curves, "Directory for topn.csv / pr.csv (default: next to --out)");

    // pipeline
    std::string pipe_config;
    std::optional<std::string> p_features, p_labels, p_split, p_out, p_ablation;
    std::optional<double> p_t, p_alpha, p_beta, p_lr, p_momentum;
    std::optional<std::size_t> p_k, p_bits, p_epochs, p_batch, p_r, p_topn;
    std::optional<std::uint64_t> p_seed;
    auto* cmd_pipe = app.add_subcommand("pipeline", "Run stats, cluster, train, encode and eval");
    cmd_pipe->add_option("--config", pipe_config, "Pipeline JSON config")->required();
    cmd_pipe->add_option("--features", p_features, "Override features path");
    cmd_pipe->add_option("--labels", p_labels, "Override labels path");
    cmd_pipe->add_option("--split", p_split, "Override split path");
    cmd_pipe->add_option("--output-dir", p_out, "Override output directory");
    cmd_pipe->add_option("--t", p_t, "Override t");
    cmd_pipe->add_option("--alpha", p_alpha, "Override alpha");
    cmd_pipe->add_option("--beta", p_beta, "Override beta");
    cmd_pipe->add_option("--k", p_k, "Override number of clusters");
    cmd_pipe->add_option("--bits", p_bits, "Override code length");
    cmd_pipe->add_option("--epochs", p_epochs, "Override epochs");
    cmd_pipe->add_option("--batch-size", p_batch, "Override batch size");
    cmd_pipe->add_option("--lr", p_lr, "Override learning rate");
    cmd_pipe->add_option("--momentum", p_momentum, "Override momentum");
    cmd_pipe->add_option("--ablation", p_ablation, "Override ablation");
    cmd_pipe->add_option("--seed", p_seed, "Override every stage seed");
    cmd_pipe->add_option("--r", p_r, "Override R for MAP@R");
    cmd_pipe->add_option("--topn-max", p_topn, "Override Top-N maximum");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidation;
    }

    try {
        if (*cmd_synth) {
            auto [features, labels] = dsg::generate_synthetic(synth);
            dsg::save_features(features, synth_features);
            dsg::save_labels(labels, synth_labels);
            std::cout << "wrote " << features.n() << " x " << features.dim() << " features to "
                      << synth_features << " and labels to " << synth_labels << '\n';
        } else if (*cmd_stats) {
            stats_opts.normalize = !stats_no_norm;
            auto stats = dsg::run_stats(stats_features, stats_opts, stats_out);
            std::cout << dsg::to_json(stats).dump(2) << '\n';
        } else if (*cmd_cluster) {
            cluster_opts.normalize = !cluster_no_norm;
            auto c = dsg::run_cluster(cluster_features, cluster_opts, cluster_labels, cluster_centroids);
            std::cout << "k=" << c.k << " iterations=" << c.iterations << " inertia=" << c.inertia << '\n';
        } else if (*cmd_train) {
            train_opts.ablation = dsg::parse_ablation(train_ablation);
            train_opts.include_diagonal = !train_no_diag;
            train_opts.normalize = !train_no_norm;
            auto report = dsg::run_train(train_features, train_stats, train_clusters, train_opts, train_out);
            for (std::size_t e = 0; e < report.epoch_losses.size(); ++e)
                std::cout << "epoch " << (e + 1) << " loss " << report.epoch_losses[e] << '\n';
            std::cout << "trained in " << report.wall_seconds << " s, model written to " << train_out << '\n';
        } else if (*cmd_encode) {
            auto codes = dsg::run_encode(enc_model, enc_features, enc_out, !enc_no_norm);
            std::cout << "encoded " << codes.n() << " x " << codes.code_len() << " bits to " << enc_out << '\n';
        } else if (*cmd_eval) {
            ev_cfg.multi_label = !ev_single;
            fs::path curves = ev_curves.empty() ? fs::path(ev_out).parent_path() : fs::path(ev_curves);
            if (curves.empty()) curves = ".";
            auto report = dsg::run_eval(ev_q, ev_db, ev_ql, ev_dbl, ev_cfg, ev_out, curves);
            std::cout << "MAP@" << ev_cfg.r_cutoff << " = " << report.map << " over " << report.num_queries
                      << " queries (" << report.num_excluded << " excluded)\n";
        } else if (*cmd_pipe) {
            auto config = dsg::load_pipeline_config(pipe_config);
            if (p_features) config.features = *p_features;
            if (p_labels) config.labels = *p_labels;
            if (p_split) config.split = fs::path(*p_split);
            if (p_out) config.output_dir = *p_out;
            override_if(p_t, config.t);
            override_if(p_alpha, config.alpha);
            override_if(p_beta, config.beta);
            override_if(p_k, config.k);
            override_if(p_bits, config.bits);
            override_if(p_epochs, config.epochs);
            override_if(p_batch, config.batch_size);
            override_if(p_lr, config.learning_rate);
            override_if(p_momentum, config.momentum);
            override_if(p_r, config.r_cutoff);
            override_if(p_topn, config.topn_max);
            if (p_ablation) config.ablation = dsg::parse_ablation(*p_ablation);
            if (p_seed) config.seeds = {*p_seed, *p_seed, *p_seed, *p_seed};
            auto report = dsg::run_pipeline(config);
            std::cout << "MAP@" << config.r_cutoff << " = " << report.map << " over " << report.num_queries
                      << " queries; artifacts in " << config.output_dir.string() << '\n';
        }
    } catch (const dsg::DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDivergence;
    } catch (const dsg::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const dsg::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    }
    return kOk;
}
