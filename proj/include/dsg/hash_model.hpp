#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "dsg/dataset_io.hpp"
#include "dsg/distillation.hpp"
#include "dsg/similarity_graph.hpp"

namespace dsg {

struct HashModelConfig {
    std::size_t in_dim = 0;
    std::size_t code_len = 64;
    std::vector<std::size_t> hidden_dims;  // empty: a single affine layer
    std::size_t batch_size = 24;
    double learning_rate = 0.001;
    double momentum = 0.9;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    Ablation ablation = Ablation::full;
    bool include_diagonal = true;

    // Throws ValidationError on out-of-range fields. A learning rate of exactly
    // zero is accepted (the optimizer then leaves parameters untouched).
    void validate() const;

    friend bool operator==(const HashModelConfig&, const HashModelConfig&) = default;
};

// One affine transform followed by tanh: out = tanh(in * weight + bias).
struct DenseLayer {
    RowMatrix weight;         // fan_in x fan_out
    Eigen::RowVectorXd bias;  // fan_out

    friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
        return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
               a.weight == b.weight && a.bias.size() == b.bias.size() && a.bias == b.bias;
    }
};

struct HashModel {
    HashModelConfig config;
    std::vector<DenseLayer> layers;

    std::size_t parameter_count() const;

    friend bool operator==(const HashModel&, const HashModel&) = default;
};

// Same shapes as the model's layers.
using Gradients = std::vector<DenseLayer>;

// Relaxed codes: m x L, entries in (-1, 1).
using RelaxedCodes = RowMatrix;

// Weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases, seeded.
HashModel init_model(const HashModelConfig& config);

// v = tanh(F(x)); tanh is applied after every layer.
RelaxedCodes forward(const HashModel& model, const RowMatrix& batch);

// F(x): the final layer's pre-activation output.
RowMatrix raw_output(const HashModel& model, const RowMatrix& batch);

// (1/L) * v_i . v_j
double code_similarity(std::span<const double> v_i, std::span<const double> v_j);

// (1/m^2) * sum_ij w_ij (H_ij - s_ij)^2 with H = v v^T / L.
double batch_loss(const RelaxedCodes& v, const RowMatrix& s, const RowMatrix& w,
                  bool include_diagonal = true);

struct LossAndGradients {
    double loss = 0.0;
    Gradients gradients;
};

// Exact gradient of batch_loss with respect to every weight and bias.
LossAndGradients batch_gradient(const HashModel& model, const RowMatrix& batch,
                                const RowMatrix& s, const RowMatrix& w);

// Pseudo-labels and distilled weights for the rows `indices` of a feature set.
struct BatchTargets {
    RowMatrix s;
    RowMatrix w;
};
BatchTargets batch_targets(const CosineDistances& distances, std::span<const std::size_t> indices,
                           const DistanceStats& stats, const ClusterAssignment& clusters,
                           Ablation ablation);

struct TrainReport {
    std::vector<double> epoch_losses;
    double final_loss = 0.0;
    std::size_t epochs_run = 0;
    double wall_seconds = 0.0;
};

// Mini-batch SGD with momentum over seeded per-epoch shuffles. Batch targets
// are built on the fly from cosine distances, `stats` and `clusters`.
TrainReport train(HashModel& model, const FeatureSet& features, const DistanceStats& stats,
                  const ClusterAssignment& clusters, const HashModelConfig& config);

// Bit j of code i is set when F(x_i)_j >= 0 (sign(0) := +1).
CodeSet encode(const HashModel& model, const FeatureSet& features);

void save_model(const HashModel& model, const std::filesystem::path& path);
HashModel load_model(const std::filesystem::path& path);

}  // namespace dsg
