#include "dsg/hash_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "dsg/errors.hpp"

namespace dsg {

namespace {

constexpr std::uint32_t kModelVersion = 1;
// Separates the shuffling stream from the initialization stream of one seed.
constexpr std::uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;

void check_finite(const RowMatrix& m, const char* what) {
    if (!m.allFinite()) throw DomainError(std::string("non-finite values in ") + what);
}

// Activations of every layer; acts[0] is the input, acts[k+1] = tanh(z_k).
std::vector<RowMatrix> forward_all(const HashModel& model, const RowMatrix& batch) {
    if (static_cast<std::size_t>(batch.cols()) != model.config.in_dim)
        throw DomainError("batch width " + std::to_string(batch.cols()) +
                          " does not match model input dimension " +
                          std::to_string(model.config.in_dim));
    check_finite(batch, "batch");
    std::vector<RowMatrix> acts;
    acts.reserve(model.layers.size() + 1);
    acts.push_back(batch);
    for (const auto& layer : model.layers) {
        RowMatrix z = acts.back() * layer.weight;
        z.rowwise() += layer.bias;
        acts.push_back(z.array().tanh().matrix());
    }
    return acts;
}

void check_pair_matrices(const RelaxedCodes& v, const RowMatrix& s, const RowMatrix& w) {
    const auto m = v.rows();
    if (s.rows() != m || s.cols() != m || w.rows() != m || w.cols() != m)
        throw DomainError("pseudo-label and weight matrices must be " + std::to_string(m) + "x" +
                          std::to_string(m));
}

}  // namespace

void HashModelConfig::validate() const {
    if (in_dim < 1) throw ValidationError("in_dim must be >= 1");
    if (code_len < 1) throw ValidationError("code_len must be >= 1");
    for (auto h : hidden_dims)
        if (h < 1) throw ValidationError("hidden layer widths must be >= 1");
    if (batch_size < 2) throw ValidationError("batch_size must be >= 2");
    if (!std::isfinite(learning_rate) || learning_rate < 0.0)
        throw ValidationError("learning_rate must be finite and non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
}

std::size_t HashModel::parameter_count() const {
    std::size_t total = 0;
    for (const auto& l : layers) total += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return total;
}

HashModel init_model(const HashModelConfig& config) {
    config.validate();
    HashModel model;
    model.config = config;
    std::mt19937_64 rng(config.seed);

    std::vector<std::size_t> widths{config.in_dim};
    widths.insert(widths.end(), config.hidden_dims.begin(), config.hidden_dims.end());
    widths.push_back(config.code_len);

    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const auto fan_in = static_cast<Eigen::Index>(widths[k]);
        const auto fan_out = static_cast<Eigen::Index>(widths[k + 1]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        DenseLayer layer;
        layer.weight.resize(fan_in, fan_out);
        for (Eigen::Index i = 0; i < fan_in; ++i)
            for (Eigen::Index j = 0; j < fan_out; ++j) layer.weight(i, j) = uniform(rng);
        layer.bias = Eigen::RowVectorXd::Zero(fan_out);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

RelaxedCodes forward(const HashModel& model, const RowMatrix& batch) {
    return std::move(forward_all(model, batch).back());
}

RowMatrix raw_output(const HashModel& model, const RowMatrix& batch) {
    auto acts = forward_all(model, batch);
    const auto& last = model.layers.back();
    RowMatrix z = acts[acts.size() - 2] * last.weight;
    z.rowwise() += last.bias;
    return z;
}

double code_similarity(std::span<const double> v_i, std::span<const double> v_j) {
    if (v_i.size() != v_j.size() || v_i.empty())
        throw DomainError("code similarity needs two codes of equal, non-zero length");
    double acc = 0.0;
    for (std::size_t k = 0; k < v_i.size(); ++k) acc += v_i[k] * v_j[k];
    return acc / static_cast<double>(v_i.size());
}

double batch_loss(const RelaxedCodes& v, const RowMatrix& s, const RowMatrix& w,
                  bool include_diagonal) {
    check_pair_matrices(v, s, w);
    const auto m = v.rows();
    const double len = static_cast<double>(v.cols());
    RowMatrix h = (v * v.transpose()) / len;
    RowMatrix weighted = (w.array() * (h - s).array().square()).matrix();
    if (!include_diagonal) weighted.diagonal().setZero();
    return weighted.sum() / static_cast<double>(m * m);
}

LossAndGradients batch_gradient(const HashModel& model, const RowMatrix& batch,
                                const RowMatrix& s, const RowMatrix& w) {
    auto acts = forward_all(model, batch);
    const RowMatrix& v = acts.back();
    check_pair_matrices(v, s, w);
    const auto m = static_cast<double>(v.rows());
    const auto len = static_cast<double>(v.cols());

    LossAndGradients out;
    out.loss = batch_loss(v, s, w, model.config.include_diagonal);

    // d loss / d v = 2/(m^2 L) * (G + G^T) v with G = w o (H - s).
    RowMatrix g = (w.array() * ((v * v.transpose()) / len - s).array()).matrix();
    if (!model.config.include_diagonal) g.diagonal().setZero();
    RowMatrix upstream = (2.0 / (m * m * len)) * ((g + g.transpose()) * v);

    out.gradients.resize(model.layers.size());
    for (std::size_t k = model.layers.size(); k-- > 0;) {
        const RowMatrix& a_out = acts[k + 1];
        RowMatrix dz = (upstream.array() * (1.0 - a_out.array().square())).matrix();
        out.gradients[k].weight = acts[k].transpose() * dz;
        out.gradients[k].bias = dz.colwise().sum();
        if (k > 0) upstream = dz * model.layers[k].weight.transpose();
    }
    return out;
}

BatchTargets batch_targets(const CosineDistances& distances, std::span<const std::size_t> indices,
                           const DistanceStats& stats, const ClusterAssignment& clusters,
                           Ablation ablation) {
    const auto m = static_cast<Eigen::Index>(indices.size());
    BatchTargets t{RowMatrix(m, m), RowMatrix(m, m)};
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = a; b < m; ++b) {
            const auto i = indices[static_cast<std::size_t>(a)];
            const auto j = indices[static_cast<std::size_t>(b)];
            const double d = distances(i, j);
            const double s = pseudo_label(d, stats);
            const double w = distilled_weight(d, clusters.labels[i], clusters.labels[j], stats, ablation);
            t.s(a, b) = t.s(b, a) = s;
            t.w(a, b) = t.w(b, a) = w;
        }
    }
    return t;
}

TrainReport train(HashModel& model, const FeatureSet& features, const DistanceStats& stats,
                  const ClusterAssignment& clusters, const HashModelConfig& config) {
    config.validate();
    if (config.in_dim != model.config.in_dim || config.code_len != model.config.code_len ||
        config.hidden_dims != model.config.hidden_dims)
        throw ValidationError("training config does not match the model architecture");
    if (features.dim() != config.in_dim)
        throw ValidationError("feature dimensionality " + std::to_string(features.dim()) +
                              " does not match model input " + std::to_string(config.in_dim));
    if (clusters.n() != features.n())
        throw ValidationError("cluster assignment does not match the training features");
    if (config.batch_size > features.n())
        throw ValidationError("batch_size exceeds the number of training samples");

    model.config = config;
    const auto start = std::chrono::steady_clock::now();
    const CosineDistances distances(features);
    std::mt19937_64 rng(config.seed ^ kShuffleStream);

    Gradients velocity;
    for (const auto& layer : model.layers)
        velocity.push_back({RowMatrix::Zero(layer.weight.rows(), layer.weight.cols()),
                            Eigen::RowVectorXd::Zero(layer.bias.size())});

    std::vector<std::size_t> order(features.n());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t n = features.n();
    const std::size_t m = config.batch_size;

    TrainReport report;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start_idx = 0; start_idx < n; start_idx += m) {
            std::span<const std::size_t> idx(order.data() + start_idx, std::min(m, n - start_idx));
            RowMatrix x(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(features.dim()));
            for (std::size_t r = 0; r < idx.size(); ++r)
                x.row(static_cast<Eigen::Index>(r)) = features.data().row(static_cast<Eigen::Index>(idx[r]));
            auto targets = batch_targets(distances, idx, stats, clusters, config.ablation);
            auto step = batch_gradient(model, x, targets.s, targets.w);
            if (!std::isfinite(step.loss))
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                                      ", batch " + std::to_string(batches + 1));
            for (std::size_t k = 0; k < model.layers.size(); ++k) {
                velocity[k].weight = config.momentum * velocity[k].weight -
                                     config.learning_rate * step.gradients[k].weight;
                velocity[k].bias = config.momentum * velocity[k].bias -
                                   config.learning_rate * step.gradients[k].bias;
                model.layers[k].weight += velocity[k].weight;
                model.layers[k].bias += velocity[k].bias;
            }
            loss_sum += step.loss;
            ++batches;
        }
        report.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
    }

    report.epochs_run = report.epoch_losses.size();
    report.final_loss = report.epoch_losses.back();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

CodeSet encode(const HashModel& model, const FeatureSet& features) {
    RowMatrix z = raw_output(model, features.data());
    Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> signs(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < z.cols(); ++j) signs(i, j) = z(i, j) >= 0.0 ? 1 : -1;
    return CodeSet::from_signs(features.ids(), signs);
}

// DSGM layout (little-endian): "DSGM", u32 version, config block
// {u64 in_dim, u64 code_len, u64 n_hidden, u64 hidden[n_hidden], u64 batch_size,
//  f64 learning_rate, f64 momentum, u64 epochs, u64 seed, u8 ablation,
//  u8 include_diagonal}, u64 n_layers, then per layer
// {u64 rows, u64 cols, f64 weight[rows*cols] row-major, f64 bias[cols]}.
void save_model(const HashModel& model, const std::filesystem::path& path) {
    const auto& c = model.config;
    detail::BinaryWriter w(path);
    w.magic("DSGM");
    w.scalar<std::uint32_t>(kModelVersion);
    w.scalar<std::uint64_t>(c.in_dim);
    w.scalar<std::uint64_t>(c.code_len);
    w.scalar<std::uint64_t>(c.hidden_dims.size());
    for (auto h : c.hidden_dims) w.scalar<std::uint64_t>(h);
    w.scalar<std::uint64_t>(c.batch_size);
    w.scalar<double>(c.learning_rate);
    w.scalar<double>(c.momentum);
    w.scalar<std::uint64_t>(c.epochs);
    w.scalar<std::uint64_t>(c.seed);
    w.scalar<std::uint8_t>(static_cast<std::uint8_t>(c.ablation));
    w.scalar<std::uint8_t>(c.include_diagonal ? 1 : 0);
    w.scalar<std::uint64_t>(model.layers.size());
    for (const auto& layer : model.layers) {
        w.scalar<std::uint64_t>(static_cast<std::uint64_t>(layer.weight.rows()));
        w.scalar<std::uint64_t>(static_cast<std::uint64_t>(layer.weight.cols()));
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) w.scalar<double>(layer.weight.data()[i]);
        for (Eigen::Index j = 0; j < layer.bias.size(); ++j) w.scalar<double>(layer.bias[j]);
    }
    w.close();
}

HashModel load_model(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    r.expect_magic("DSGM");
    r.expect_version(kModelVersion);
    HashModel model;
    auto& c = model.config;
    c.in_dim = r.scalar<std::uint64_t>();
    c.code_len = r.scalar<std::uint64_t>();
    const auto n_hidden = r.scalar<std::uint64_t>();
    if (n_hidden > r.remaining() / 8) throw IoError("truncated file: " + path.string());
    for (std::uint64_t k = 0; k < n_hidden; ++k) c.hidden_dims.push_back(r.scalar<std::uint64_t>());
    c.batch_size = r.scalar<std::uint64_t>();
    c.learning_rate = r.scalar<double>();
    c.momentum = r.scalar<double>();
    c.epochs = r.scalar<std::uint64_t>();
    c.seed = r.scalar<std::uint64_t>();
    const auto ablation = r.scalar<std::uint8_t>();
    if (ablation > 2) throw FormatError("invalid ablation code in " + path.string());
    c.ablation = static_cast<Ablation>(ablation);
    const auto diag = r.scalar<std::uint8_t>();
    if (diag > 1) throw FormatError("invalid include_diagonal flag in " + path.string());
    c.include_diagonal = diag == 1;
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw FormatError("invalid model config in " + path.string() + ": " + e.what());
    }

    std::vector<std::size_t> widths{c.in_dim};
    widths.insert(widths.end(), c.hidden_dims.begin(), c.hidden_dims.end());
    widths.push_back(c.code_len);
    const auto n_layers = r.scalar<std::uint64_t>();
    if (n_layers != widths.size() - 1)
        throw FormatError("layer count does not match config in " + path.string());
    for (std::uint64_t k = 0; k < n_layers; ++k) {
        const auto rows = r.scalar<std::uint64_t>();
        const auto cols = r.scalar<std::uint64_t>();
        if (rows != widths[k] || cols != widths[k + 1])
            throw FormatError("layer " + std::to_string(k) + " shape does not match config in " +
                              path.string());
        if (rows * cols + cols > r.remaining() / 8) throw IoError("truncated file: " + path.string());
        DenseLayer layer;
        layer.weight.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        layer.bias.resize(static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = r.scalar<double>();
        for (Eigen::Index j = 0; j < layer.bias.size(); ++j) layer.bias[j] = r.scalar<double>();
        if (!layer.weight.allFinite() || !layer.bias.allFinite())
            throw FormatError("non-finite parameters in " + path.string());
        model.layers.push_back(std::move(layer));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after payload in " + path.string());
    return model;
}

}  // namespace dsg
