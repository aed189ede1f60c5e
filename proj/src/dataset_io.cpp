#include "dsg/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "dsg/errors.hpp"

namespace dsg {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

std::unordered_map<std::string, std::size_t> build_index(const std::vector<std::string>& ids,
                                                         const char* what) {
    std::unordered_map<std::string, std::size_t> index;
    index.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!index.emplace(ids[i], i).second)
            throw ValidationError(std::string("duplicate id in ") + what + ": " + ids[i]);
    }
    return index;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureSet

FeatureSet::FeatureSet(std::vector<std::string> ids, RowMatrix data)
    : ids_(std::move(ids)), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.rows()) != ids_.size())
        throw ValidationError("feature rows (" + std::to_string(data_.rows()) +
                              ") do not match id count (" + std::to_string(ids_.size()) + ")");
    if (ids_.size() < 2) throw ValidationError("feature set needs at least 2 samples");
    if (data_.cols() < 1) throw ValidationError("feature dimensionality must be at least 1");
    for (Eigen::Index i = 0; i < data_.rows(); ++i) {
        bool nonzero = false;
        for (Eigen::Index j = 0; j < data_.cols(); ++j) {
            double v = data_(i, j);
            if (!std::isfinite(v))
                throw ValidationError("non-finite feature value at index " + std::to_string(i));
            nonzero |= (v != 0.0);
        }
        if (!nonzero) throw ValidationError("zero feature row at index " + std::to_string(i));
    }
    index_ = build_index(ids_, "feature set");
}

std::size_t FeatureSet::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown feature id: " + id);
    return it->second;
}

FeatureSet FeatureSet::subset(std::span<const std::string> ids) const {
    RowMatrix out(static_cast<Eigen::Index>(ids.size()), data_.cols());
    for (std::size_t r = 0; r < ids.size(); ++r)
        out.row(static_cast<Eigen::Index>(r)) = data_.row(static_cast<Eigen::Index>(index_of(ids[r])));
    return FeatureSet({ids.begin(), ids.end()}, std::move(out));
}

FeatureSet FeatureSet::normalized() const {
    RowMatrix out = data_;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        double norm = 0.0;
        for (Eigen::Index j = 0; j < out.cols(); ++j) norm += out(i, j) * out(i, j);
        out.row(i) /= std::sqrt(norm);
    }
    return FeatureSet(ids_, std::move(out));
}

// ---------------------------------------------------------------------------
// DSGF

void write_dsgf(const std::filesystem::path& path, std::span<const std::string> ids,
                const RowMatrix& data) {
    if (static_cast<std::size_t>(data.rows()) != ids.size())
        throw ValidationError("row/id count mismatch writing " + path.string());
    detail::BinaryWriter w(path);
    w.magic("DSGF");
    w.scalar<std::uint32_t>(kFormatVersion);
    w.scalar<std::uint64_t>(ids.size());
    w.scalar<std::uint64_t>(static_cast<std::uint64_t>(data.cols()));
    for (const auto& id : ids) w.id(id);
    std::vector<float> row(static_cast<std::size_t>(data.cols()));
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.cols(); ++j)
            row[static_cast<std::size_t>(j)] = detail::byteswap_if_big(static_cast<float>(data(i, j)));
        w.bytes(row.data(), row.size() * sizeof(float));
    }
    w.close();
}

void save_features(const FeatureSet& features, const std::filesystem::path& path) {
    write_dsgf(path, features.ids(), features.data());
}

FeatureSet load_features(const std::filesystem::path& path, LoadOptions options) {
    detail::BinaryReader r(path);
    r.expect_magic("DSGF");
    r.expect_version(kFormatVersion);
    auto n = r.scalar<std::uint64_t>();
    auto dim = r.scalar<std::uint64_t>();
    if (n < 2) throw ValidationError("feature file must hold at least 2 samples: " + path.string());
    if (dim < 1) throw ValidationError("feature dimensionality must be at least 1: " + path.string());
    // Each id record is at least 2 bytes, each row dim*4 bytes.
    if (n > r.remaining() / 2 || dim > r.remaining() / 4 / n)
        throw IoError("truncated file: " + path.string());

    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) ids.push_back(r.id());

    RowMatrix data(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    std::vector<float> row(dim);
    for (std::uint64_t i = 0; i < n; ++i) {
        r.bytes(row.data(), dim * sizeof(float));
        for (std::uint64_t j = 0; j < dim; ++j)
            data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                detail::byteswap_if_big(row[j]);
    }
    if (!r.at_end()) throw FormatError("trailing bytes after payload in " + path.string());

    FeatureSet features(std::move(ids), std::move(data));
    return options.normalize ? features.normalized() : features;
}

// ---------------------------------------------------------------------------
// Labels

const std::vector<int>& LabelSet::of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("no labels for id: " + id);
    return labels[it->second];
}

LabelSet LabelSet::aligned_to(std::span<const std::string> wanted) const {
    LabelSet out;
    out.ids.assign(wanted.begin(), wanted.end());
    out.labels.reserve(wanted.size());
    for (const auto& id : wanted) out.labels.push_back(of(id));
    out.num_classes = num_classes;
    out.finalize();
    return out;
}

void LabelSet::finalize() {
    if (labels.size() != ids.size()) throw ValidationError("label rows do not match id count");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].empty()) throw ValidationError("empty label set for id " + ids[i]);
    }
    index_ = build_index(ids, "label set");
}

LabelSet load_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != "id,labels")
        throw FormatError("label CSV must start with header 'id,labels': " + path.string());

    LabelSet out;
    int max_label = -1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = trim(line);
        if (view.empty()) continue;
        auto comma = view.find(',');
        if (comma == std::string_view::npos || view.find(',', comma + 1) != std::string_view::npos)
            throw ValidationError("expected 2 fields at line " + std::to_string(line_no));
        std::string id(trim(view.substr(0, comma)));
        std::string_view cell = trim(view.substr(comma + 1));
        if (id.empty()) throw ValidationError("empty id at line " + std::to_string(line_no));
        if (cell.empty())
            throw ValidationError("empty label cell for id " + id + " at line " +
                                  std::to_string(line_no));

        std::vector<int> labels;
        while (!cell.empty()) {
            auto semi = cell.find(';');
            std::string_view token = trim(cell.substr(0, semi));
            int value = -1;
            auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
            if (token.empty() || ec != std::errc() || ptr != token.data() + token.size() || value < 0)
                throw ValidationError("invalid label '" + std::string(token) + "' at line " +
                                      std::to_string(line_no));
            labels.push_back(value);
            max_label = std::max(max_label, value);
            if (semi == std::string_view::npos) break;
            cell.remove_prefix(semi + 1);
        }
        std::sort(labels.begin(), labels.end());
        labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
        out.ids.push_back(std::move(id));
        out.labels.push_back(std::move(labels));
    }
    out.num_classes = max_label + 1;
    out.finalize();
    return out;
}

void save_labels(const LabelSet& labels, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "id,labels\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << labels.ids[i] << ',';
        for (std::size_t k = 0; k < labels.labels[i].size(); ++k)
            out << (k ? ";" : "") << labels.labels[i][k];
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Split

void SplitSpec::validate(const FeatureSet& features) const {
    std::unordered_set<std::string> retrieval_ids(retrieval.begin(), retrieval.end());
    for (const auto& id : query) {
        if (retrieval_ids.count(id)) throw ValidationError("query id also in retrieval set: " + id);
    }
    for (const auto* list : {&train, &query, &retrieval}) {
        for (const auto& id : *list) features.index_of(id);
    }
}

SplitSpec load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        SplitSpec split;
        j.at("train").get_to(split.train);
        j.at("query").get_to(split.query);
        j.at("retrieval").get_to(split.retrieval);
        return split;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid split file " + path.string() + ": " + e.what());
    }
}

void save_split(const SplitSpec& split, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    nlohmann::json j{{"train", split.train}, {"query", split.query}, {"retrieval", split.retrieval}};
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// CodeSet

CodeSet::CodeSet(std::vector<std::string> ids, std::size_t code_len,
                 std::vector<std::uint8_t> packed)
    : ids_(std::move(ids)), code_len_(code_len), packed_(std::move(packed)) {
    if (code_len_ < kMinCodeLen || code_len_ > kMaxCodeLen)
        throw ValidationError("code length " + std::to_string(code_len_) + " outside [8, 4096]");
    if (packed_.size() != ids_.size() * bytes_per_code())
        throw ValidationError("packed code buffer has wrong size");
    build_index(ids_, "code set");
    if (code_len_ % 8 != 0) {
        const auto pad_mask = static_cast<std::uint8_t>(0xFFu >> (code_len_ % 8));
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            if (packed_[(i + 1) * bytes_per_code() - 1] & pad_mask)
                throw ValidationError("non-zero padding bits in code " + std::to_string(i));
        }
    }
}

CodeSet CodeSet::from_signs(
    std::vector<std::string> ids,
    const Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& signs) {
    const auto len = static_cast<std::size_t>(signs.cols());
    if (static_cast<std::size_t>(signs.rows()) != ids.size())
        throw ValidationError("sign rows do not match id count");
    const std::size_t stride = (len + 7) / 8;
    std::vector<std::uint8_t> packed(ids.size() * stride, 0);
    for (Eigen::Index i = 0; i < signs.rows(); ++i) {
        for (std::size_t j = 0; j < len; ++j) {
            auto s = signs(i, static_cast<Eigen::Index>(j));
            if (s != 1 && s != -1) throw ValidationError("code entries must be +1 or -1");
            if (s == 1)
                packed[static_cast<std::size_t>(i) * stride + j / 8] |=
                    static_cast<std::uint8_t>(0x80u >> (j % 8));
        }
    }
    return CodeSet(std::move(ids), len, std::move(packed));
}

int CodeSet::sign(std::size_t i, std::size_t j) const {
    return (packed_[i * bytes_per_code() + j / 8] & (0x80u >> (j % 8))) ? 1 : -1;
}

std::vector<std::int8_t> CodeSet::signs(std::size_t i) const {
    std::vector<std::int8_t> out(code_len_);
    for (std::size_t j = 0; j < code_len_; ++j) out[j] = static_cast<std::int8_t>(sign(i, j));
    return out;
}

CodeSet CodeSet::subset(std::span<const std::string> wanted) const {
    auto index = build_index(ids_, "code set");
    std::vector<std::uint8_t> packed;
    packed.reserve(wanted.size() * bytes_per_code());
    for (const auto& id : wanted) {
        auto it = index.find(id);
        if (it == index.end()) throw ValidationError("unknown code id: " + id);
        auto c = code(it->second);
        packed.insert(packed.end(), c.begin(), c.end());
    }
    return CodeSet({wanted.begin(), wanted.end()}, code_len_, std::move(packed));
}

void save_codes(const CodeSet& codes, const std::filesystem::path& path) {
    detail::BinaryWriter w(path);
    w.magic("DSGC");
    w.scalar<std::uint32_t>(kFormatVersion);
    w.scalar<std::uint64_t>(codes.n());
    w.scalar<std::uint64_t>(codes.code_len());
    for (const auto& id : codes.ids()) w.id(id);
    w.bytes(codes.packed().data(), codes.packed().size());
    w.close();
}

CodeSet load_codes(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    r.expect_magic("DSGC");
    r.expect_version(kFormatVersion);
    auto n = r.scalar<std::uint64_t>();
    auto code_len = r.scalar<std::uint64_t>();
    if (code_len < CodeSet::kMinCodeLen || code_len > CodeSet::kMaxCodeLen)
        throw FormatError("code length " + std::to_string(code_len) + " outside [8, 4096] in " +
                          path.string());
    const std::uint64_t stride = (code_len + 7) / 8;
    if (n > r.remaining() / (2 + stride)) throw IoError("truncated file: " + path.string());

    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) ids.push_back(r.id());
    std::vector<std::uint8_t> packed(n * stride);
    r.bytes(packed.data(), packed.size());
    if (!r.at_end()) throw FormatError("trailing bytes after payload in " + path.string());
    return CodeSet(std::move(ids), code_len, std::move(packed));
}

}  // namespace dsg
