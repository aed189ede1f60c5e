#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace dsg {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Feature vectors, one row per sample. Values are kept in double precision
// in memory; on disk they are little-endian float32.
class FeatureSet {
public:
    FeatureSet() = default;

    // Validates n >= 2, dim >= 1, unique ids, finite values and non-zero rows.
    FeatureSet(std::vector<std::string> ids, RowMatrix data);

    std::size_t n() const { return ids_.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(data_.cols()); }

    const std::vector<std::string>& ids() const { return ids_; }
    const RowMatrix& data() const { return data_; }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * dim(), dim()};
    }

    // Row index for an id; throws ValidationError when absent.
    std::size_t index_of(const std::string& id) const;

    // Rows selected by id, in the given order.
    FeatureSet subset(std::span<const std::string> ids) const;

    // Copy with every row scaled to unit L2 norm.
    FeatureSet normalized() const;

private:
    std::vector<std::string> ids_;
    RowMatrix data_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct LoadOptions {
    bool normalize = true;
};

FeatureSet load_features(const std::filesystem::path& path, LoadOptions options = {});
void save_features(const FeatureSet& features, const std::filesystem::path& path);

// Raw DSGF writer without FeatureSet invariants (used for centroid matrices).
void write_dsgf(const std::filesystem::path& path, std::span<const std::string> ids,
                const RowMatrix& data);

struct LabelSet {
    std::vector<std::string> ids;
    std::vector<std::vector<int>> labels;  // sorted, unique per sample
    int num_classes = 0;

    std::size_t size() const { return ids.size(); }

    // Labels of the named sample; throws ValidationError when absent.
    const std::vector<int>& of(const std::string& id) const;

    // Reorders to match `ids` exactly; throws when an id is missing.
    LabelSet aligned_to(std::span<const std::string> ids) const;

    // Builds the id lookup and checks every sample has at least one label.
    void finalize();

private:
    std::unordered_map<std::string, std::size_t> index_;
};

LabelSet load_labels(const std::filesystem::path& path);
void save_labels(const LabelSet& labels, const std::filesystem::path& path);

struct SplitSpec {
    std::vector<std::string> train;
    std::vector<std::string> query;
    std::vector<std::string> retrieval;

    // Query/retrieval disjointness and id resolution against `features`.
    void validate(const FeatureSet& features) const;
};

SplitSpec load_split(const std::filesystem::path& path);
void save_split(const SplitSpec& split, const std::filesystem::path& path);

// Packed binary codes. Bit j of code i lives at byte i*bytes_per_code() + j/8,
// bit position j%8 counted from the most significant bit (mask 0x80 >> j%8);
// a set bit encodes +1, a clear bit -1, and trailing padding bits are zero.
class CodeSet {
public:
    static constexpr std::size_t kMinCodeLen = 8;
    static constexpr std::size_t kMaxCodeLen = 4096;

    CodeSet() = default;
    CodeSet(std::vector<std::string> ids, std::size_t code_len, std::vector<std::uint8_t> packed);

    // Packs an n x code_len matrix of +1/-1 entries.
    static CodeSet from_signs(std::vector<std::string> ids,
                              const Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic,
                                                  Eigen::RowMajor>& signs);

    std::size_t n() const { return ids_.size(); }
    std::size_t code_len() const { return code_len_; }
    std::size_t bytes_per_code() const { return (code_len_ + 7) / 8; }

    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<std::uint8_t>& packed() const { return packed_; }

    std::span<const std::uint8_t> code(std::size_t i) const {
        return {packed_.data() + i * bytes_per_code(), bytes_per_code()};
    }

    int sign(std::size_t i, std::size_t j) const;
    std::vector<std::int8_t> signs(std::size_t i) const;

    // Codes selected by id, in the given order.
    CodeSet subset(std::span<const std::string> ids) const;

    friend bool operator==(const CodeSet&, const CodeSet&) = default;

private:
    std::vector<std::string> ids_;
    std::size_t code_len_ = 0;
    std::vector<std::uint8_t> packed_;
};

void save_codes(const CodeSet& codes, const std::filesystem::path& path);
CodeSet load_codes(const std::filesystem::path& path);

}  // namespace dsg
