#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "dsg/dataset_io.hpp"
#include "dsg/errors.hpp"
#include "test_support.hpp"

using namespace dsg;
using dsg::testing::TempDir;

namespace {

// Hand-assembles a DSGF file byte by byte, independent of the writer.
void write_raw_dsgf(const std::filesystem::path& path, const std::vector<std::string>& ids,
                    const std::vector<std::vector<float>>& rows, std::uint32_t version = 1,
                    const char* magic = "DSGF") {
    std::ofstream out(path, std::ios::binary);
    auto put = [&](const void* p, std::size_t n) { out.write(static_cast<const char*>(p), n); };
    put(magic, 4);
    put(&version, 4);
    std::uint64_t n = ids.size(), dim = rows.empty() ? 0 : rows[0].size();
    put(&n, 8);
    put(&dim, 8);
    for (const auto& id : ids) {
        std::uint16_t len = static_cast<std::uint16_t>(id.size());
        put(&len, 2);
        put(id.data(), id.size());
    }
    for (const auto& r : rows) put(r.data(), r.size() * 4);
}

}  // namespace

TEST(LoadFeatures, DecodesSmallFile) {
    TempDir dir("io");
    write_raw_dsgf(dir / "f.dsgf", {"a", "b", "c"}, {{1, 0}, {0, 1}, {1, 1}});
    auto f = load_features(dir / "f.dsgf", {false});
    EXPECT_EQ(f.n(), 3u);
    EXPECT_EQ(f.dim(), 2u);
    EXPECT_EQ(f.ids()[2], "c");
    EXPECT_DOUBLE_EQ(f.data()(2, 1), 1.0);

    auto g = load_features(dir / "f.dsgf");
    EXPECT_NEAR(g.data()(2, 0), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(g.data()(2, 1), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(LoadFeatures, RejectsZeroRowNamingIndex) {
    TempDir dir("io");
    write_raw_dsgf(dir / "f.dsgf", {"a", "b", "c"}, {{1, 0}, {0, 0}, {1, 1}});
    try {
        load_features(dir / "f.dsgf");
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("zero feature row at index 1"), std::string::npos) << e.what();
    }
}

TEST(LoadFeatures, RejectsNonFinite) {
    TempDir dir("io");
    write_raw_dsgf(dir / "f.dsgf", {"a", "b"}, {{1, 0}, {std::numeric_limits<float>::quiet_NaN(), 1}});
    EXPECT_THROW(load_features(dir / "f.dsgf"), ValidationError);
    write_raw_dsgf(dir / "g.dsgf", {"a", "b"}, {{1, 0}, {std::numeric_limits<float>::infinity(), 1}});
    EXPECT_THROW(load_features(dir / "g.dsgf"), ValidationError);
}

TEST(LoadFeatures, FormatAndIoErrors) {
    TempDir dir("io");
    write_raw_dsgf(dir / "magic.dsgf", {"a", "b"}, {{1}, {2}}, 1, "XXXX");
    EXPECT_THROW(load_features(dir / "magic.dsgf"), FormatError);
    write_raw_dsgf(dir / "ver.dsgf", {"a", "b"}, {{1}, {2}}, 7);
    EXPECT_THROW(load_features(dir / "ver.dsgf"), FormatError);

    write_raw_dsgf(dir / "full.dsgf", {"a", "b"}, {{1, 2}, {3, 4}});
    auto bytes = dsg::testing::read_bytes(dir / "full.dsgf");
    {
        std::ofstream out(dir / "trunc.dsgf", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
    }
    EXPECT_THROW(load_features(dir / "trunc.dsgf"), IoError);
    EXPECT_THROW(load_features(dir / "missing.dsgf"), IoError);

    write_raw_dsgf(dir / "dup.dsgf", {"a", "a"}, {{1}, {2}});
    EXPECT_THROW(load_features(dir / "dup.dsgf"), ValidationError);
    write_raw_dsgf(dir / "one.dsgf", {"a"}, {{1}});
    EXPECT_THROW(load_features(dir / "one.dsgf"), ValidationError);
}

TEST(SaveFeatures, ByteIdenticalRoundTrip) {
    TempDir dir("io");
    std::mt19937_64 rng(3);
    std::normal_distribution<float> g;
    std::vector<std::vector<float>> rows(17, std::vector<float>(9));
    for (auto& r : rows)
        for (auto& v : r) v = g(rng);
    write_raw_dsgf(dir / "a.dsgf", dsg::testing::make_ids(17), rows);
    auto f = load_features(dir / "a.dsgf", {false});
    save_features(f, dir / "b.dsgf");
    EXPECT_EQ(dsg::testing::read_bytes(dir / "a.dsgf"), dsg::testing::read_bytes(dir / "b.dsgf"));
}

TEST(SaveFeatures, LargeExportRoundTrip) {
    // 5000 x 4096, the size produced for a real training split.
    TempDir dir("io");
    const std::size_t n = 5000, dim = 4096;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    RowMatrix data(n, dim);
    for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = static_cast<float>(u(rng));
    FeatureSet f(dsg::testing::make_ids(n), std::move(data));
    save_features(f, dir / "big.dsgf");
    auto back = load_features(dir / "big.dsgf", {false});
    EXPECT_EQ(back.n(), n);
    EXPECT_EQ(back.dim(), dim);
    EXPECT_TRUE(back.data() == f.data());
    EXPECT_EQ(back.ids(), f.ids());
    save_features(back, dir / "big2.dsgf");
    EXPECT_EQ(dsg::testing::read_bytes(dir / "big.dsgf"), dsg::testing::read_bytes(dir / "big2.dsgf"));
}

TEST(LoadLabels, ParsesMultiLabel) {
    TempDir dir("io");
    {
        std::ofstream out(dir / "l.csv");
        out << "id,labels\nimg0,3\nimg1,0;7\n";
    }
    auto l = load_labels(dir / "l.csv");
    ASSERT_EQ(l.size(), 2u);
    EXPECT_EQ(l.of("img0"), (std::vector<int>{3}));
    EXPECT_EQ(l.of("img1"), (std::vector<int>{0, 7}));
    EXPECT_EQ(l.num_classes, 8);
}

TEST(LoadLabels, Errors) {
    TempDir dir("io");
    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream(dir / name) << body;
        return dir / name;
    };
    EXPECT_THROW(load_labels(write("empty.csv", "id,labels\nimg0,\n")), ValidationError);
    EXPECT_THROW(load_labels(write("dup.csv", "id,labels\nimg0,1\nimg0,2\n")), ValidationError);
    EXPECT_THROW(load_labels(write("neg.csv", "id,labels\nimg0,-1\n")), ValidationError);
    EXPECT_THROW(load_labels(write("junk.csv", "id,labels\nimg0,1;x\n")), ValidationError);
    EXPECT_THROW(load_labels(write("hdr.csv", "name,labels\nimg0,1\n")), FormatError);
}

TEST(LoadLabels, AlignsToFeatureIds) {
    TempDir dir("io");
    const std::size_t n = 5000;
    auto ids = dsg::testing::make_ids(n, "img");
    {
        std::ofstream out(dir / "l.csv");
        out << "id,labels\n";
        // Written in reverse order; alignment must follow the feature ids.
        for (std::size_t i = n; i-- > 0;) out << ids[i] << ',' << (i % 10) << '\n';
    }
    auto labels = load_labels(dir / "l.csv").aligned_to(ids);
    for (std::size_t i = 0; i < n; ++i) {
        ASSERT_EQ(labels.ids[i], ids[i]);
        ASSERT_EQ(labels.labels[i], (std::vector<int>{static_cast<int>(i % 10)}));
    }
    std::vector<std::string> missing{"nope"};
    EXPECT_THROW(load_labels(dir / "l.csv").aligned_to(missing), ValidationError);
}

TEST(Split, ValidatesDisjointnessAndResolution) {
    TempDir dir("io");
    auto f = dsg::testing::random_features(6, 3, 1);
    SplitSpec ok{{"s0", "s1", "s2"}, {"s5"}, {"s0", "s1", "s2", "s3", "s4"}};
    save_split(ok, dir / "split.json");
    auto back = load_split(dir / "split.json");
    EXPECT_EQ(back.query, ok.query);
    EXPECT_NO_THROW(back.validate(f));

    SplitSpec overlap{{"s0"}, {"s1"}, {"s1", "s2"}};
    EXPECT_THROW(overlap.validate(f), ValidationError);
    SplitSpec unknown{{"s0"}, {"zz"}, {"s1"}};
    EXPECT_THROW(unknown.validate(f), ValidationError);
}

TEST(SaveCodes, PackingRuleBitIEqualsCodeI) {
    TempDir dir("io");
    Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> s(1, 8);
    s << 1, -1, 1, -1, 1, -1, 1, -1;
    auto codes = CodeSet::from_signs({"q"}, s);
    // bit i carries code i, counted from the most significant bit.
    EXPECT_EQ(codes.packed()[0], 0b10101010);
    save_codes(codes, dir / "c.dsgc");
    auto bytes = dsg::testing::read_bytes(dir / "c.dsgc");
    EXPECT_EQ(bytes.substr(0, 4), "DSGC");
    EXPECT_EQ(static_cast<std::uint8_t>(bytes.back()), 0b10101010);
    EXPECT_EQ(load_codes(dir / "c.dsgc"), codes);
}

TEST(SaveCodes, NonByteMultipleIsZeroPadded) {
    TempDir dir("io");
    Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> s(1, 12);
    s.setConstant(1);
    auto codes = CodeSet::from_signs({"q"}, s);
    ASSERT_EQ(codes.bytes_per_code(), 2u);
    EXPECT_EQ(codes.packed()[0], 0xFF);
    EXPECT_EQ(codes.packed()[1], 0xF0);
    save_codes(codes, dir / "c.dsgc");
    auto back = load_codes(dir / "c.dsgc");
    EXPECT_EQ(back, codes);
    EXPECT_EQ(back.signs(0), std::vector<std::int8_t>(12, 1));
}

TEST(SaveCodes, RandomRoundTripProperty) {
    TempDir dir("io");
    std::mt19937_64 rng(5);
    for (std::size_t len : {8u, 12u, 64u, 65u, 127u}) {
        Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> s(100, len);
        for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = (rng() & 1) ? 1 : -1;
        auto codes = CodeSet::from_signs(dsg::testing::make_ids(100), s);
        save_codes(codes, dir / "c.dsgc");
        auto back = load_codes(dir / "c.dsgc");
        ASSERT_EQ(back, codes) << len;
        for (std::size_t i = 0; i < 100; ++i)
            for (std::size_t j = 0; j < len; ++j)
                ASSERT_EQ(back.sign(i, j), s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
}

TEST(CodeSet, RejectsInvalidLengthsAndPadding) {
    EXPECT_THROW(CodeSet({"a"}, 4, {0}), ValidationError);
    EXPECT_THROW(CodeSet({"a"}, 5000, std::vector<std::uint8_t>(625)), ValidationError);
    EXPECT_THROW(CodeSet({"a"}, 12, {0xFF, 0x0F}), ValidationError);
    EXPECT_THROW(CodeSet({"a"}, 16, {0xFF}), ValidationError);
}

TEST(SaveCodes, UnwritablePath) {
    CodeSet codes({"a"}, 8, {1});
    EXPECT_THROW(save_codes(codes, "/nonexistent-dir/x/c.dsgc"), IoError);
}
