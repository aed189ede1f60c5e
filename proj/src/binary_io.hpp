#pragma once

// Little-endian primitives shared by the DSGF/DSGC/DSGM readers and writers.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "dsg/errors.hpp"

namespace dsg::detail {

template <typename T>
T byteswap_if_big(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        std::array<unsigned char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), &value, sizeof(T));
        std::reverse(bytes.begin(), bytes.end());
        std::memcpy(&value, bytes.data(), sizeof(T));
    }
    return value;
}

class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path)
        : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open for writing: " + path.string());
    }

    void bytes(const void* data, std::size_t size) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out_) throw IoError("write failed: " + path_.string());
    }

    template <typename T>
    void scalar(T value) {
        value = byteswap_if_big(value);
        bytes(&value, sizeof(T));
    }

    void magic(std::string_view tag) { bytes(tag.data(), tag.size()); }

    void id(const std::string& s) {
        if (s.size() > 0xFFFF) throw ValidationError("id longer than 65535 bytes: " + s.substr(0, 32));
        scalar<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }

    void close() {
        out_.close();
        if (!out_) throw IoError("write failed: " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path)
        : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open for reading: " + path.string());
    }

    void bytes(void* data, std::size_t size) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
        if (static_cast<std::size_t>(in_.gcount()) != size)
            throw IoError("truncated file: " + path_.string());
    }

    template <typename T>
    T scalar() {
        T value;
        bytes(&value, sizeof(T));
        return byteswap_if_big(value);
    }

    void expect_magic(std::string_view tag) {
        std::string got(tag.size(), '\0');
        in_.read(got.data(), static_cast<std::streamsize>(got.size()));
        if (static_cast<std::size_t>(in_.gcount()) != tag.size() || got != tag)
            throw FormatError("bad magic in " + path_.string() + ", expected " + std::string(tag));
    }

    void expect_version(std::uint32_t expected) {
        auto version = scalar<std::uint32_t>();
        if (version != expected)
            throw FormatError("unsupported version " + std::to_string(version) + " in " +
                              path_.string());
    }

    std::string id() {
        auto len = scalar<std::uint16_t>();
        std::string s(len, '\0');
        bytes(s.data(), len);
        return s;
    }

    // Bytes remaining after the current position; used to reject absurd headers
    // before allocating.
    std::uintmax_t remaining() {
        auto pos = in_.tellg();
        in_.seekg(0, std::ios::end);
        auto end = in_.tellg();
        in_.seekg(pos);
        return static_cast<std::uintmax_t>(end - pos);
    }

    bool at_end() {
        return in_.peek() == std::char_traits<char>::eof();
    }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
};

}  // namespace dsg::detail
