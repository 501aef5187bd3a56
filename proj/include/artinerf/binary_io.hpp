// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace artinerf {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Little-endian scalar/blob writer for the binary file formats.
class BinaryWriter {
  public:
    explicit BinaryWriter(std::ostream &out) : out_(out) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        out_.write(reinterpret_cast<const char *>(&value), sizeof(T));
    }

    void bytes(const void *data, std::size_t n) { out_.write(static_cast<const char *>(data), static_cast<std::streamsize>(n)); }

    void string(const std::string &s) {
        put<std::uint64_t>(s.size());
        bytes(s.data(), s.size());
    }

    /// Length-prefixed f32 array.
    void blob(std::span<const float> values) {
        put<std::uint64_t>(values.size());
        bytes(values.data(), values.size() * sizeof(float));
    }

    bool ok() const { return static_cast<bool>(out_); }

  private:
    std::ostream &out_;
};

class BinaryReader {
  public:
    BinaryReader(std::istream &in, std::string origin) : in_(in), origin_(std::move(origin)) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get(const char *field) {
        T value{};
        in_.read(reinterpret_cast<char *>(&value), sizeof(T));
        if (!in_) {
            throw DataError(origin_, field, "unexpected end of file");
        }
        return value;
    }

    void bytes(void *data, std::size_t n, const char *field) {
        in_.read(static_cast<char *>(data), static_cast<std::streamsize>(n));
        if (!in_) {
            throw DataError(origin_, field, "unexpected end of file");
        }
    }

    std::string string(const char *field, std::uint64_t max_len = 1u << 30) {
        const auto n = get<std::uint64_t>(field);
        if (n > max_len) {
            throw DataError(origin_, field, "implausible string length");
        }
        std::string s(n, '\0');
        bytes(s.data(), n, field);
        return s;
    }

    std::vector<float> blob(const char *field, std::uint64_t expected) {
        const auto n = get<std::uint64_t>(field);
        if (n != expected) {
            throw DataError(origin_, field,
                            "blob length " + std::to_string(n) + " does not match expected " + std::to_string(expected));
        }
        std::vector<float> v(n);
        bytes(v.data(), n * sizeof(float), field);
        return v;
    }

    void magic(const char (&expected)[9]) {
        char buf[8];
        bytes(buf, 8, "magic");
        if (std::memcmp(buf, expected, 8) != 0) {
            throw DataError(origin_, "magic", "not a " + std::string(expected, 7) + " file");
        }
    }

    const std::string &origin() const { return origin_; }

  private:
    std::istream &in_;
    std::string origin_;
};

} // namespace artinerf
