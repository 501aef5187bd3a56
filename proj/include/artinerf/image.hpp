// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/binary_io.hpp"
#include "artinerf/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace artinerf {

/// Interleaved float image, values nominally in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.0f)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    float &at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

    bool same_shape(const Image &o) const { return width == o.width && height == o.height && channels == o.channels; }

    /// Sub-image with top-left corner (x0, y0).
    Image crop(int x0, int y0, int w, int h) const {
        Image out(w, h, channels);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < channels; ++c) {
                    out.at(x, y, c) = at(x0 + x, y0 + y, c);
                }
            }
        }
        return out;
    }
};

inline std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// 8-bit PNG: values are clamped to [0, 1] and quantized without a transfer curve.
inline void write_png(const std::filesystem::path &path, const Image &img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ParameterError("PNG output supports 1 or 3 channels");
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::vector<std::uint8_t> bytes(img.data.size());
    std::transform(img.data.begin(), img.data.end(), bytes.begin(), to_byte);
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    pi.width = static_cast<png_uint_32>(img.width);
    pi.height = static_cast<png_uint_32>(img.height);
    pi.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (png_image_write_to_file(&pi, path.string().c_str(), 0, bytes.data(), 0, nullptr) == 0) {
        const std::string msg = pi.message;
        png_image_free(&pi);
        throw DataError(path.string(), "", "PNG write failed: " + msg);
    }
}

/// Reads an 8-bit PNG as `channels` (1 or 3) float channels in [0, 1].
inline Image read_png(const std::filesystem::path &path, int channels = 3) {
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&pi, path.string().c_str()) == 0) {
        const std::string msg = pi.message;
        png_image_free(&pi);
        throw DataError(path.string(), "", "PNG read failed: " + msg);
    }
    pi.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(pi));
    if (png_image_finish_read(&pi, nullptr, bytes.data(), 0, nullptr) == 0) {
        const std::string msg = pi.message;
        png_image_free(&pi);
        throw DataError(path.string(), "", "PNG decode failed: " + msg);
    }
    Image img(static_cast<int>(pi.width), static_cast<int>(pi.height), channels);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        img.data[i] = static_cast<float>(bytes[i]) / 255.0f;
    }
    return img;
}

// Alpha dump: char[8] "ANRFALP\0", u32 width, u32 height, f32 alpha[height][width].
inline constexpr char kAlphaMagic[9] = "ANRFALP";

inline void write_alpha_dump(const std::filesystem::path &path, const std::vector<float> &alpha, int width,
                             int height) {
    if (alpha.size() != static_cast<std::size_t>(width) * height) {
        throw ParameterError("alpha buffer size does not match the image size");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError(path.string(), "", "cannot open file for writing");
    }
    BinaryWriter w(out);
    w.bytes(kAlphaMagic, 8);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(height));
    w.bytes(alpha.data(), alpha.size() * sizeof(float));
}

inline std::vector<float> read_alpha_dump(const std::filesystem::path &path, int &width, int &height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(path.string(), "", "cannot open file for reading");
    }
    BinaryReader r(in, path.string());
    r.magic(kAlphaMagic);
    width = static_cast<int>(r.get<std::uint32_t>("width"));
    height = static_cast<int>(r.get<std::uint32_t>("height"));
    std::vector<float> alpha(static_cast<std::size_t>(width) * height);
    r.bytes(alpha.data(), alpha.size() * sizeof(float), "alpha");
    return alpha;
}

} // namespace artinerf
