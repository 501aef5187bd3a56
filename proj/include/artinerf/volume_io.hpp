// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/binary_io.hpp"
#include "artinerf/voxel_grid.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace artinerf {

// Layout (little-endian):
//   char[8] "ANRFVOL\0", u32 version, u32 kind (0 voxel, 1 conv),
//   u32 kernel_size, u32 channels, f64 origin[3], f64 voxel_size, i32 dims[3],
//   u64 count, count x (i32 coord[3], f32 value[channels]) in lexicographic order.
inline constexpr char kVolumeMagic[9] = "ANRFVOL";
inline constexpr std::uint32_t kVolumeFormatVersion = 1;

enum class VolumeKind : std::uint32_t { kVoxel = 0, kConv = 1 };

inline void write_volume(std::ostream &os, const SparseVolume &grid, VolumeKind kind, int kernel_size) {
    BinaryWriter w(os);
    w.bytes(kVolumeMagic, 8);
    w.put<std::uint32_t>(kVolumeFormatVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(kind));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(kernel_size));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.channels()));
    const GridSpec &spec = grid.spec();
    for (int a = 0; a < 3; ++a) {
        w.put<double>(spec.origin[a]);
    }
    w.put<double>(spec.voxel_size);
    for (int a = 0; a < 3; ++a) {
        w.put<std::int32_t>(spec.dims[a]);
    }
    w.put<std::uint64_t>(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            w.put<std::int32_t>(grid.coord(i)[a]);
        }
        const auto v = grid.value(i);
        w.bytes(v.data(), v.size() * sizeof(float));
    }
}

inline std::string volume_bytes(const VoxelVolume &v) {
    std::ostringstream os(std::ios::binary);
    write_volume(os, v.grid, VolumeKind::kVoxel, v.kernel_size);
    return os.str();
}

inline std::string volume_bytes(const ConvVolume &v) {
    std::ostringstream os(std::ios::binary);
    write_volume(os, v.grid, VolumeKind::kConv, v.kernel_size);
    return os.str();
}

struct LoadedVolume {
    VolumeKind kind = VolumeKind::kVoxel;
    int kernel_size = 0;
    SparseVolume grid;
};

inline LoadedVolume read_volume(std::istream &is, const std::string &origin) {
    BinaryReader r(is, origin);
    r.magic(kVolumeMagic);
    const auto version = r.get<std::uint32_t>("version");
    if (version != kVolumeFormatVersion) {
        throw DataError(origin, "version", "unsupported version " + std::to_string(version));
    }
    LoadedVolume out;
    const auto kind = r.get<std::uint32_t>("kind");
    if (kind > 1) {
        throw DataError(origin, "kind", "unknown volume kind");
    }
    out.kind = static_cast<VolumeKind>(kind);
    out.kernel_size = static_cast<int>(r.get<std::uint32_t>("kernel_size"));
    const auto channels = static_cast<int>(r.get<std::uint32_t>("channels"));
    GridSpec spec;
    for (int a = 0; a < 3; ++a) {
        spec.origin[a] = r.get<double>("origin");
    }
    spec.voxel_size = r.get<double>("voxel_size");
    for (int a = 0; a < 3; ++a) {
        spec.dims[a] = r.get<std::int32_t>("dims");
    }
    try {
        out.grid = SparseVolume(spec, channels);
    } catch (const ParameterError &e) {
        throw DataError(origin, "grid", e.what());
    }
    const auto count = r.get<std::uint64_t>("count");
    for (std::uint64_t i = 0; i < count; ++i) {
        Index3 c;
        for (int a = 0; a < 3; ++a) {
            c[a] = r.get<std::int32_t>("coord");
        }
        std::vector<float> v(static_cast<std::size_t>(channels));
        r.bytes(v.data(), v.size() * sizeof(float), "value");
        try {
            auto dst = out.grid.append(c);
            std::copy(v.begin(), v.end(), dst.begin());
        } catch (const InternalError &e) {
            throw DataError(origin, "records", e.what());
        }
    }
    return out;
}

inline void save_volume(const std::filesystem::path &path, const std::string &bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError(path.string(), "", "cannot open file for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline LoadedVolume load_volume(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(path.string(), "", "cannot open file for reading");
    }
    return read_volume(in, path.string());
}

} // namespace artinerf
