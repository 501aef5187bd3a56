// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/error.hpp"
#include "artinerf/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace artinerf {

inline constexpr double kDefaultVoxelSize = 0.02;
inline constexpr int kDefaultKernelSize = 5;
inline constexpr int kGridAlignment = 32;

/// Placement of a voxel grid in observation space.
struct GridSpec {
    Vec3 origin = Vec3::Zero(); // min corner
    double voxel_size = kDefaultVoxelSize;
    Index3 dims{kGridAlignment, kGridAlignment, kGridAlignment};

    void validate() const {
        if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
            throw ParameterError("voxel_size must be positive");
        }
        for (int d : dims) {
            if (d < kGridAlignment || d % kGridAlignment != 0) {
                throw ParameterError("grid dims must be positive multiples of 32");
            }
        }
        if (!origin.allFinite()) {
            throw ParameterError("grid origin must be finite");
        }
    }

    std::size_t cell_count() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }

    /// Voxel containing p (floor of the scaled offset). May lie outside the grid.
    Index3 cell_of(const Vec3 &p) const {
        Index3 c;
        for (int a = 0; a < 3; ++a) {
            const double s = std::floor((p[a] - origin[a]) / voxel_size);
            // keep far-away points representable; anything this far is outside anyway
            c[a] = static_cast<int>(std::clamp(s, -1.0e6, 1.0e6));
        }
        return c;
    }

    bool contains(const Index3 &c) const {
        return c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < dims[0] && c[1] < dims[1] && c[2] < dims[2];
    }

    /// Row-major (x slowest) linear index; increasing order is lexicographic order.
    std::size_t linear(const Index3 &c) const {
        return (static_cast<std::size_t>(c[0]) * static_cast<std::size_t>(dims[1]) + static_cast<std::size_t>(c[1])) *
                   static_cast<std::size_t>(dims[2]) +
               static_cast<std::size_t>(c[2]);
    }

    Index3 unlinear(std::size_t i) const {
        const auto dz = static_cast<std::size_t>(dims[2]);
        const auto dy = static_cast<std::size_t>(dims[1]);
        return {static_cast<int>(i / (dy * dz)), static_cast<int>((i / dz) % dy), static_cast<int>(i % dz)};
    }

    Vec3 cell_center(const Index3 &c) const {
        return origin + voxel_size * Vec3(c[0] + 0.5, c[1] + 0.5, c[2] + 0.5);
    }

    Aabb bounds() const {
        return {origin, origin + voxel_size * Vec3(dims[0], dims[1], dims[2])};
    }

    bool operator==(const GridSpec &) const = default;
};

/// Dense cell index over a sparse set of stored (J+1)-channel values.
/// Stored voxels are kept in lexicographic coordinate order.
class SparseVolume {
  public:
    SparseVolume() = default;

    SparseVolume(GridSpec spec, int channels) : spec_(std::move(spec)), channels_(channels) {
        spec_.validate();
        if (channels_ < 1) {
            throw ParameterError("volume needs at least one channel");
        }
        index_.assign(spec_.cell_count(), -1);
    }

    const GridSpec &spec() const { return spec_; }
    int channels() const { return channels_; }
    std::size_t size() const { return coords_.size(); }

    const Index3 &coord(std::size_t i) const { return coords_[i]; }

    std::span<const float> value(std::size_t i) const {
        return {values_.data() + i * static_cast<std::size_t>(channels_), static_cast<std::size_t>(channels_)};
    }

    /// Stored value at c, or nullptr for empty or out-of-grid voxels.
    const float *find(const Index3 &c) const {
        if (!spec_.contains(c)) {
            return nullptr;
        }
        const std::int32_t row = index_[spec_.linear(c)];
        return row < 0 ? nullptr : values_.data() + static_cast<std::size_t>(row) * channels_;
    }

    const float *find(const Vec3 &p) const { return find(spec_.cell_of(p)); }

    /// Appends a zero-initialised voxel. Coordinates must arrive in strictly
    /// increasing lexicographic order.
    std::span<float> append(const Index3 &c) {
        if (!spec_.contains(c)) {
            throw InternalError("voxel coordinate outside the grid");
        }
        const std::size_t lin = spec_.linear(c);
        if (!coords_.empty() && spec_.linear(coords_.back()) >= lin) {
            throw InternalError("voxels must be appended in lexicographic order");
        }
        index_[lin] = static_cast<std::int32_t>(coords_.size());
        coords_.push_back(c);
        values_.resize(values_.size() + static_cast<std::size_t>(channels_), 0.0f);
        return {values_.data() + values_.size() - channels_, static_cast<std::size_t>(channels_)};
    }

    /// Row of the stored voxel at linear cell index, or -1.
    std::int32_t row_of(std::size_t linear_index) const { return index_[linear_index]; }

    std::span<float> mutable_value(std::size_t i) {
        return {values_.data() + i * static_cast<std::size_t>(channels_), static_cast<std::size_t>(channels_)};
    }

  private:
    GridSpec spec_;
    int channels_ = 0;
    std::vector<std::int32_t> index_;
    std::vector<Index3> coords_;
    std::vector<float> values_;
};

/// Occupancy count and mean skinning weights per voxel, before diffusion.
struct VoxelVolume {
    SparseVolume grid;
    int kernel_size = kDefaultKernelSize; // sets the padding margin and the default search radius

    int num_joints() const { return grid.channels() - 1; }
};

/// Channel-wise box sums of a VoxelVolume.
struct ConvVolume {
    SparseVolume grid;
    int kernel_size = kDefaultKernelSize;

    int channels() const { return grid.channels(); }
};

inline void check_kernel_size(int kernel_size) {
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw ParameterError("kernel size must be odd and >= 1, got " + std::to_string(kernel_size));
    }
}

/// Grid covering the vertex bounding box plus kernel_size/2 voxels of margin,
/// each axis rounded up to a multiple of 32 with the box centred in the slack.
inline GridSpec plan_grid(std::span<const Vec3> vertices, double voxel_size, int kernel_size) {
    if (vertices.empty()) {
        throw ParameterError("voxelize needs at least one vertex");
    }
    if (!(voxel_size > 0.0)) {
        throw ParameterError("voxel_size must be positive");
    }
    check_kernel_size(kernel_size);
    Vec3 lo = vertices[0];
    Vec3 hi = vertices[0];
    for (const auto &v : vertices) {
        if (!v.allFinite()) {
            throw ParameterError("vertex coordinates must be finite");
        }
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const int margin = kernel_size / 2;
    GridSpec spec;
    spec.voxel_size = voxel_size;
    for (int a = 0; a < 3; ++a) {
        const int span = static_cast<int>(std::floor((hi[a] - lo[a]) / voxel_size)) + 1;
        const int needed = span + 2 * margin;
        const int dims = std::max(kGridAlignment, (needed + kGridAlignment - 1) / kGridAlignment * kGridAlignment);
        const int offset = margin + (dims - needed + 1) / 2;
        spec.dims[a] = dims;
        spec.origin[a] = lo[a] - offset * voxel_size;
    }
    return spec;
}

/// Bins vertices into a sparse volume. Each occupied voxel stores
/// (count, mean weight row renormalised to sum 1).
inline VoxelVolume voxelize(std::span<const Vec3> vertices, const Eigen::MatrixXd &weights, double voxel_size,
                            int kernel_size = kDefaultKernelSize) {
    const GridSpec spec = plan_grid(vertices, voxel_size, kernel_size);
    if (weights.rows() != static_cast<Eigen::Index>(vertices.size()) || weights.cols() < 1) {
        throw ParameterError("weights must have one row per vertex");
    }
    const int j = static_cast<int>(weights.cols());

    std::vector<std::pair<std::size_t, std::size_t>> binned; // (linear cell, vertex)
    binned.reserve(vertices.size());
    for (std::size_t v = 0; v < vertices.size(); ++v) {
        Index3 c = spec.cell_of(vertices[v]);
        for (int a = 0; a < 3; ++a) {
            // rounding can push a box-extreme vertex one cell out when there is no margin
            c[a] = std::clamp(c[a], 0, spec.dims[a] - 1);
        }
        binned.emplace_back(spec.linear(c), v);
    }
    std::sort(binned.begin(), binned.end());

    VoxelVolume out{SparseVolume(spec, j + 1), kernel_size};
    std::vector<double> acc(static_cast<std::size_t>(j));
    for (std::size_t begin = 0; begin < binned.size();) {
        std::size_t end = begin;
        std::fill(acc.begin(), acc.end(), 0.0);
        while (end < binned.size() && binned[end].first == binned[begin].first) {
            const auto v = static_cast<Eigen::Index>(binned[end].second);
            for (int k = 0; k < j; ++k) {
                acc[k] += weights(v, k);
            }
            ++end;
        }
        const double count = static_cast<double>(end - begin);
        double total = 0.0;
        for (auto &a : acc) {
            a /= count;
            total += a;
        }
        auto value = out.grid.append(spec.unlinear(binned[begin].first));
        value[0] = static_cast<float>(count);
        for (int k = 0; k < j; ++k) {
            value[k + 1] = static_cast<float>(total > 0.0 ? acc[k] / total : acc[k]);
        }
        begin = end;
    }
    return out;
}

/// Stride-1, zero-padded, channel-by-channel convolution with a k^3 ones
/// kernel. Output keeps the input grid.
inline ConvVolume conv_diffuse(const VoxelVolume &volume, int kernel_size = kDefaultKernelSize) {
    check_kernel_size(kernel_size);
    const SparseVolume &src = volume.grid;
    const GridSpec &spec = src.spec();
    const int r = kernel_size / 2;
    const int channels = src.channels();

    std::vector<std::uint8_t> touched(spec.cell_count(), 0);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Index3 &c = src.coord(i);
        for (int dx = -r; dx <= r; ++dx) {
            for (int dy = -r; dy <= r; ++dy) {
                for (int dz = -r; dz <= r; ++dz) {
                    const Index3 n{c[0] + dx, c[1] + dy, c[2] + dz};
                    if (spec.contains(n)) {
                        touched[spec.linear(n)] = 1;
                    }
                }
            }
        }
    }

    ConvVolume out{SparseVolume(spec, channels), kernel_size};
    for (std::size_t lin = 0; lin < touched.size(); ++lin) {
        if (touched[lin]) {
            out.grid.append(spec.unlinear(lin));
        }
    }

    std::vector<double> acc(out.grid.size() * static_cast<std::size_t>(channels), 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Index3 &c = src.coord(i);
        const auto value = src.value(i);
        for (int dx = -r; dx <= r; ++dx) {
            for (int dy = -r; dy <= r; ++dy) {
                for (int dz = -r; dz <= r; ++dz) {
                    const Index3 n{c[0] + dx, c[1] + dy, c[2] + dz};
                    if (!spec.contains(n)) {
                        continue;
                    }
                    const auto row = static_cast<std::size_t>(out.grid.row_of(spec.linear(n)));
                    double *dst = acc.data() + row * channels;
                    for (int ch = 0; ch < channels; ++ch) {
                        dst[ch] += value[ch];
                    }
                }
            }
        }
    }
    for (std::size_t row = 0; row < out.grid.size(); ++row) {
        auto dst = out.grid.mutable_value(row);
        for (int ch = 0; ch < channels; ++ch) {
            dst[ch] = static_cast<float>(acc[row * channels + ch]);
        }
    }
    return out;
}

/// Spatial-aware feature at a point: the convolved value of the containing
/// voxel, zero outside the grid or the receptive field.
inline Eigen::VectorXf query_feature(const ConvVolume &conv, const Vec3 &point) {
    Eigen::VectorXf f = Eigen::VectorXf::Zero(conv.channels());
    if (const float *v = conv.grid.find(point)) {
        for (int ch = 0; ch < conv.channels(); ++ch) {
            f[ch] = v[ch];
        }
    }
    return f;
}

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FilterResult {
    std::vector<std::size_t> kept;     // x_r
    std::vector<std::size_t> rejected; // x_o, density forced to zero
    FeatureMatrix features;            // one row per kept point
};

/// Keeps points whose diffused occupancy is positive.
inline FilterResult filter_points(const ConvVolume &conv, std::span<const Vec3> points) {
    FilterResult out;
    std::vector<const float *> rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const float *v = conv.grid.find(points[i]);
        if (v != nullptr && v[0] > 0.0f) {
            out.kept.push_back(i);
            rows.push_back(v);
        } else {
            out.rejected.push_back(i);
        }
    }
    out.features.resize(static_cast<Eigen::Index>(rows.size()), conv.channels());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int ch = 0; ch < conv.channels(); ++ch) {
            out.features(static_cast<Eigen::Index>(i), ch) = rows[i][ch];
        }
    }
    return out;
}

/// Nearest occupied voxel found by expanding Chebyshev shells around the
/// point's voxel. Within a shell the closest voxel centre wins, then the
/// lexicographically smallest coordinate. Returns the stored row, or nullptr
/// when nothing is occupied within max_radius.
inline const float *find_nearest_voxel(const VoxelVolume &volume, const Vec3 &point, int max_radius) {
    const SparseVolume &grid = volume.grid;
    const GridSpec &spec = grid.spec();
    const Index3 c = spec.cell_of(point);
    for (int r = 0; r <= max_radius; ++r) {
        const float *best = nullptr;
        double best_d2 = std::numeric_limits<double>::infinity();
        Index3 best_c{};
        for (int dx = -r; dx <= r; ++dx) {
            for (int dy = -r; dy <= r; ++dy) {
                for (int dz = -r; dz <= r; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) {
                        continue;
                    }
                    const Index3 n{c[0] + dx, c[1] + dy, c[2] + dz};
                    const float *v = grid.find(n);
                    if (v == nullptr) {
                        continue;
                    }
                    const double d2 = (spec.cell_center(n) - point).squaredNorm();
                    if (d2 < best_d2 || (d2 == best_d2 && n < best_c)) {
                        best = v;
                        best_d2 = d2;
                        best_c = n;
                    }
                }
            }
        }
        if (best != nullptr) {
            return best;
        }
    }
    return nullptr;
}

/// As find_nearest_voxel, for points that passed the filter: failure is an
/// internal-consistency error.
inline const float *nearest_voxel(const VoxelVolume &volume, const Vec3 &point, int max_radius) {
    if (const float *v = find_nearest_voxel(volume, point, max_radius)) {
        return v;
    }
    throw InternalError("no occupied voxel within radius " + std::to_string(max_radius) +
                        " of a point that passed the filter");
}

/// Skinning weights of the nearest occupied voxel. max_radius < 0 selects
/// the volume's kernel_size / 2.
inline Eigen::VectorXd nearest_weight(const VoxelVolume &volume, const Vec3 &point, int max_radius = -1) {
    if (max_radius < 0) {
        max_radius = volume.kernel_size / 2;
    }
    const float *v = nearest_voxel(volume, point, max_radius);
    Eigen::VectorXd w(volume.num_joints());
    for (int k = 0; k < volume.num_joints(); ++k) {
        w[k] = v[k + 1];
    }
    return w;
}

} // namespace artinerf
