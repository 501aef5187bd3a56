// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference implementations used by the unit and acceptance tests.

#pragma once

#include "artinerf/artinerf.hpp"

#include <map>
#include <vector>

namespace artinerf::oracle {

struct BinnedVoxel {
    int count = 0;
    std::vector<double> weight_sum;
};

/// Bin-then-count over a given grid, with the same boundary clamp as voxelize.
inline std::map<Index3, BinnedVoxel> bin_vertices(const GridSpec &spec, std::span<const Vec3> vertices,
                                                  const Eigen::MatrixXd &weights) {
    std::map<Index3, BinnedVoxel> out;
    for (std::size_t v = 0; v < vertices.size(); ++v) {
        Index3 c;
        for (int a = 0; a < 3; ++a) {
            c[a] = static_cast<int>(std::floor((vertices[v][a] - spec.origin[a]) / spec.voxel_size));
            c[a] = std::clamp(c[a], 0, spec.dims[a] - 1);
        }
        auto &b = out[c];
        b.weight_sum.resize(static_cast<std::size_t>(weights.cols()), 0.0);
        ++b.count;
        for (Eigen::Index k = 0; k < weights.cols(); ++k) {
            b.weight_sum[static_cast<std::size_t>(k)] += weights(static_cast<Eigen::Index>(v), k);
        }
    }
    return out;
}

/// Dense copy of a sparse volume: cells x channels, zeros for empty cells.
inline std::vector<double> densify(const SparseVolume &vol) {
    const GridSpec &s = vol.spec();
    std::vector<double> d(s.cell_count() * static_cast<std::size_t>(vol.channels()), 0.0);
    for (std::size_t i = 0; i < vol.size(); ++i) {
        const auto v = vol.value(i);
        for (int c = 0; c < vol.channels(); ++c) {
            d[s.linear(vol.coord(i)) * vol.channels() + c] = v[c];
        }
    }
    return d;
}

/// Triple-loop window sum at one cell of a dense volume.
inline std::vector<double> window_sum(const GridSpec &s, const std::vector<double> &dense, int channels, const Index3 &u,
                                      int kernel_size) {
    const int r = kernel_size / 2;
    std::vector<double> acc(static_cast<std::size_t>(channels), 0.0);
    for (int x = u[0] - r; x <= u[0] + r; ++x) {
        for (int y = u[1] - r; y <= u[1] + r; ++y) {
            for (int z = u[2] - r; z <= u[2] + r; ++z) {
                const Index3 n{x, y, z};
                if (!s.contains(n)) {
                    continue;
                }
                for (int c = 0; c < channels; ++c) {
                    acc[c] += dense[s.linear(n) * channels + c];
                }
            }
        }
    }
    return acc;
}

/// Largest |difference| between a convolved volume and the dense window-sum
/// oracle over every cell of the grid; cells the oracle finds empty must be
/// absent. Returns +inf on a structural mismatch.
inline double conv_max_error(const VoxelVolume &src, const ConvVolume &conv) {
    const GridSpec &s = src.grid.spec();
    const int ch = src.grid.channels();
    const auto dense = densify(src.grid);
    double worst = 0.0;
    for (std::size_t lin = 0; lin < s.cell_count(); ++lin) {
        const Index3 u = s.unlinear(lin);
        const auto expect = window_sum(s, dense, ch, u, conv.kernel_size);
        const float *got = conv.grid.find(u);
        if (expect[0] == 0.0) {
            if (got != nullptr) {
                return std::numeric_limits<double>::infinity();
            }
            continue;
        }
        if (got == nullptr) {
            return std::numeric_limits<double>::infinity();
        }
        for (int c = 0; c < ch; ++c) {
            worst = std::max(worst, std::abs(expect[c] - got[c]));
        }
    }
    return worst;
}

/// Exhaustive nearest-occupied-voxel search with the library's ordering:
/// Chebyshev ring, then centre distance, then lexicographic coordinate.
inline const float *nearest_voxel(const VoxelVolume &vol, const Vec3 &p, int max_radius) {
    const GridSpec &s = vol.grid.spec();
    const Index3 c = s.cell_of(p);
    const float *best = nullptr;
    int best_ring = max_radius + 1;
    double best_d2 = 0.0;
    Index3 best_c{};
    for (std::size_t i = 0; i < vol.grid.size(); ++i) {
        const Index3 &n = vol.grid.coord(i);
        const int ring = std::max({std::abs(n[0] - c[0]), std::abs(n[1] - c[1]), std::abs(n[2] - c[2])});
        if (ring > max_radius) {
            continue;
        }
        const double d2 = (s.cell_center(n) - p).squaredNorm();
        const bool better = ring < best_ring || (ring == best_ring && (d2 < best_d2 || (d2 == best_d2 && n < best_c)));
        if (best == nullptr || better) {
            best = vol.grid.value(i).data();
            best_ring = ring;
            best_d2 = d2;
            best_c = n;
        }
    }
    return best;
}

/// Sequential front-to-back compositing written directly from the definitions.
inline std::pair<Vec3, double> composite(const std::vector<Vec3> &c, const std::vector<double> &sigma,
                                         const std::vector<double> &dt) {
    Vec3 color = Vec3::Zero();
    double alpha_acc = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        double t = 1.0;
        for (std::size_t j = 0; j < i; ++j) {
            t *= std::exp(-sigma[j] * dt[j]);
        }
        const double a = 1.0 - std::exp(-sigma[i] * dt[i]);
        color += t * a * c[i];
        alpha_acc += t * a;
    }
    return {color, alpha_acc};
}

} // namespace artinerf::oracle
