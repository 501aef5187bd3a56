// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/body_model.hpp"
#include "artinerf/networks.hpp"
#include "artinerf/voxel_grid.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace artinerf {

inline constexpr double kDefaultMaxOffset = 0.1;

/// Weight-blended rigid map: sum_j w_j (R_j x + T_j).
template <typename Weight>
Vec3 rigid_deform(const Vec3 &point, std::span<const Weight> weight, const JointTransforms &transforms) {
    if (static_cast<int>(weight.size()) != transforms.size()) {
        throw ParameterError("weight has " + std::to_string(weight.size()) + " entries, transforms have " +
                             std::to_string(transforms.size()));
    }
    Vec3 out = Vec3::Zero();
    for (std::size_t j = 0; j < weight.size(); ++j) {
        const double w = static_cast<double>(weight[j]);
        if (w != 0.0) {
            out += w * (transforms.rotations[j] * point + transforms.translations[j]);
        }
    }
    return out;
}

inline Vec3 rigid_deform(const Vec3 &point, const Eigen::VectorXd &weight, const JointTransforms &transforms) {
    return rigid_deform(point, std::span<const double>(weight.data(), static_cast<std::size_t>(weight.size())),
                        transforms);
}

struct CanonicalSample {
    Vec3 observation;      // x_r
    Vec3 rigid_canonical;  // after blended rigid deformation
    Vec3 offset;           // refinement output after clamping
    Vec3 refined_canonical; // rigid_canonical + offset
    Eigen::VectorXf feature;
    Eigen::VectorXd weight;
};

struct CanonicalizeOptions {
    bool refine_enabled = true;
    double max_offset = kDefaultMaxOffset; // per-axis clamp on the learned offset
    double feature_scale = 1.0 / 125.0;    // 1 / k^3 for the default kernel
};

inline double feature_scale_for_kernel(int kernel_size) {
    return 1.0 / (static_cast<double>(kernel_size) * kernel_size * kernel_size);
}

inline Vec3 clamp_offset(const Vec3 &offset, double max_offset) {
    return offset.cwiseMax(Vec3::Constant(-max_offset)).cwiseMin(Vec3::Constant(max_offset));
}

/// Canonicalizes filtered points: nearest voxel weights, rigid deformation,
/// then the clamped learned offset. Output order matches input order.
inline std::vector<CanonicalSample> canonicalize_batch(std::span<const Vec3> points, const FeatureMatrix &features,
                                                       const VoxelVolume &volume, const JointTransforms &transforms,
                                                       const MlpParams<float> &refine_params,
                                                       const CanonicalizeOptions &options = {}) {
    if (features.rows() != static_cast<Eigen::Index>(points.size()) || features.cols() != volume.grid.channels()) {
        throw ParameterError("one feature row with J+1 channels per point required");
    }
    const int j = volume.num_joints();
    const int radius = volume.kernel_size / 2;
    std::vector<CanonicalSample> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const float *row = nearest_voxel(volume, points[i], radius);
        CanonicalSample &s = out[i];
        s.observation = points[i];
        s.weight.resize(j);
        for (int k = 0; k < j; ++k) {
            s.weight[k] = row[k + 1];
        }
        s.rigid_canonical = rigid_deform(points[i], s.weight, transforms);
        s.feature = features.row(static_cast<Eigen::Index>(i)).transpose();
        s.offset = Vec3::Zero();
    }
    if (options.refine_enabled && !points.empty()) {
        if (refine_params.arch.input_dim != j + 4 || refine_params.arch.output_dim() != 3) {
            throw ParameterError("refinement network shape does not match the volume channels");
        }
        MlpParams<float>::Matrix in(refine_params.arch.input_dim, static_cast<Eigen::Index>(points.size()));
        for (std::size_t i = 0; i < points.size(); ++i) {
            refine_input_into(std::span<const float>(out[i].feature.data(), static_cast<std::size_t>(j + 1)),
                              points[i], options.feature_scale, in.col(static_cast<Eigen::Index>(i)).data());
        }
        const auto offsets = mlp_forward(refine_params, in);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto c = static_cast<Eigen::Index>(i);
            out[i].offset = clamp_offset(offsets.col(c).cast<double>(), options.max_offset);
        }
    }
    for (auto &s : out) {
        s.refined_canonical = s.rigid_canonical + s.offset;
    }
    return out;
}

} // namespace artinerf
