// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/error.hpp"
#include "artinerf/types.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace artinerf {

// Joint count of a full human body model; the synthetic figures use fewer.
inline constexpr int kDefaultNumJoints = 24;

/// Explicit articulated prior: rest-pose mesh vertices, per-vertex skinning
/// weights, kinematic tree and rest joint centers.
///
/// The rest pose is the pose with all joint rotations zero. Joint centers are
/// stored explicitly, there is no joint regressor.
struct BodyModel {
    std::vector<Vec3> rest_vertices;
    Eigen::MatrixXd skin_weights; // N x J, row-stochastic
    std::vector<int> parents;     // parents[0] == -1, parents[j] < j otherwise
    std::vector<Vec3> rest_joints;

    int num_vertices() const { return static_cast<int>(rest_vertices.size()); }
    int num_joints() const { return static_cast<int>(parents.size()); }

    /// Throws ParameterError describing the first violated invariant.
    void validate() const {
        const int n = num_vertices();
        const int j = num_joints();
        if (j < 1) {
            throw ParameterError("body model needs at least one joint");
        }
        if (n < j) {
            throw ParameterError("body model needs at least as many vertices as joints (N=" + std::to_string(n) +
                                 ", J=" + std::to_string(j) + ")");
        }
        if (static_cast<int>(rest_joints.size()) != j) {
            throw ParameterError("rest_joints has " + std::to_string(rest_joints.size()) + " entries, expected " +
                                 std::to_string(j));
        }
        if (skin_weights.rows() != n || skin_weights.cols() != j) {
            throw ParameterError("skin_weights must be N x J");
        }
        if (parents[0] != -1) {
            throw ParameterError("joint 0 must be the root (parent -1)");
        }
        for (int k = 1; k < j; ++k) {
            if (parents[k] < 0 || parents[k] >= k) {
                throw ParameterError("parents must be topologically ordered (0 <= parent < child); joint " +
                                     std::to_string(k) + " has parent " + std::to_string(parents[k]) +
                                     " (cycle or forward reference)");
            }
        }
        for (int v = 0; v < n; ++v) {
            if (!rest_vertices[v].allFinite()) {
                throw ParameterError("vertex " + std::to_string(v) + " is not finite");
            }
            double sum = 0.0;
            for (int k = 0; k < j; ++k) {
                const double w = skin_weights(v, k);
                if (!(w >= 0.0)) {
                    throw ParameterError("skin weight (" + std::to_string(v) + "," + std::to_string(k) +
                                         ") is negative or not finite");
                }
                sum += w;
            }
            if (std::abs(sum - 1.0) > 1e-6) {
                throw ParameterError("skin weight row " + std::to_string(v) + " sums to " + std::to_string(sum));
            }
        }
    }
};

/// One frame: axis-angle rotation per joint plus a root translation. The root
/// translation is carried here rather than folded into the camera.
struct Pose {
    std::vector<Vec3> joint_rotations;
    Vec3 root_translation = Vec3::Zero();

    static Pose rest(int num_joints) {
        Pose p;
        p.joint_rotations.assign(static_cast<std::size_t>(num_joints), Vec3::Zero());
        return p;
    }
};

/// Rigid map x -> rotation * x + translation.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3 &x) const { return rotation * x + translation; }

    RigidTransform then(const RigidTransform &inner) const {
        return {rotation * inner.rotation, rotation * inner.translation + translation};
    }

    RigidTransform inverse() const {
        const Mat3 rt = rotation.transpose();
        return {rt, -(rt * translation)};
    }
};

/// Per-joint observation-to-canonical rigid maps: x_cnl = R_j x + T_j.
struct JointTransforms {
    std::vector<Mat3> rotations;
    std::vector<Vec3> translations;

    int size() const { return static_cast<int>(rotations.size()); }

    static JointTransforms identity(int num_joints) {
        JointTransforms t;
        t.rotations.assign(static_cast<std::size_t>(num_joints), Mat3::Identity());
        t.translations.assign(static_cast<std::size_t>(num_joints), Vec3::Zero());
        return t;
    }
};

inline Mat3 skew(const Vec3 &v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

/// Axis-angle vector to rotation matrix.
inline Mat3 rodrigues(const Vec3 &omega) {
    const double theta = omega.norm();
    const Mat3 k = skew(omega);
    if (theta < 1e-8) {
        // second-order series; exact identity at zero
        return Mat3::Identity() + k + 0.5 * k * k;
    }
    const double s = std::sin(theta) / theta;
    const double c = (1.0 - std::cos(theta)) / (theta * theta);
    return Mat3::Identity() + s * k + c * k * k;
}

/// Wraps the rotation angle into [0, 2*pi) keeping the axis.
inline Vec3 normalize_axis_angle(const Vec3 &omega) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double theta = omega.norm();
    if (theta < two_pi) {
        return omega;
    }
    const double wrapped = std::fmod(theta, two_pi);
    return omega * (wrapped / theta);
}

inline void check_pose(const BodyModel &model, const Pose &pose) {
    if (static_cast<int>(pose.joint_rotations.size()) != model.num_joints()) {
        throw ParameterError("pose has " + std::to_string(pose.joint_rotations.size()) + " joint rotations, model has " +
                             std::to_string(model.num_joints()) + " joints");
    }
}

/// Forward (canonical -> observation) rigid map of each joint's bone.
inline std::vector<RigidTransform> bone_transforms(const BodyModel &model, const Pose &pose) {
    check_pose(model, pose);
    const int j = model.num_joints();
    // world transform of each posed joint frame
    std::vector<RigidTransform> posed(static_cast<std::size_t>(j));
    for (int k = 0; k < j; ++k) {
        RigidTransform local;
        local.rotation = rodrigues(pose.joint_rotations[k]);
        if (k == 0) {
            local.translation = model.rest_joints[0] + pose.root_translation;
            posed[0] = local;
        } else {
            const int p = model.parents[k];
            local.translation = model.rest_joints[k] - model.rest_joints[p];
            posed[k] = posed[p].then(local);
        }
    }
    // compose with the inverse canonical joint frame (identity rotation at rest)
    std::vector<RigidTransform> bones(static_cast<std::size_t>(j));
    for (int k = 0; k < j; ++k) {
        RigidTransform canonical_inv;
        canonical_inv.translation = -model.rest_joints[k];
        bones[k] = posed[k].then(canonical_inv);
    }
    return bones;
}

/// Observation-to-canonical transforms (R_j, T_j) for every joint.
inline JointTransforms joint_transforms(const BodyModel &model, const Pose &pose) {
    const auto bones = bone_transforms(model, pose);
    JointTransforms out;
    out.rotations.reserve(bones.size());
    out.translations.reserve(bones.size());
    for (const auto &b : bones) {
        const RigidTransform inv = b.inverse();
        out.rotations.push_back(inv.rotation);
        out.translations.push_back(inv.translation);
    }
    return out;
}

/// Forward linear blend skinning of the rest vertices.
inline std::vector<Vec3> pose_vertices(const BodyModel &model, const Pose &pose) {
    const auto bones = bone_transforms(model, pose);
    const int n = model.num_vertices();
    const int j = model.num_joints();
    std::vector<Vec3> out(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        Vec3 acc = Vec3::Zero();
        for (int k = 0; k < j; ++k) {
            const double w = model.skin_weights(v, k);
            if (w != 0.0) {
                acc += w * bones[k].apply(model.rest_vertices[v]);
            }
        }
        out[v] = acc;
    }
    return out;
}

} // namespace artinerf
