// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>

namespace artinerf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec3f = Eigen::Vector3f;

/// Integer voxel coordinate (x, y, z).
using Index3 = std::array<int, 3>;

/// Axis-aligned box.
struct Aabb {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
};

} // namespace artinerf
