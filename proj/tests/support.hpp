// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/artinerf.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace artinerf::testing {

inline Vec3 random_vec(Rng &rng, double scale) {
    return Vec3(uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale));
}

inline Pose random_pose(Rng &rng, int joints, double angle = 1.0, double shift = 0.2) {
    Pose p = Pose::rest(joints);
    for (auto &w : p.joint_rotations) {
        w = random_vec(rng, angle);
    }
    p.root_translation = random_vec(rng, shift);
    return p;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name) {
    const auto dir = std::filesystem::temp_directory_path() / ("artinerf_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_bytes(const std::filesystem::path &p) { return read_text_file(p); }

/// In-memory frames of the capsule figure rendered by the analytic oracle.
inline Dataset oracle_dataset(const std::vector<PoseFrame> &poses, int size, const std::string &split = "train",
                              int samples = 256) {
    const SyntheticFigure fig = make_capsule_figure();
    Dataset ds;
    ds.body = fig.body;
    const Camera cam = default_synthetic_camera(size, size);
    for (const auto &p : poses) {
        const OracleImage img = render_oracle(fig, p.pose, cam, Vec3::Zero(), samples);
        ds.frames.push_back({p.frame, split, img.rgb, img.mask(), cam, p.pose});
    }
    return ds;
}

/// Small configuration that trains in seconds.
inline TrainConfig small_config() {
    TrainConfig c;
    c.rays_per_batch = 192;
    c.patch_count = 2;
    c.patch_size = 8;
    c.samples_per_ray = 32;
    c.eval_samples_per_ray = 48;
    c.num_frequencies = 6;
    c.appearance_width = 48;
    c.refine_width = 32;
    c.learning_rate = 2e-3;
    c.chunk_rays = 48;
    return c;
}

} // namespace artinerf::testing
