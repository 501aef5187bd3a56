// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/body_model.hpp"
#include "artinerf/body_io.hpp"
#include "artinerf/camera.hpp"
#include "artinerf/image.hpp"
#include "artinerf/parallel.hpp"
#include "artinerf/renderer.hpp"
#include "artinerf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace artinerf {

inline constexpr int kOracleSamplesPerRay = 512;

/// Rest-space capsule attached rigidly to one joint.
struct Capsule {
    int joint = 0;
    Vec3 a = Vec3::Zero();
    Vec3 b = Vec3::Zero();
    double radius = 0.1;
    Vec3 albedo = Vec3::Constant(0.5);
};

struct FigureOptions {
    double vertex_spacing = 0.03; // target surface spacing of generated vertices
    double blend_radius = 0.0;    // > 0 blends weights with the parent near each joint
    double sigma_max = 60.0;      // saturated density inside the capsules (1/m)
    double ramp = 0.02;           // width of the density falloff at the surface (m)
};

/// Capsule-limb figure: a body model whose vertices cover the capsule surfaces,
/// plus the analytic density used as ground truth.
struct SyntheticFigure {
    BodyModel body;
    std::vector<Capsule> capsules;
    double sigma_max = 60.0;
    double ramp = 0.02;
};

inline double segment_distance(const Vec3 &p, const Vec3 &a, const Vec3 &b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

/// Points on the capsule surface: two poles plus rings spaced evenly in
/// meridian arclength (cap, cylinder, cap).
inline std::vector<Vec3> capsule_surface(const Capsule &c, double spacing) {
    const Vec3 axis_vec = c.b - c.a;
    const double len = axis_vec.norm();
    const Vec3 axis = len > 0.0 ? Vec3(axis_vec / len) : Vec3(Vec3::UnitY());
    const Vec3 helper = std::abs(axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 u = axis.cross(helper).normalized();
    const Vec3 v = axis.cross(u);
    const double r = c.radius;
    const double cap = 0.5 * std::numbers::pi * r;
    const double total = 2.0 * cap + len;
    const int rings = std::max(1, static_cast<int>(std::ceil(total / spacing)) - 1);
    const int segments = std::max(3, static_cast<int>(std::ceil(2.0 * std::numbers::pi * r / spacing)));

    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(rings) * segments + 2);
    pts.push_back(c.a - r * axis);
    for (int i = 1; i <= rings; ++i) {
        const double s = total * i / (rings + 1);
        double axial;
        double ring_r;
        if (s < cap) {
            const double phi = s / r; // from the pole
            axial = -r * std::cos(phi);
            ring_r = r * std::sin(phi);
        } else if (s <= cap + len) {
            axial = s - cap;
            ring_r = r;
        } else {
            const double phi = (s - cap - len) / r;
            axial = len + r * std::sin(phi);
            ring_r = r * std::cos(phi);
        }
        for (int k = 0; k < segments; ++k) {
            const double theta = 2.0 * std::numbers::pi * k / segments;
            pts.push_back(c.a + axial * axis + ring_r * (std::cos(theta) * u + std::sin(theta) * v));
        }
    }
    pts.push_back(c.b + r * axis);
    return pts;
}

/// Builds vertices and skin weights from capsules and a joint tree.
inline SyntheticFigure build_figure(std::vector<int> parents, std::vector<Vec3> rest_joints, std::vector<Capsule> capsules,
                                    const FigureOptions &opt = {}) {
    SyntheticFigure fig;
    fig.capsules = std::move(capsules);
    fig.sigma_max = opt.sigma_max;
    fig.ramp = opt.ramp;
    fig.body.parents = std::move(parents);
    fig.body.rest_joints = std::move(rest_joints);
    const int j = static_cast<int>(fig.body.parents.size());
    std::vector<std::vector<double>> rows;
    for (const auto &c : fig.capsules) {
        if (c.joint < 0 || c.joint >= j) {
            throw ParameterError("capsule joint index out of range");
        }
        for (const auto &p : capsule_surface(c, opt.vertex_spacing)) {
            std::vector<double> w(static_cast<std::size_t>(j), 0.0);
            const int parent = fig.body.parents[c.joint];
            double self = 1.0;
            if (opt.blend_radius > 0.0 && parent >= 0) {
                const double along = (p - fig.body.rest_joints[c.joint]).dot((c.b - c.a).normalized());
                self = std::clamp(0.5 + 0.5 * along / opt.blend_radius, 0.5, 1.0);
            }
            w[c.joint] = self;
            if (self < 1.0) {
                w[parent] = 1.0 - self;
            }
            fig.body.rest_vertices.push_back(p);
            rows.push_back(std::move(w));
        }
    }
    fig.body.skin_weights.resize(static_cast<Eigen::Index>(rows.size()), j);
    for (std::size_t v = 0; v < rows.size(); ++v) {
        for (int k = 0; k < j; ++k) {
            fig.body.skin_weights(static_cast<Eigen::Index>(v), k) = rows[v][k];
        }
    }
    fig.body.validate();
    return fig;
}

/// Default four-joint figure: torso (root), left upper arm, left forearm, right arm.
inline SyntheticFigure make_capsule_figure(const FigureOptions &opt = {}) {
    std::vector<int> parents{-1, 0, 1, 0};
    std::vector<Vec3> joints{Vec3(0.0, 0.0, 0.0), Vec3(0.22, 0.28, 0.0), Vec3(0.52, 0.28, 0.0), Vec3(-0.22, 0.28, 0.0)};
    std::vector<Capsule> caps{
        {0, Vec3(0.0, -0.3, 0.0), Vec3(0.0, 0.3, 0.0), 0.17, Vec3(0.85, 0.35, 0.25)},
        {1, Vec3(0.24, 0.28, 0.0), Vec3(0.50, 0.28, 0.0), 0.07, Vec3(0.2, 0.55, 0.9)},
        {2, Vec3(0.56, 0.28, 0.0), Vec3(0.80, 0.28, 0.0), 0.06, Vec3(0.3, 0.85, 0.35)},
        {3, Vec3(-0.24, 0.28, 0.0), Vec3(-0.74, 0.28, 0.0), 0.07, Vec3(0.95, 0.8, 0.2)},
    };
    return build_figure(std::move(parents), std::move(joints), std::move(caps), opt);
}

/// Random kinematic chain figure with one capsule per joint, for property tests.
inline SyntheticFigure make_random_figure(std::uint64_t seed, int num_joints, const FigureOptions &opt = {}) {
    if (num_joints < 1) {
        throw ParameterError("a figure needs at least one joint");
    }
    Rng rng(seed);
    std::vector<int> parents{-1};
    std::vector<Vec3> joints{Vec3(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1))};
    std::vector<Capsule> caps;
    auto random_dir = [&] {
        Vec3 d;
        do {
            d = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
        } while (d.norm() < 0.2 || d.norm() > 1.0);
        return Vec3(d.normalized());
    };
    std::vector<Vec3> tips;
    for (int k = 0; k < num_joints; ++k) {
        if (k > 0) {
            const int p = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(k)));
            parents.push_back(p);
            joints.push_back(tips[static_cast<std::size_t>(p)]);
        }
        const Vec3 dir = random_dir();
        const double len = uniform(rng, 0.1, 0.35);
        const double r = uniform(rng, 0.04, 0.1);
        Capsule c;
        c.joint = k;
        c.a = joints[static_cast<std::size_t>(k)];
        c.b = c.a + len * dir;
        c.radius = r;
        c.albedo = Vec3(uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9));
        tips.push_back(c.b);
        caps.push_back(c);
    }
    return build_figure(std::move(parents), std::move(joints), std::move(caps), opt);
}

/// Analytic density and colour at an observation-space point.
struct FieldSample {
    double sigma = 0.0;
    Vec3 color = Vec3::Zero();
};

inline FieldSample figure_field(const SyntheticFigure &fig, const JointTransforms &transforms, const Vec3 &x) {
    FieldSample out;
    for (const auto &c : fig.capsules) {
        const Vec3 xc = transforms.rotations[c.joint] * x + transforms.translations[c.joint];
        const double d = segment_distance(xc, c.a, c.b);
        const double s = fig.sigma_max * std::clamp(0.5 + (c.radius - d) / fig.ramp, 0.0, 1.0);
        if (s > out.sigma) {
            out.sigma = s;
            out.color = c.albedo;
        }
    }
    return out;
}

/// Observation-space bounds of the posed capsules, padded by the falloff.
inline Aabb figure_bounds(const SyntheticFigure &fig, const Pose &pose) {
    const auto bones = bone_transforms(fig.body, pose);
    Aabb box{Vec3::Constant(std::numeric_limits<double>::infinity()),
             Vec3::Constant(-std::numeric_limits<double>::infinity())};
    for (const auto &c : fig.capsules) {
        const double pad = c.radius + fig.ramp;
        for (const Vec3 &e : {c.a, c.b}) {
            const Vec3 p = bones[c.joint].apply(e);
            box.lo = box.lo.cwiseMin(p - Vec3::Constant(pad));
            box.hi = box.hi.cwiseMax(p + Vec3::Constant(pad));
        }
    }
    return box;
}

struct OracleImage {
    Image rgb;
    std::vector<float> alpha;

    /// Binary foreground mask: accumulated alpha above 0.5.
    Image mask() const {
        Image m(rgb.width, rgb.height, 1);
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            m.data[i] = alpha[i] > 0.5f ? 1.0f : 0.0f;
        }
        return m;
    }
};

/// Ray-marches the analytic field with bin-centre samples; independent of
/// every learned component.
inline OracleImage render_oracle(const SyntheticFigure &fig, const Pose &pose, const Camera &camera,
                                 const Vec3 &background = Vec3::Zero(), int samples_per_ray = kOracleSamplesPerRay,
                                 int threads = 1) {
    camera.validate();
    const JointTransforms transforms = joint_transforms(fig.body, pose);
    const Aabb box = figure_bounds(fig, pose);
    OracleImage out;
    out.rgb = Image(camera.width, camera.height, 3);
    out.alpha.assign(static_cast<std::size_t>(camera.width) * camera.height, 0.0f);
    parallel_for(static_cast<std::size_t>(camera.height), threads, [&](std::size_t row) {
        const int y = static_cast<int>(row);
        std::vector<Vec3> colors;
        for (int x = 0; x < camera.width; ++x) {
            RaySamples s = sample_ray(camera.pixel_ray(x, y), box, samples_per_ray);
            for (std::size_t i = 0; i < s.size(); ++i) {
                const FieldSample f = figure_field(fig, transforms, s.positions[i]);
                s.sigma[i] = f.sigma;
                s.color[i] = f.color;
            }
            const CompositeResult c = composite(s);
            const Vec3 rgb = c.color + c.transmittance * background;
            const std::size_t p = static_cast<std::size_t>(y) * camera.width + x;
            for (int ch = 0; ch < 3; ++ch) {
                out.rgb.data[p * 3 + ch] = static_cast<float>(rgb[ch]);
            }
            out.alpha[p] = static_cast<float>(c.alpha);
        }
    });
    return out;
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a <= -std::numbers::pi) {
        a += two_pi;
    } else if (a > std::numbers::pi) {
        a -= two_pi;
    }
    return a;
}

/// Training script for the default figure: the figure turns about the
/// vertical axis once per `period` frames with small periodic arm waves.
inline std::vector<PoseFrame> spin_script(int num_frames, int period, double wave_phase = 0.0) {
    if (num_frames < 1 || period < 1) {
        throw ParameterError("frame count and period must be positive");
    }
    std::vector<PoseFrame> out;
    for (int f = 0; f < num_frames; ++f) {
        const double phase = 2.0 * std::numbers::pi * (f % period) / period;
        const double wave = 2.0 * phase + wave_phase;
        Pose p = Pose::rest(4);
        p.joint_rotations[0] = Vec3(0.0, wrap_angle(phase), 0.0);
        p.joint_rotations[1] = Vec3(0.0, 0.0, 0.2 * std::sin(wave));
        p.joint_rotations[2] = Vec3(0.0, 0.0, 0.15 * std::sin(wave + 1.0));
        p.joint_rotations[3] = Vec3(0.0, 0.0, -0.2 * std::sin(wave + 0.5));
        out.push_back({f, p});
    }
    return out;
}

/// Novel-pose script for the default figure: strong shoulder and elbow
/// articulation with only a small body turn.
inline std::vector<PoseFrame> articulated_script(int num_frames, double phase = 0.0) {
    if (num_frames < 1) {
        throw ParameterError("frame count must be positive");
    }
    std::vector<PoseFrame> out;
    for (int f = 0; f < num_frames; ++f) {
        const double t = 2.0 * std::numbers::pi * f / num_frames + phase;
        Pose p = Pose::rest(4);
        p.joint_rotations[0] = Vec3(0.0, 0.35 * std::sin(t), 0.0);
        p.joint_rotations[1] = Vec3(0.3 * std::sin(2.0 * t), 0.0, 0.5 + 0.6 * std::sin(1.5 * t));
        p.joint_rotations[2] = Vec3(0.0, -0.4 * std::sin(t), 0.6 + 0.6 * std::cos(t));
        p.joint_rotations[3] = Vec3(0.0, 0.5 * std::sin(t + 0.7), -0.7 - 0.5 * std::cos(2.0 * t));
        out.push_back({f, p});
    }
    return out;
}

/// Default synthetic camera: looks at the figure from the front (-z side).
inline Camera default_synthetic_camera(int width = 64, int height = 64) {
    const double focal = 84.0 * width / 64.0;
    return Camera::look_at(Vec3(0.0, 0.2, -2.6), Vec3(0.0, 0.2, 0.0), Vec3::UnitY(), width, height, focal);
}

} // namespace artinerf
