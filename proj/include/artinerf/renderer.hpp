// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/body_model.hpp"
#include "artinerf/camera.hpp"
#include "artinerf/canonicalize.hpp"
#include "artinerf/encoding.hpp"
#include "artinerf/image.hpp"
#include "artinerf/networks.hpp"
#include "artinerf/parallel.hpp"
#include "artinerf/rng.hpp"
#include "artinerf/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace artinerf {

inline constexpr int kDefaultSamplesPerRay = 128;

/// Slab test. Returns [t_near, t_far] clipped to t >= 0, or nothing on a miss.
inline std::optional<std::pair<double, double>> intersect_aabb(const Ray &ray, const Aabb &box) {
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double d = ray.direction[a];
        if (std::abs(d) < 1e-15) {
            if (ray.origin[a] < box.lo[a] || ray.origin[a] > box.hi[a]) {
                return std::nullopt;
            }
            continue;
        }
        double ta = (box.lo[a] - ray.origin[a]) / d;
        double tb = (box.hi[a] - ray.origin[a]) / d;
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t1 > t0)) {
        return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

/// Samples along one ray, plus the per-sample state filled in by rendering.
struct RaySamples {
    Ray ray;
    double t_near = 0.0;
    double t_far = 0.0;
    std::vector<double> t;
    std::vector<double> dt;
    std::vector<Vec3> positions;
    std::vector<std::uint8_t> kept;
    std::vector<Vec3> color;
    std::vector<double> sigma;

    std::size_t size() const { return t.size(); }
};

/// N_s samples between the ray's entry and exit of `box`: bin centres, or one
/// uniform draw per bin when `jitter` is given (values in [0, 1)). The last
/// segment length is the bin width.
inline RaySamples sample_ray(const Ray &ray, const Aabb &box, int num_samples, std::span<const double> jitter = {}) {
    if (num_samples < 1) {
        throw ParameterError("samples per ray must be >= 1");
    }
    RaySamples s;
    s.ray = ray;
    const auto hit = intersect_aabb(ray, box);
    if (!hit) {
        return s;
    }
    s.t_near = hit->first;
    s.t_far = hit->second;
    const double bin = (s.t_far - s.t_near) / num_samples;
    s.t.resize(static_cast<std::size_t>(num_samples));
    for (int i = 0; i < num_samples; ++i) {
        const double u = jitter.empty() ? 0.5 : jitter[static_cast<std::size_t>(i)];
        s.t[i] = s.t_near + (i + u) * bin;
    }
    s.dt.resize(s.t.size());
    for (std::size_t i = 0; i + 1 < s.t.size(); ++i) {
        s.dt[i] = s.t[i + 1] - s.t[i];
    }
    s.dt.back() = bin;
    s.positions.resize(s.t.size());
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        s.positions[i] = ray.origin + s.t[i] * ray.direction;
    }
    s.kept.assign(s.t.size(), 1);
    s.color.assign(s.t.size(), Vec3::Zero());
    s.sigma.assign(s.t.size(), 0.0);
    return s;
}

/// Stratified variant drawing one uniform per bin from rng (always N_s draws).
inline RaySamples sample_ray(const Ray &ray, const Aabb &box, int num_samples, bool stratified, Rng &rng) {
    if (!stratified) {
        return sample_ray(ray, box, num_samples);
    }
    std::vector<double> jitter(static_cast<std::size_t>(std::max(num_samples, 0)));
    for (auto &u : jitter) {
        u = uniform01(rng);
    }
    return sample_ray(ray, box, num_samples, jitter);
}

struct CompositeResult {
    Vec3 color = Vec3::Zero();  // sum_i T_i alpha_i c_i, no background
    double alpha = 0.0;         // accumulated alpha
    double transmittance = 1.0; // prod_i (1 - alpha_i)
};

/// Front-to-back alpha compositing with alpha_i = 1 - exp(-sigma_i dt_i).
template <typename ColorT>
CompositeResult composite(std::span<const ColorT> colors, std::span<const double> sigma, std::span<const double> dt) {
    CompositeResult r;
    double acc = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        const double a = 1.0 - std::exp(-sigma[i] * dt[i]);
        const double w = r.transmittance * a;
        r.color += w * colors[i].template cast<double>();
        acc += w;
        r.transmittance *= 1.0 - a;
    }
    r.alpha = acc;
    return r;
}

/// Composites a sampled ray; samples whose kept flag is false contribute zero density.
inline CompositeResult composite(const RaySamples &s) {
    std::vector<double> sigma(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        sigma[i] = s.kept[i] ? s.sigma[i] : 0.0;
    }
    return composite(std::span<const Vec3>(s.color), std::span<const double>(sigma), std::span<const double>(s.dt));
}

/// Gradients of <d_pixel, color + transmittance * background> with respect
/// to each sample's color and density.
template <typename ColorT>
void composite_backward(std::span<const ColorT> colors, std::span<const double> sigma, std::span<const double> dt,
                        const Vec3 &background, const Vec3 &d_pixel, std::span<Vec3> d_colors,
                        std::span<double> d_sigma) {
    const std::size_t n = sigma.size();
    std::vector<double> trans(n + 1);
    std::vector<double> weight(n);
    trans[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double decay = std::exp(-sigma[i] * dt[i]);
        weight[i] = trans[i] * (1.0 - decay);
        trans[i + 1] = trans[i] * decay;
    }
    double suffix = trans[n] * d_pixel.dot(background);
    for (std::size_t k = n; k-- > 0;) {
        const double gc = d_pixel.dot(colors[k].template cast<double>());
        d_colors[k] = weight[k] * d_pixel;
        d_sigma[k] = dt[k] * (trans[k + 1] * gc - suffix);
        suffix += weight[k] * gc;
    }
}

struct RenderConfig {
    int samples_per_ray = kDefaultSamplesPerRay;
    bool filter_enabled = true;
    Vec3 background = Vec3::Zero();
    EncodingSpec encoding;
    double voxel_size = kDefaultVoxelSize;
    int kernel_size = kDefaultKernelSize;
    bool refine_enabled = true;
    double max_offset = kDefaultMaxOffset;
    int threads = 1;
    int chunk_rays = 256;
};

/// Per-pose state: observation-space volumes and joint transforms.
struct FrameVolumes {
    VoxelVolume voxels;
    ConvVolume conv;
    JointTransforms transforms;
};

inline FrameVolumes build_frame_volumes(const BodyModel &body, const Pose &pose, double voxel_size, int kernel_size) {
    const auto posed = pose_vertices(body, pose);
    FrameVolumes f;
    f.voxels = voxelize(posed, body.skin_weights, voxel_size, kernel_size);
    f.conv = conv_diffuse(f.voxels, kernel_size);
    f.transforms = joint_transforms(body, pose);
    return f;
}

struct RenderStats {
    std::size_t rays = 0;
    std::size_t total_samples = 0;
    std::size_t kept_samples = 0;
    std::size_t network_evaluations = 0;

    RenderStats &operator+=(const RenderStats &o) {
        rays += o.rays;
        total_samples += o.total_samples;
        kept_samples += o.kept_samples;
        network_evaluations += o.network_evaluations;
        return *this;
    }
};

/// Forward state of a batch of rays. Only samples evaluated by the networks
/// are stored; filtered samples have zero density and drop out of compositing.
struct RayChunk {
    using Matrix = MlpParams<float>::Matrix;

    std::vector<int> sample_begin; // per ray, size rays + 1
    std::vector<double> dt;
    std::vector<Vec3> x_observation;
    std::vector<Vec3> x_canonical;
    Matrix refine_input;
    Matrix refine_raw; // 3 x S, before clamping
    MlpCache<float> refine_cache;
    AppearanceBatch<float> appearance;
    std::vector<Vec3> pixel_color; // background included
    std::vector<double> pixel_alpha;
    RenderStats stats;
};

/// Runs sample -> filter -> canonicalize -> encode -> appearance -> composite
/// for a batch of rays. `jitter`, when non-empty, holds samples_per_ray
/// uniforms per ray. With `keep_cache` the activations needed by
/// backward_chunk are retained.
inline RayChunk forward_chunk(const FrameVolumes &frame, const MlpParams<float> &refine_params,
                              const MlpParams<float> &appearance_params, const RenderConfig &config,
                              std::span<const Ray> rays, std::span<const double> jitter = {},
                              bool keep_cache = false) {
    using Matrix = RayChunk::Matrix;
    const int ns = config.samples_per_ray;
    const int j = frame.voxels.num_joints();
    const int channels = j + 1;
    const int radius = frame.voxels.kernel_size / 2;
    const double feature_scale = feature_scale_for_kernel(frame.conv.kernel_size);
    const Aabb box = frame.voxels.grid.spec().bounds();

    RayChunk c;
    c.stats.rays = rays.size();
    c.sample_begin.reserve(rays.size() + 1);
    std::vector<const float *> features;
    std::vector<const float *> weights;
    std::vector<float> root_weight(static_cast<std::size_t>(channels), 0.0f);
    root_weight[1] = 1.0f;
    std::vector<float> zero_feature(static_cast<std::size_t>(channels), 0.0f);

    for (std::size_t r = 0; r < rays.size(); ++r) {
        c.sample_begin.push_back(static_cast<int>(c.dt.size()));
        const auto jit = jitter.empty() ? std::span<const double>() : jitter.subspan(r * ns, static_cast<std::size_t>(ns));
        const RaySamples s = sample_ray(rays[r], box, ns, jit);
        c.stats.total_samples += s.size();
        for (std::size_t i = 0; i < s.size(); ++i) {
            const float *f = frame.conv.grid.find(s.positions[i]);
            const bool occupied = f != nullptr && f[0] > 0.0f;
            if (config.filter_enabled && !occupied) {
                continue;
            }
            const float *w = find_nearest_voxel(frame.voxels, s.positions[i], radius);
            if (w == nullptr) {
                if (config.filter_enabled) {
                    throw InternalError("filtered sample has no occupied voxel within the kernel radius");
                }
                // unfiltered ablation: off-body samples follow the root joint
                w = root_weight.data();
            }
            if (occupied) {
                ++c.stats.kept_samples;
            }
            features.push_back(occupied ? f : zero_feature.data());
            weights.push_back(w);
            c.dt.push_back(s.dt[i]);
            c.x_observation.push_back(s.positions[i]);
        }
    }
    c.sample_begin.push_back(static_cast<int>(c.dt.size()));

    const auto n = static_cast<Eigen::Index>(c.dt.size());
    c.stats.network_evaluations = static_cast<std::size_t>(n);
    c.x_canonical.resize(c.dt.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        c.x_canonical[i] = rigid_deform(c.x_observation[i], std::span<const float>(weights[i] + 1, static_cast<std::size_t>(j)),
                                        frame.transforms);
    }
    if (config.refine_enabled && n > 0) {
        c.refine_input.resize(refine_params.arch.input_dim, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            refine_input_into(std::span<const float>(features[i], static_cast<std::size_t>(channels)), c.x_observation[i],
                              feature_scale, c.refine_input.col(i).data());
        }
        c.refine_raw = mlp_forward(refine_params, c.refine_input, keep_cache ? &c.refine_cache : nullptr);
        for (Eigen::Index i = 0; i < n; ++i) {
            c.x_canonical[i] += clamp_offset(c.refine_raw.col(i).cast<double>(), config.max_offset);
        }
    }

    const Matrix encoded = pe_encode_batch<float>(c.x_canonical, config.encoding);
    if (n > 0) {
        c.appearance = appearance_forward_batch(appearance_params, encoded, keep_cache);
    }

    c.pixel_color.resize(rays.size());
    c.pixel_alpha.resize(rays.size());
    std::vector<double> sigma;
    std::vector<Eigen::Vector3f> colors;
    for (std::size_t r = 0; r < rays.size(); ++r) {
        const int b = c.sample_begin[r];
        const int e = c.sample_begin[r + 1];
        sigma.resize(static_cast<std::size_t>(e - b));
        colors.resize(static_cast<std::size_t>(e - b));
        for (int i = b; i < e; ++i) {
            sigma[i - b] = c.appearance.density(0, i);
            colors[i - b] = c.appearance.color.col(i);
        }
        const auto res = composite(std::span<const Eigen::Vector3f>(colors), std::span<const double>(sigma),
                                   std::span<const double>(c.dt.data() + b, static_cast<std::size_t>(e - b)));
        c.pixel_color[r] = res.color + res.transmittance * config.background;
        c.pixel_alpha[r] = res.alpha;
    }
    return c;
}

struct NetworkGradients {
    Gradients<float> refine;
    Gradients<float> appearance;
};

/// Accumulates into `grads` the parameter gradients of sum_r <d_pixel[r], pixel_color[r]>.
inline void backward_chunk(const RayChunk &c, const MlpParams<float> &refine_params,
                           const MlpParams<float> &appearance_params, const RenderConfig &config,
                           std::span<const Vec3> d_pixel, NetworkGradients &grads) {
    using Matrix = RayChunk::Matrix;
    const auto n = static_cast<Eigen::Index>(c.dt.size());
    if (n == 0) {
        return;
    }
    if (c.appearance.cache.pre.empty()) {
        throw ParameterError("backward_chunk needs a forward pass run with keep_cache");
    }
    Matrix d_color(3, n);
    Matrix d_density(1, n);
    std::vector<double> sigma;
    std::vector<Eigen::Vector3f> colors;
    std::vector<Vec3> dc;
    std::vector<double> ds;
    for (std::size_t r = 0; r + 1 < c.sample_begin.size(); ++r) {
        const int b = c.sample_begin[r];
        const int e = c.sample_begin[r + 1];
        const auto m = static_cast<std::size_t>(e - b);
        sigma.resize(m);
        colors.resize(m);
        dc.resize(m);
        ds.resize(m);
        for (int i = b; i < e; ++i) {
            sigma[i - b] = c.appearance.density(0, i);
            colors[i - b] = c.appearance.color.col(i);
        }
        composite_backward(std::span<const Eigen::Vector3f>(colors), std::span<const double>(sigma),
                           std::span<const double>(c.dt.data() + b, m), config.background, d_pixel[r],
                           std::span<Vec3>(dc), std::span<double>(ds));
        for (int i = b; i < e; ++i) {
            d_color.col(i) = dc[i - b].cast<float>();
            d_density(0, i) = static_cast<float>(ds[i - b]);
        }
    }
    Matrix d_encoded;
    appearance_backward_batch(appearance_params, c.appearance, d_color, d_density, grads.appearance,
                              config.refine_enabled ? &d_encoded : nullptr);
    if (!config.refine_enabled) {
        return;
    }
    Matrix d_offset(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 dx = pe_backward(c.x_canonical[i], config.encoding, d_encoded.col(i).data());
        for (int a = 0; a < 3; ++a) {
            const bool clamped = std::abs(c.refine_raw(a, i)) >= config.max_offset;
            d_offset(a, i) = clamped ? 0.0f : static_cast<float>(dx[a]);
        }
    }
    mlp_backward(refine_params, c.refine_cache, d_offset, grads.refine);
}

struct RenderedImage {
    Image rgb;
    std::vector<float> alpha; // accumulated alpha, row-major
    RenderStats stats;
};

/// Renders every pixel of `camera` for a prepared frame.
inline RenderedImage render_volumes(const FrameVolumes &frame, const MlpParams<float> &refine_params,
                                    const MlpParams<float> &appearance_params, const Camera &camera,
                                    const RenderConfig &config) {
    camera.validate();
    const auto rays = generate_rays(camera, all_pixels(camera));
    const std::size_t chunk = static_cast<std::size_t>(std::max(config.chunk_rays, 1));
    const std::size_t num_chunks = (rays.size() + chunk - 1) / chunk;
    std::vector<RayChunk> chunks(num_chunks);
    parallel_for(num_chunks, config.threads, [&](std::size_t k) {
        const std::size_t b = k * chunk;
        const std::size_t e = std::min(rays.size(), b + chunk);
        chunks[k] = forward_chunk(frame, refine_params, appearance_params, config,
                                  std::span<const Ray>(rays.data() + b, e - b));
    });
    RenderedImage out;
    out.rgb = Image(camera.width, camera.height, 3);
    out.alpha.resize(rays.size());
    for (std::size_t k = 0; k < num_chunks; ++k) {
        for (std::size_t r = 0; r < chunks[k].pixel_color.size(); ++r) {
            const std::size_t p = k * chunk + r;
            for (int ch = 0; ch < 3; ++ch) {
                out.rgb.data[p * 3 + ch] = static_cast<float>(chunks[k].pixel_color[r][ch]);
            }
            out.alpha[p] = static_cast<float>(chunks[k].pixel_alpha[r]);
        }
        out.stats += chunks[k].stats;
    }
    return out;
}

inline RenderedImage render_frame(const BodyModel &body, const Pose &pose, const MlpParams<float> &refine_params,
                                  const MlpParams<float> &appearance_params, const Camera &camera,
                                  const RenderConfig &config) {
    const FrameVolumes frame = build_frame_volumes(body, pose, config.voxel_size, config.kernel_size);
    return render_volumes(frame, refine_params, appearance_params, camera, config);
}

} // namespace artinerf
