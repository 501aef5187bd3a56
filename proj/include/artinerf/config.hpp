// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/adam.hpp"
#include "artinerf/json_io.hpp"
#include "artinerf/renderer.hpp"

#include <set>
#include <string>

namespace artinerf {

/// Everything that shapes a training run; echoed into checkpoints.
struct TrainConfig {
    int iterations = 5000;
    int rays_per_batch = 512;
    int patch_count = 2;  // G
    int patch_size = 16;  // P
    double lambda = 0.2;  // weight of the MSE term
    double learning_rate = 5e-4;
    std::uint64_t seed = 1;
    double voxel_size = kDefaultVoxelSize;
    int kernel_size = kDefaultKernelSize;
    int samples_per_ray = 64;       // stratified, training
    int eval_samples_per_ray = 128; // bin centres, evaluation and rendering
    int few_shot = 0;               // training frames kept by uniform stride; 0 keeps all
    int perceptual_scales = 3;
    double alpha_threshold = 0.5;   // rendered alpha above this joins the foreground
    bool refine_enabled = true;
    double max_offset = kDefaultMaxOffset;
    int num_frequencies = 10;
    int appearance_width = kAppearanceWidth;
    int refine_width = kRefineWidth;
    Vec3 background = Vec3::Zero();
    int cache_capacity = 64;
    int chunk_rays = 64;
    int threads = 1;
    int log_every = 0;

    void validate() const {
        auto positive = [](bool ok, const char *what) {
            if (!ok) {
                throw ParameterError(std::string(what) + " must be positive");
            }
        };
        positive(iterations >= 0, "iterations (or zero)");
        positive(rays_per_batch > 0, "rays_per_batch");
        positive(patch_count > 0, "patch_count");
        positive(patch_size > 0, "patch_size");
        positive(lambda >= 0.0, "lambda (or zero)");
        positive(learning_rate > 0.0, "learning_rate");
        positive(voxel_size > 0.0, "voxel_size");
        positive(samples_per_ray > 0, "samples_per_ray");
        positive(eval_samples_per_ray > 0, "eval_samples_per_ray");
        positive(few_shot >= 0, "few_shot (or zero)");
        positive(perceptual_scales > 0, "perceptual_scales");
        positive(max_offset > 0.0, "max_offset");
        positive(num_frequencies >= 0, "num_frequencies (or zero)");
        positive(appearance_width > 0, "appearance_width");
        positive(refine_width > 0, "refine_width");
        positive(cache_capacity > 0, "cache_capacity");
        positive(chunk_rays > 0, "chunk_rays");
        positive(threads > 0, "threads");
        check_kernel_size(kernel_size);
        if (static_cast<long>(patch_size) * patch_size * patch_count > rays_per_batch) {
            throw ParameterError("patch_count * patch_size^2 exceeds rays_per_batch");
        }
        const int div = 1 << (perceptual_scales - 1);
        if (patch_size % div != 0 || patch_size / div < 2) {
            throw ParameterError("patch_size must be a multiple of " + std::to_string(div) + " and at least " +
                                 std::to_string(2 * div));
        }
        if (!(alpha_threshold > 0.0 && alpha_threshold < 1.0)) {
            throw ParameterError("alpha_threshold must lie in (0, 1)");
        }
    }

    EncodingSpec encoding() const { return {num_frequencies, true}; }

    AdamConfig adam() const {
        AdamConfig a;
        a.learning_rate = learning_rate;
        return a;
    }

    /// Settings for deterministic full-frame rendering.
    RenderConfig render_config(int thread_count) const {
        RenderConfig r;
        r.samples_per_ray = eval_samples_per_ray;
        r.background = background;
        r.encoding = encoding();
        r.voxel_size = voxel_size;
        r.kernel_size = kernel_size;
        r.refine_enabled = refine_enabled;
        r.max_offset = max_offset;
        r.threads = thread_count;
        r.chunk_rays = 256;
        return r;
    }

    RenderConfig train_render_config() const {
        RenderConfig r = render_config(threads);
        r.samples_per_ray = samples_per_ray;
        r.chunk_rays = chunk_rays;
        return r;
    }
};

inline Json config_to_json(const TrainConfig &c) {
    Json j;
    j["iterations"] = c.iterations;
    j["rays_per_batch"] = c.rays_per_batch;
    j["patch_count"] = c.patch_count;
    j["patch_size"] = c.patch_size;
    j["lambda"] = c.lambda;
    j["learning_rate"] = c.learning_rate;
    j["seed"] = c.seed;
    j["voxel_size"] = c.voxel_size;
    j["kernel_size"] = c.kernel_size;
    j["samples_per_ray"] = c.samples_per_ray;
    j["eval_samples_per_ray"] = c.eval_samples_per_ray;
    j["few_shot"] = c.few_shot;
    j["perceptual_scales"] = c.perceptual_scales;
    j["alpha_threshold"] = c.alpha_threshold;
    j["refine_enabled"] = c.refine_enabled;
    j["max_offset"] = c.max_offset;
    j["num_frequencies"] = c.num_frequencies;
    j["appearance_width"] = c.appearance_width;
    j["refine_width"] = c.refine_width;
    j["background"] = to_json(c.background);
    j["cache_capacity"] = c.cache_capacity;
    j["chunk_rays"] = c.chunk_rays;
    j["threads"] = c.threads;
    j["log_every"] = c.log_every;
    return j;
}

/// Applies the fields present in `doc` on top of `base`; unknown keys are errors.
inline TrainConfig config_from_json(const Json &doc, const std::string &origin, TrainConfig base = {}) {
    if (!doc.is_object()) {
        throw DataError(origin, "", "configuration must be a JSON object");
    }
    const Json known = config_to_json(base);
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!known.contains(it.key())) {
            throw DataError(origin, it.key(), "unknown configuration key");
        }
    }
    JsonReader r(doc, origin);
    TrainConfig c = base;
    c.iterations = r.get_or("iterations", c.iterations);
    c.rays_per_batch = r.get_or("rays_per_batch", c.rays_per_batch);
    c.patch_count = r.get_or("patch_count", c.patch_count);
    c.patch_size = r.get_or("patch_size", c.patch_size);
    c.lambda = r.get_or("lambda", c.lambda);
    c.learning_rate = r.get_or("learning_rate", c.learning_rate);
    c.seed = r.get_or("seed", c.seed);
    c.voxel_size = r.get_or("voxel_size", c.voxel_size);
    c.kernel_size = r.get_or("kernel_size", c.kernel_size);
    c.samples_per_ray = r.get_or("samples_per_ray", c.samples_per_ray);
    c.eval_samples_per_ray = r.get_or("eval_samples_per_ray", c.eval_samples_per_ray);
    c.few_shot = r.get_or("few_shot", c.few_shot);
    c.perceptual_scales = r.get_or("perceptual_scales", c.perceptual_scales);
    c.alpha_threshold = r.get_or("alpha_threshold", c.alpha_threshold);
    c.refine_enabled = r.get_or("refine_enabled", c.refine_enabled);
    c.max_offset = r.get_or("max_offset", c.max_offset);
    c.num_frequencies = r.get_or("num_frequencies", c.num_frequencies);
    c.appearance_width = r.get_or("appearance_width", c.appearance_width);
    c.refine_width = r.get_or("refine_width", c.refine_width);
    if (doc.contains("background")) {
        c.background = r.vec3("background");
    }
    c.cache_capacity = r.get_or("cache_capacity", c.cache_capacity);
    c.chunk_rays = r.get_or("chunk_rays", c.chunk_rays);
    c.threads = r.get_or("threads", c.threads);
    c.log_every = r.get_or("log_every", c.log_every);
    try {
        c.validate();
    } catch (const ParameterError &e) {
        throw DataError(origin, "", e.what());
    }
    return c;
}

inline TrainConfig load_config(const std::filesystem::path &path, TrainConfig base = {}) {
    return config_from_json(read_json_file(path), path.string(), std::move(base));
}

} // namespace artinerf
