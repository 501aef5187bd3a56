// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/checkpoint.hpp"
#include "artinerf/config.hpp"
#include "artinerf/dataset.hpp"
#include "artinerf/log.hpp"
#include "artinerf/losses.hpp"
#include "artinerf/metrics.hpp"
#include "artinerf/renderer.hpp"

#include <atomic>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

namespace artinerf {

/// Per-pose frame volumes, built once and kept under an LRU policy.
/// Lookups take a shared lock; insertion and eviction are exclusive.
class VolumeCache {
  public:
    explicit VolumeCache(std::size_t capacity = 64) : capacity_(capacity) {
        if (capacity == 0) {
            throw ParameterError("cache capacity must be positive");
        }
    }

    std::shared_ptr<const FrameVolumes> get(const BodyModel &body, const Pose &pose, double voxel_size,
                                            int kernel_size) {
        const std::string key = make_key(pose, voxel_size, kernel_size);
        {
            std::shared_lock lock(mutex_);
            const auto it = entries_.find(key);
            if (it != entries_.end()) {
                it->second.last_use.store(++clock_);
                ++hits_;
                return it->second.volumes;
            }
        }
        auto built = std::make_shared<const FrameVolumes>(build_frame_volumes(body, pose, voxel_size, kernel_size));
        std::unique_lock lock(mutex_);
        ++misses_;
        const auto it = entries_.find(key);
        if (it != entries_.end()) {
            it->second.last_use.store(++clock_);
            return it->second.volumes;
        }
        while (entries_.size() >= capacity_) {
            auto oldest = entries_.begin();
            for (auto e = entries_.begin(); e != entries_.end(); ++e) {
                if (e->second.last_use.load() < oldest->second.last_use.load()) {
                    oldest = e;
                }
            }
            entries_.erase(oldest);
        }
        auto &slot = entries_[key];
        slot.volumes = built;
        slot.last_use.store(++clock_);
        return built;
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }
    std::size_t hits() const { return hits_.load(); }
    std::size_t misses() const { return misses_.load(); }

  private:
    struct Entry {
        std::shared_ptr<const FrameVolumes> volumes;
        std::atomic<std::uint64_t> last_use{0};
    };

    static std::string make_key(const Pose &pose, double voxel_size, int kernel_size) {
        std::string key;
        auto add = [&](const void *p, std::size_t n) { key.append(static_cast<const char *>(p), n); };
        for (const auto &r : pose.joint_rotations) {
            add(r.data(), sizeof(double) * 3);
        }
        add(pose.root_translation.data(), sizeof(double) * 3);
        add(&voxel_size, sizeof voxel_size);
        add(&kernel_size, sizeof kernel_size);
        return key;
    }

    std::size_t capacity_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, Entry> entries_;
    std::atomic<std::uint64_t> clock_{0};
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

/// Pixels for one step: patch_count P x P patches first (row-major inside
/// each patch), then single rays from the dilated foreground box up to
/// rays_per_batch. Jitter holds
/// samples_per_ray uniforms per ray.
struct TrainBatch {
    std::size_t frame = 0;
    int patch_count = 0;
    int patch_size = 0;
    std::vector<Pixel> pixels;
    std::vector<double> jitter;
};

struct PixelBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0; // exclusive
    int y1 = 0;
};

/// Bounding box of the mask's foreground grown by `margin`, clipped to the
/// image; the whole image when the mask is empty.
inline PixelBox foreground_box(const Image &mask, int margin) {
    PixelBox b{mask.width, mask.height, 0, 0};
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y, 0) > 0.5f) {
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x + 1);
                b.y1 = std::max(b.y1, y + 1);
            }
        }
    }
    if (b.x1 <= b.x0) {
        return {0, 0, mask.width, mask.height};
    }
    return {std::max(0, b.x0 - margin), std::max(0, b.y0 - margin), std::min(mask.width, b.x1 + margin),
            std::min(mask.height, b.y1 + margin)};
}

inline TrainBatch sample_batch(const FrameRecord &frame, std::size_t frame_id, const TrainConfig &config, Rng &rng) {
    const int p = config.patch_size;
    if (frame.mask.width < p || frame.mask.height < p) {
        throw ParameterError("patch size exceeds the image size");
    }
    TrainBatch b;
    b.frame = frame_id;
    b.patch_count = config.patch_count;
    b.patch_size = p;
    const PixelBox box = foreground_box(frame.mask, p / 2);
    std::vector<Pixel> fg;
    for (int y = 0; y < frame.mask.height; ++y) {
        for (int x = 0; x < frame.mask.width; ++x) {
            if (frame.mask.at(x, y, 0) > 0.5f) {
                fg.push_back({x, y});
            }
        }
    }
    for (int g = 0; g < config.patch_count; ++g) {
        // centred on a random foreground pixel, or anywhere when the mask is empty
        int cx = 0;
        int cy = 0;
        if (fg.empty()) {
            cx = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(frame.mask.width)));
            cy = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(frame.mask.height)));
        } else {
            const Pixel c = fg[uniform_index(rng, fg.size())];
            cx = c.x;
            cy = c.y;
        }
        const int x0 = std::clamp(cx - p / 2, 0, frame.mask.width - p);
        const int y0 = std::clamp(cy - p / 2, 0, frame.mask.height - p);
        for (int y = 0; y < p; ++y) {
            for (int x = 0; x < p; ++x) {
                b.pixels.push_back({x0 + x, y0 + y});
            }
        }
    }
    while (static_cast<int>(b.pixels.size()) < config.rays_per_batch) {
        const int x = box.x0 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(box.x1 - box.x0)));
        const int y = box.y0 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(box.y1 - box.y0)));
        b.pixels.push_back({x, y});
    }
    b.jitter.resize(b.pixels.size() * static_cast<std::size_t>(config.samples_per_ray));
    for (auto &u : b.jitter) {
        u = uniform01(rng);
    }
    return b;
}

struct StepReport {
    std::int64_t iteration = 0;
    double loss = 0.0;
    double perceptual = 0.0;
    double mse = 0.0;
    std::size_t foreground_rays = 0;
    RenderStats stats;
};

/// Forward and backward over the batch, then one Adam step on both networks.
/// The loss is perceptual + lambda * MSE on foreground rays (target mask or
/// rendered alpha above the threshold). Gradients are reduced chunk by chunk
/// in a fixed order, so the result does not depend on the thread count.
inline StepReport train_step(TrainerState &state, const FrameRecord &frame, const FrameVolumes &volumes,
                             const TrainBatch &batch, const PerceptualScorer &scorer,
                             const std::filesystem::path &diagnostic_dir = {}) {
    Model &model = state.model;
    const TrainConfig &cfg = model.config;
    const RenderConfig rc = cfg.train_render_config();
    const auto rays = generate_rays(frame.camera, batch.pixels);
    const std::size_t n = rays.size();
    const auto ns = static_cast<std::size_t>(rc.samples_per_ray);
    if (batch.jitter.size() != n * ns) {
        throw ParameterError("batch jitter does not match samples_per_ray");
    }
    const auto chunk = static_cast<std::size_t>(rc.chunk_rays);
    const std::size_t num_chunks = (n + chunk - 1) / chunk;
    std::vector<RayChunk> chunks(num_chunks);
    parallel_for(num_chunks, rc.threads, [&](std::size_t k) {
        const std::size_t b = k * chunk;
        const std::size_t e = std::min(n, b + chunk);
        chunks[k] = forward_chunk(volumes, model.refine, model.appearance, rc, std::span<const Ray>(rays.data() + b, e - b),
                                  std::span<const double>(batch.jitter.data() + b * ns, (e - b) * ns), true);
    });

    StepReport report;
    report.iteration = state.iteration;
    std::vector<Vec3> rendered(n);
    std::vector<Vec3> target(n);
    std::vector<std::uint8_t> fg(n);
    for (std::size_t k = 0; k < num_chunks; ++k) {
        report.stats += chunks[k].stats;
        for (std::size_t r = 0; r < chunks[k].pixel_color.size(); ++r) {
            const std::size_t i = k * chunk + r;
            const Pixel px = batch.pixels[i];
            rendered[i] = chunks[k].pixel_color[r];
            target[i] = Vec3(frame.image.at(px.x, px.y, 0), frame.image.at(px.x, px.y, 1), frame.image.at(px.x, px.y, 2));
            fg[i] = frame.mask.at(px.x, px.y, 0) > 0.5f || chunks[k].pixel_alpha[r] > cfg.alpha_threshold;
            report.foreground_rays += fg[i];
        }
    }

    std::vector<Vec3> d_pixel(n, Vec3::Zero());
    if (report.foreground_rays > 0) {
        report.mse = loss_mse(rendered, target, fg, d_pixel);
    }
    for (auto &g : d_pixel) {
        g *= cfg.lambda;
    }

    const int p = batch.patch_size;
    std::vector<Image> r_patches;
    std::vector<Image> t_patches;
    std::vector<Image> m_patches;
    for (int g = 0; g < batch.patch_count; ++g) {
        Image rp(p, p, 3);
        Image tp(p, p, 3);
        Image mp(p, p, 1);
        for (int y = 0; y < p; ++y) {
            for (int x = 0; x < p; ++x) {
                const std::size_t i = static_cast<std::size_t>(g) * p * p + static_cast<std::size_t>(y) * p + x;
                for (int c = 0; c < 3; ++c) {
                    rp.at(x, y, c) = static_cast<float>(rendered[i][c]);
                    tp.at(x, y, c) = static_cast<float>(target[i][c]);
                }
                mp.at(x, y, 0) = fg[i] ? 1.0f : 0.0f;
            }
        }
        r_patches.push_back(std::move(rp));
        t_patches.push_back(std::move(tp));
        m_patches.push_back(std::move(mp));
    }
    std::vector<Image> d_patches;
    report.perceptual = loss_perceptual(r_patches, t_patches, m_patches, scorer, &d_patches);
    for (int g = 0; g < batch.patch_count; ++g) {
        for (int y = 0; y < p; ++y) {
            for (int x = 0; x < p; ++x) {
                const std::size_t i = static_cast<std::size_t>(g) * p * p + static_cast<std::size_t>(y) * p + x;
                for (int c = 0; c < 3; ++c) {
                    d_pixel[i][c] += d_patches[static_cast<std::size_t>(g)].at(x, y, c);
                }
            }
        }
    }
    report.loss = report.perceptual + cfg.lambda * report.mse;

    if (!std::isfinite(report.loss)) {
        std::string where = "(no diagnostic directory)";
        if (!diagnostic_dir.empty()) {
            Json dump;
            dump["iteration"] = state.iteration;
            dump["frame"] = frame.index;
            dump["perceptual"] = std::to_string(report.perceptual);
            dump["mse"] = std::to_string(report.mse);
            Json rays_json = Json::array();
            for (std::size_t i = 0; i < n; ++i) {
                rays_json.push_back({{"x", batch.pixels[i].x},
                                     {"y", batch.pixels[i].y},
                                     {"rendered", {std::to_string(rendered[i].x()), std::to_string(rendered[i].y()),
                                                   std::to_string(rendered[i].z())}},
                                     {"target", to_json(target[i])},
                                     {"foreground", static_cast<bool>(fg[i])}});
            }
            dump["rays"] = std::move(rays_json);
            const auto path = diagnostic_dir / ("nonfinite_batch_" + std::to_string(state.iteration) + ".json");
            write_text_file(path, dump.dump(1) + "\n");
            where = path.string();
        }
        throw NumericError("non-finite loss at iteration " + std::to_string(state.iteration) + " on frame " +
                           std::to_string(frame.index) + "; batch dump: " + where);
    }

    std::vector<NetworkGradients> chunk_grads(num_chunks);
    parallel_for(num_chunks, rc.threads, [&](std::size_t k) {
        const std::size_t b = k * chunk;
        chunk_grads[k] = {Gradients<float>::like(model.refine.arch), Gradients<float>::like(model.appearance.arch)};
        backward_chunk(chunks[k], model.refine, model.appearance, rc,
                       std::span<const Vec3>(d_pixel.data() + b, chunks[k].pixel_color.size()), chunk_grads[k]);
        chunks[k] = RayChunk(); // release activations early
    });
    auto refine_sum = Gradients<double>::like(model.refine.arch);
    auto appearance_sum = Gradients<double>::like(model.appearance.arch);
    for (const auto &g : chunk_grads) {
        refine_sum.accumulate(g.refine);
        appearance_sum.accumulate(g.appearance);
    }
    const AdamConfig adam = cfg.adam();
    if (cfg.refine_enabled) {
        adam_step(model.refine, refine_sum.cast<float>(), state.refine_opt, adam);
    }
    adam_step(model.appearance, appearance_sum.cast<float>(), state.appearance_opt, adam);
    ++state.iteration;
    return report;
}

struct TrainOptions {
    const PerceptualScorer *scorer = nullptr; // built-in proxy when null
    VolumeCache *cache = nullptr;             // private cache when null
    std::filesystem::path diagnostic_dir;
    std::function<void(const StepReport &)> on_step;
};

/// Training frames after the few-shot subsample, in dataset order.
inline std::vector<const FrameRecord *> training_frames(const Dataset &data, const TrainConfig &config) {
    const auto all = data.split("train");
    std::vector<const FrameRecord *> out;
    for (const auto i : few_shot_indices(all.size(), static_cast<std::size_t>(config.few_shot))) {
        out.push_back(all[i]);
    }
    return out;
}

/// Runs `iterations` steps, drawing one training frame uniformly per step.
inline std::vector<StepReport> train(TrainerState &state, std::span<const FrameRecord *const> frames, int iterations,
                                     const TrainOptions &options = {}) {
    if (frames.empty()) {
        throw ParameterError("no training frames");
    }
    const MultiscaleGradientScorer proxy(state.model.config.perceptual_scales);
    const PerceptualScorer &scorer = options.scorer != nullptr ? *options.scorer : proxy;
    VolumeCache local(static_cast<std::size_t>(state.model.config.cache_capacity));
    VolumeCache &cache = options.cache != nullptr ? *options.cache : local;
    const TrainConfig &cfg = state.model.config;
    std::vector<StepReport> history;
    history.reserve(static_cast<std::size_t>(std::max(iterations, 0)));
    for (int it = 0; it < iterations; ++it) {
        const auto f = static_cast<std::size_t>(uniform_index(state.rng, frames.size()));
        const FrameRecord &frame = *frames[f];
        const TrainBatch batch = sample_batch(frame, f, cfg, state.rng);
        const auto volumes = cache.get(state.model.body, frame.pose, cfg.voxel_size, cfg.kernel_size);
        history.push_back(train_step(state, frame, *volumes, batch, scorer, options.diagnostic_dir));
        if (options.on_step) {
            options.on_step(history.back());
        }
        if (cfg.log_every > 0 && (state.iteration % cfg.log_every) == 0) {
            std::ostringstream os;
            os << "iteration " << state.iteration << " loss " << history.back().loss << " perceptual "
               << history.back().perceptual << " mse " << history.back().mse;
            log_info(os.str());
        }
    }
    return history;
}

struct FrameMetrics {
    int index = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricsReport {
    std::vector<FrameMetrics> frames;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

/// Renders each frame at its pose and camera and scores the full frame.
inline MetricsReport evaluate(const Model &model, std::span<const FrameRecord *const> frames, int threads = 1) {
    MetricsReport report;
    const RenderConfig rc = model.render_config(threads);
    for (const FrameRecord *f : frames) {
        const auto img = render_frame(model.body, f->pose, model.refine, model.appearance, f->camera, rc);
        report.frames.push_back({f->index, psnr(img.rgb, f->image), ssim(img.rgb, f->image)});
    }
    for (const auto &m : report.frames) {
        report.mean_psnr += m.psnr;
        report.mean_ssim += m.ssim;
    }
    if (!report.frames.empty()) {
        report.mean_psnr /= static_cast<double>(report.frames.size());
        report.mean_ssim /= static_cast<double>(report.frames.size());
    }
    return report;
}

/// key=value lines: one psnr and one ssim line per frame, then the means.
inline std::string format_metrics(const MetricsReport &r) {
    std::ostringstream os;
    os.precision(10);
    os << "frames=" << r.frames.size() << '\n';
    for (const auto &m : r.frames) {
        os << "frame." << m.index << ".psnr=" << m.psnr << '\n';
        os << "frame." << m.index << ".ssim=" << m.ssim << '\n';
    }
    os << "mean_psnr=" << r.mean_psnr << '\n';
    os << "mean_ssim=" << r.mean_ssim << '\n';
    return os.str();
}

/// Parses the key=value report format back into a map.
inline std::map<std::string, std::string> parse_key_values(const std::string &text) {
    std::map<std::string, std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
            out[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    return out;
}

struct PoseSimilarity {
    double min = 0.0; // over training poses
    double max = 0.0;
};

struct PoseSimilarityReport {
    std::vector<PoseSimilarity> per_eval;
    double min_of_max = 0.0;
    double max_of_max = 0.0;
    double mean_of_max = 0.0;
};

inline Eigen::VectorXd flatten_rotations(const Pose &pose) {
    Eigen::VectorXd v(3 * static_cast<Eigen::Index>(pose.joint_rotations.size()));
    for (std::size_t j = 0; j < pose.joint_rotations.size(); ++j) {
        v.segment<3>(3 * static_cast<Eigen::Index>(j)) = pose.joint_rotations[j];
    }
    return v;
}

/// Cosine similarity of the flattened joint rotations (root translation
/// excluded); zero-norm vectors give 0 with a warning.
inline double pose_cosine(const Pose &a, const Pose &b) {
    if (a.joint_rotations.size() != b.joint_rotations.size()) {
        throw ParameterError("poses have different joint counts");
    }
    const Eigen::VectorXd va = flatten_rotations(a);
    const Eigen::VectorXd vb = flatten_rotations(b);
    const double na = va.norm();
    const double nb = vb.norm();
    if (na == 0.0 || nb == 0.0) {
        log_warning("pose similarity with a zero rotation vector; using 0");
        return 0.0;
    }
    return va.dot(vb) / (na * nb);
}

inline PoseSimilarityReport pose_similarity_report(std::span<const Pose> train, std::span<const Pose> eval) {
    if (train.empty() || eval.empty()) {
        throw ParameterError("pose similarity needs non-empty pose sets");
    }
    PoseSimilarityReport r;
    for (const auto &e : eval) {
        PoseSimilarity s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        for (const auto &t : train) {
            const double c = pose_cosine(e, t);
            s.min = std::min(s.min, c);
            s.max = std::max(s.max, c);
        }
        r.per_eval.push_back(s);
    }
    r.min_of_max = std::numeric_limits<double>::infinity();
    r.max_of_max = -std::numeric_limits<double>::infinity();
    for (const auto &s : r.per_eval) {
        r.min_of_max = std::min(r.min_of_max, s.max);
        r.max_of_max = std::max(r.max_of_max, s.max);
        r.mean_of_max += s.max;
    }
    r.mean_of_max /= static_cast<double>(r.per_eval.size());
    return r;
}

inline std::string format_pose_similarity(const PoseSimilarityReport &r) {
    std::ostringstream os;
    os.precision(10);
    os << "eval_poses=" << r.per_eval.size() << '\n';
    for (std::size_t i = 0; i < r.per_eval.size(); ++i) {
        os << "pose." << i << ".min=" << r.per_eval[i].min << '\n';
        os << "pose." << i << ".max=" << r.per_eval[i].max << '\n';
    }
    os << "min_of_max=" << r.min_of_max << '\n';
    os << "max_of_max=" << r.max_of_max << '\n';
    os << "mean_of_max=" << r.mean_of_max << '\n';
    return os.str();
}

} // namespace artinerf
