// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/checkpoint.hpp"
#include "artinerf/config.hpp"
#include "artinerf/dataset.hpp"
#include "artinerf/synthetic.hpp"
#include "artinerf/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace artinerf {

namespace fs = std::filesystem;

inline std::string frame_name(const std::string &prefix, int index, const std::string &ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d", index);
    return prefix + buf + ext;
}

struct SynthOptions {
    fs::path out_dir;
    int train_frames = 30;
    int eval_frames = 20;
    int width = 64;
    int height = 64;
    std::uint64_t seed = 7;
    int threads = 1;
};

/// Writes the synthetic capsule scene: body model, pose scripts, camera,
/// oracle images with masks, and the manifest.
inline Manifest cmd_synth(const SynthOptions &opt) {
    if (opt.train_frames < 1 || opt.eval_frames < 1) {
        throw ParameterError("frame counts must be positive");
    }
    if (opt.width < 16 || opt.height < 16) {
        throw ParameterError("resolution must be at least 16x16");
    }
    Rng rng(opt.seed);
    const double wave_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double eval_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const SyntheticFigure fig = make_capsule_figure();
    const Camera cam = default_synthetic_camera(opt.width, opt.height);
    const auto train = spin_script(opt.train_frames, opt.train_frames, wave_phase);
    const auto eval = articulated_script(opt.eval_frames, eval_phase);

    fs::create_directories(opt.out_dir);
    save_body_model(opt.out_dir / "body.json", fig.body);
    save_poses(opt.out_dir / "poses_train.json", train, fig.body.num_joints());
    save_poses(opt.out_dir / "poses_eval.json", eval, fig.body.num_joints());
    save_cameras(opt.out_dir / "cameras.json", {{"main", cam}});

    Manifest m;
    m.body_model = "body.json";
    m.cameras = "cameras.json";
    int index = 0;
    auto emit = [&](const std::vector<PoseFrame> &script, const std::string &split, const std::string &pose_file) {
        for (const auto &pf : script) {
            const OracleImage o = render_oracle(fig, pf.pose, cam, Vec3::Zero(), kOracleSamplesPerRay, opt.threads);
            ManifestFrame f;
            f.index = index++;
            f.split = split;
            f.image = "images/" + frame_name(split + "_", pf.frame, ".png");
            f.mask = "masks/" + frame_name(split + "_", pf.frame, ".png");
            f.camera = "main";
            f.pose_file = pose_file;
            f.pose_frame = pf.frame;
            write_png(opt.out_dir / f.image, o.rgb);
            write_png(opt.out_dir / f.mask, o.mask());
            m.frames.push_back(std::move(f));
        }
    };
    emit(train, "train", "poses_train.json");
    emit(eval, "eval", "poses_eval.json");
    save_manifest(opt.out_dir / "manifest.json", m);
    return m;
}

struct TrainOptionsCli {
    fs::path manifest;
    fs::path out_checkpoint;
    TrainConfig config;
    std::optional<fs::path> resume;
    fs::path loss_log; // optional CSV of per-step losses
};

/// Trains from a manifest's train split and writes the final checkpoint.
inline std::vector<StepReport> cmd_train(const TrainOptionsCli &opt) {
    const Dataset data = load_dataset(opt.manifest, "train");
    TrainerState state;
    if (opt.resume) {
        state = load_checkpoint(*opt.resume);
        const int threads = opt.config.threads;
        const int iterations = opt.config.iterations;
        state.model.config.threads = threads;
        state.model.config.iterations = iterations;
    } else {
        state = make_trainer_state(data.body, opt.config);
    }
    const auto frames = training_frames(data, state.model.config);
    TrainOptions topt;
    topt.diagnostic_dir = opt.out_checkpoint.has_parent_path() ? opt.out_checkpoint.parent_path() : fs::path(".");
    const auto remaining = static_cast<int>(std::max<std::int64_t>(0, state.model.config.iterations - state.iteration));
    auto history = train(state, frames, remaining, topt);
    save_checkpoint(opt.out_checkpoint, state);
    if (!opt.loss_log.empty()) {
        std::ostringstream os;
        os << "iteration,loss,perceptual,mse,kept_samples\n";
        os.precision(9);
        for (const auto &h : history) {
            os << h.iteration << ',' << h.loss << ',' << h.perceptual << ',' << h.mse << ',' << h.stats.kept_samples << '\n';
        }
        write_text_file(opt.loss_log, os.str());
    }
    return history;
}

struct RenderOptionsCli {
    fs::path checkpoint;
    fs::path poses;
    std::optional<int> frame; // all frames when empty
    fs::path cameras;
    std::string camera = "main";
    fs::path out_dir;
    bool write_alpha = false;
    int threads = 1;
};

/// Renders poses from a pose file; returns the written image paths.
inline std::vector<fs::path> cmd_render(const RenderOptionsCli &opt) {
    const TrainerState state = load_checkpoint(opt.checkpoint);
    const auto poses = load_poses(opt.poses);
    const auto cams = load_cameras(opt.cameras);
    const auto cam = cams.find(opt.camera);
    if (cam == cams.end()) {
        throw DataError(opt.cameras.string(), "cameras", "no camera named '" + opt.camera + "'");
    }
    const RenderConfig rc = state.model.render_config(opt.threads);
    std::vector<fs::path> written;
    bool found = false;
    for (const auto &pf : poses) {
        if (opt.frame && pf.frame != *opt.frame) {
            continue;
        }
        found = true;
        if (static_cast<int>(pf.pose.joint_rotations.size()) != state.model.body.num_joints()) {
            throw DataError(opt.poses.string(), "joint_rotations", "pose joint count does not match the checkpoint");
        }
        const auto img = render_frame(state.model.body, pf.pose, state.model.refine, state.model.appearance, cam->second, rc);
        const fs::path path = opt.out_dir / frame_name("frame_", pf.frame, ".png");
        write_png(path, img.rgb);
        if (opt.write_alpha) {
            write_alpha_dump(opt.out_dir / frame_name("alpha_", pf.frame, ".bin"), img.alpha, img.rgb.width,
                             img.rgb.height);
        }
        written.push_back(path);
    }
    if (opt.frame && !found) {
        throw DataError(opt.poses.string(), "frame", "frame " + std::to_string(*opt.frame) + " not found");
    }
    return written;
}

/// Renders every pose of a sequence with no further optimisation.
inline std::vector<fs::path> cmd_animate(RenderOptionsCli opt) {
    opt.frame.reset();
    return cmd_render(opt);
}

struct EvalOptionsCli {
    fs::path checkpoint;
    fs::path manifest;
    std::string split = "eval";
    fs::path out_report; // optional
    int threads = 1;
};

inline MetricsReport cmd_eval(const EvalOptionsCli &opt) {
    const TrainerState state = load_checkpoint(opt.checkpoint);
    const Dataset data = load_dataset(opt.manifest, opt.split);
    if (data.frames.empty()) {
        throw DataError(opt.manifest.string(), "frames", "no frames in split '" + opt.split + "'");
    }
    if (data.body.num_joints() != state.model.body.num_joints()) {
        throw DataError(opt.manifest.string(), "body_model", "joint count differs from the checkpoint");
    }
    std::vector<const FrameRecord *> frames;
    for (const auto &f : data.frames) {
        frames.push_back(&f);
    }
    const MetricsReport report = evaluate(state.model, frames, opt.threads);
    if (!opt.out_report.empty()) {
        write_text_file(opt.out_report, format_metrics(report));
    }
    return report;
}

struct ParamReport {
    std::size_t refine = 0;
    std::size_t appearance = 0;
};

inline ParamReport count_parameters(const MlpArchitecture &refine, const MlpArchitecture &appearance) {
    return {refine.parameter_count(), appearance.parameter_count()};
}

/// Learnable parameter totals of a checkpoint, or of the default networks
/// for `num_joints` joints when no checkpoint is given.
inline std::string cmd_report_params(const std::optional<fs::path> &checkpoint, int num_joints = kDefaultNumJoints,
                                     const TrainConfig &config = {}) {
    ParamReport r;
    if (checkpoint) {
        const TrainerState s = load_checkpoint(*checkpoint);
        r = count_parameters(s.model.refine.arch, s.model.appearance.arch);
    } else {
        r = count_parameters(refine_architecture(num_joints, config.refine_width),
                             appearance_architecture(config.encoding(), config.appearance_width));
    }
    std::ostringstream os;
    os << "refine_parameters=" << r.refine << '\n';
    os << "appearance_parameters=" << r.appearance << '\n';
    os << "total_parameters=" << r.refine + r.appearance << '\n';
    os << std::setprecision(6) << "refine_fraction=" << static_cast<double>(r.refine) / (r.refine + r.appearance)
       << '\n';
    return os.str();
}

inline std::string cmd_dump_config(const TrainConfig &config) {
    config.validate();
    return config_to_json(config).dump(2) + "\n";
}

} // namespace artinerf
