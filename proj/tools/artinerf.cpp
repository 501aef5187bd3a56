// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#include "artinerf/artinerf.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace artinerf;

struct Globals {
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string config_path;
};

TrainConfig resolve_config(const Globals &g) {
    TrainConfig c;
    if (!g.config_path.empty()) {
        c = load_config(g.config_path, c);
    }
    if (g.seed) {
        c.seed = *g.seed;
    }
    c.threads = g.threads;
    return c;
}

int run(int argc, char **argv) {
    CLI::App app{"artinerf: voxel-filtered articulated radiance fields"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--config", g.config_path, "JSON file with training configuration overrides");

    SynthOptions synth;
    std::string synth_out;
    auto *s = app.add_subcommand("synth", "Write the synthetic capsule dataset");
    s->add_option("--out", synth_out, "Output directory")->required();
    s->add_option("--train-frames", synth.train_frames, "Spin frames for training");
    s->add_option("--eval-frames", synth.eval_frames, "Articulated frames for evaluation");
    s->add_option("--width", synth.width, "Image width");
    s->add_option("--height", synth.height, "Image height");

    std::string manifest;
    std::string out_ckpt;
    std::string resume;
    std::string loss_log;
    std::optional<int> iterations;
    std::optional<int> few_shot;
    auto *t = app.add_subcommand("train", "Train from a dataset manifest");
    t->add_option("--manifest", manifest, "Dataset manifest")->required();
    t->add_option("--out", out_ckpt, "Output checkpoint")->required();
    t->add_option("--iterations", iterations, "Total iterations");
    t->add_option("--few-shot", few_shot, "Keep this many training frames (uniform stride)");
    t->add_option("--resume", resume, "Continue from a checkpoint");
    t->add_option("--loss-log", loss_log, "CSV of per-step losses");

    RenderOptionsCli render;
    std::string r_ckpt;
    std::string r_poses;
    std::string r_cams;
    std::string r_out;
    std::optional<int> r_frame;
    auto add_render = [&](CLI::App *sub, bool single) {
        sub->add_option("--checkpoint", r_ckpt, "Checkpoint")->required();
        sub->add_option("--poses", r_poses, "Pose file")->required();
        sub->add_option("--cameras", r_cams, "Cameras file")->required();
        sub->add_option("--camera", render.camera, "Camera name");
        sub->add_option("--out", r_out, "Output directory")->required();
        sub->add_flag("--alpha", render.write_alpha, "Also write accumulated alpha dumps");
        if (single) {
            sub->add_option("--frame", r_frame, "Pose frame to render (default: all)");
        }
    };
    auto *rs = app.add_subcommand("render", "Render poses from a checkpoint");
    add_render(rs, true);
    auto *an = app.add_subcommand("animate", "Render a whole pose sequence");
    add_render(an, false);

    EvalOptionsCli ev;
    std::string e_ckpt;
    std::string e_manifest;
    std::string e_out;
    auto *e = app.add_subcommand("eval", "PSNR and SSIM on a manifest split");
    e->add_option("--checkpoint", e_ckpt, "Checkpoint")->required();
    e->add_option("--manifest", e_manifest, "Dataset manifest")->required();
    e->add_option("--split", ev.split, "Split name");
    e->add_option("--out", e_out, "Report file (printed when omitted)");

    std::string p_ckpt;
    int p_joints = kDefaultNumJoints;
    auto *p = app.add_subcommand("report-params", "Print learnable parameter counts");
    p->add_option("--checkpoint", p_ckpt, "Checkpoint (default networks when omitted)");
    p->add_option("--joints", p_joints, "Joint count for the default networks")->check(CLI::PositiveNumber);

    auto *d = app.add_subcommand("dump-config", "Print the resolved training configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 1;
    }

    if (s->parsed()) {
        synth.out_dir = synth_out;
        synth.threads = g.threads;
        if (g.seed) {
            synth.seed = *g.seed;
        }
        const auto m = cmd_synth(synth);
        std::cout << "wrote " << m.frames.size() << " frames to " << synth_out << '\n';
    } else if (t->parsed()) {
        TrainOptionsCli opt;
        opt.manifest = manifest;
        opt.out_checkpoint = out_ckpt;
        opt.config = resolve_config(g);
        if (iterations) {
            opt.config.iterations = *iterations;
        }
        if (few_shot) {
            opt.config.few_shot = *few_shot;
        }
        opt.config.validate();
        if (!resume.empty()) {
            opt.resume = resume;
        }
        opt.loss_log = loss_log;
        const auto history = cmd_train(opt);
        if (!history.empty()) {
            std::cout << "final loss " << history.back().loss << " after " << history.size() << " steps\n";
        }
    } else if (rs->parsed() || an->parsed()) {
        render.checkpoint = r_ckpt;
        render.poses = r_poses;
        render.cameras = r_cams;
        render.out_dir = r_out;
        render.frame = r_frame;
        render.threads = g.threads;
        const auto written = rs->parsed() ? cmd_render(render) : cmd_animate(render);
        std::cout << "wrote " << written.size() << " images to " << r_out << '\n';
    } else if (e->parsed()) {
        ev.checkpoint = e_ckpt;
        ev.manifest = e_manifest;
        ev.out_report = e_out;
        ev.threads = g.threads;
        const auto report = cmd_eval(ev);
        if (e_out.empty()) {
            std::cout << format_metrics(report);
        } else {
            std::cout << "mean_psnr=" << report.mean_psnr << " mean_ssim=" << report.mean_ssim << '\n';
        }
    } else if (p->parsed()) {
        std::optional<std::filesystem::path> ck;
        if (!p_ckpt.empty()) {
            ck = p_ckpt;
        }
        std::cout << cmd_report_params(ck, p_joints, resolve_config(g));
    } else if (d->parsed()) {
        std::cout << cmd_dump_config(resolve_config(g));
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    try {
        return run(argc, argv);
    } catch (const artinerf::ParameterError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const artinerf::DataError &e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error &e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const artinerf::NumericError &e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception &e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
}
