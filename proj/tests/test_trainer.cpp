// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace artinerf;
using artinerf::testing::oracle_dataset;
using artinerf::testing::small_config;

namespace {

Image random_image(int w, int h, int c, std::uint64_t seed) {
    Rng rng(seed);
    Image img(w, h, c);
    for (auto &v : img.data) {
        v = static_cast<float>(uniform01(rng));
    }
    return img;
}

// Multiscale L1 written from the definition: average-pool the difference,
// then colour L1 mean + 0.5 (mean |dx| + mean |dy|), averaged over scales.
double multiscale_oracle(const Image &a, const Image &b, int scales) {
    std::vector<std::vector<double>> d(1);
    int w = a.width;
    int h = a.height;
    const int ch = a.channels;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        d[0].push_back(static_cast<double>(a.data[i]) - b.data[i]);
    }
    double total = 0.0;
    for (int s = 0; s < scales; ++s) {
        const auto &v = d.back();
        auto at = [&](int x, int y, int c) { return v[(static_cast<std::size_t>(y) * w + x) * ch + c]; };
        double color = 0.0;
        double gx = 0.0;
        double gy = 0.0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < ch; ++c) {
                    color += std::abs(at(x, y, c));
                    if (x + 1 < w) {
                        gx += std::abs(at(x + 1, y, c) - at(x, y, c));
                    }
                    if (y + 1 < h) {
                        gy += std::abs(at(x, y + 1, c) - at(x, y, c));
                    }
                }
            }
        }
        total += color / (w * h * ch) + 0.5 * (gx / ((w - 1) * h * ch) + gy / (w * (h - 1) * ch));
        std::vector<double> next;
        for (int y = 0; y < h / 2; ++y) {
            for (int x = 0; x < w / 2; ++x) {
                for (int c = 0; c < ch; ++c) {
                    next.push_back(0.25 * (at(2 * x, 2 * y, c) + at(2 * x + 1, 2 * y, c) + at(2 * x, 2 * y + 1, c) +
                                           at(2 * x + 1, 2 * y + 1, c)));
                }
            }
        }
        d.push_back(next);
        w /= 2;
        h /= 2;
    }
    return total / scales;
}

std::vector<PoseFrame> few_poses(int n, double phase = 0.0) { return articulated_script(n, phase); }

} // namespace

TEST(LossMse, ExamplesAndGradient) {
    const std::vector<Vec3> r{Vec3(1, 0, 0), Vec3(0.5, 0.5, 0.5), Vec3(0, 0, 0)};
    const std::vector<Vec3> t{Vec3(0, 0, 0), Vec3(0.5, 0.5, 0.5), Vec3(1, 1, 1)};
    const std::vector<std::uint8_t> fg{1, 1, 0};
    std::vector<Vec3> g(3);
    EXPECT_DOUBLE_EQ(loss_mse(r, t, fg, g), 0.5);
    EXPECT_LT((g[0] - Vec3(1, 0, 0)).norm(), 1e-15);
    EXPECT_EQ(g[1], Vec3::Zero());
    EXPECT_EQ(g[2], Vec3::Zero());
    const std::vector<std::uint8_t> none{0, 0, 0};
    EXPECT_EQ(loss_mse(r, t, none, g), 0.0);
    EXPECT_THROW(loss_mse(r, std::vector<Vec3>(2), fg), ParameterError);
}

TEST(LossMse, MatchesLoopOracle) {
    Rng rng(2);
    std::vector<Vec3> r;
    std::vector<Vec3> t;
    std::vector<std::uint8_t> fg;
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < 500; ++i) {
        r.push_back(artinerf::testing::random_vec(rng, 1.0));
        t.push_back(artinerf::testing::random_vec(rng, 1.0));
        fg.push_back(uniform01(rng) < 0.4 ? 1 : 0);
        if (fg.back()) {
            for (int a = 0; a < 3; ++a) {
                sum += (r[i][a] - t[i][a]) * (r[i][a] - t[i][a]);
            }
            ++count;
        }
    }
    EXPECT_NEAR(loss_mse(r, t, fg), sum / count, 1e-12);
}

TEST(LossPerceptual, ProxyMatchesDirectDefinition) {
    const MultiscaleGradientScorer scorer(3);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Image a = random_image(16, 8, 3, seed);
        const Image b = random_image(16, 8, 3, seed + 10);
        EXPECT_NEAR(scorer.score(a, b, nullptr), multiscale_oracle(a, b, 3), 1e-12);
    }
    const Image a = random_image(8, 8, 3, 1);
    EXPECT_EQ(scorer.score(a, a, nullptr), 0.0);
    EXPECT_THROW(scorer.score(random_image(6, 8, 3, 1), random_image(6, 8, 3, 2), nullptr), ParameterError);
    EXPECT_THROW(MultiscaleGradientScorer(0), ParameterError);
}

TEST(LossPerceptual, GradientMatchesFiniteDifferences) {
    const MultiscaleGradientScorer scorer(3);
    const Image a = random_image(8, 8, 3, 4);
    const Image b = random_image(8, 8, 3, 5);
    Image g;
    scorer.score(a, b, &g);
    ASSERT_TRUE(g.same_shape(a));
    const double h = 1e-4;
    for (std::size_t i = 0; i < a.data.size(); i += 3) {
        // float pixels, so probe through a double copy of the score
        Image up = a;
        Image down = a;
        up.data[i] += static_cast<float>(h);
        down.data[i] -= static_cast<float>(h);
        const double step = static_cast<double>(up.data[i]) - down.data[i];
        const double numeric = (scorer.score(up, b, nullptr) - scorer.score(down, b, nullptr)) / step;
        EXPECT_NEAR(g.data[i], numeric, 1e-4) << "pixel " << i;
    }
}

TEST(LossPerceptual, MasksAndAveragesPatches) {
    const MultiscaleGradientScorer scorer(2);
    const std::vector<Image> r{random_image(4, 4, 3, 1), random_image(4, 4, 3, 2)};
    const std::vector<Image> t{random_image(4, 4, 3, 3), random_image(4, 4, 3, 4)};
    std::vector<Image> m{Image(4, 4, 1, 1.0f), Image(4, 4, 1, 0.0f)};
    m[1].at(1, 1, 0) = 1.0f;
    std::vector<Image> d;
    const double loss = loss_perceptual(r, t, m, scorer, &d);
    Image r1 = r[1];
    Image t1 = t[1];
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            for (int c = 0; c < 3; ++c) {
                r1.at(x, y, c) *= m[1].at(x, y, 0);
                t1.at(x, y, c) *= m[1].at(x, y, 0);
            }
        }
    }
    EXPECT_NEAR(loss, 0.5 * (scorer.score(r[0], t[0], nullptr) + scorer.score(r1, t1, nullptr)), 1e-12);
    ASSERT_EQ(d.size(), 2u);
    // masked-out pixels receive no gradient
    EXPECT_EQ(d[1].at(0, 0, 0), 0.0f);
    EXPECT_NE(d[1].at(1, 1, 0), 0.0f);
    EXPECT_EQ(loss_perceptual({}, {}, {}, scorer), 0.0);
}

TEST(LossPerceptual, CallbackAdapterChecksOutput) {
    const CallbackPerceptualScorer bad_value([](const Image &, const Image &, Image *) { return std::nan(""); });
    const Image a(4, 4, 3);
    EXPECT_THROW(bad_value.score(a, a, nullptr), NumericError);
    const CallbackPerceptualScorer bad_shape([](const Image &, const Image &, Image *g) {
        if (g != nullptr) {
            *g = Image(2, 2, 3);
        }
        return 0.0;
    });
    Image g;
    EXPECT_THROW(bad_shape.score(a, a, &g), ParameterError);
}

TEST(Metrics, PsnrExamples) {
    const Image a = random_image(12, 12, 3, 1);
    EXPECT_EQ(psnr(a, a), 99.0);
    Image flat(12, 12, 3, 0.25f);
    Image shifted(12, 12, 3, 0.35f);
    EXPECT_NEAR(psnr(flat, shifted), 20.0, 1e-5);
    EXPECT_THROW(psnr(a, Image(11, 12, 3)), ParameterError);
}

TEST(Metrics, SsimIdentityAndReferenceFixture) {
    const Image a = random_image(16, 16, 3, 2);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    EXPECT_THROW(ssim(Image(10, 16, 3), Image(10, 16, 3)), ParameterError);

    // value from a reference implementation (Gaussian window, valid region)
    Image x(40, 32, 3);
    Image y(40, 32, 3);
    for (int r = 0; r < 32; ++r) {
        for (int col = 0; col < 40; ++col) {
            for (int c = 0; c < 3; ++c) {
                const double va = 0.5 + 0.4 * std::sin(0.3 * col + 0.2 * r + c);
                const double vb = std::clamp(va + 0.15 * std::cos(0.5 * col - 0.1 * r * (c + 1)), 0.0, 1.0);
                x.at(col, r, c) = static_cast<float>(va);
                y.at(col, r, c) = static_cast<float>(vb);
            }
        }
    }
    EXPECT_NEAR(ssim(x, y), 0.8216803122637647, 1e-4);
}

TEST(PoseSimilarity, Examples) {
    Pose a = Pose::rest(2);
    a.joint_rotations[0] = Vec3(1, 0, 0);
    Pose b = a;
    b.root_translation = Vec3(5, 5, 5); // translation is ignored
    EXPECT_NEAR(pose_cosine(a, b), 1.0, 1e-15);
    Pose c = Pose::rest(2);
    c.joint_rotations[1] = Vec3(0, 2, 0);
    EXPECT_NEAR(pose_cosine(a, c), 0.0, 1e-15);
    Pose d = a;
    d.joint_rotations[0] = Vec3(-3, 0, 0);
    EXPECT_NEAR(pose_cosine(a, d), -1.0, 1e-15);
    EXPECT_EQ(pose_cosine(a, Pose::rest(2)), 0.0);
    EXPECT_THROW(pose_cosine(a, Pose::rest(3)), ParameterError);
}

TEST(PoseSimilarity, ReportMatchesDoubleLoop) {
    const auto train = spin_script(20, 20, 0.3);
    const auto eval = articulated_script(7, 0.5);
    std::vector<Pose> tp;
    std::vector<Pose> ep;
    for (const auto &p : train) {
        tp.push_back(p.pose);
    }
    for (const auto &p : eval) {
        ep.push_back(p.pose);
    }
    const auto r = pose_similarity_report(tp, ep);
    double mean = 0.0;
    double lo = 2.0;
    for (std::size_t e = 0; e < ep.size(); ++e) {
        double mx = -2.0;
        double mn = 2.0;
        for (const auto &t : tp) {
            double dot = 0.0;
            double na = 0.0;
            double nb = 0.0;
            for (int j = 0; j < 4; ++j) {
                for (int k = 0; k < 3; ++k) {
                    dot += ep[e].joint_rotations[j][k] * t.joint_rotations[j][k];
                    na += ep[e].joint_rotations[j][k] * ep[e].joint_rotations[j][k];
                    nb += t.joint_rotations[j][k] * t.joint_rotations[j][k];
                }
            }
            const double cs = dot / std::sqrt(na * nb);
            mx = std::max(mx, cs);
            mn = std::min(mn, cs);
        }
        EXPECT_NEAR(r.per_eval[e].max, mx, 1e-9);
        EXPECT_NEAR(r.per_eval[e].min, mn, 1e-9);
        mean += mx;
        lo = std::min(lo, mx);
    }
    EXPECT_NEAR(r.mean_of_max, mean / ep.size(), 1e-9);
    EXPECT_NEAR(r.min_of_max, lo, 1e-9);
    const auto kv = parse_key_values(format_pose_similarity(r));
    EXPECT_EQ(kv.at("eval_poses"), "7");
}

TEST(Config, JsonRoundTripAndRejection) {
    TrainConfig c;
    c.iterations = 123;
    c.lambda = 0.75;
    c.background = Vec3(0.1, 0.2, 0.3);
    c.refine_enabled = false;
    c.seed = 99;
    const TrainConfig back = config_from_json(config_to_json(c), "memory");
    EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
    EXPECT_EQ(back.iterations, 123);
    EXPECT_FALSE(back.refine_enabled);

    Json unknown = config_to_json(c);
    unknown["lamda"] = 0.3;
    EXPECT_THROW(config_from_json(unknown, "memory"), DataError);
    Json invalid = config_to_json(c);
    invalid["patch_size"] = 15;
    EXPECT_THROW(config_from_json(invalid, "memory"), DataError);
    // partial documents override only the given keys
    const TrainConfig partial = config_from_json(Json{{"learning_rate", 1e-3}}, "memory");
    EXPECT_EQ(partial.learning_rate, 1e-3);
    EXPECT_EQ(partial.iterations, TrainConfig{}.iterations);
}

TEST(Config, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.patch_count = 3; // 3 * 16^2 > 512
    EXPECT_THROW(c.validate(), ParameterError);
    c = TrainConfig{};
    c.kernel_size = 4;
    EXPECT_THROW(c.validate(), ParameterError);
    c = TrainConfig{};
    c.alpha_threshold = 1.0;
    EXPECT_THROW(c.validate(), ParameterError);
}

TEST(FewShot, UniformStride) {
    EXPECT_EQ(few_shot_indices(30, 10), (std::vector<std::size_t>{0, 3, 6, 9, 12, 15, 18, 21, 24, 27}));
    EXPECT_EQ(few_shot_indices(10, 4), (std::vector<std::size_t>{0, 2, 5, 7}));
    EXPECT_EQ(few_shot_indices(3, 0).size(), 3u);
    EXPECT_EQ(few_shot_indices(3, 5).size(), 3u);
}

TEST(VolumeCacheTest, HitsMissesAndEviction) {
    const SyntheticFigure fig = make_capsule_figure();
    const auto poses = few_poses(3);
    VolumeCache cache(2);
    const auto a = cache.get(fig.body, poses[0].pose, 0.02, 5);
    const auto a2 = cache.get(fig.body, poses[0].pose, 0.02, 5);
    EXPECT_EQ(a.get(), a2.get());
    EXPECT_EQ(cache.hits(), 1u);
    EXPECT_EQ(cache.misses(), 1u);
    cache.get(fig.body, poses[1].pose, 0.02, 5);
    cache.get(fig.body, poses[0].pose, 0.02, 5); // refresh pose 0
    cache.get(fig.body, poses[2].pose, 0.02, 5); // evicts pose 1
    EXPECT_EQ(cache.size(), 2u);
    EXPECT_EQ(cache.get(fig.body, poses[0].pose, 0.02, 5).get(), a.get());
    const std::size_t misses = cache.misses();
    cache.get(fig.body, poses[1].pose, 0.02, 5);
    EXPECT_EQ(cache.misses(), misses + 1);
    // a different voxel size is a different entry
    EXPECT_NE(cache.get(fig.body, poses[0].pose, 0.03, 5).get(), a.get());
    // evicted entries stay alive for holders
    EXPECT_GT(a->voxels.grid.size(), 0u);
}

TEST(Batch, PatchesCentredOnForeground) {
    const Dataset ds = oracle_dataset(few_poses(1), 32);
    const TrainConfig cfg = small_config();
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const TrainBatch b = sample_batch(ds.frames[0], 0, cfg, rng);
        ASSERT_EQ(b.pixels.size(), static_cast<std::size_t>(cfg.rays_per_batch));
        ASSERT_EQ(b.jitter.size(), b.pixels.size() * cfg.samples_per_ray);
        for (int g = 0; g < cfg.patch_count; ++g) {
            // patch pixels are contiguous rows
            const Pixel first = b.pixels[static_cast<std::size_t>(g) * 64];
            for (int i = 0; i < 64; ++i) {
                const Pixel p = b.pixels[static_cast<std::size_t>(g) * 64 + i];
                EXPECT_EQ(p.x, first.x + i % 8);
                EXPECT_EQ(p.y, first.y + i / 8);
            }
        }
        for (const Pixel &p : b.pixels) {
            EXPECT_GE(p.x, 0);
            EXPECT_LT(p.x, 32);
            EXPECT_GE(p.y, 0);
            EXPECT_LT(p.y, 32);
        }
    }
}

TEST(Training, ZeroGradientLeavesParametersUnchanged) {
    const Dataset ds = oracle_dataset(few_poses(2), 32);
    TrainConfig cfg = small_config();
    cfg.lambda = 0.0;
    TrainerState state = make_trainer_state(ds.body, cfg);
    const Model before = state.model;
    const CallbackPerceptualScorer zero([](const Image &r, const Image &, Image *g) {
        if (g != nullptr) {
            *g = Image(r.width, r.height, r.channels);
        }
        return 0.0;
    });
    const auto frames = ds.split("train");
    TrainOptions opt;
    opt.scorer = &zero;
    train(state, frames, 3, opt);
    EXPECT_EQ(state.iteration, 3);
    for (std::size_t l = 0; l < before.appearance.layers.weights.size(); ++l) {
        EXPECT_EQ(state.model.appearance.layers.weights[l], before.appearance.layers.weights[l]);
    }
    for (std::size_t l = 0; l < before.refine.layers.weights.size(); ++l) {
        EXPECT_EQ(state.model.refine.layers.weights[l], before.refine.layers.weights[l]);
    }
}

TEST(Training, RefinementFrozenWhenDisabled) {
    const Dataset ds = oracle_dataset(few_poses(2), 32);
    TrainConfig cfg = small_config();
    cfg.refine_enabled = false;
    TrainerState state = make_trainer_state(ds.body, cfg);
    const Model before = state.model;
    train(state, ds.split("train"), 3);
    EXPECT_EQ(state.model.refine.layers.weights[0], before.refine.layers.weights[0]);
    EXPECT_NE(state.model.appearance.layers.weights[0], before.appearance.layers.weights[0]);
}

TEST(Training, LossDecreases) {
    const Dataset ds = oracle_dataset(few_poses(4), 32);
    TrainerState state = make_trainer_state(ds.body, small_config());
    const auto history = train(state, ds.split("train"), 200);
    auto window = [&](std::size_t begin) {
        double s = 0.0;
        for (std::size_t i = begin; i < begin + 20; ++i) {
            s += history[i].loss;
        }
        return s / 20.0;
    };
    const double first = window(0);
    const double last = window(180);
    EXPECT_LE(last, 0.5 * first) << "first " << first << " last " << last;
    for (const auto &h : history) {
        EXPECT_TRUE(std::isfinite(h.loss));
    }
}

TEST(Training, ThreadCountDoesNotChangeLosses) {
    const Dataset ds = oracle_dataset(few_poses(2), 32);
    TrainConfig cfg = small_config();
    TrainerState one = make_trainer_state(ds.body, cfg);
    cfg.threads = 4;
    TrainerState four = make_trainer_state(ds.body, cfg);
    const auto a = train(one, ds.split("train"), 5);
    const auto b = train(four, ds.split("train"), 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].loss, b[i].loss);
    }
    EXPECT_EQ(one.model.appearance.layers.weights[0], four.model.appearance.layers.weights[0]);
}

TEST(Checkpoint, RoundTripRendersIdenticallyAndResumes) {
    const Dataset ds = oracle_dataset(few_poses(2), 24);
    TrainerState state = make_trainer_state(ds.body, small_config());
    train(state, ds.split("train"), 4);
    const auto dir = artinerf::testing::scratch_dir("checkpoint");
    save_checkpoint(dir / "a.ckpt", state);
    TrainerState loaded = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(loaded.iteration, 4);

    const FrameRecord &f = ds.frames[0];
    const RenderConfig rc = state.model.render_config(1);
    const auto r1 = render_frame(state.model.body, f.pose, state.model.refine, state.model.appearance, f.camera, rc);
    const auto r2 = render_frame(loaded.model.body, f.pose, loaded.model.refine, loaded.model.appearance, f.camera,
                                 loaded.model.render_config(1));
    EXPECT_EQ(r1.rgb.data, r2.rgb.data);

    // training continues identically from the saved state
    const auto h1 = train(state, ds.split("train"), 3);
    const auto h2 = train(loaded, ds.split("train"), 3);
    for (std::size_t i = 0; i < h1.size(); ++i) {
        EXPECT_EQ(h1[i].loss, h2[i].loss);
    }
    save_checkpoint(dir / "b.ckpt", state);
    save_checkpoint(dir / "c.ckpt", loaded);
    EXPECT_EQ(artinerf::testing::read_bytes(dir / "b.ckpt"), artinerf::testing::read_bytes(dir / "c.ckpt"));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
    const Dataset ds = oracle_dataset(few_poses(1), 16);
    const TrainerState state = make_trainer_state(ds.body, small_config());
    const auto dir = artinerf::testing::scratch_dir("checkpoint_bad");
    save_checkpoint(dir / "a.ckpt", state);
    std::string bytes = artinerf::testing::read_bytes(dir / "a.ckpt");
    write_text_file(dir / "short.ckpt", bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), DataError);
    bytes[0] = 'Z';
    write_text_file(dir / "magic.ckpt", bytes);
    EXPECT_THROW(load_checkpoint(dir / "magic.ckpt"), DataError);
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), DataError);
}

TEST(Evaluate, OracleAgainstItself) {
    const Dataset ds = oracle_dataset(few_poses(2), 24);
    MetricsReport r;
    for (const auto &f : ds.frames) {
        r.frames.push_back({f.index, psnr(f.image, f.image), ssim(f.image, f.image)});
    }
    r.mean_psnr = 99.0;
    r.mean_ssim = 1.0;
    const auto kv = parse_key_values(format_metrics(r));
    EXPECT_EQ(kv.at("frames"), "2");
    EXPECT_EQ(std::stod(kv.at("mean_psnr")), 99.0);
    EXPECT_EQ(std::stod(kv.at("frame." + std::to_string(ds.frames[0].index) + ".ssim")), 1.0);
}
