// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace artinerf;

namespace {

using MatD = MlpParams<double>::Matrix;
using MatF = MlpParams<float>::Matrix;

// Small skip network with the same layout rules as the appearance network.
MlpArchitecture small_skip_arch() {
    MlpArchitecture a;
    a.input_dim = 5;
    a.widths = {7, 6, 6, 4};
    a.activations = {Activation::kRelu, Activation::kRelu, Activation::kRelu, Activation::kLinear};
    a.skip_layers = {2};
    return a;
}

template <typename Scalar>
void randomize_biases(MlpParams<Scalar> &p, std::uint64_t seed) {
    Rng rng(seed);
    for (auto &b : p.layers.biases) {
        for (Eigen::Index i = 0; i < b.size(); ++i) {
            b[i] = static_cast<Scalar>(uniform(rng, -0.3, 0.3));
        }
    }
}

template <typename Scalar>
typename MlpParams<Scalar>::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    typename MlpParams<Scalar>::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<Scalar>(uniform(rng, -1.0, 1.0));
    }
    return m;
}

// Column-by-column forward written from the layer definition.
MatD forward_oracle(const MlpParams<double> &p, const MatD &x) {
    MatD out(p.arch.output_dim(), x.cols());
    for (Eigen::Index n = 0; n < x.cols(); ++n) {
        Eigen::VectorXd h = x.col(n);
        for (int l = 0; l < p.arch.num_layers(); ++l) {
            Eigen::VectorXd in = h;
            if (p.arch.is_skip(l)) {
                in.resize(h.size() + x.rows());
                in << h, x.col(n);
            }
            Eigen::VectorXd z = p.layers.weights[l] * in + p.layers.biases[l];
            if (p.arch.activations[l] == Activation::kRelu) {
                z = z.cwiseMax(0.0);
            }
            h = z;
        }
        out.col(n) = h;
    }
    return out;
}

// Loss <dy, f(x)> and the max relative error of analytic vs central differences.
template <typename Scalar>
double gradient_check(MlpParams<Scalar> p, const typename MlpParams<Scalar>::Matrix &x,
                      const typename MlpParams<Scalar>::Matrix &dy, double h) {
    using Mat = typename MlpParams<Scalar>::Matrix;
    auto loss = [&](const MlpParams<Scalar> &q, const Mat &in) {
        const Mat y = mlp_forward(q, in);
        double s = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            s += static_cast<double>(y.data()[i]) * static_cast<double>(dy.data()[i]);
        }
        return s;
    };
    MlpCache<Scalar> cache;
    mlp_forward(p, x, &cache);
    auto g = Gradients<Scalar>::like(p.arch);
    Mat dx;
    mlp_backward(p, cache, dy, g, &dx);

    double worst = 0.0;
    auto compare = [&](double analytic, double numeric) {
        const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    };
    for (std::size_t l = 0; l < p.layers.weights.size(); ++l) {
        auto probe = [&](auto &param, const auto &grad) {
            // every 7th entry keeps the f32 case affordable on wide layers
            for (Eigen::Index i = 0; i < param.size(); i += (param.size() > 200 ? 7 : 1)) {
                const Scalar keep = param.data()[i];
                param.data()[i] = static_cast<Scalar>(keep + h);
                const double up = loss(p, x);
                param.data()[i] = static_cast<Scalar>(keep - h);
                const double down = loss(p, x);
                param.data()[i] = keep;
                compare(static_cast<double>(grad.data()[i]), (up - down) / (2.0 * h));
            }
        };
        probe(p.layers.weights[l], g.layers.weights[l]);
        probe(p.layers.biases[l], g.layers.biases[l]);
    }
    Mat xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const Scalar keep = xp.data()[i];
        xp.data()[i] = static_cast<Scalar>(keep + h);
        const double up = loss(p, xp);
        xp.data()[i] = static_cast<Scalar>(keep - h);
        const double down = loss(p, xp);
        xp.data()[i] = keep;
        compare(static_cast<double>(dx.data()[i]), (up - down) / (2.0 * h));
    }
    return worst;
}

} // namespace

TEST(Encoding, LayoutAndValues) {
    const EncodingSpec spec{2, true};
    const Vec3 x(0.5, -0.25, 1.0);
    const Eigen::VectorXd e = pe_encode(x, spec);
    ASSERT_EQ(e.size(), 15);
    const double pi = std::numbers::pi;
    const Eigen::VectorXd expect = (Eigen::VectorXd(15) << 0.5, -0.25, 1.0,                          //
                                    std::sin(pi * 0.5), std::sin(-pi * 0.25), std::sin(pi),          //
                                    std::cos(pi * 0.5), std::cos(-pi * 0.25), std::cos(pi),          //
                                    std::sin(2 * pi * 0.5), std::sin(-2 * pi * 0.25), std::sin(2 * pi), //
                                    std::cos(2 * pi * 0.5), std::cos(-2 * pi * 0.25), std::cos(2 * pi))
                                       .finished();
    EXPECT_LT((e - expect).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(pe_encode(x, {3, false}).size(), 18);
    EXPECT_EQ(pe_encode(x, {0, true}).size(), 3);
    EXPECT_EQ(EncodingSpec{}.output_dim(), 63);
    EXPECT_THROW(pe_encode(x, {-1, true}), ParameterError);
}

TEST(Encoding, DirectFormulaAtDefaultDepth) {
    const Vec3 x(0.3, -0.1, 0.7);
    const Eigen::VectorXd e = pe_encode(x, {});
    for (int k = 0; k < 10; ++k) {
        const double f = std::pow(2.0, k) * std::numbers::pi;
        for (int a = 0; a < 3; ++a) {
            EXPECT_NEAR(e[3 + 6 * k + a], std::sin(f * x[a]), 1e-12);
            EXPECT_NEAR(e[3 + 6 * k + 3 + a], std::cos(f * x[a]), 1e-12);
        }
    }
    const std::vector<Vec3> pts{x, Vec3(0.1, 0.2, 0.3)};
    const MatF batch = pe_encode_batch<float>(pts, {});
    EXPECT_LT((batch.col(0).cast<double>() - e).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Encoding, BackwardMatchesFiniteDifferences) {
    const EncodingSpec spec{4, true};
    const Vec3 x(0.21, -0.37, 0.05);
    const Eigen::VectorXd w = random_matrix<double>(spec.output_dim(), 1, 3);
    const Vec3 g = pe_backward(x, spec, w.data());
    for (int a = 0; a < 3; ++a) {
        Vec3 up = x;
        Vec3 down = x;
        up[a] += 1e-6;
        down[a] -= 1e-6;
        const double num = (w.dot(pe_encode(up, spec)) - w.dot(pe_encode(down, spec))) / 2e-6;
        EXPECT_NEAR(g[a], num, 1e-6);
    }
}

TEST(Networks, ParameterCounts) {
    EXPECT_EQ(appearance_architecture().parameter_count(), 494084u);
    EXPECT_EQ(refine_architecture(4).parameter_count(), 34563u);
    EXPECT_EQ(init_appearance<float>(appearance_architecture(), 1).size(), 494084u);
    EXPECT_EQ(appearance_architecture().layer_input_dim(5), 256 + 63);
}

TEST(Networks, ZeroParametersGiveHalfColorAndLog2Density) {
    const auto p = MlpParams<float>::zeros(appearance_architecture());
    const Eigen::VectorXf enc = pe_encode(Vec3(0.1, 0.2, 0.3), {}).cast<float>();
    const auto s = appearance_forward(p, enc);
    for (int c = 0; c < 3; ++c) {
        EXPECT_FLOAT_EQ(s.color[c], 0.5f);
    }
    EXPECT_NEAR(s.density, std::log(2.0), 1e-6);
}

TEST(Networks, ForwardMatchesOracle) {
    auto p = init_mlp<double>(small_skip_arch(), 5);
    randomize_biases(p, 6);
    const MatD x = random_matrix<double>(5, 9, 7);
    EXPECT_LT((mlp_forward(p, x) - forward_oracle(p, x)).cwiseAbs().maxCoeff(), 1e-12);

    auto app = init_appearance<double>(appearance_architecture({}, 32), 8);
    randomize_biases(app, 9);
    const std::vector<Vec3> pts{Vec3(0.1, 0.2, 0.3), Vec3(-0.4, 0.0, 0.25)};
    const MatD enc = pe_encode_batch<double>(pts, {});
    const auto out = appearance_forward_batch(app, enc);
    const MatD raw = forward_oracle(app, enc);
    for (Eigen::Index n = 0; n < 2; ++n) {
        for (int c = 0; c < 3; ++c) {
            EXPECT_NEAR(out.color(c, n), 1.0 / (1.0 + std::exp(-raw(c, n))), 1e-12);
        }
        EXPECT_NEAR(out.density(0, n), std::log1p(std::exp(raw(3, n))), 1e-12);
    }
}

TEST(Networks, BackwardMatchesFiniteDifferencesDouble) {
    auto p = init_mlp<double>(small_skip_arch(), 11);
    randomize_biases(p, 12);
    const MatD x = random_matrix<double>(5, 4, 13);
    const MatD dy = random_matrix<double>(4, 4, 14);
    EXPECT_LT(gradient_check(p, x, dy, 1e-6), 1e-6);

    auto r = init_refine<double>(refine_architecture(4, 16), 15);
    randomize_biases(r, 16);
    EXPECT_LT(gradient_check(r, random_matrix<double>(8, 3, 17), random_matrix<double>(3, 3, 18), 1e-6), 1e-6);
}

TEST(Networks, FloatBackwardAgreesWithDouble) {
    // the double path is checked against finite differences above
    auto p = init_appearance<float>(appearance_architecture({2, true}, 64), 21);
    randomize_biases(p, 22);
    const MatF x = random_matrix<float>(15, 16, 23);
    const MatF dy = random_matrix<float>(4, 16, 24);
    const auto pd = p.cast<double>();

    MlpCache<float> cf;
    mlp_forward(p, x, &cf);
    auto gf = Gradients<float>::like(p.arch);
    MatF dxf;
    mlp_backward(p, cf, dy, gf, &dxf);

    MlpCache<double> cd;
    mlp_forward(pd, MatD(x.cast<double>()), &cd);
    auto gd = Gradients<double>::like(p.arch);
    MatD dxd;
    mlp_backward(pd, cd, MatD(dy.cast<double>()), gd, &dxd);

    for (std::size_t l = 0; l < gf.layers.weights.size(); ++l) {
        const double scale = std::max(1.0, gd.layers.weights[l].cwiseAbs().maxCoeff());
        EXPECT_LT((gf.layers.weights[l].cast<double>() - gd.layers.weights[l]).cwiseAbs().maxCoeff(), 1e-3 * scale);
        EXPECT_LT((gf.layers.biases[l].cast<double>() - gd.layers.biases[l]).cwiseAbs().maxCoeff(), 1e-3 * scale);
    }
    EXPECT_LT((dxf.cast<double>() - dxd).cwiseAbs().maxCoeff(), 1e-3 * std::max(1.0, dxd.cwiseAbs().maxCoeff()));
}

TEST(Networks, AppearanceBackwardThroughActivations) {
    auto p = init_appearance<double>(appearance_architecture({2, true}, 8), 31);
    randomize_biases(p, 32);
    const MatD x = random_matrix<double>(15, 2, 33);
    const MatD dc = random_matrix<double>(3, 2, 34);
    const MatD dd = random_matrix<double>(1, 2, 35);
    auto loss = [&](const MatD &in) {
        const auto o = appearance_forward_batch(p, in);
        return (o.color.cwiseProduct(dc)).sum() + (o.density.cwiseProduct(dd)).sum();
    };
    const auto fwd = appearance_forward_batch(p, x, true);
    auto g = Gradients<double>::like(p.arch);
    MatD dx;
    appearance_backward_batch(p, fwd, dc, dd, g, &dx);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        MatD up = x;
        MatD down = x;
        up.data()[i] += 1e-6;
        down.data()[i] -= 1e-6;
        EXPECT_NEAR(dx.data()[i], (loss(up) - loss(down)) / 2e-6, 1e-6);
    }
}

TEST(Networks, LinearLayerGradientIsOuterProduct) {
    MlpArchitecture a;
    a.input_dim = 3;
    a.widths = {2};
    a.activations = {Activation::kLinear};
    const auto p = init_mlp<double>(a, 1);
    const MatD x = (MatD(3, 1) << 1.0, -2.0, 0.5).finished();
    const MatD dy = (MatD(2, 1) << 0.3, -0.7).finished();
    MlpCache<double> cache;
    mlp_forward(p, x, &cache);
    auto g = Gradients<double>::like(a);
    mlp_backward(p, cache, dy, g);
    EXPECT_LT((g.layers.weights[0] - dy * x.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((g.layers.biases[0] - dy.col(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Networks, ZeroUpstreamGivesZeroGradients) {
    const auto p = init_mlp<float>(small_skip_arch(), 2);
    const MatF x = random_matrix<float>(5, 6, 3);
    MlpCache<float> cache;
    mlp_forward(p, x, &cache);
    auto g = Gradients<float>::like(p.arch);
    MatF dx;
    mlp_backward(p, cache, MatF::Zero(4, 6), g, &dx);
    g.layers.for_each([](float v) { EXPECT_EQ(v, 0.0f); });
    EXPECT_TRUE(dx.isZero());
}

TEST(Networks, ShapeErrors) {
    const auto p = init_mlp<float>(small_skip_arch(), 2);
    EXPECT_THROW(mlp_forward(p, MatF::Zero(4, 1)), ParameterError);
    MlpCache<float> cache;
    mlp_forward(p, MatF::Zero(5, 2), &cache);
    auto g = Gradients<float>::like(p.arch);
    EXPECT_THROW(mlp_backward(p, cache, MatF::Zero(4, 3), g), ParameterError);
    MlpArchitecture bad = small_skip_arch();
    bad.skip_layers = {0};
    EXPECT_THROW(bad.validate(), ParameterError);
}

TEST(Refine, InitialOffsetsAreTiny) {
    const auto p = init_refine<float>(refine_architecture(4), 3);
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        std::vector<float> feature(5);
        for (auto &f : feature) {
            f = static_cast<float>(uniform(rng, 0.0, 40.0));
        }
        const Vec3 x = artinerf::testing::random_vec(rng, 1.0);
        EXPECT_LE(refine(p, feature, x, 1.0 / 125.0).cwiseAbs().maxCoeff(), 1e-3);
    }
    EXPECT_TRUE(p.layers.biases.back().isZero());
    EXPECT_LE(p.layers.weights.back().cwiseAbs().maxCoeff(), 1e-5f);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    auto p = init_mlp<float>(small_skip_arch(), 1);
    const auto before = p;
    auto state = AdamState<float>::like(p.arch);
    const auto g = Gradients<float>::like(p.arch);
    for (int i = 0; i < 5; ++i) {
        adam_step(p, g, state, {});
    }
    for (std::size_t l = 0; l < p.layers.weights.size(); ++l) {
        EXPECT_EQ(p.layers.weights[l], before.layers.weights[l]);
    }
    EXPECT_EQ(state.step, 5);
}

namespace {

MlpArchitecture scalar_arch() {
    MlpArchitecture a;
    a.input_dim = 1;
    a.widths = {1};
    a.activations = {Activation::kLinear};
    return a;
}

} // namespace

TEST(Adam, FirstStepHasLearningRateSize) {
    auto p = MlpParams<double>::zeros(scalar_arch());
    p.layers.weights[0](0, 0) = 1.0;
    auto state = AdamState<double>::like(p.arch);
    auto g = Gradients<double>::like(p.arch);
    g.layers.weights[0](0, 0) = 1.0;
    adam_step(p, g, state, {.learning_rate = 0.1});
    EXPECT_NEAR(p.layers.weights[0](0, 0), 0.9, 1e-6);
    EXPECT_EQ(p.layers.biases[0][0], 0.0);
}

TEST(Adam, MinimizesQuadratic) {
    auto p = MlpParams<double>::zeros(scalar_arch());
    auto state = AdamState<double>::like(p.arch);
    for (int i = 0; i < 100; ++i) {
        auto g = Gradients<double>::like(p.arch);
        g.layers.weights[0](0, 0) = 2.0 * (p.layers.weights[0](0, 0) - 3.0);
        adam_step(p, g, state, {.learning_rate = 0.3});
    }
    EXPECT_LT(std::abs(p.layers.weights[0](0, 0) - 3.0), 0.05);
}

TEST(Adam, MismatchedStateThrows) {
    auto p = init_mlp<float>(small_skip_arch(), 1);
    auto state = AdamState<float>::like(refine_architecture(4));
    EXPECT_THROW(adam_step(p, Gradients<float>::like(p.arch), state, {}), ParameterError);
}
