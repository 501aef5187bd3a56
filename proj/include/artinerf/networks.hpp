// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/encoding.hpp"
#include "artinerf/mlp.hpp"

#include <cmath>
#include <span>

namespace artinerf {

inline constexpr int kAppearanceDepth = 8;
inline constexpr int kAppearanceWidth = 256;
inline constexpr int kAppearanceSkipLayer = 5; // receives concat(h4, encoded input)
inline constexpr int kRefineWidth = 128;
inline constexpr double kRefineHeadInitRange = 1e-5;

/// Eight ReLU layers of width 256 with the encoded input concatenated after
/// the fifth, then a linear head producing (r, g, b, density) logits.
inline MlpArchitecture appearance_architecture(const EncodingSpec &encoding = {}, int width = kAppearanceWidth) {
    MlpArchitecture a;
    a.input_dim = encoding.output_dim();
    for (int l = 0; l < kAppearanceDepth; ++l) {
        a.widths.push_back(width);
        a.activations.push_back(Activation::kRelu);
    }
    a.widths.push_back(4);
    a.activations.push_back(Activation::kLinear);
    a.skip_layers = {kAppearanceSkipLayer};
    return a;
}

/// Point refinement: concat(F_s, x_r) -> 3 ReLU layers of width 128 -> xyz offset.
inline MlpArchitecture refine_architecture(int num_joints, int width = kRefineWidth) {
    MlpArchitecture a;
    a.input_dim = num_joints + 1 + 3;
    a.widths = {width, width, width, 3};
    a.activations = {Activation::kRelu, Activation::kRelu, Activation::kRelu, Activation::kLinear};
    return a;
}

template <typename Scalar>
MlpParams<Scalar> init_appearance(const MlpArchitecture &arch, std::uint64_t seed) {
    return init_mlp<Scalar>(arch, seed);
}

/// Hidden layers He-uniform; the head starts at zero bias and weights in
/// (-1e-5, 1e-5) so the initial offset is close to zero.
template <typename Scalar>
MlpParams<Scalar> init_refine(const MlpArchitecture &arch, std::uint64_t seed) {
    auto params = init_mlp<Scalar>(arch, seed);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    auto &head = params.layers.weights.back();
    for (Eigen::Index r = 0; r < head.rows(); ++r) {
        for (Eigen::Index c = 0; c < head.cols(); ++c) {
            head(r, c) = static_cast<Scalar>(uniform(rng, -kRefineHeadInitRange, kRefineHeadInitRange));
        }
    }
    params.layers.biases.back().setZero();
    return params;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Scalar softplus(Scalar x) {
    return x > Scalar(20) ? x : std::log1p(std::exp(x));
}

template <typename Scalar>
struct AppearanceBatch {
    using Matrix = typename MlpParams<Scalar>::Matrix;
    Matrix raw;      // 4 x n logits
    Matrix color;    // 3 x n, sigmoid
    Matrix density;  // 1 x n, softplus
    MlpCache<Scalar> cache;
};

/// Colors and densities for a batch of encoded points (columns).
template <typename Scalar>
AppearanceBatch<Scalar> appearance_forward_batch(const MlpParams<Scalar> &params,
                                                 const typename MlpParams<Scalar>::Matrix &encoded,
                                                 bool keep_cache = false) {
    if (params.arch.output_dim() != 4) {
        throw ParameterError("appearance network must produce 4 outputs");
    }
    AppearanceBatch<Scalar> out;
    out.raw = mlp_forward(params, encoded, keep_cache ? &out.cache : nullptr);
    out.color = out.raw.topRows(3).unaryExpr([](Scalar v) { return sigmoid(v); });
    out.density = out.raw.bottomRows(1).unaryExpr([](Scalar v) { return softplus(v); });
    return out;
}

/// Backward through the output activations and the network. d_color is
/// 3 x n, d_density 1 x n.
template <typename Scalar>
void appearance_backward_batch(const MlpParams<Scalar> &params, const AppearanceBatch<Scalar> &fwd,
                               const typename MlpParams<Scalar>::Matrix &d_color,
                               const typename MlpParams<Scalar>::Matrix &d_density, Gradients<Scalar> &grads,
                               typename MlpParams<Scalar>::Matrix *d_encoded = nullptr) {
    typename MlpParams<Scalar>::Matrix d_raw(4, fwd.raw.cols());
    d_raw.topRows(3) = d_color.cwiseProduct(fwd.color.cwiseProduct((Scalar(1) - fwd.color.array()).matrix()));
    d_raw.bottomRows(1) =
        d_density.cwiseProduct(fwd.raw.bottomRows(1).unaryExpr([](Scalar v) { return sigmoid(v); }));
    mlp_backward(params, fwd.cache, d_raw, grads, d_encoded);
}

template <typename Scalar>
struct AppearanceSample {
    Eigen::Matrix<Scalar, 3, 1> color;
    Scalar density;
};

template <typename Scalar>
AppearanceSample<Scalar> appearance_forward(const MlpParams<Scalar> &params,
                                            const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> &encoded) {
    typename MlpParams<Scalar>::Matrix x = encoded;
    const auto b = appearance_forward_batch(params, x);
    return {b.color.col(0), b.density(0, 0)};
}

/// Refinement input column: (feature * feature_scale, x_r).
template <typename Scalar>
void refine_input_into(std::span<const float> feature, const Vec3 &point, double feature_scale, Scalar *out) {
    for (std::size_t i = 0; i < feature.size(); ++i) {
        out[i] = static_cast<Scalar>(feature[i] * feature_scale);
    }
    for (int a = 0; a < 3; ++a) {
        out[feature.size() + a] = static_cast<Scalar>(point[a]);
    }
}

/// Learned canonical offset for one point. No clamping is applied here.
template <typename Scalar>
Vec3 refine(const MlpParams<Scalar> &params, std::span<const float> feature, const Vec3 &point,
            double feature_scale = 1.0) {
    if (static_cast<int>(feature.size()) + 3 != params.arch.input_dim || params.arch.output_dim() != 3) {
        throw ParameterError("refinement network expects " + std::to_string(params.arch.input_dim - 3) +
                             " feature channels and 3 outputs");
    }
    typename MlpParams<Scalar>::Matrix x(params.arch.input_dim, 1);
    refine_input_into(feature, point, feature_scale, x.data());
    const auto y = mlp_forward(params, x);
    return Vec3(static_cast<double>(y(0, 0)), static_cast<double>(y(1, 0)), static_cast<double>(y(2, 0)));
}

} // namespace artinerf
