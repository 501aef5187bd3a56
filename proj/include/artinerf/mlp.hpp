// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/error.hpp"
#include "artinerf/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace artinerf {

enum class Activation : std::uint8_t { kLinear = 0, kRelu = 1 };

/// Shape of a dense network. Layer l maps layer_input_dim(l) -> widths[l].
/// A skip layer receives concat(previous output, network input).
struct MlpArchitecture {
    int input_dim = 0;
    std::vector<int> widths;
    std::vector<Activation> activations;
    std::vector<int> skip_layers;

    int num_layers() const { return static_cast<int>(widths.size()); }
    int output_dim() const { return widths.back(); }

    bool is_skip(int layer) const {
        return std::find(skip_layers.begin(), skip_layers.end(), layer) != skip_layers.end();
    }

    int layer_input_dim(int layer) const {
        const int base = layer == 0 ? input_dim : widths[static_cast<std::size_t>(layer - 1)];
        return is_skip(layer) ? base + input_dim : base;
    }

    void validate() const {
        if (input_dim < 1 || widths.empty()) {
            throw ParameterError("network needs a positive input dimension and at least one layer");
        }
        if (activations.size() != widths.size()) {
            throw ParameterError("one activation per layer required");
        }
        for (int w : widths) {
            if (w < 1) {
                throw ParameterError("layer widths must be positive");
            }
        }
        for (int s : skip_layers) {
            if (s < 1 || s >= num_layers()) {
                throw ParameterError("skip layer index " + std::to_string(s) + " out of range");
            }
        }
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (int l = 0; l < num_layers(); ++l) {
            n += static_cast<std::size_t>(layer_input_dim(l) + 1) * static_cast<std::size_t>(widths[l]);
        }
        return n;
    }

    bool operator==(const MlpArchitecture &) const = default;
};

/// Per-layer weight matrices (out x in) and bias vectors. Shared layout of
/// parameters, gradients and optimizer moments.
template <typename Scalar>
struct LayerStack {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static LayerStack zeros(const MlpArchitecture &arch) {
        LayerStack s;
        for (int l = 0; l < arch.num_layers(); ++l) {
            s.weights.push_back(Matrix::Zero(arch.widths[l], arch.layer_input_dim(l)));
            s.biases.push_back(Vector::Zero(arch.widths[l]));
        }
        return s;
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
        }
        return n;
    }

    void set_zero() {
        for (auto &w : weights) {
            w.setZero();
        }
        for (auto &b : biases) {
            b.setZero();
        }
    }

    bool same_shape(const LayerStack &o) const {
        if (weights.size() != o.weights.size()) {
            return false;
        }
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols() ||
                biases[l].size() != o.biases[l].size()) {
                return false;
            }
        }
        return true;
    }

    /// Visits every scalar in canonical order: per layer, weights (column-major) then biases.
    template <typename F>
    void for_each(F &&f) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (Eigen::Index i = 0; i < weights[l].size(); ++i) {
                f(weights[l].data()[i]);
            }
            for (Eigen::Index i = 0; i < biases[l].size(); ++i) {
                f(biases[l].data()[i]);
            }
        }
    }

    template <typename F>
    void for_each(F &&f) const {
        const_cast<LayerStack *>(this)->for_each([&](Scalar &v) { f(static_cast<const Scalar &>(v)); });
    }

    template <typename Other>
    LayerStack<Other> cast() const {
        LayerStack<Other> o;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            o.weights.push_back(weights[l].template cast<Other>());
            o.biases.push_back(biases[l].template cast<Other>());
        }
        return o;
    }

    /// this += other, with other of any scalar type.
    template <typename Other>
    void accumulate(const LayerStack<Other> &other) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            weights[l] += other.weights[l].template cast<Scalar>();
            biases[l] += other.biases[l].template cast<Scalar>();
        }
    }
};

template <typename Scalar>
struct MlpParams {
    using Matrix = typename LayerStack<Scalar>::Matrix;
    using Vector = typename LayerStack<Scalar>::Vector;

    MlpArchitecture arch;
    LayerStack<Scalar> layers;
    std::uint64_t init_seed = 0;

    static MlpParams zeros(const MlpArchitecture &arch) {
        arch.validate();
        return {arch, LayerStack<Scalar>::zeros(arch), 0};
    }

    std::size_t size() const { return layers.size(); }

    template <typename Other>
    MlpParams<Other> cast() const {
        return {arch, layers.template cast<Other>(), init_seed};
    }
};

template <typename Scalar>
struct Gradients {
    LayerStack<Scalar> layers;

    static Gradients like(const MlpArchitecture &arch) { return {LayerStack<Scalar>::zeros(arch)}; }

    template <typename Other>
    void accumulate(const Gradients<Other> &other) {
        layers.accumulate(other.layers);
    }

    template <typename Other>
    Gradients<Other> cast() const {
        return {layers.template cast<Other>()};
    }
};

/// He-uniform weights, zero biases. Draw order is fixed so the seed fully
/// determines the parameters.
template <typename Scalar>
MlpParams<Scalar> init_mlp(const MlpArchitecture &arch, std::uint64_t seed) {
    auto params = MlpParams<Scalar>::zeros(arch);
    params.init_seed = seed;
    Rng rng(seed);
    for (int l = 0; l < arch.num_layers(); ++l) {
        auto &w = params.layers.weights[l];
        const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                w(r, c) = static_cast<Scalar>(uniform(rng, -limit, limit));
            }
        }
    }
    return params;
}

/// Activations kept from a forward pass for the backward pass.
template <typename Scalar>
struct MlpCache {
    using Matrix = typename LayerStack<Scalar>::Matrix;
    std::vector<Matrix> inputs; // input of layer l (after skip concat), in x batch
    std::vector<Matrix> pre;    // pre-activation of layer l, out x batch
};

template <typename Scalar>
void check_input(const MlpParams<Scalar> &params, Eigen::Index rows) {
    if (params.layers.weights.empty() || rows != params.arch.input_dim) {
        throw ParameterError("network input has " + std::to_string(rows) + " rows, expected " +
                             std::to_string(params.arch.input_dim));
    }
}

/// Batched forward pass; columns are samples.
template <typename Scalar>
typename MlpParams<Scalar>::Matrix mlp_forward(const MlpParams<Scalar> &params,
                                               const typename MlpParams<Scalar>::Matrix &x,
                                               MlpCache<Scalar> *cache = nullptr) {
    using Matrix = typename MlpParams<Scalar>::Matrix;
    check_input(params, x.rows());
    const MlpArchitecture &arch = params.arch;
    if (cache != nullptr) {
        cache->inputs.resize(static_cast<std::size_t>(arch.num_layers()));
        cache->pre.resize(static_cast<std::size_t>(arch.num_layers()));
    }
    Matrix h;
    for (int l = 0; l < arch.num_layers(); ++l) {
        Matrix in;
        const Matrix *in_ref = &x;
        if (l > 0) {
            if (arch.is_skip(l)) {
                in.resize(h.rows() + x.rows(), x.cols());
                in.topRows(h.rows()) = h;
                in.bottomRows(x.rows()) = x;
            } else {
                in = std::move(h);
            }
            in_ref = &in;
        }
        Matrix z(arch.widths[l], x.cols());
        z.noalias() = params.layers.weights[l] * (*in_ref);
        z.colwise() += params.layers.biases[l];
        h = arch.activations[l] == Activation::kRelu ? Matrix(z.cwiseMax(Scalar(0))) : z;
        if (cache != nullptr) {
            cache->inputs[l] = l == 0 ? x : std::move(in);
            cache->pre[l] = std::move(z);
        }
    }
    return h;
}

/// Reverse pass: accumulates parameter gradients of <dy, output> into grads
/// and, when dx is non-null, writes the gradient with respect to the input.
template <typename Scalar>
void mlp_backward(const MlpParams<Scalar> &params, const MlpCache<Scalar> &cache,
                  const typename MlpParams<Scalar>::Matrix &dy, Gradients<Scalar> &grads,
                  typename MlpParams<Scalar>::Matrix *dx = nullptr) {
    using Matrix = typename MlpParams<Scalar>::Matrix;
    const MlpArchitecture &arch = params.arch;
    if (cache.pre.size() != static_cast<std::size_t>(arch.num_layers())) {
        throw ParameterError("backward needs the cache of a forward pass on the same network");
    }
    const Eigen::Index batch = dy.cols();
    if (dy.rows() != arch.output_dim() || cache.pre.back().cols() != batch) {
        throw ParameterError("output gradient shape does not match the forward batch");
    }
    if (dx != nullptr) {
        *dx = Matrix::Zero(arch.input_dim, batch);
    }
    Matrix upstream = dy;
    for (int l = arch.num_layers() - 1; l >= 0; --l) {
        Matrix dz = std::move(upstream);
        if (arch.activations[l] == Activation::kRelu) {
            dz = (cache.pre[l].array() > Scalar(0)).select(dz, Scalar(0));
        }
        grads.layers.weights[l].noalias() += dz * cache.inputs[l].transpose();
        grads.layers.biases[l] += dz.rowwise().sum();
        if (l == 0 && dx == nullptr) {
            break;
        }
        Matrix din(arch.layer_input_dim(l), batch);
        din.noalias() = params.layers.weights[l].transpose() * dz;
        if (l == 0) {
            *dx += din;
        } else if (arch.is_skip(l)) {
            const int prev = arch.widths[static_cast<std::size_t>(l - 1)];
            if (dx != nullptr) {
                *dx += din.bottomRows(arch.input_dim);
            }
            upstream = din.topRows(prev);
        } else {
            upstream = std::move(din);
        }
    }
}

} // namespace artinerf
