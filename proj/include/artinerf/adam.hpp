// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/mlp.hpp"

#include <cmath>
#include <cstdint>

namespace artinerf {

struct AdamConfig {
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
    LayerStack<Scalar> first_moment;
    LayerStack<Scalar> second_moment;
    std::int64_t step = 0;

    static AdamState like(const MlpArchitecture &arch) {
        return {LayerStack<Scalar>::zeros(arch), LayerStack<Scalar>::zeros(arch), 0};
    }
};

/// One bias-corrected Adam update.
template <typename Scalar>
void adam_step(MlpParams<Scalar> &params, const Gradients<Scalar> &grads, AdamState<Scalar> &state,
               const AdamConfig &cfg) {
    if (!params.layers.same_shape(grads.layers) || !params.layers.same_shape(state.first_moment) ||
        !params.layers.same_shape(state.second_moment)) {
        throw ParameterError("optimizer state does not match the parameter shapes");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t l = 0; l < params.layers.weights.size(); ++l) {
        auto update = [&](auto &p, const auto &g, auto &m, auto &v) {
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                const double gi = static_cast<double>(g.data()[i]);
                const double mi = cfg.beta1 * static_cast<double>(m.data()[i]) + (1.0 - cfg.beta1) * gi;
                const double vi = cfg.beta2 * static_cast<double>(v.data()[i]) + (1.0 - cfg.beta2) * gi * gi;
                m.data()[i] = static_cast<Scalar>(mi);
                v.data()[i] = static_cast<Scalar>(vi);
                const double step = cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon);
                p.data()[i] = static_cast<Scalar>(static_cast<double>(p.data()[i]) - step);
            }
        };
        update(params.layers.weights[l], grads.layers.weights[l], state.first_moment.weights[l],
               state.second_moment.weights[l]);
        update(params.layers.biases[l], grads.layers.biases[l], state.first_moment.biases[l],
               state.second_moment.biases[l]);
    }
}

} // namespace artinerf
