// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/error.hpp"
#include "artinerf/types.hpp"

#include <cmath>
#include <numbers>
#include <span>

namespace artinerf {

/// Sinusoidal positional encoding. Output order:
///   [x, y, z,
///    sin(pi x), sin(pi y), sin(pi z), cos(pi x), cos(pi y), cos(pi z),
///    sin(2 pi x), ..., cos(2^(L-1) pi z)]
/// with the leading passthrough block present only when include_input is set.
struct EncodingSpec {
    int num_frequencies = 10;
    bool include_input = true;

    int output_dim() const { return (include_input ? 3 : 0) + 6 * num_frequencies; }

    void validate() const {
        if (num_frequencies < 0) {
            throw ParameterError("number of encoding frequencies must be >= 0");
        }
    }

    bool operator==(const EncodingSpec &) const = default;
};

template <typename Scalar>
void pe_encode_into(const Vec3 &x, const EncodingSpec &spec, Scalar *out) {
    int o = 0;
    if (spec.include_input) {
        for (int a = 0; a < 3; ++a) {
            out[o++] = static_cast<Scalar>(x[a]);
        }
    }
    double freq = std::numbers::pi;
    for (int k = 0; k < spec.num_frequencies; ++k, freq *= 2.0) {
        for (int a = 0; a < 3; ++a) {
            out[o + a] = static_cast<Scalar>(std::sin(freq * x[a]));
            out[o + 3 + a] = static_cast<Scalar>(std::cos(freq * x[a]));
        }
        o += 6;
    }
}

inline Eigen::VectorXd pe_encode(const Vec3 &x, const EncodingSpec &spec) {
    spec.validate();
    Eigen::VectorXd out(spec.output_dim());
    pe_encode_into(x, spec, out.data());
    return out;
}

/// Encodes a batch into columns of a (output_dim x n) matrix.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> pe_encode_batch(std::span<const Vec3> points,
                                                                     const EncodingSpec &spec) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(spec.output_dim(),
                                                               static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        pe_encode_into(points[i], spec, out.col(static_cast<Eigen::Index>(i)).data());
    }
    return out;
}

/// Chain rule through the encoding: gradient with respect to x given the
/// gradient with respect to the encoded vector.
template <typename Scalar>
Vec3 pe_backward(const Vec3 &x, const EncodingSpec &spec, const Scalar *d_encoded) {
    Vec3 dx = Vec3::Zero();
    int o = 0;
    if (spec.include_input) {
        for (int a = 0; a < 3; ++a) {
            dx[a] += static_cast<double>(d_encoded[o++]);
        }
    }
    double freq = std::numbers::pi;
    for (int k = 0; k < spec.num_frequencies; ++k, freq *= 2.0) {
        for (int a = 0; a < 3; ++a) {
            const double ds = static_cast<double>(d_encoded[o + a]);
            const double dc = static_cast<double>(d_encoded[o + 3 + a]);
            dx[a] += freq * (ds * std::cos(freq * x[a]) - dc * std::sin(freq * x[a]));
        }
        o += 6;
    }
    return dx;
}

} // namespace artinerf
