// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/error.hpp"
#include "artinerf/image.hpp"

#include <array>
#include <cmath>

namespace artinerf {

inline constexpr double kPsnrCap = 99.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

inline double mean_squared_error(const Image &a, const Image &b) {
    if (!a.same_shape(b) || a.data.empty()) {
        throw ParameterError("images must have the same non-empty shape");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

/// PSNR for images in [0, 1]; identical images report kPsnrCap.
inline double psnr(const Image &a, const Image &b) {
    const double mse = mean_squared_error(a, b);
    if (mse <= 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// data range 1. Statistics are taken over windows fully inside the image,
/// per channel, then averaged.
inline double ssim(const Image &a, const Image &b) {
    if (!a.same_shape(b)) {
        throw ParameterError("images must have the same shape");
    }
    if (a.width < kSsimWindow || a.height < kSsimWindow) {
        throw ParameterError("SSIM needs images of at least 11x11 pixels");
    }
    constexpr int r = kSsimWindow / 2;
    std::array<double, kSsimWindow> g{};
    double gsum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        g[i] = std::exp(-0.5 * (i - r) * (i - r) / (kSsimSigma * kSsimSigma));
        gsum += g[i];
    }
    for (auto &v : g) {
        v /= gsum;
    }
    const double c1 = kSsimK1 * kSsimK1;
    const double c2 = kSsimK2 * kSsimK2;

    // separable filtering of x, y, x^2, y^2, xy: horizontal pass then vertical
    const int w = a.width;
    const int h = a.height;
    const int ow = w - 2 * r;
    const int oh = h - 2 * r;
    double total = 0.0;
    std::vector<std::array<double, 5>> horiz(static_cast<std::size_t>(ow) * h);
    for (int c = 0; c < a.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < ow; ++x) {
                std::array<double, 5> s{};
                for (int k = 0; k < kSsimWindow; ++k) {
                    const double va = a.at(x + k, y, c);
                    const double vb = b.at(x + k, y, c);
                    s[0] += g[k] * va;
                    s[1] += g[k] * vb;
                    s[2] += g[k] * va * va;
                    s[3] += g[k] * vb * vb;
                    s[4] += g[k] * va * vb;
                }
                horiz[static_cast<std::size_t>(y) * ow + x] = s;
            }
        }
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                std::array<double, 5> s{};
                for (int k = 0; k < kSsimWindow; ++k) {
                    const auto &hv = horiz[static_cast<std::size_t>(y + k) * ow + x];
                    for (int q = 0; q < 5; ++q) {
                        s[q] += g[k] * hv[q];
                    }
                }
                const double mu_a = s[0];
                const double mu_b = s[1];
                const double var_a = s[2] - mu_a * mu_a;
                const double var_b = s[3] - mu_b * mu_b;
                const double cov = s[4] - mu_a * mu_b;
                total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                         ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            }
        }
    }
    return total / (static_cast<double>(ow) * oh * a.channels);
}

} // namespace artinerf
