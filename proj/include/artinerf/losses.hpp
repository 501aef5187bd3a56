// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/error.hpp"
#include "artinerf/image.hpp"
#include "artinerf/log.hpp"
#include "artinerf/types.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace artinerf {

/// Mean over foreground rays of the squared colour distance. Writes
/// dL/d rendered into `grad` when it is non-empty (zero on background rays).
inline double loss_mse(std::span<const Vec3> rendered, std::span<const Vec3> target,
                       std::span<const std::uint8_t> foreground, std::span<Vec3> grad = {}) {
    if (rendered.size() != target.size() || rendered.size() != foreground.size()) {
        throw ParameterError("rendered, target and mask counts differ");
    }
    if (!grad.empty() && grad.size() != rendered.size()) {
        throw ParameterError("gradient buffer has the wrong size");
    }
    std::size_t count = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        if (foreground[i]) {
            ++count;
            sum += (rendered[i] - target[i]).squaredNorm();
        }
    }
    for (auto &g : grad) {
        g.setZero();
    }
    if (count == 0) {
        log_warning("MSE loss over an empty foreground selection; using 0");
        return 0.0;
    }
    if (!grad.empty()) {
        const double scale = 2.0 / static_cast<double>(count);
        for (std::size_t i = 0; i < rendered.size(); ++i) {
            if (foreground[i]) {
                grad[i] = scale * (rendered[i] - target[i]);
            }
        }
    }
    return sum / static_cast<double>(count);
}

/// Scores one (already masked) patch pair. When `d_rendered` is non-null it
/// receives dscore/d rendered with the patch's shape.
class PerceptualScorer {
  public:
    virtual ~PerceptualScorer() = default;
    virtual double score(const Image &rendered, const Image &target, Image *d_rendered) const = 0;
};

/// Built-in proxy: for each of `scales` dyadic levels (2x2 mean pooling),
/// colour L1 + 0.5 * (horizontal + vertical finite-difference L1), all as
/// means; the result is the mean over levels.
class MultiscaleGradientScorer final : public PerceptualScorer {
  public:
    explicit MultiscaleGradientScorer(int scales = 3) : scales_(scales) {
        if (scales < 1) {
            throw ParameterError("scale count must be >= 1");
        }
    }

    int scales() const { return scales_; }

    void check_shape(const Image &img) const {
        const int div = 1 << (scales_ - 1);
        if (img.width % div != 0 || img.height % div != 0 || img.width / div < 2 || img.height / div < 2) {
            throw ParameterError("patch size must be a multiple of " + std::to_string(div) + " and at least " +
                                 std::to_string(2 * div));
        }
    }

    double score(const Image &rendered, const Image &target, Image *d_rendered) const override {
        if (!rendered.same_shape(target)) {
            throw ParameterError("patch shapes differ");
        }
        check_shape(rendered);
        const int ch = rendered.channels;
        std::vector<std::vector<double>> levels;
        std::vector<std::array<int, 2>> dims;
        {
            std::vector<double> d(rendered.data.size());
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] = static_cast<double>(rendered.data[i]) - target.data[i];
            }
            levels.push_back(std::move(d));
            dims.push_back({rendered.width, rendered.height});
        }
        for (int s = 1; s < scales_; ++s) {
            const auto [w, h] = dims.back();
            const auto &src = levels.back();
            std::vector<double> dst(static_cast<std::size_t>(w / 2) * (h / 2) * ch);
            for (int y = 0; y < h / 2; ++y) {
                for (int x = 0; x < w / 2; ++x) {
                    for (int c = 0; c < ch; ++c) {
                        auto at = [&](int xx, int yy) { return src[(static_cast<std::size_t>(yy) * w + xx) * ch + c]; };
                        dst[(static_cast<std::size_t>(y) * (w / 2) + x) * ch + c] =
                            0.25 * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1));
                    }
                }
            }
            levels.push_back(std::move(dst));
            dims.push_back({w / 2, h / 2});
        }

        const double level_weight = 1.0 / scales_;
        double total = 0.0;
        std::vector<std::vector<double>> grads(levels.size());
        for (std::size_t s = 0; s < levels.size(); ++s) {
            const auto [w, h] = dims[s];
            const auto &d = levels[s];
            auto &g = grads[s];
            g.assign(d.size(), 0.0);
            auto idx = [&](int x, int y, int c) { return (static_cast<std::size_t>(y) * w + x) * ch + c; };
            const double n_color = static_cast<double>(d.size());
            const double n_dx = static_cast<double>(w - 1) * h * ch;
            const double n_dy = static_cast<double>(w) * (h - 1) * ch;
            double color = 0.0;
            double gx = 0.0;
            double gy = 0.0;
            for (std::size_t i = 0; i < d.size(); ++i) {
                color += std::abs(d[i]);
                g[i] += level_weight * sign(d[i]) / n_color;
            }
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    for (int c = 0; c < ch; ++c) {
                        if (x + 1 < w) {
                            const double v = d[idx(x + 1, y, c)] - d[idx(x, y, c)];
                            gx += std::abs(v);
                            const double gv = level_weight * 0.5 * sign(v) / n_dx;
                            g[idx(x + 1, y, c)] += gv;
                            g[idx(x, y, c)] -= gv;
                        }
                        if (y + 1 < h) {
                            const double v = d[idx(x, y + 1, c)] - d[idx(x, y, c)];
                            gy += std::abs(v);
                            const double gv = level_weight * 0.5 * sign(v) / n_dy;
                            g[idx(x, y + 1, c)] += gv;
                            g[idx(x, y, c)] -= gv;
                        }
                    }
                }
            }
            total += level_weight * (color / n_color + 0.5 * (gx / n_dx + gy / n_dy));
        }

        if (d_rendered != nullptr) {
            // push coarse-level gradients back through the pooling chain
            for (std::size_t s = levels.size() - 1; s > 0; --s) {
                const auto [w, h] = dims[s];
                const int fw = dims[s - 1][0];
                auto &fine = grads[s - 1];
                const auto &coarse = grads[s];
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        for (int c = 0; c < ch; ++c) {
                            const double v = 0.25 * coarse[(static_cast<std::size_t>(y) * w + x) * ch + c];
                            for (int k = 0; k < 4; ++k) {
                                fine[(static_cast<std::size_t>(2 * y + k / 2) * fw + 2 * x + k % 2) * ch + c] += v;
                            }
                        }
                    }
                }
            }
            *d_rendered = Image(rendered.width, rendered.height, ch);
            for (std::size_t i = 0; i < grads[0].size(); ++i) {
                d_rendered->data[i] = static_cast<float>(grads[0][i]);
            }
        }
        return total;
    }

  private:
    static double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

    int scales_;
};

/// Adapter for a perceptual metric computed elsewhere (for example a learned
/// LPIPS network). The callback returns the score and fills the gradient when asked.
class CallbackPerceptualScorer final : public PerceptualScorer {
  public:
    using Fn = std::function<double(const Image &rendered, const Image &target, Image *d_rendered)>;

    explicit CallbackPerceptualScorer(Fn fn) : fn_(std::move(fn)) {
        if (!fn_) {
            throw ParameterError("perceptual callback is empty");
        }
    }

    double score(const Image &rendered, const Image &target, Image *d_rendered) const override {
        const double s = fn_(rendered, target, d_rendered);
        if (!std::isfinite(s)) {
            throw NumericError("external perceptual score is not finite");
        }
        if (d_rendered != nullptr && !d_rendered->same_shape(rendered)) {
            throw ParameterError("external perceptual gradient has the wrong shape");
        }
        return s;
    }

  private:
    Fn fn_;
};

/// Applies each single-channel mask to both patches, scores them and
/// returns the mean over patches. Gradients (w.r.t. the unmasked rendered
/// patches) go to `d_rendered` when non-null.
inline double loss_perceptual(std::span<const Image> rendered, std::span<const Image> target,
                              std::span<const Image> masks, const PerceptualScorer &scorer,
                              std::vector<Image> *d_rendered = nullptr) {
    if (rendered.size() != target.size() || rendered.size() != masks.size()) {
        throw ParameterError("patch counts differ");
    }
    if (d_rendered != nullptr) {
        d_rendered->assign(rendered.size(), Image());
    }
    if (rendered.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t p = 0; p < rendered.size(); ++p) {
        const Image &r = rendered[p];
        const Image &m = masks[p];
        if (!r.same_shape(target[p]) || m.width != r.width || m.height != r.height || m.channels != 1) {
            throw ParameterError("patch " + std::to_string(p) + " has mismatched shapes");
        }
        Image rm = r;
        Image tm = target[p];
        for (int y = 0; y < r.height; ++y) {
            for (int x = 0; x < r.width; ++x) {
                for (int c = 0; c < r.channels; ++c) {
                    rm.at(x, y, c) *= m.at(x, y, 0);
                    tm.at(x, y, c) *= m.at(x, y, 0);
                }
            }
        }
        Image g;
        total += scorer.score(rm, tm, d_rendered != nullptr ? &g : nullptr);
        if (d_rendered != nullptr) {
            const float inv = 1.0f / static_cast<float>(rendered.size());
            for (int y = 0; y < r.height; ++y) {
                for (int x = 0; x < r.width; ++x) {
                    for (int c = 0; c < r.channels; ++c) {
                        g.at(x, y, c) *= m.at(x, y, 0) * inv;
                    }
                }
            }
            (*d_rendered)[p] = std::move(g);
        }
    }
    return total / static_cast<double>(rendered.size());
}

} // namespace artinerf
