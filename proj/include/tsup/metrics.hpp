// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tsup/raster.hpp"

namespace tsup {

// Mean absolute difference over all elements.
inline double l1_loss(const Raster& a, const Raster& b) {
    if (!a.same_shape(b))
        throw ConfigError("l1_loss: shape mismatch " + a.shape() + " vs " + b.shape());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(double(a[i]) - double(b[i]));
    return acc / double(a.size());
}

// Peak signal-to-noise ratio in dB for signals in [0,1]. Identical inputs
// have zero error and are reported as +infinity.
inline double psnr(const Raster& a, const Raster& b) {
    if (!a.same_shape(b))
        throw ConfigError("psnr: shape mismatch " + a.shape() + " vs " + b.shape());
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(double(a.size()) / se);
}

namespace detail {

inline std::vector<double> gaussian_window(int radius, double sigma) {
    std::vector<double> w(std::size_t(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
        w[std::size_t(i + radius)] = v;
        sum += v;
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable valid-region blur; output is (h - 2r) x (w - 2r).
inline std::vector<double> blur_valid(const std::vector<double>& img, int h, int w,
                                      const std::vector<double>& win) {
    const int n = int(win.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> rows(std::size_t(h) * std::size_t(ow));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += win[std::size_t(k)] * img[std::size_t(y) * w + x + k];
            rows[std::size_t(y) * ow + x] = acc;
        }
    std::vector<double> out(std::size_t(oh) * std::size_t(ow));
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += win[std::size_t(k)] * rows[std::size_t(y + k) * ow + x];
            out[std::size_t(y) * ow + x] = acc;
        }
    return out;
}

#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC push_options
#pragma GCC optimize("fp-contract=off")
#endif
// FP contraction stays off in this loop: identical inputs must produce a
// bitwise-equal numerator and denominator so that ssim(x,x) is exactly 1,
// and fused multiply-adds would round the two sides differently.
inline double ssim_window_sum(const std::vector<double>& mx, const std::vector<double>& my,
                              const std::vector<double>& mxx, const std::vector<double>& myy,
                              const std::vector<double>& mxy, double c1, double c2) {
#if defined(__clang__)
#pragma clang fp contract(off)
#endif
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = mxx[i] - mx[i] * mx[i];
        const double vy = myy[i] - my[i] * my[i];
        const double cov = mxy[i] - mx[i] * my[i];
        const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
        const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
        acc += num / den;
    }
    return acc;
}
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC pop_options
#endif

} // namespace detail

// Mean structural similarity over valid 11x11 Gaussian windows (sigma 1.5),
// averaged across channels. Inputs are expected in [0,1].
inline double ssim(const Raster& a, const Raster& b) {
    if (!a.same_shape(b))
        throw ConfigError("ssim: shape mismatch " + a.shape() + " vs " + b.shape());
    constexpr int kRadius = 5;
    constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    const int h = a.height(), w = a.width();
    if (h < 2 * kRadius + 1 || w < 2 * kRadius + 1)
        throw ConfigError("ssim: image smaller than the 11x11 window (" + a.shape() + ")");
    const std::vector<double> win = detail::gaussian_window(kRadius, 1.5);
    const std::size_t plane = std::size_t(h) * std::size_t(w);
    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
        const float* pa = a.data() + std::size_t(c) * plane;
        const float* pb = b.data() + std::size_t(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            x[i] = pa[i];
            y[i] = pb[i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = detail::blur_valid(x, h, w, win);
        const auto my = detail::blur_valid(y, h, w, win);
        const auto mxx = detail::blur_valid(xx, h, w, win);
        const auto myy = detail::blur_valid(yy, h, w, win);
        const auto mxy = detail::blur_valid(xy, h, w, win);
        total += detail::ssim_window_sum(mx, my, mxx, myy, mxy, kC1, kC2) / double(mx.size());
    }
    return total / double(a.channels());
}

// Temporal flicker: per-pixel population standard deviation across frames,
// averaged over pixels and channels, reported on the 8-bit scale.
inline double pixel_std(std::span<const Raster> frames) {
    if (frames.size() < 2) throw ConfigError("pixel_std: needs at least 2 frames");
    for (std::size_t t = 1; t < frames.size(); ++t)
        if (!frames[t].same_shape(frames[0]))
            throw ConfigError("pixel_std: frame shapes differ (" + frames[t].shape() + " vs " +
                              frames[0].shape() + ")");
    const std::size_t n = frames[0].size();
    const double inv = 1.0 / double(frames.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (const Raster& f : frames) mean += double(f[i]);
        mean *= inv;
        double var = 0.0;
        for (const Raster& f : frames) {
            const double d = double(f[i]) - mean;
            var += d * d;
        }
        acc += std::sqrt(var * inv);
    }
    return 255.0 * acc / double(n);
}

// CSV-friendly rendering of a metric value; infinities and NaN are spelled
// out so downstream parsers see a consistent token.
inline std::string metric_csv(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

} // namespace tsup
