// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "tsup/parallel.hpp"
#include "tsup/raster.hpp"

namespace tsup {

// ---------------------------------------------------------------------------
// Parameter-carrying types

// 3x3 convolution kernel. taps shape (out*in*9,1,1), layout
// taps[((o*in + c)*3 + dy)*3 + dx]; bias shape (out,1,1).
template <typename T>
struct ConvKernelT {
    int out_channels = 0;
    int in_channels = 0;
    RasterT<T> taps;
    RasterT<T> bias;

    ConvKernelT() = default;
    ConvKernelT(int out_ch, int in_ch)
        : out_channels(out_ch), in_channels(in_ch),
          taps(out_ch * in_ch * 9, 1, 1), bias(out_ch, 1, 1) {}

    void validate() const {
        if (taps.size() != std::size_t(out_channels) * in_channels * 9)
            throw ConfigError("conv kernel tap count does not match " +
                              std::to_string(out_channels) + "x" + std::to_string(in_channels));
        if (bias.size() != std::size_t(out_channels))
            throw ConfigError("conv kernel bias count does not match out channels");
    }

    T& tap(int o, int c, int dy, int dx) { return taps[((std::size_t(o) * in_channels + c) * 3 + dy) * 3 + dx]; }
    T tap(int o, int c, int dy, int dx) const { return taps[((std::size_t(o) * in_channels + c) * 3 + dy) * 3 + dx]; }

    static ConvKernelT identity(int channels) {
        ConvKernelT k(channels, channels);
        for (int c = 0; c < channels; ++c) k.tap(c, c, 1, 1) = T(1);
        return k;
    }
};

/// Affine layer: weights shape (out*in,1,1) row-major, bias (out,1,1).
template <typename T>
struct DenseLayerT {
    int out_features = 0;
    int in_features = 0;
    RasterT<T> weights;
    RasterT<T> bias;

    DenseLayerT() = default;
    DenseLayerT(int out_f, int in_f)
        : out_features(out_f), in_features(in_f), weights(out_f * in_f, 1, 1), bias(out_f, 1, 1) {}
};

enum class Activation { None, Relu };

using ConvKernel = ConvKernelT<float>;
using DenseLayer = DenseLayerT<float>;

// ---------------------------------------------------------------------------
// 3x3 convolution, zero padding of 1, spatially shape-preserving.

namespace detail {

// Copy into a (H+2)x(W+2) zero-padded plane per channel.
template <typename T>
void pad_plane(const T* src, int h, int w, T* dst) {
    const int pw = w + 2;
    std::memset(dst, 0, sizeof(T) * pw);
    for (int y = 0; y < h; ++y) {
        T* row = dst + std::size_t(y + 1) * pw;
        row[0] = T(0);
        std::memcpy(row + 1, src + std::size_t(y) * w, sizeof(T) * w);
        row[w + 1] = T(0);
    }
    std::memset(dst + std::size_t(h + 1) * pw, 0, sizeof(T) * pw);
}

template <typename T>
std::vector<T> pad_input(const RasterT<T>& in) {
    const int h = in.height(), w = in.width();
    std::vector<T> pad(std::size_t(in.channels()) * (h + 2) * (w + 2));
    for (int c = 0; c < in.channels(); ++c)
        pad_plane(in.channel(c), h, w, pad.data() + std::size_t(c) * (h + 2) * (w + 2));
    return pad;
}

} // namespace detail

// out(o,y,x) = bias(o) + sum_{c,dy,dx} taps(o,c,dy,dx) * in(c, y+dy-1, x+dx-1),
// out-of-bounds input treated as zero.
template <typename T>
RasterT<T> conv3x3_flat(const RasterT<T>& in, const T* taps, const T* bias, int out_ch) {
    const int C = in.channels(), H = in.height(), W = in.width();
    const int PW = W + 2;
    std::vector<T> pad = detail::pad_input(in);
    RasterT<T> out(out_ch, H, W, typename RasterT<T>::Uninit{});
    parallel_for(out_ch, [&](std::int64_t ob, std::int64_t oe) {
    for (int o = int(ob); o < int(oe); ++o) {
        T* oc = out.channel(o);
        const T b = bias ? bias[o] : T(0);
        std::fill_n(oc, std::size_t(H) * W, b);
        for (int c = 0; c < C; ++c) {
            const T* pc = pad.data() + std::size_t(c) * (H + 2) * PW;
            const T* t = taps + (std::size_t(o) * C + c) * 9;
            const T t0 = t[0], t1 = t[1], t2 = t[2];
            const T t3 = t[3], t4 = t[4], t5 = t[5];
            const T t6 = t[6], t7 = t[7], t8 = t[8];
            for (int y = 0; y < H; ++y) {
                const T* p0 = pc + std::size_t(y) * PW;
                const T* p1 = p0 + PW;
                const T* p2 = p1 + PW;
                T* orow = oc + std::size_t(y) * W;
                for (int x = 0; x < W; ++x) {
                    orow[x] += t0 * p0[x] + t1 * p0[x + 1] + t2 * p0[x + 2] +
                               t3 * p1[x] + t4 * p1[x + 1] + t5 * p1[x + 2] +
                               t6 * p2[x] + t7 * p2[x + 1] + t8 * p2[x + 2];
                }
            }
        }
    }
    });
    return out;
}

template <typename T>
RasterT<T> conv3x3(const RasterT<T>& in, const ConvKernelT<T>& k) {
    k.validate();
    if (k.in_channels != in.channels())
        throw ConfigError("conv3x3 input channels " + std::to_string(in.channels()) +
                          " do not match kernel in_channels " + std::to_string(k.in_channels));
    return conv3x3_flat(in, k.taps.data(), k.bias.data(), k.out_channels);
}

// Gradient w.r.t. the input: correlate the output gradient with the
// transposed, spatially flipped taps. Reuses the forward kernel.
template <typename T>
RasterT<T> conv3x3_backward_input(const RasterT<T>& grad_out, const T* taps, int in_ch) {
    const int out_ch = grad_out.channels();
    std::vector<T> flipped(std::size_t(in_ch) * out_ch * 9);
    for (int o = 0; o < out_ch; ++o)
        for (int c = 0; c < in_ch; ++c)
            for (int k = 0; k < 9; ++k)
                flipped[(std::size_t(c) * out_ch + o) * 9 + (8 - k)] =
                    taps[(std::size_t(o) * in_ch + c) * 9 + k];
    return conv3x3_flat(grad_out, flipped.data(), static_cast<const T*>(nullptr), in_ch);
}

// Gradients w.r.t. taps and bias; accumulates into grad_taps/grad_bias.
template <typename T>
void conv3x3_backward_weights(const RasterT<T>& in, const RasterT<T>& grad_out,
                              T* grad_taps, T* grad_bias) {
    const int C = in.channels(), H = in.height(), W = in.width();
    const int out_ch = grad_out.channels();
    const int PW = W + 2;
    std::vector<T> pad = detail::pad_input(in);
    parallel_for(out_ch, [&](std::int64_t ob, std::int64_t oe) {
    for (int o = int(ob); o < int(oe); ++o) {
        const T* g = grad_out.channel(o);
        if (grad_bias) {
            T s = 0;
            for (std::size_t i = 0; i < std::size_t(H) * W; ++i) s += g[i];
            grad_bias[o] += s;
        }
        for (int c = 0; c < C; ++c) {
            const T* pc = pad.data() + std::size_t(c) * (H + 2) * PW;
            T acc[9] = {};
            for (int y = 0; y < H; ++y) {
                const T* grow = g + std::size_t(y) * W;
                for (int dy = 0; dy < 3; ++dy) {
                    const T* p = pc + std::size_t(y + dy) * PW;
                    T s0 = 0, s1 = 0, s2 = 0;
                    for (int x = 0; x < W; ++x) {
                        s0 += grow[x] * p[x];
                        s1 += grow[x] * p[x + 1];
                        s2 += grow[x] * p[x + 2];
                    }
                    acc[dy * 3 + 0] += s0;
                    acc[dy * 3 + 1] += s1;
                    acc[dy * 3 + 2] += s2;
                }
            }
            T* gt = grad_taps + (std::size_t(o) * C + c) * 9;
            for (int k = 0; k < 9; ++k) gt[k] += acc[k];
        }
    }
    });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

template <typename T>
RasterT<T> relu(const RasterT<T>& in) {
    RasterT<T> out(in.channels(), in.height(), in.width(), typename RasterT<T>::Uninit{});
    const T* s = in.data();
    T* d = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) d[i] = s[i] > T(0) ? s[i] : T(0);
    return out;
}

template <typename T>
T sigmoid_scalar(T x) {
    // Split on sign so exp never overflows.
    if (x >= T(0)) {
        const T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
RasterT<T> sigmoid(const RasterT<T>& in) {
    RasterT<T> out(in.channels(), in.height(), in.width(), typename RasterT<T>::Uninit{});
    const T* s = in.data();
    T* d = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) d[i] = sigmoid_scalar(s[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Pixel shuffles. Channel ordering is normative:
// depth_to_space: out(c, y*S+dy, x*S+dx) = in(c*S*S + dy*S + dx, y, x).

template <typename T>
RasterT<T> depth_to_space(const RasterT<T>& in, int scale) {
    const int s2 = scale * scale;
    if (scale < 1 || in.channels() % s2 != 0)
        throw ConfigError("depth_to_space: channels " + std::to_string(in.channels()) +
                          " not divisible by scale^2 = " + std::to_string(s2));
    const int C = in.channels() / s2, H = in.height(), W = in.width();
    RasterT<T> out(C, H * scale, W * scale, typename RasterT<T>::Uninit{});
    for (int c = 0; c < C; ++c)
        for (int dy = 0; dy < scale; ++dy)
            for (int dx = 0; dx < scale; ++dx) {
                const T* src = in.channel(c * s2 + dy * scale + dx);
                for (int y = 0; y < H; ++y) {
                    T* drow = out.row(c, y * scale + dy) + dx;
                    const T* srow = src + std::size_t(y) * W;
                    for (int x = 0; x < W; ++x) drow[std::size_t(x) * scale] = srow[x];
                }
            }
    return out;
}

template <typename T>
RasterT<T> space_to_depth(const RasterT<T>& in, int scale) {
    if (scale < 1 || in.height() % scale != 0 || in.width() % scale != 0)
        throw ConfigError("space_to_depth: dims " + in.shape() +
                          " not divisible by scale " + std::to_string(scale));
    const int s2 = scale * scale;
    const int C = in.channels(), H = in.height() / scale, W = in.width() / scale;
    RasterT<T> out(C * s2, H, W, typename RasterT<T>::Uninit{});
    for (int c = 0; c < C; ++c)
        for (int dy = 0; dy < scale; ++dy)
            for (int dx = 0; dx < scale; ++dx) {
                T* dst = out.channel(c * s2 + dy * scale + dx);
                for (int y = 0; y < H; ++y) {
                    const T* srow = in.row(c, y * scale + dy) + dx;
                    T* drow = dst + std::size_t(y) * W;
                    for (int x = 0; x < W; ++x) drow[x] = srow[std::size_t(x) * scale];
                }
            }
    return out;
}

// ---------------------------------------------------------------------------
// Bilinear sampling at absolute real-valued coordinates.
// positions: 2 x H x W, channel 0 = x coordinate, channel 1 = y coordinate,
// in source pixel units (integer coordinates hit pixels exactly).
// Coordinates are clamped to [0, W-1] x [0, H-1].

namespace detail {

template <typename T>
struct BilinearTap {
    int i00, i01, i10, i11; // flat plane offsets
    T tx, ty;
};

template <typename T>
std::vector<BilinearTap<T>> bilinear_taps(const RasterT<T>& positions, int src_h, int src_w) {
    const int H = positions.height(), W = positions.width();
    std::vector<BilinearTap<T>> taps(std::size_t(H) * W);
    const T* px = positions.channel(0);
    const T* py = positions.channel(1);
    for (std::size_t i = 0; i < taps.size(); ++i) {
        const T x = std::min(std::max(px[i], T(0)), T(src_w - 1));
        const T y = std::min(std::max(py[i], T(0)), T(src_h - 1));
        const int x0 = int(std::floor(x));
        const int y0 = int(std::floor(y));
        // At the far border x0 = W-1, x1 collapses onto it and tx = 0, so
        // lattice points reproduce source values exactly.
        const int x1 = std::min(x0 + 1, src_w - 1);
        const int y1 = std::min(y0 + 1, src_h - 1);
        taps[i] = {y0 * src_w + x0, y0 * src_w + x1, y1 * src_w + x0, y1 * src_w + x1,
                   x - T(x0), y - T(y0)};
    }
    return taps;
}

} // namespace detail

template <typename T>
RasterT<T> bilinear_sample(const RasterT<T>& source, const RasterT<T>& positions) {
    if (positions.channels() != 2)
        throw ConfigError("bilinear_sample: positions must have 2 channels");
    const int H = positions.height(), W = positions.width();
    auto taps = detail::bilinear_taps(positions, source.height(), source.width());
    RasterT<T> out(source.channels(), H, W, typename RasterT<T>::Uninit{});
    for (int c = 0; c < source.channels(); ++c) {
        const T* s = source.channel(c);
        T* d = out.channel(c);
        for (std::size_t i = 0; i < taps.size(); ++i) {
            const auto& t = taps[i];
            // Difference form: exact at lattice points.
            const T top = s[t.i00] + t.tx * (s[t.i01] - s[t.i00]);
            const T bot = s[t.i10] + t.tx * (s[t.i11] - s[t.i10]);
            d[i] = top + t.ty * (bot - top);
        }
    }
    return out;
}

// Scatter-accumulate gradient w.r.t. the source.
template <typename T>
void bilinear_backward_source(const RasterT<T>& grad_out, const RasterT<T>& positions,
                              RasterT<T>& grad_source) {
    auto taps = detail::bilinear_taps(positions, grad_source.height(), grad_source.width());
    for (int c = 0; c < grad_source.channels(); ++c) {
        const T* g = grad_out.channel(c);
        T* gs = grad_source.channel(c);
        for (std::size_t i = 0; i < taps.size(); ++i) {
            const auto& t = taps[i];
            const T w11 = t.tx * t.ty;
            const T w01 = t.tx - w11;
            const T w10 = t.ty - w11;
            const T w00 = T(1) - t.tx - t.ty + w11;
            gs[t.i00] += g[i] * w00;
            gs[t.i01] += g[i] * w01;
            gs[t.i10] += g[i] * w10;
            gs[t.i11] += g[i] * w11;
        }
    }
}

// ---------------------------------------------------------------------------
// Catmull-Rom bicubic upscaling (a = -0.5), pixel-center alignment, border
// clamp. Output pixel X samples input coordinate (X+0.5)/S - 0.5.

namespace detail {

template <typename T>
struct CubicAxis {
    int idx[4];
    T t;
};

template <typename T>
std::vector<CubicAxis<T>> cubic_axis(int out_n, int src_n, int scale) {
    std::vector<CubicAxis<T>> ax(out_n);
    for (int X = 0; X < out_n; ++X) {
        const T s = (T(X) + T(0.5)) / T(scale) - T(0.5);
        const T fl = std::floor(s);
        int i = int(fl);
        ax[X].t = s - fl;
        for (int k = 0; k < 4; ++k)
            ax[X].idx[k] = std::min(std::max(i - 1 + k, 0), src_n - 1);
    }
    return ax;
}

// Catmull-Rom in difference form: exact for constant inputs.
template <typename T>
T cubic_interp(T p0, T p1, T p2, T p3, T t) {
    const T a = p2 - p0;
    const T b = T(2) * (p0 - p1) + T(3) * (p2 - p1) + (p2 - p3);
    const T c = T(3) * (p1 - p2) + (p3 - p0);
    return p1 + T(0.5) * t * (a + t * (b + t * c));
}

template <typename T>
void cubic_weights(T t, T w[4]) {
    const T t2 = t * t, t3 = t2 * t;
    w[0] = T(0.5) * (-t3 + T(2) * t2 - t);
    w[1] = T(0.5) * (T(3) * t3 - T(5) * t2 + T(2));
    w[2] = T(0.5) * (T(-3) * t3 + T(4) * t2 + t);
    w[3] = T(0.5) * (t3 - t2);
}

} // namespace detail

template <typename T>
RasterT<T> bicubic_resize(const RasterT<T>& in, int scale) {
    if (scale < 2 || scale > 4)
        throw ConfigError("bicubic_resize: scale must be 2, 3 or 4");
    const int H = in.height(), W = in.width();
    const int OH = H * scale, OW = W * scale;
    auto ax = detail::cubic_axis<T>(OW, W, scale);
    auto ay = detail::cubic_axis<T>(OH, H, scale);
    RasterT<T> out(in.channels(), OH, OW, typename RasterT<T>::Uninit{});
    std::vector<T> rows(4 * std::size_t(OW));
    for (int c = 0; c < in.channels(); ++c) {
        const T* s = in.channel(c);
        for (int Y = 0; Y < OH; ++Y) {
            // Horizontal pass for the 4 contributing source rows.
            for (int k = 0; k < 4; ++k) {
                const T* srow = s + std::size_t(ay[Y].idx[k]) * W;
                T* r = rows.data() + std::size_t(k) * OW;
                for (int X = 0; X < OW; ++X) {
                    const auto& a = ax[X];
                    r[X] = detail::cubic_interp(srow[a.idx[0]], srow[a.idx[1]],
                                                srow[a.idx[2]], srow[a.idx[3]], a.t);
                }
            }
            T* orow = out.row(c, Y);
            const T* r0 = rows.data();
            const T* r1 = r0 + OW;
            const T* r2 = r1 + OW;
            const T* r3 = r2 + OW;
            const T ty = ay[Y].t;
            for (int X = 0; X < OW; ++X)
                orow[X] = detail::cubic_interp(r0[X], r1[X], r2[X], r3[X], ty);
        }
    }
    return out;
}

// Scatter-accumulate gradient w.r.t. the input, using the analytic
// separable weights.
template <typename T>
void bicubic_backward_input(const RasterT<T>& grad_out, int scale, RasterT<T>& grad_in) {
    const int H = grad_in.height(), W = grad_in.width();
    const int OH = grad_out.height(), OW = grad_out.width();
    auto ax = detail::cubic_axis<T>(OW, W, scale);
    auto ay = detail::cubic_axis<T>(OH, H, scale);
    std::vector<std::array<T, 4>> wx(OW), wy(OH);
    for (int X = 0; X < OW; ++X) detail::cubic_weights(ax[X].t, wx[X].data());
    for (int Y = 0; Y < OH; ++Y) detail::cubic_weights(ay[Y].t, wy[Y].data());
    for (int c = 0; c < grad_in.channels(); ++c) {
        const T* g = grad_out.channel(c);
        T* gi = grad_in.channel(c);
        for (int Y = 0; Y < OH; ++Y) {
            for (int X = 0; X < OW; ++X) {
                const T gv = g[std::size_t(Y) * OW + X];
                if (gv == T(0)) continue;
                for (int ky = 0; ky < 4; ++ky) {
                    const T gy = gv * wy[Y][ky];
                    T* grow = gi + std::size_t(ay[Y].idx[ky]) * W;
                    for (int kx = 0; kx < 4; ++kx)
                        grow[ax[X].idx[kx]] += gy * wx[X][kx];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dense layers

template <typename T>
RasterT<T> dense_apply_flat(const T* w, const T* b, int out_f, int in_f, const RasterT<T>& x) {
    RasterT<T> y(out_f, 1, 1, typename RasterT<T>::Uninit{});
    const T* xd = x.data();
    for (int i = 0; i < out_f; ++i) {
        const T* wr = w + std::size_t(i) * in_f;
        T s = b ? b[i] : T(0);
        for (int j = 0; j < in_f; ++j) s += wr[j] * xd[j];
        y[i] = s;
    }
    return y;
}

template <typename T>
RasterT<T> dense_apply(const DenseLayerT<T>& layer, const RasterT<T>& x) {
    if (int(x.size()) != layer.in_features)
        throw ConfigError("dense: input size " + std::to_string(x.size()) +
                          " does not match in_features " + std::to_string(layer.in_features));
    return dense_apply_flat(layer.weights.data(), layer.bias.data(),
                            layer.out_features, layer.in_features, x);
}

// dx += W^T g ; dW += g x^T ; db += g
template <typename T>
void dense_backward_flat(const T* w, int out_f, int in_f, const T* x, const T* g,
                         T* grad_x, T* grad_w, T* grad_b) {
    if (grad_b)
        for (int i = 0; i < out_f; ++i) grad_b[i] += g[i];
    if (grad_w) {
        for (int i = 0; i < out_f; ++i) {
            T* gw = grad_w + std::size_t(i) * in_f;
            const T gi = g[i];
            for (int j = 0; j < in_f; ++j) gw[j] += gi * x[j];
        }
    }
    if (grad_x) {
        for (int i = 0; i < out_f; ++i) {
            const T* wr = w + std::size_t(i) * in_f;
            const T gi = g[i];
            for (int j = 0; j < in_f; ++j) grad_x[j] += gi * wr[j];
        }
    }
}

// Affine + activation chain; the final layer is linear.
template <typename T>
RasterT<T> dense_forward(std::span<const DenseLayerT<T>> layers,
                         std::span<const Activation> activations, const RasterT<T>& input) {
    if (layers.size() != activations.size())
        throw ConfigError("dense_forward: layer/activation count mismatch");
    RasterT<T> h = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = dense_apply(layers[i], h);
        if (activations[i] == Activation::Relu) h = relu(h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Elementwise helpers

template <typename T>
RasterT<T> add(const RasterT<T>& a, const RasterT<T>& b) {
    if (!a.same_shape(b)) throw ConfigError("add: shape mismatch " + a.shape() + " vs " + b.shape());
    RasterT<T> out(a.channels(), a.height(), a.width(), typename RasterT<T>::Uninit{});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
RasterT<T> subtract(const RasterT<T>& a, const RasterT<T>& b) {
    if (!a.same_shape(b)) throw ConfigError("subtract: shape mismatch");
    RasterT<T> out(a.channels(), a.height(), a.width(), typename RasterT<T>::Uninit{});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

template <typename T>
RasterT<T> scale(const RasterT<T>& a, T s) {
    RasterT<T> out(a.channels(), a.height(), a.width(), typename RasterT<T>::Uninit{});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

template <typename T>
RasterT<T> concat_channels(std::span<const RasterT<T>* const> parts) {
    if (parts.empty()) throw ConfigError("concat_channels: empty input");
    const int h = parts[0]->height(), w = parts[0]->width();
    int c = 0;
    for (const auto* p : parts) {
        if (p->height() != h || p->width() != w)
            throw ConfigError("concat_channels: spatial dims mismatch");
        c += p->channels();
    }
    RasterT<T> out(c, h, w, typename RasterT<T>::Uninit{});
    T* d = out.data();
    for (const auto* p : parts) {
        std::memcpy(d, p->data(), p->size() * sizeof(T));
        d += p->size();
    }
    return out;
}

template <typename T>
RasterT<T> concat_channels(const RasterT<T>& a, const RasterT<T>& b) {
    const RasterT<T>* parts[2] = {&a, &b};
    return concat_channels(std::span<const RasterT<T>* const>(parts, 2));
}

template <typename T>
RasterT<T> slice_channels(const RasterT<T>& in, int first, int count) {
    if (first < 0 || count < 0 || first + count > in.channels())
        throw ConfigError("slice_channels: range out of bounds");
    RasterT<T> out(count, in.height(), in.width(), typename RasterT<T>::Uninit{});
    std::memcpy(out.data(), in.channel(first), out.size() * sizeof(T));
    return out;
}

template <typename T>
RasterT<T> crop(const RasterT<T>& in, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > in.height() || x0 + w > in.width())
        throw ConfigError("crop: window out of bounds for " + in.shape());
    RasterT<T> out(in.channels(), h, w, typename RasterT<T>::Uninit{});
    for (int c = 0; c < in.channels(); ++c)
        for (int y = 0; y < h; ++y)
            std::memcpy(out.row(c, y), in.row(c, y0 + y) + x0, std::size_t(w) * sizeof(T));
    return out;
}

// Per-pixel convex combination: out = mask*candidate + (1-mask)*history,
// broadcasting the single-channel mask. Accumulated in double so the output
// never leaves [min, max] of the inputs and the mask=0/1 endpoints are exact.
template <typename T>
RasterT<T> blend(const RasterT<T>& mask, const RasterT<T>& candidate, const RasterT<T>& history) {
    if (!candidate.same_shape(history))
        throw ConfigError("blend: candidate/history shape mismatch");
    if (mask.channels() != 1 || mask.height() != candidate.height() || mask.width() != candidate.width())
        throw ConfigError("blend: mask must be 1-channel with matching spatial dims");
    RasterT<T> out(candidate.channels(), candidate.height(), candidate.width(),
                   typename RasterT<T>::Uninit{});
    const std::size_t plane = std::size_t(mask.height()) * mask.width();
    const T* m = mask.data();
    for (int c = 0; c < candidate.channels(); ++c) {
        const T* cd = candidate.channel(c);
        const T* hd = history.channel(c);
        T* od = out.channel(c);
        for (std::size_t i = 0; i < plane; ++i) {
            const double a = double(m[i]);
            od[i] = T(a * double(cd[i]) + (1.0 - a) * double(hd[i]));
        }
    }
    return out;
}

} // namespace tsup
