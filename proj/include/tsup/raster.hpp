// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "tsup/errors.hpp"

namespace tsup {

// Checked mode validates finiteness on raster construction from external data.
// Off by default so hot loops stay lean; tests and the CLI turn it on.
inline std::atomic<bool>& raster_checks_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}
inline void set_raster_checks(bool on) { raster_checks_flag().store(on); }
inline bool raster_checks_enabled() { return raster_checks_flag().load(); }

// Dense C x H x W grid of scalars, channel-major then row-major:
// index = c*H*W + y*W + x. The universal carrier for color, depth, motion,
// features and flat parameter vectors (shape (N,1,1)).
template <typename T>
class RasterT {
public:
    RasterT() = default;

    RasterT(int channels, int height, int width)
        : c_(channels), h_(height), w_(width), n_(std::size_t(channels) * height * width) {
        check_dims(channels, height, width);
        buf_ = std::make_unique<T[]>(n_); // zero-initialized
    }

    struct Uninit {};
    RasterT(int channels, int height, int width, Uninit)
        : c_(channels), h_(height), w_(width), n_(std::size_t(channels) * height * width) {
        check_dims(channels, height, width);
        buf_.reset(new T[n_]);
    }

    static RasterT from_data(int channels, int height, int width, const std::vector<T>& data) {
        if (data.size() != std::size_t(channels) * height * width)
            throw ConfigError("raster data length " + std::to_string(data.size()) +
                              " does not match shape " + shape_str(channels, height, width));
        RasterT r(channels, height, width, Uninit{});
        std::copy(data.begin(), data.end(), r.buf_.get());
        if (raster_checks_enabled()) r.require_finite("raster construction");
        return r;
    }

    static RasterT full(int channels, int height, int width, T value) {
        RasterT r(channels, height, width, Uninit{});
        std::fill_n(r.buf_.get(), r.n_, value);
        return r;
    }

    RasterT(const RasterT& other)
        : c_(other.c_), h_(other.h_), w_(other.w_), n_(other.n_) {
        if (other.buf_) {
            buf_.reset(new T[n_]);
            std::memcpy(buf_.get(), other.buf_.get(), n_ * sizeof(T));
        }
    }
    RasterT& operator=(const RasterT& other) {
        if (this != &other) {
            RasterT tmp(other);
            *this = std::move(tmp);
        }
        return *this;
    }
    RasterT(RasterT&&) noexcept = default;
    RasterT& operator=(RasterT&&) noexcept = default;

    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }
    std::size_t size() const { return n_; }
    bool empty() const { return n_ == 0; }

    T* data() { return buf_.get(); }
    const T* data() const { return buf_.get(); }
    T* channel(int c) { return buf_.get() + std::size_t(c) * h_ * w_; }
    const T* channel(int c) const { return buf_.get() + std::size_t(c) * h_ * w_; }
    T* row(int c, int y) { return channel(c) + std::size_t(y) * w_; }
    const T* row(int c, int y) const { return channel(c) + std::size_t(y) * w_; }

    T& at(int c, int y, int x) { return buf_[idx(c, y, x)]; }
    T at(int c, int y, int x) const { return buf_[idx(c, y, x)]; }
    T& operator[](std::size_t i) { return buf_[i]; }
    T operator[](std::size_t i) const { return buf_[i]; }

    bool same_shape(const RasterT& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
    std::string shape() const { return shape_str(c_, h_, w_); }

    void fill(T v) { std::fill_n(buf_.get(), n_, v); }
    void zero() { if (buf_) std::memset(buf_.get(), 0, n_ * sizeof(T)); }

    bool all_finite() const {
        for (std::size_t i = 0; i < n_; ++i)
            if (!std::isfinite(buf_[i])) return false;
        return true;
    }
    void require_finite(const std::string& where) const {
        if (!all_finite()) throw ConfigError("non-finite value in " + where);
    }

    template <typename U>
    RasterT<U> cast() const {
        RasterT<U> out(c_, h_, w_, typename RasterT<U>::Uninit{});
        for (std::size_t i = 0; i < n_; ++i) out[i] = static_cast<U>(buf_[i]);
        return out;
    }

    bool bitwise_equal(const RasterT& o) const {
        return same_shape(o) && std::memcmp(buf_.get(), o.buf_.get(), n_ * sizeof(T)) == 0;
    }

private:
    static std::string shape_str(int c, int h, int w) {
        return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
    }
    static void check_dims(int c, int h, int w) {
        if (c < 0 || h < 0 || w < 0)
            throw ConfigError("negative raster dimension " + shape_str(c, h, w));
    }
    std::size_t idx(int c, int y, int x) const {
        return (std::size_t(c) * h_ + y) * w_ + x;
    }

    int c_ = 0, h_ = 0, w_ = 0;
    std::size_t n_ = 0;
    std::unique_ptr<T[]> buf_;
};

using Raster = RasterT<float>;

// Flat vector view helpers: parameter and feature vectors are rasters of
// shape (N,1,1).
template <typename T>
RasterT<T> make_vector(const std::vector<T>& v) {
    return RasterT<T>::from_data(int(v.size()), 1, 1, v);
}

template <typename T>
bool shapes_equal(const RasterT<T>& a, const RasterT<T>& b) { return a.same_shape(b); }

} // namespace tsup
