// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <string>

#include "tsup/ops.hpp"
#include "tsup/raster.hpp"

namespace tsup {

// Motion fields are 2-channel rasters: channel 0 = horizontal displacement
// (+x right), channel 1 = vertical (+y down), in pixel units of the field's
// own resolution. Backward flow: pixel p at time t corresponds to p + mv(p)
// at time t-1.

template <typename T>
void require_motion_field(const RasterT<T>& mv, const std::string& where) {
    if (mv.channels() != 2) throw ConfigError(where + ": motion field must have 2 channels");
}

// Sub-pixel sample offset in LR pixel units.
template <typename T>
struct JitterOffsetT {
    T x = 0;
    T y = 0;

    void validate() const {
        if (!(x >= T(-0.5) && x <= T(0.5) && y >= T(-0.5) && y <= T(0.5)))
            throw DataError("jitter offset outside [-0.5, 0.5]");
    }
};

using JitterOffset = JitterOffsetT<float>;

// mv'(p) = mv(p) + J_prev - J_cur, per component.
template <typename T>
RasterT<T> compensate_jitter(const RasterT<T>& mv, JitterOffsetT<T> j_prev, JitterOffsetT<T> j_cur) {
    require_motion_field(mv, "compensate_jitter");
    const T dx = j_prev.x - j_cur.x;
    const T dy = j_prev.y - j_cur.y;
    RasterT<T> out = mv;
    T* h = out.channel(0);
    T* v = out.channel(1);
    const std::size_t plane = std::size_t(mv.height()) * mv.width();
    for (std::size_t i = 0; i < plane; ++i) h[i] += dx;
    for (std::size_t i = 0; i < plane; ++i) v[i] += dy;
    return out;
}

// Depth-informed dilation to HR. The HR grid is split into block x block
// tiles; each tile takes the MV of the frontmost (minimum depth, ties to the
// smallest row-major index) LR pixel its footprint overlaps, scaled by S
// into HR pixel units.
template <typename T>
RasterT<T> dilate_mv(const RasterT<T>& mv_lr, const RasterT<T>& depth_lr, int s, int block = 8) {
    require_motion_field(mv_lr, "dilate_mv");
    const int H = mv_lr.height(), W = mv_lr.width();
    if (depth_lr.channels() != 1 || depth_lr.height() != H || depth_lr.width() != W)
        throw ConfigError("dilate_mv: depth dims " + depth_lr.shape() +
                          " do not match motion field " + mv_lr.shape());
    if (s < 1 || block < 1) throw ConfigError("dilate_mv: bad scale or block");
    const int HH = H * s, HW = W * s;
    RasterT<T> out(2, HH, HW, typename RasterT<T>::Uninit{});
    const int tiles_y = (HH + block - 1) / block;
    const int tiles_x = (HW + block - 1) / block;
    for (int ty = 0; ty < tiles_y; ++ty) {
        const int y0 = ty * block, y1 = std::min(y0 + block, HH);
        const int ly0 = y0 / s, ly1 = (y1 - 1) / s;
        for (int tx = 0; tx < tiles_x; ++tx) {
            const int x0 = tx * block, x1 = std::min(x0 + block, HW);
            const int lx0 = x0 / s, lx1 = (x1 - 1) / s;
            int by = ly0, bx = lx0;
            T best = depth_lr.at(0, ly0, lx0);
            for (int ly = ly0; ly <= ly1; ++ly)
                for (int lx = lx0; lx <= lx1; ++lx) {
                    const T d = depth_lr.at(0, ly, lx);
                    if (d < best) {
                        best = d;
                        by = ly;
                        bx = lx;
                    }
                }
            const T vx = mv_lr.at(0, by, bx) * T(s);
            const T vy = mv_lr.at(1, by, bx) * T(s);
            for (int y = y0; y < y1; ++y) {
                T* rh = out.row(0, y);
                T* rv = out.row(1, y);
                for (int x = x0; x < x1; ++x) {
                    rh[x] = vx;
                    rv[x] = vy;
                }
            }
        }
    }
    return out;
}

// Nearest-neighbor MV upsampling; the dilation-off path.
template <typename T>
RasterT<T> upsample_mv_nearest(const RasterT<T>& mv_lr, int s) {
    require_motion_field(mv_lr, "upsample_mv_nearest");
    const int H = mv_lr.height(), W = mv_lr.width();
    RasterT<T> out(2, H * s, W * s, typename RasterT<T>::Uninit{});
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < H * s; ++y) {
            const T* srow = mv_lr.row(c, y / s);
            T* drow = out.row(c, y);
            for (int x = 0; x < W * s; ++x) drow[x] = srow[x / s] * T(s);
        }
    return out;
}

// Absolute sample coordinates for bilinear_sample: p + mv(p).
template <typename T>
RasterT<T> warp_positions(const RasterT<T>& mv_hr) {
    require_motion_field(mv_hr, "warp_positions");
    const int H = mv_hr.height(), W = mv_hr.width();
    RasterT<T> pos(2, H, W, typename RasterT<T>::Uninit{});
    for (int y = 0; y < H; ++y) {
        const T* mh = mv_hr.row(0, y);
        const T* mv = mv_hr.row(1, y);
        T* px = pos.row(0, y);
        T* py = pos.row(1, y);
        for (int x = 0; x < W; ++x) {
            px[x] = T(x) + mh[x];
            py[x] = T(y) + mv[x];
        }
    }
    return pos;
}

// Warped previous HR output and features, plus their LR packing.
template <typename T>
struct WarpedHistoryT {
    RasterT<T> color;  // 3 channels @ HR
    RasterT<T> feat;   // 1 channel @ HR
    RasterT<T> packed; // 4*S*S channels @ LR
};

using WarpedHistory = WarpedHistoryT<float>;

template <typename T>
WarpedHistoryT<T> reproject(const RasterT<T>& prev_color, const RasterT<T>& prev_feat,
                            const RasterT<T>& mv_hr, int s) {
    if (prev_color.channels() != 3 || prev_feat.channels() != 1)
        throw ConfigError("reproject: expected 3-channel color and 1-channel features");
    RasterT<T> pos = warp_positions(mv_hr);
    WarpedHistoryT<T> out;
    RasterT<T> both = concat_channels(prev_color, prev_feat);
    RasterT<T> warped = bilinear_sample(both, pos);
    out.color = slice_channels(warped, 0, 3);
    out.feat = slice_channels(warped, 3, 1);
    out.packed = space_to_depth(warped, s);
    return out;
}

// HR sampling positions for the full warping module: jitter compensation at
// LR, then dilation (or plain nearest upsampling) to HR.
template <typename T>
RasterT<T> pipeline_positions(const RasterT<T>& mv_lr, const RasterT<T>& depth_lr,
                              JitterOffsetT<T> j_prev, JitterOffsetT<T> j_cur, int s,
                              bool use_dilation, int block = 8) {
    RasterT<T> adjusted = compensate_jitter(mv_lr, j_prev, j_cur);
    RasterT<T> mv_hr = use_dilation ? dilate_mv(adjusted, depth_lr, s, block)
                                    : upsample_mv_nearest(adjusted, s);
    return warp_positions(mv_hr);
}

template <typename T>
WarpedHistoryT<T> warp_pipeline(const RasterT<T>& mv_lr, const RasterT<T>& depth_lr,
                                JitterOffsetT<T> j_prev, JitterOffsetT<T> j_cur,
                                const RasterT<T>& prev_color, const RasterT<T>& prev_feat,
                                int s, bool use_dilation = true, int block = 8) {
    RasterT<T> adjusted = compensate_jitter(mv_lr, j_prev, j_cur);
    RasterT<T> mv_hr = use_dilation ? dilate_mv(adjusted, depth_lr, s, block)
                                    : upsample_mv_nearest(adjusted, s);
    return reproject(prev_color, prev_feat, mv_hr, s);
}

} // namespace tsup
