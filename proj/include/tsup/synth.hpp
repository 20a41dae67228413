// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "tsup/dataset.hpp"
#include "tsup/raster.hpp"
#include "tsup/raster_file.hpp"
#include "tsup/warp.hpp"

// Procedural scene generator with analytic ground truth. Scenes are flat
// textured surfaces (a background plus translating sprites) evaluated at
// continuous world coordinates, so jittered sampling, supersampled targets,
// and backward motion fields are exact by construction.
//
// Conventions: world coordinates are in HR pixel units. Frame t renders on a
// grid shifted by that frame's jitter (camera offset); motion fields exclude
// jitter, which is what the warping module's compensation re-adds. The HR
// target shares the frame's jitter so that recurrent outputs, the loss, and
// naive upsampling baselines all agree sub-pixel.

namespace tsup::synth {

struct Rng {
    SplitMix64 sm;
    explicit Rng(std::uint64_t seed) : sm{seed} {}
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * (double(sm.next() >> 11) * 0x1.0p-53);
    }
    int below(int n) { return int(sm.below(std::uint64_t(n))); }
    bool coin() { return (sm.next() >> 63) != 0; }
};

struct Wave {
    double fx = 0, fy = 0, phase = 0, amp = 0;
};

struct Texture {
    enum class Kind { Checker, Gradient, Noise };
    Kind kind = Kind::Checker;

    // Checker: smooth square-wave product; transition width ~ cell * edge.
    double cell = 12.0;
    double edge = 0.2;
    std::array<double, 3> color_a{0.1, 0.1, 0.1};
    std::array<double, 3> color_b{0.9, 0.9, 0.9};

    // Gradient: clamped linear ramp per channel.
    std::array<double, 3> base{0.5, 0.5, 0.5};
    std::array<double, 3> grad_u{};
    std::array<double, 3> grad_v{};

    // Noise: small bank of sinusoids per channel, band-limited by choice of
    // frequencies.
    std::array<std::vector<Wave>, 3> waves;

    std::array<float, 3> eval(double u, double v) const {
        std::array<float, 3> out{};
        switch (kind) {
        case Kind::Checker: {
            const double su = std::tanh(std::sin(std::numbers::pi * u / cell) / edge);
            const double sv = std::tanh(std::sin(std::numbers::pi * v / cell) / edge);
            const double m = 0.5 + 0.5 * su * sv;
            for (int c = 0; c < 3; ++c)
                out[std::size_t(c)] = clamp01(color_a[std::size_t(c)] +
                                              (color_b[std::size_t(c)] - color_a[std::size_t(c)]) * m);
            break;
        }
        case Kind::Gradient:
            for (int c = 0; c < 3; ++c)
                out[std::size_t(c)] = clamp01(base[std::size_t(c)] + grad_u[std::size_t(c)] * u +
                                              grad_v[std::size_t(c)] * v);
            break;
        case Kind::Noise:
            for (int c = 0; c < 3; ++c) {
                double acc = 0.5;
                for (const Wave& w : waves[std::size_t(c)])
                    acc += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
                out[std::size_t(c)] = clamp01(acc);
            }
            break;
        }
        return out;
    }

private:
    static float clamp01(double v) { return float(std::clamp(v, 0.0, 1.0)); }
};

struct Sprite {
    Texture texture;
    double half_w = 8, half_h = 8; // HR px
    float depth = 0.5f;            // in (0,1), closer than the background
    std::vector<std::array<double, 2>> pos; // per-frame center, world coords (x, y)
};

struct SceneSpec {
    Texture background;
    float background_depth = 0.92f;
    std::vector<Sprite> sprites;
    std::vector<std::array<double, 2>> camera; // per-frame screen origin, world coords
    std::vector<std::pair<int, int>> static_ranges; // inclusive frame ranges, fully frozen
    int frames = 0;
    int hr_h = 0, hr_w = 0;
    int scale = 1;

    void validate() const {
        if (frames < 1) throw ConfigError("scene: frame count must be positive");
        if (scale < 1) throw ConfigError("scene: scale must be >= 1");
        if (hr_h < 8 * scale || hr_w < 8 * scale || hr_h % (8 * scale) != 0 ||
            hr_w % (8 * scale) != 0)
            throw ConfigError("scene: HR dims must be positive multiples of 8*scale");
        if (int(camera.size()) != frames)
            throw ConfigError("scene: camera path length must equal frame count");
        for (const Sprite& s : sprites) {
            if (int(s.pos.size()) != frames)
                throw ConfigError("scene: sprite path length must equal frame count");
            if (!(s.depth > 0.0f && s.depth < background_depth))
                throw ConfigError("scene: sprite depth must lie in (0, background depth)");
            if (s.half_w <= 0 || s.half_h <= 0) throw ConfigError("scene: sprite size must be positive");
        }
        for (std::size_t i = 0; i < sprites.size(); ++i)
            for (std::size_t k = i + 1; k < sprites.size(); ++k)
                if (sprites[i].depth == sprites[k].depth)
                    throw ConfigError("scene: sprite depths must be distinct");
        for (auto [a, b] : static_ranges)
            if (a < 0 || b < a || b >= frames) throw ConfigError("scene: static range out of bounds");
    }
};

// Frontmost surface at a world point: sprite index, or -1 for the background.
inline int surface_at(const SceneSpec& spec, double wx, double wy, int t) {
    int best = -1;
    float best_depth = spec.background_depth;
    for (int i = 0; i < int(spec.sprites.size()); ++i) {
        const Sprite& s = spec.sprites[std::size_t(i)];
        const auto& p = s.pos[std::size_t(t)];
        if (std::abs(wx - p[0]) <= s.half_w && std::abs(wy - p[1]) <= s.half_h &&
            s.depth < best_depth) {
            best = i;
            best_depth = s.depth;
        }
    }
    return best;
}

inline float depth_at(const SceneSpec& spec, double wx, double wy, int t) {
    const int id = surface_at(spec, wx, wy, t);
    return id < 0 ? spec.background_depth : spec.sprites[std::size_t(id)].depth;
}

// Sprite textures ride along with the sprite (local coordinates); the
// background is pinned to the world.
inline std::array<float, 3> shade(const SceneSpec& spec, double wx, double wy, int t) {
    const int id = surface_at(spec, wx, wy, t);
    if (id < 0) return spec.background.eval(wx, wy);
    const Sprite& s = spec.sprites[std::size_t(id)];
    return s.texture.eval(wx - s.pos[std::size_t(t)][0], wy - s.pos[std::size_t(t)][1]);
}

// Box prefilter of the given width (HR px), 4x4 samples.
inline std::array<float, 3> sample_box(const SceneSpec& spec, int t, double wx, double wy,
                                       double width) {
    static constexpr double kOff[4] = {-0.375, -0.125, 0.125, 0.375};
    double acc[3] = {0, 0, 0};
    for (double oy : kOff)
        for (double ox : kOff) {
            const auto c = shade(spec, wx + ox * width, wy + oy * width, t);
            acc[0] += c[0];
            acc[1] += c[1];
            acc[2] += c[2];
        }
    return {float(acc[0] / 16.0), float(acc[1] / 16.0), float(acc[2] / 16.0)};
}

// World position of an HR pixel center under the frame's jitter (LR px units).
inline std::array<double, 2> hr_pixel_world(const SceneSpec& spec, int t, JitterOffset j, int hy,
                                            int hx) {
    return {hx + 0.5 - double(spec.scale) * j.x + spec.camera[std::size_t(t)][0],
            hy + 0.5 - double(spec.scale) * j.y + spec.camera[std::size_t(t)][1]};
}

inline std::array<double, 2> lr_pixel_world(const SceneSpec& spec, int t, JitterOffset j, int ly,
                                            int lx) {
    return {double(spec.scale) * (lx + 0.5 - double(j.x)) + spec.camera[std::size_t(t)][0],
            double(spec.scale) * (ly + 0.5 - double(j.y)) + spec.camera[std::size_t(t)][1]};
}

// Supersampled render on the frame's jittered HR grid (the training target).
inline Raster render_hr_color(const SceneSpec& spec, int t, JitterOffset j) {
    Raster out(3, spec.hr_h, spec.hr_w, Raster::Uninit{});
    for (int y = 0; y < spec.hr_h; ++y)
        for (int x = 0; x < spec.hr_w; ++x) {
            const auto w = hr_pixel_world(spec, t, j, y, x);
            const auto c = sample_box(spec, t, w[0], w[1], 1.0);
            out.at(0, y, x) = c[0];
            out.at(1, y, x) = c[1];
            out.at(2, y, x) = c[2];
        }
    return out;
}

// Jittered LR color. The default kernel width of one HR pixel is the
// mip-biased variant (bias -log2 S): native LR filtering would use width S.
inline Raster render_lr_color(const SceneSpec& spec, int t, JitterOffset j,
                              double kernel_hr_px = 1.0) {
    const int lh = spec.hr_h / spec.scale, lw = spec.hr_w / spec.scale;
    Raster out(3, lh, lw, Raster::Uninit{});
    for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
            const auto w = lr_pixel_world(spec, t, j, y, x);
            const auto c = sample_box(spec, t, w[0], w[1], kernel_hr_px);
            out.at(0, y, x) = c[0];
            out.at(1, y, x) = c[1];
            out.at(2, y, x) = c[2];
        }
    return out;
}

inline Raster render_lr_depth(const SceneSpec& spec, int t, JitterOffset j) {
    const int lh = spec.hr_h / spec.scale, lw = spec.hr_w / spec.scale;
    Raster out(1, lh, lw, Raster::Uninit{});
    for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
            const auto w = lr_pixel_world(spec, t, j, y, x);
            out.at(0, y, x) = depth_at(spec, w[0], w[1], t);
        }
    return out;
}

namespace detail {

// Backward screen displacement of a surface between t-1 and t, HR px units.
inline std::array<double, 2> surface_motion_hr(const SceneSpec& spec, int id, int t) {
    const auto& c1 = spec.camera[std::size_t(t)];
    const auto& c0 = spec.camera[std::size_t(t - 1)];
    double mx = c1[0] - c0[0], my = c1[1] - c0[1];
    if (id >= 0) {
        const Sprite& s = spec.sprites[std::size_t(id)];
        mx -= s.pos[std::size_t(t)][0] - s.pos[std::size_t(t - 1)][0];
        my -= s.pos[std::size_t(t)][1] - s.pos[std::size_t(t - 1)][1];
    }
    return {mx, my};
}

} // namespace detail

// Analytic backward motion at LR, canonical convention (channel 0 horizontal,
// channel 1 vertical, LR px units). Frame 0 has no predecessor: zero field.
inline Raster render_lr_motion(const SceneSpec& spec, int t, JitterOffset j) {
    const int lh = spec.hr_h / spec.scale, lw = spec.hr_w / spec.scale;
    if (t == 0) return Raster(2, lh, lw);
    Raster out(2, lh, lw, Raster::Uninit{});
    for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
            const auto w = lr_pixel_world(spec, t, j, y, x);
            const int id = surface_at(spec, w[0], w[1], t);
            const auto m = detail::surface_motion_hr(spec, id, t);
            out.at(0, y, x) = float(m[0] / spec.scale);
            out.at(1, y, x) = float(m[1] / spec.scale);
        }
    return out;
}

// Same field at HR resolution in HR px units; the warp-consistency oracle.
inline Raster render_hr_motion(const SceneSpec& spec, int t, JitterOffset j) {
    if (t == 0) return Raster(2, spec.hr_h, spec.hr_w);
    Raster out(2, spec.hr_h, spec.hr_w, Raster::Uninit{});
    for (int y = 0; y < spec.hr_h; ++y)
        for (int x = 0; x < spec.hr_w; ++x) {
            const auto w = hr_pixel_world(spec, t, j, y, x);
            const int id = surface_at(spec, w[0], w[1], t);
            const auto m = detail::surface_motion_hr(spec, id, t);
            out.at(0, y, x) = float(m[0]);
            out.at(1, y, x) = float(m[1]);
        }
    return out;
}

// 1 where the backward correspondence from frame t (jitter j_cur) into frame
// t-1 (jitter j_prev) is clean: the same surface covers a small neighborhood
// at both times and the source stays well inside the frame. Everything else
// (disocclusions, silhouette mixing zones, borders) is 0.
inline Raster valid_mask(const SceneSpec& spec, int t, JitterOffset j_prev, JitterOffset j_cur) {
    Raster out(1, spec.hr_h, spec.hr_w);
    if (t == 0) return out;
    static constexpr double kN[3] = {-1.5, 0.0, 1.5};
    const auto& cam_prev = spec.camera[std::size_t(t - 1)];
    for (int y = 0; y < spec.hr_h; ++y)
        for (int x = 0; x < spec.hr_w; ++x) {
            const auto w = hr_pixel_world(spec, t, j_cur, y, x);
            const int id = surface_at(spec, w[0], w[1], t);
            const auto m = detail::surface_motion_hr(spec, id, t);
            // Material point's world position at t-1 and its index in that frame.
            const double px = w[0] - (spec.camera[std::size_t(t)][0] - cam_prev[0] - m[0]);
            const double py = w[1] - (spec.camera[std::size_t(t)][1] - cam_prev[1] - m[1]);
            const double qx = px - cam_prev[0] + double(spec.scale) * j_prev.x - 0.5;
            const double qy = py - cam_prev[1] + double(spec.scale) * j_prev.y - 0.5;
            if (qx < 2.0 || qy < 2.0 || qx > spec.hr_w - 3.0 || qy > spec.hr_h - 3.0) continue;
            bool clean = true;
            for (double dy : kN)
                for (double dx : kN)
                    if (surface_at(spec, w[0] + dx, w[1] + dy, t) != id ||
                        surface_at(spec, px + dx, py + dy, t - 1) != id)
                        clean = false;
            if (clean) out.at(0, y, x) = 1.0f;
        }
    return out;
}

struct GroundTruthFrame {
    Raster hr_color;  // supersampled reference on the jittered grid
    Raster lr_color;
    Raster lr_depth;
    Raster lr_motion;
    JitterOffset jitter;
    int phase = 0;
};

inline GroundTruthFrame render_frame(const SceneSpec& spec, int t) {
    spec.validate();
    if (t < 0 || t >= spec.frames) throw ConfigError("render_frame: frame index out of range");
    const JitterOffset j = jitter_sequence()[std::size_t(t % kJitterPeriod)];
    return GroundTruthFrame{render_hr_color(spec, t, j), render_lr_color(spec, t, j),
                            render_lr_depth(spec, t, j), render_lr_motion(spec, t, j), j,
                            t % kJitterPeriod};
}

namespace detail {

inline Texture random_texture(Rng& rng, int kind_pick, bool sprite_scale) {
    Texture tex;
    switch (kind_pick % 3) {
    case 0: {
        tex.kind = Texture::Kind::Checker;
        tex.cell = rng.uniform(sprite_scale ? 5.0 : 8.0, sprite_scale ? 10.0 : 16.0);
        tex.edge = rng.uniform(0.15, 0.3);
        const double lo = rng.uniform(0.05, 0.25), hi = rng.uniform(0.65, 0.95);
        for (int c = 0; c < 3; ++c) {
            tex.color_a[std::size_t(c)] = lo + rng.uniform(-0.05, 0.05);
            tex.color_b[std::size_t(c)] = hi + rng.uniform(-0.05, 0.05);
        }
        break;
    }
    case 1: {
        tex.kind = Texture::Kind::Gradient;
        for (int c = 0; c < 3; ++c) {
            tex.base[std::size_t(c)] = rng.uniform(0.3, 0.7);
            tex.grad_u[std::size_t(c)] = rng.uniform(-0.0025, 0.0025);
            tex.grad_v[std::size_t(c)] = rng.uniform(-0.0025, 0.0025);
        }
        break;
    }
    default: {
        tex.kind = Texture::Kind::Noise;
        for (int c = 0; c < 3; ++c) {
            double total = 0;
            std::vector<Wave> bank;
            for (int k = 0; k < 3; ++k) {
                Wave w;
                const double f = rng.uniform(0.02, 0.1);
                const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
                w.fx = f * std::cos(ang);
                w.fy = f * std::sin(ang);
                w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
                w.amp = rng.uniform(0.08, 0.14);
                total += w.amp;
                bank.push_back(w);
            }
            Wave d; // one higher-frequency, low-amplitude detail wave
            const double f = rng.uniform(0.15, 0.22);
            const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
            d.fx = f * std::cos(ang);
            d.fy = f * std::sin(ang);
            d.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            d.amp = 0.05;
            total += d.amp;
            bank.push_back(d);
            if (total > 0.4)
                for (Wave& w : bank) w.amp *= 0.4 / total;
            tex.waves[std::size_t(c)] = std::move(bank);
        }
        break;
    }
    }
    return tex;
}

// Integrates per-frame step velocities into positions; steps reverse
// periodically to keep content on screen and freeze inside static ranges.
inline std::vector<std::array<double, 2>> integrate_path(
    int frames, std::array<double, 2> start, std::array<double, 2> vel, int reverse_every,
    const std::vector<std::pair<int, int>>& static_ranges) {
    std::vector<std::array<double, 2>> pos(std::size_t(frames), start);
    auto frozen = [&](int t) {
        for (auto [a, b] : static_ranges)
            if (t > a && t <= b) return true;
        return false;
    };
    std::array<double, 2> v = vel;
    for (int t = 1; t < frames; ++t) {
        if (reverse_every > 0 && t % reverse_every == 0) {
            v[0] = -v[0];
            v[1] = -v[1];
        }
        const double sx = frozen(t) ? 0.0 : v[0];
        const double sy = frozen(t) ? 0.0 : v[1];
        pos[std::size_t(t)] = {pos[std::size_t(t - 1)][0] + sx, pos[std::size_t(t - 1)][1] + sy};
    }
    return pos;
}

} // namespace detail

// Deterministic scene family: textures, sprite shapes, and depths derive from
// the scene seed alone; motion paths vary per segment. Every segment of a
// scene therefore shows the same world under different camera/sprite motion.
inline SceneSpec make_scene_spec(std::uint64_t scene_seed, int segment, int frames, int hr_h,
                                 int hr_w, int scale, bool with_static_range) {
    SceneSpec spec;
    spec.frames = frames;
    spec.hr_h = hr_h;
    spec.hr_w = hr_w;
    spec.scale = scale;

    if (with_static_range) {
        const int len = std::min(12, frames - 4);
        if (len >= 10) {
            const int a = (frames - len) / 2;
            spec.static_ranges = {{a, a + len - 1}};
        }
    }

    Rng fam(fnv1a64("family") ^ scene_seed);
    spec.background = detail::random_texture(fam, fam.below(3), false);
    spec.background_depth = 0.92f;

    const int n_sprites = 2 + fam.below(3); // 2..4 plus the thin bar below
    static constexpr float kDepths[5] = {0.2f, 0.32f, 0.44f, 0.56f, 0.68f};

    struct Shape {
        Texture tex;
        double half_w, half_h;
        float depth;
    };
    std::vector<Shape> shapes;
    for (int i = 0; i < n_sprites; ++i) {
        Shape s;
        s.tex = i == 0 ? detail::random_texture(fam, 0, true) // one checkered sprite
                       : detail::random_texture(fam, 1 + fam.below(2), true); // gradient or noise
        s.half_w = fam.uniform(0.06, 0.17) * hr_w;
        s.half_h = fam.uniform(0.06, 0.17) * hr_h;
        s.depth = kDepths[std::size_t(i)];
        shapes.push_back(std::move(s));
    }
    { // thin bar: 1-2 LR px across, long the other way, high contrast
        Shape bar;
        bar.tex = detail::random_texture(fam, 1, true);
        const double bright = fam.coin() ? fam.uniform(0.78, 0.95) : fam.uniform(0.05, 0.22);
        for (int c = 0; c < 3; ++c) bar.tex.base[std::size_t(c)] = bright + fam.uniform(-0.04, 0.04);
        const double across = scale * fam.uniform(0.5, 1.0);
        const double along = fam.uniform(0.15, 0.3) * std::min(hr_h, hr_w);
        const bool vertical = fam.coin();
        bar.half_w = vertical ? across : along;
        bar.half_h = vertical ? along : across;
        bar.depth = kDepths[4];
        shapes.push_back(std::move(bar));
    }

    Rng mot(fnv1a64("motion") ^ scene_seed ^ (0x9e3779b97f4a7c15ULL * std::uint64_t(segment + 1)));
    const double s = scale;
    spec.camera = detail::integrate_path(
        frames, {mot.uniform(-20.0, 20.0), mot.uniform(-20.0, 20.0)},
        {s * mot.uniform(-1.2, 1.2), s * mot.uniform(-1.2, 1.2)}, std::max(2, frames / 2),
        spec.static_ranges);
    for (Shape& sh : shapes) {
        Sprite sp;
        sp.texture = std::move(sh.tex);
        sp.half_w = sh.half_w;
        sp.half_h = sh.half_h;
        sp.depth = sh.depth;
        const double sign_x = mot.coin() ? 1.0 : -1.0;
        const double sign_y = mot.coin() ? 1.0 : -1.0;
        sp.pos = detail::integrate_path(
            frames,
            {spec.camera[0][0] + hr_w * mot.uniform(0.2, 0.8),
             spec.camera[0][1] + hr_h * mot.uniform(0.2, 0.8)},
            {s * sign_x * mot.uniform(0.3, 1.5), s * sign_y * mot.uniform(0.3, 1.5)},
            8 + mot.below(9), spec.static_ranges);
        spec.sprites.push_back(std::move(sp));
    }

    spec.validate();
    return spec;
}

struct DatasetPaths {
    std::vector<std::string> train_manifests;
    std::vector<std::string> test_manifests;
};

namespace detail {

inline std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (int(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

inline std::string write_segment(const std::filesystem::path& dir, const std::string& scene,
                                 const std::string& segment, const SceneSpec& spec) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    SequenceManifest m;
    m.scene = scene;
    m.segment = segment;
    m.static_ranges = spec.static_ranges;
    for (int t = 0; t < spec.frames; ++t) {
        const GroundTruthFrame f = render_frame(spec, t);
        FrameRecord rec;
        const std::string base = "f" + zero_pad(t, 3);
        rec.color = base + ".color.qras";
        rec.depth = base + ".depth.qras";
        rec.motion = base + ".motion.qras";
        rec.target = base + ".target.qras";
        rec.jitter = f.jitter;
        write_raster_file((dir / rec.color).string(), f.lr_color);
        write_raster_file((dir / rec.depth).string(), f.lr_depth);
        write_raster_file((dir / rec.motion).string(), f.lr_motion);
        write_raster_file((dir / rec.target).string(), f.hr_color);
        m.frames.push_back(std::move(rec));
    }
    const std::string path = (dir / "manifest.json").string();
    write_manifest(path, m);
    return path;
}

} // namespace detail

// Seeded synthetic dataset: n_scenes training scenes plus max(1, n/4) held-out
// test scenes, each split into ~30-frame segments rendered independently.
// Every scene contains one >=10-frame fully static segment window.
inline DatasetPaths make_dataset(const std::string& out_dir, int n_scenes, int frames_per_scene,
                                 int hr_size, int scale, std::uint64_t seed) {
    if (n_scenes < 1) throw ConfigError("make_dataset: need at least one scene");
    if (frames_per_scene < 16) throw ConfigError("make_dataset: need at least 16 frames per scene");
    if (scale < 1 || hr_size < 8 * scale || hr_size % (8 * scale) != 0)
        throw ConfigError("make_dataset: HR size must be a positive multiple of 8*scale");

    int n_segments = std::max(1, frames_per_scene / 30);
    while (frames_per_scene % n_segments != 0) --n_segments;
    const int seg_len = frames_per_scene / n_segments;

    namespace fs = std::filesystem;
    const int n_test = std::max(1, n_scenes / 4);
    DatasetPaths out;
    for (int i = 0; i < n_scenes + n_test; ++i) {
        const bool is_test = i >= n_scenes;
        const std::uint64_t scene_seed = fnv1a64("scene") ^ (seed * 0x9e3779b97f4a7c15ULL) ^
                                         (std::uint64_t(i) * 0xbf58476d1ce4e5b9ULL);
        const std::string scene = "scene" + detail::zero_pad(i, 2);
        for (int g = 0; g < n_segments; ++g) {
            const SceneSpec spec = make_scene_spec(scene_seed, g, seg_len, hr_size, hr_size, scale,
                                                   g == i % n_segments);
            const fs::path dir =
                fs::path(out_dir) / (is_test ? "test" : "train") / scene / ("seg" + std::to_string(g));
            std::string path = detail::write_segment(dir, scene, "seg" + std::to_string(g), spec);
            (is_test ? out.test_manifests : out.train_manifests).push_back(std::move(path));
        }
    }
    return out;
}

} // namespace tsup::synth
