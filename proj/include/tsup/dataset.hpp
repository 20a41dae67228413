// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsup/ops.hpp"
#include "tsup/raster_file.hpp"
#include "tsup/warp.hpp"

namespace tsup {

inline constexpr int kJitterPeriod = 16;

// Radical inverse of index+1 (1-based so the first value is nonzero).
inline double halton(int index, int base) {
    if (base < 2) throw ConfigError("halton: base must be >= 2");
    if (index < 0) throw ConfigError("halton: index must be >= 0");
    double f = 1.0, r = 0.0;
    for (int i = index + 1; i > 0; i /= base) {
        f /= base;
        r += f * (i % base);
    }
    return r;
}

// The cyclic Halton(2,3) sub-pixel offsets, centered on zero.
inline std::array<JitterOffset, kJitterPeriod> jitter_sequence() {
    std::array<JitterOffset, kJitterPeriod> seq;
    for (int i = 0; i < kJitterPeriod; ++i)
        seq[i] = {float(halton(i, 2) - 0.5), float(halton(i, 3) - 0.5)};
    return seq;
}

// depth = R/255 + G/255^2 + B/255^3 + A/255^4, evaluated in 64-bit.
inline float decode_depth(std::uint8_t r, std::uint8_t g, std::uint8_t b, std::uint8_t a) {
    const double d = double(r) / 255.0 + double(g) / (255.0 * 255.0) +
                     double(b) / (255.0 * 255.0 * 255.0) +
                     double(a) / (255.0 * 255.0 * 255.0 * 255.0);
    return float(d);
}

// Canonical remainder encoding: digits by repeated floor against base 255.
// |decode(encode(d)) - d| < 255^-4 and the byte tuple is lexicographically
// monotone in d.
inline std::array<std::uint8_t, 4> encode_depth(double d) {
    d = std::clamp(d, 0.0, 1.0);
    std::array<std::uint8_t, 4> out{};
    double x = d * 255.0;
    for (int i = 0; i < 4; ++i) {
        double digit = std::floor(x);
        if (digit > 255.0) digit = 255.0;
        out[i] = std::uint8_t(digit);
        x = (x - digit) * 255.0;
    }
    return out;
}

// Raw 2-channel velocities with vertical stored first and values normalized
// to [-1,1]; produces the canonical backward-flow MotionField in pixels with
// the horizontal component first. Out-of-range inputs are clamped and
// counted into *clamped when given.
inline Raster decode_motion(const Raster& raw, bool flip_y, bool negate, int* clamped = nullptr) {
    require_motion_field(raw, "decode_motion");
    const int h = raw.height(), w = raw.width();
    const float sign = negate ? -1.0f : 1.0f;
    const float vsign = (flip_y ? -1.0f : 1.0f) * sign;
    Raster out(2, h, w, Raster::Uninit{});
    int bad = 0;
    for (int y = 0; y < h; ++y) {
        const float* rv = raw.row(0, y);
        const float* rh = raw.row(1, y);
        float* oh = out.row(0, y);
        float* ov = out.row(1, y);
        for (int x = 0; x < w; ++x) {
            float nh = rh[x], nv = rv[x];
            if (nh < -1.0f || nh > 1.0f || nv < -1.0f || nv > 1.0f) {
                ++bad;
                nh = std::clamp(nh, -1.0f, 1.0f);
                nv = std::clamp(nv, -1.0f, 1.0f);
            }
            oh[x] = nh * float(w) * sign;
            ov[x] = nv * float(h) * vsign;
        }
    }
    if (clamped) *clamped = bad;
    return out;
}

// Inverse of decode_motion, for emitting QRISP-convention rasters. Exact
// round trip when the dims are powers of two.
inline Raster encode_motion_qrisp(const Raster& mv, bool flip_y, bool negate) {
    require_motion_field(mv, "encode_motion_qrisp");
    const int h = mv.height(), w = mv.width();
    const float sign = negate ? -1.0f : 1.0f;
    const float vsign = (flip_y ? -1.0f : 1.0f) * sign;
    Raster raw(2, h, w, Raster::Uninit{});
    for (int y = 0; y < h; ++y) {
        const float* mh = mv.row(0, y);
        const float* mvv = mv.row(1, y);
        float* rv = raw.row(0, y);
        float* rh = raw.row(1, y);
        for (int x = 0; x < w; ++x) {
            rh[x] = mh[x] / (float(w) * sign);
            rv[x] = mvv[x] / (float(h) * vsign);
        }
    }
    return raw;
}

struct CameraInfo {
    double near = 0.1;
    double far = 1000.0;
    double fov = 60.0;
};

struct FrameRecord {
    std::string color, depth, motion;
    std::string target; // empty at inference
    JitterOffset jitter;
};

struct SequenceManifest {
    std::string scene;
    std::string segment;
    int fps = 60;
    CameraInfo camera;
    std::vector<std::pair<int, int>> static_ranges; // inclusive frame ranges
    std::vector<FrameRecord> frames;
    std::filesystem::path dir; // resolved at read time, not serialized
};

inline void write_manifest(const std::string& path, const SequenceManifest& m) {
    nlohmann::json j;
    j["scene"] = m.scene;
    j["segment"] = m.segment;
    j["fps"] = m.fps;
    j["camera"] = {{"near", m.camera.near}, {"far", m.camera.far}, {"fov", m.camera.fov}};
    if (!m.static_ranges.empty()) {
        nlohmann::json sr = nlohmann::json::array();
        for (auto [a, b] : m.static_ranges) sr.push_back({a, b});
        j["static_ranges"] = sr;
    }
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : m.frames) {
        nlohmann::json jf;
        jf["color"] = f.color;
        jf["depth"] = f.depth;
        jf["motion"] = f.motion;
        if (!f.target.empty()) jf["target"] = f.target;
        jf["jitter"] = {double(f.jitter.x), double(f.jitter.y)};
        frames.push_back(jf);
    }
    j["frames"] = frames;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open manifest for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw DataError("manifest write failed: " + path);
}

inline SequenceManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": manifest parse error: " + e.what());
    }
    SequenceManifest m;
    try {
        m.scene = j.at("scene").get<std::string>();
        m.segment = j.at("segment").get<std::string>();
        m.fps = j.value("fps", 60);
        if (j.contains("camera")) {
            const auto& c = j["camera"];
            m.camera.near = c.value("near", m.camera.near);
            m.camera.far = c.value("far", m.camera.far);
            m.camera.fov = c.value("fov", m.camera.fov);
        }
        for (const auto& r : j.value("static_ranges", nlohmann::json::array()))
            m.static_ranges.emplace_back(r.at(0).get<int>(), r.at(1).get<int>());
        for (const auto& jf : j.at("frames")) {
            FrameRecord f;
            f.color = jf.at("color").get<std::string>();
            f.depth = jf.at("depth").get<std::string>();
            f.motion = jf.at("motion").get<std::string>();
            f.target = jf.value("target", std::string());
            f.jitter.x = float(jf.at("jitter").at(0).get<double>());
            f.jitter.y = float(jf.at("jitter").at(1).get<double>());
            m.frames.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": manifest field error: " + e.what());
    }
    m.dir = std::filesystem::path(path).parent_path();
    for (auto [a, b] : m.static_ranges)
        if (a < 0 || b < a || b >= int(m.frames.size()))
            throw DataError(path + ": static range [" + std::to_string(a) + "," +
                            std::to_string(b) + "] out of bounds");
    return m;
}

// One frame of decoded, canonical-convention modalities.
struct FrameBundle {
    Raster lr_color;  // 3ch in [0,1]
    Raster lr_depth;  // 1ch in [0,1]
    Raster lr_motion; // 2ch, backward flow in LR pixels
    JitterOffset jitter;
    int phase = 0; // frame index mod 16
    std::optional<Raster> hr_target; // 3ch in [0,1], S times the LR dims
};

struct Sequence {
    SequenceManifest manifest;
    std::vector<FrameBundle> frames;
};

namespace detail {

inline Raster load_modality(const std::filesystem::path& dir, const std::string& rel,
                            int frame, const char* modality, int channels) {
    if (rel.empty())
        throw DataError("frame " + std::to_string(frame) + ": missing " + modality + " entry");
    const std::string path = (dir / rel).string();
    Raster r = [&] {
        try {
            return read_raster_file(path);
        } catch (const DataError& e) {
            throw DataError("frame " + std::to_string(frame) + " " + modality + ": " + e.what());
        }
    }();
    if (r.channels() != channels)
        throw DataError("frame " + std::to_string(frame) + " " + modality + ": expected " +
                        std::to_string(channels) + " channels, got " + r.shape());
    r.require_finite(std::string(modality) + " of frame " + std::to_string(frame));
    return r;
}

inline void require_unit_range(const Raster& r, int frame, const char* modality) {
    for (std::size_t i = 0; i < r.size(); ++i)
        if (r[i] < 0.0f || r[i] > 1.0f)
            throw DataError("frame " + std::to_string(frame) + " " + modality +
                            ": value outside [0,1]");
}

} // namespace detail

// Reads and validates every frame of a manifest. Jitter offsets must cycle
// with period 16; HR targets must be exactly S times the LR dims.
inline Sequence load_sequence(const SequenceManifest& m, int scale, bool require_targets) {
    if (m.frames.empty()) throw DataError(m.scene + "/" + m.segment + ": manifest has no frames");
    Sequence seq;
    seq.manifest = m;
    int lh = -1, lw = -1;
    for (int i = 0; i < int(m.frames.size()); ++i) {
        const FrameRecord& f = m.frames[i];
        Raster color = detail::load_modality(m.dir, f.color, i, "color", 3);
        Raster depth = detail::load_modality(m.dir, f.depth, i, "depth", 1);
        Raster motion = detail::load_modality(m.dir, f.motion, i, "motion", 2);
        if (lh < 0) {
            lh = color.height();
            lw = color.width();
        }
        if (color.height() != lh || color.width() != lw)
            throw DataError("frame " + std::to_string(i) + " color: dims changed mid-sequence");
        if (depth.height() != lh || depth.width() != lw)
            throw DataError("frame " + std::to_string(i) + " depth: dims mismatch");
        if (motion.height() != lh || motion.width() != lw)
            throw DataError("frame " + std::to_string(i) + " motion: dims mismatch");
        detail::require_unit_range(color, i, "color");
        detail::require_unit_range(depth, i, "depth");
        f.jitter.validate();
        const JitterOffset& first_in_phase = m.frames[i % kJitterPeriod].jitter;
        if (f.jitter.x != first_in_phase.x || f.jitter.y != first_in_phase.y)
            throw DataError("frame " + std::to_string(i) +
                            ": jitter does not cycle with period 16");
        std::optional<Raster> target;
        if (!f.target.empty()) {
            Raster t = detail::load_modality(m.dir, f.target, i, "target", 3);
            if (t.height() != lh * scale || t.width() != lw * scale)
                throw DataError("frame " + std::to_string(i) + " target: expected " +
                                std::to_string(lh * scale) + "x" + std::to_string(lw * scale) +
                                ", got " + t.shape());
            detail::require_unit_range(t, i, "target");
            target = std::move(t);
        } else if (require_targets) {
            throw DataError("frame " + std::to_string(i) + ": missing target entry");
        }
        seq.frames.push_back(FrameBundle{std::move(color), std::move(depth), std::move(motion),
                                         f.jitter, i % kJitterPeriod, std::move(target)});
    }
    return seq;
}

inline Sequence load_sequence(const std::string& manifest_path, int scale, bool require_targets) {
    return load_sequence(read_manifest(manifest_path), scale, require_targets);
}

// Sorted list of manifest paths under a dataset root.
inline std::vector<std::string> find_manifests(const std::string& root) {
    namespace fs = std::filesystem;
    if (!fs::exists(root)) throw DataError("dataset root does not exist: " + root);
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() == "manifest.json")
            out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

// Deterministic counter-free PRNG; the full sampler state is one u64.
struct SplitMix64 {
    std::uint64_t state = 0;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }
};

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

struct SplitResult {
    std::vector<int> train, val;
    std::vector<std::string> warnings;
};

// Per-scene deterministic shuffle, then the first floor(fraction*n) segments
// of each scene go to train. Scenes with fewer than 2 segments go entirely
// to train with a warning.
inline SplitResult split_segments(std::span<const std::pair<std::string, std::string>> keys,
                                  double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("split fraction must be in (0,1]");
    std::map<std::string, std::vector<int>> by_scene;
    for (int i = 0; i < int(keys.size()); ++i) by_scene[keys[i].first].push_back(i);
    SplitResult out;
    for (auto& [scene, idx] : by_scene) {
        std::sort(idx.begin(), idx.end(),
                  [&](int a, int b) { return keys[a].second < keys[b].second; });
        if (idx.size() < 2) {
            out.warnings.push_back("scene " + scene + " has fewer than 2 segments; all to train");
            out.train.insert(out.train.end(), idx.begin(), idx.end());
            continue;
        }
        SplitMix64 rng{seed ^ fnv1a64(scene)};
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[std::size_t(rng.below(i))]);
        const std::size_t n_train = std::size_t(std::floor(fraction * double(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? out.train : out.val).push_back(idx[i]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    return out;
}

// One training sample: clip_len consecutive frames under one aligned crop.
struct Clip {
    std::vector<FrameBundle> frames;
};

// Draws random (sequence, window, crop) triples; deterministic for a fixed
// seed, and the whole stream position is captured by rng_state().
class ClipSampler {
public:
    ClipSampler(const std::vector<Sequence>* sequences, int clip_len, int hr_crop, int scale,
                std::uint64_t seed)
        : seqs_(sequences), clip_len_(clip_len), scale_(scale), rng_{seed} {
        if (clip_len < 1) throw ConfigError("clip sampler: clip_len must be >= 1");
        if (hr_crop % scale != 0) throw ConfigError("clip sampler: hr_crop must be divisible by S");
        if (hr_crop % 8 != 0) throw ConfigError("clip sampler: hr_crop must be divisible by 8");
        lr_crop_ = hr_crop / scale;
        for (int i = 0; i < int(sequences->size()); ++i) {
            const Sequence& s = (*sequences)[i];
            if (int(s.frames.size()) < clip_len) {
                warnings_.push_back(s.manifest.scene + "/" + s.manifest.segment +
                                    ": shorter than clip length, skipped");
                continue;
            }
            const Raster& c0 = s.frames[0].lr_color;
            if (c0.height() < lr_crop_ || c0.width() < lr_crop_) {
                warnings_.push_back(s.manifest.scene + "/" + s.manifest.segment +
                                    ": smaller than crop, skipped");
                continue;
            }
            eligible_.push_back(i);
        }
        if (eligible_.empty()) throw DataError("clip sampler: no usable sequences");
    }

    Clip next_clip() {
        const Sequence& s = (*seqs_)[eligible_[std::size_t(rng_.below(eligible_.size()))]];
        const int max_start = int(s.frames.size()) - clip_len_;
        const int t0 = int(rng_.below(std::uint64_t(max_start) + 1));
        const Raster& c0 = s.frames[0].lr_color;
        const int ly = int(rng_.below(std::uint64_t(c0.height() - lr_crop_) + 1));
        const int lx = int(rng_.below(std::uint64_t(c0.width() - lr_crop_) + 1));
        Clip clip;
        for (int i = 0; i < clip_len_; ++i) {
            const FrameBundle& f = s.frames[std::size_t(t0 + i)];
            if (!f.hr_target)
                throw DataError(s.manifest.scene + "/" + s.manifest.segment +
                                ": clip sampling requires HR targets");
            clip.frames.push_back(FrameBundle{
                crop(f.lr_color, ly, lx, lr_crop_, lr_crop_),
                crop(f.lr_depth, ly, lx, lr_crop_, lr_crop_),
                crop(f.lr_motion, ly, lx, lr_crop_, lr_crop_), f.jitter, f.phase,
                crop(*f.hr_target, ly * scale_, lx * scale_, lr_crop_ * scale_,
                     lr_crop_ * scale_)});
        }
        return clip;
    }

    std::vector<Clip> next_batch(int n) {
        std::vector<Clip> out;
        for (int i = 0; i < n; ++i) out.push_back(next_clip());
        return out;
    }

    const std::vector<std::string>& warnings() const { return warnings_; }
    int lr_crop() const { return lr_crop_; }
    std::uint64_t rng_state() const { return rng_.state; }
    void set_rng_state(std::uint64_t s) { rng_.state = s; }

private:
    const std::vector<Sequence>* seqs_;
    int clip_len_, lr_crop_ = 0, scale_;
    SplitMix64 rng_;
    std::vector<int> eligible_;
    std::vector<std::string> warnings_;
};

} // namespace tsup
