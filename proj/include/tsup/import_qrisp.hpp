// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "tsup/dataset.hpp"
#include "tsup/errors.hpp"
#include "tsup/image_png.hpp"
#include "tsup/raster.hpp"
#include "tsup/raster_file.hpp"

namespace tsup {

struct ImportOptions {
    bool flip_y = false;
    bool negate_motion = false;
    int scale = 2;
    std::string modality_bias;  // substituted for "{bias}" tokens in source paths

    void validate() const {
        if (scale < 2 || scale > 4) throw ConfigError("import: scale must be 2, 3 or 4");
    }
};

struct ImportResult {
    std::string manifest_path;
    int frames = 0;
    int clamped_motion = 0;  // motion samples clamped to [-1,1] during decode
};

namespace detail {

inline std::string resolve_bias(const std::string& path, const std::string& bias) {
    const std::string token = "{bias}";
    std::string out = path;
    std::size_t at = out.find(token);
    if (at != std::string::npos && bias.empty())
        throw ConfigError("import: path '" + path + "' contains {bias}; pass --modality-bias");
    while (at != std::string::npos) {
        out.replace(at, token.size(), bias);
        at = out.find(token, at + bias.size());
    }
    return out;
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::string frame_tag(int frame, const char* modality) {
    return "frame " + std::to_string(frame) + " " + modality;
}

inline Raster png_to_color(const PngImage& img, int frame, const char* modality) {
    if (img.channels != 3 && img.channels != 4)
        throw DataError("import: " + frame_tag(frame, modality) + " must be RGB or RGBA, got " +
                        std::to_string(img.channels) + " channels");
    Raster r(3, img.height, img.width, Raster::Uninit{});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) r.at(c, y, x) = float(img.at(y, x, c)) / 255.0f;
    return r;
}

inline Raster png_to_depth(const PngImage& img, int frame) {
    if (img.channels != 4)
        throw DataError("import: " + frame_tag(frame, "depth") + " must be RGBA-encoded, got " +
                        std::to_string(img.channels) + " channels");
    Raster r(1, img.height, img.width, Raster::Uninit{});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const float d = decode_depth(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2),
                                         img.at(y, x, 3));
            r.at(0, y, x) = std::min(1.0f, std::max(0.0f, d));
        }
    return r;
}

inline std::string import_frame_base(int frame) {
    std::ostringstream os;
    os << "f" << std::setw(3) << std::setfill('0') << frame;
    return os.str();
}

} // namespace detail

// Converts one QRISP-exported sequence (PNG color/depth/target, RasterFile
// motion in the raw engine convention) into the canonical QRAS layout, then
// re-loads the result as a self-check. Source paths are relative to the
// source manifest; "{bias}" tokens select the mip-bias variant.
inline ImportResult import_qrisp_sequence(const std::string& src_manifest_path,
                                          const std::string& out_dir, const ImportOptions& opt) {
    namespace fs = std::filesystem;
    opt.validate();
    SequenceManifest m = read_manifest(src_manifest_path);
    if (m.frames.empty()) throw DataError("import: " + src_manifest_path + " has no frames");
    const fs::path src_dir = fs::path(src_manifest_path).parent_path();

    int with_target = 0;
    for (const auto& rec : m.frames)
        if (!rec.target.empty()) ++with_target;
    if (with_target != 0 && with_target != int(m.frames.size()))
        throw DataError("import: target present for only " + std::to_string(with_target) + " of " +
                        std::to_string(m.frames.size()) + " frames");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("import: cannot create " + out_dir + ": " + ec.message());

    ImportResult res;
    for (int t = 0; t < int(m.frames.size()); ++t) {
        FrameRecord& rec = m.frames[t];
        const auto src_of = [&](const std::string& rel) {
            return (src_dir / detail::resolve_bias(rel, opt.modality_bias)).string();
        };

        if (!detail::has_suffix(rec.color, ".png"))
            throw DataError("import: " + detail::frame_tag(t, "color") + " must be a PNG, got " +
                            rec.color);
        const Raster color = detail::png_to_color(read_png(src_of(rec.color)), t, "color");

        if (!detail::has_suffix(rec.depth, ".png"))
            throw DataError("import: " + detail::frame_tag(t, "depth") + " must be a PNG, got " +
                            rec.depth);
        const Raster depth = detail::png_to_depth(read_png(src_of(rec.depth)), t);

        if (!detail::has_suffix(rec.motion, ".qras"))
            throw DataError("import: " + detail::frame_tag(t, "motion") +
                            " must be a RasterFile (.qras), got " + rec.motion);
        int clamped = 0;
        const Raster motion =
            decode_motion(read_raster_file(src_of(rec.motion)), opt.flip_y, opt.negate_motion, &clamped);
        res.clamped_motion += clamped;

        Raster target(1, 1, 1);
        if (!rec.target.empty()) {
            if (!detail::has_suffix(rec.target, ".png"))
                throw DataError("import: " + detail::frame_tag(t, "target") + " must be a PNG, got " +
                                rec.target);
            target = detail::png_to_color(read_png(src_of(rec.target)), t, "target");
        }

        const std::string base = detail::import_frame_base(t);
        rec.color = base + ".color.qras";
        rec.depth = base + ".depth.qras";
        rec.motion = base + ".motion.qras";
        write_raster_file((fs::path(out_dir) / rec.color).string(), color);
        write_raster_file((fs::path(out_dir) / rec.depth).string(), depth);
        write_raster_file((fs::path(out_dir) / rec.motion).string(), motion);
        if (!rec.target.empty()) {
            rec.target = base + ".target.qras";
            write_raster_file((fs::path(out_dir) / rec.target).string(), target);
        }
        ++res.frames;
    }

    res.manifest_path = (fs::path(out_dir) / "manifest.json").string();
    write_manifest(res.manifest_path, m);
    try {
        (void)load_sequence(res.manifest_path, opt.scale, with_target > 0);
    } catch (const std::exception& e) {
        throw DataError("import self-check failed: " + std::string(e.what()));
    }
    return res;
}

} // namespace tsup
