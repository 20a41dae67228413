// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include "tsup/binio.hpp"
#include "tsup/raster.hpp"

namespace tsup {

inline constexpr char kRasterFileMagic[4] = {'Q', 'R', 'A', 'S'};
inline constexpr std::uint32_t kRasterFileVersion = 1;

// 20-byte header (magic, version, C, H, W as little-endian u32) followed by
// C*H*W float32 little-endian values, channel-major then row-major.
inline void write_raster_file(const std::string& path, const Raster& r) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open raster file for writing: " + path);
    binio::write_bytes(out, kRasterFileMagic, 4);
    binio::write_u32(out, kRasterFileVersion);
    binio::write_u32(out, std::uint32_t(r.channels()));
    binio::write_u32(out, std::uint32_t(r.height()));
    binio::write_u32(out, std::uint32_t(r.width()));
    binio::write_f32_array(out, r.data(), r.size());
    out.flush();
    if (!out) throw DataError("raster file write failed: " + path);
}

inline Raster read_raster_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open raster file: " + path);
    char magic[4];
    binio::read_exact(in, magic, 4, path);
    if (std::memcmp(magic, kRasterFileMagic, 4) != 0)
        throw DataError("not a raster file: " + path);
    const std::uint32_t version = binio::read_u32(in, path);
    if (version != kRasterFileVersion)
        throw DataError(path + ": unsupported raster file version " + std::to_string(version));
    const std::uint32_t c = binio::read_u32(in, path);
    const std::uint32_t h = binio::read_u32(in, path);
    const std::uint32_t w = binio::read_u32(in, path);
    if (c < 1 || h < 1 || w < 1 || double(c) * h * w > 1e9)
        throw DataError(path + ": bad raster dims");
    Raster r(int(c), int(h), int(w), Raster::Uninit{});
    binio::read_f32_array(in, r.data(), r.size(), path);
    char extra;
    if (in.read(&extra, 1).gcount() != 0) throw DataError(path + ": trailing bytes");
    return r;
}

} // namespace tsup
