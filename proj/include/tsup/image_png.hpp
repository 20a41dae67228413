// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "tsup/errors.hpp"
#include "tsup/raster.hpp"

namespace tsup {

// 8-bit interleaved image rows, channels = 1 (gray), 2 (gray+alpha),
// 3 (RGB) or 4 (RGBA).
struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int y, int x, int c) const {
        return pixels[std::size_t(y) * width * channels + std::size_t(x) * channels + c];
    }
};

namespace detail {

inline std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

inline int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

inline int png_channels_for_color_type(int color_type, const std::string& path) {
    switch (color_type) {
        case 0: return 1;
        case 2: return 3;
        case 4: return 2;
        case 6: return 4;
        default: throw DataError(path + ": unsupported PNG color type " + std::to_string(color_type));
    }
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::uint8_t* data, std::size_t n) {
    put_be32(out, std::uint32_t(n));
    const std::size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data, data + n);
    const std::uint32_t crc =
        std::uint32_t(::crc32(0, out.data() + type_at, uInt(4 + n)));
    put_be32(out, crc);
}

} // namespace detail

inline PngImage decode_png(const std::uint8_t* bytes, std::size_t size,
                           const std::string& path = "<memory>") {
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (size < 8 || std::memcmp(bytes, sig, 8) != 0) throw DataError(path + ": not a PNG file");

    PngImage img;
    int color_type = -1;
    bool seen_ihdr = false, seen_iend = false;
    std::vector<std::uint8_t> idat;

    std::size_t off = 8;
    while (off + 12 <= size && !seen_iend) {
        const std::uint32_t len = detail::be32(bytes + off);
        if (off + 12 + len > size) throw DataError(path + ": truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(bytes + off + 4);
        const std::uint8_t* data = bytes + off + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError(path + ": bad IHDR");
            img.width = int(detail::be32(data));
            img.height = int(detail::be32(data + 4));
            const int bit_depth = data[8];
            color_type = data[9];
            if (bit_depth != 8) throw DataError(path + ": only 8-bit PNGs are supported");
            if (data[10] != 0 || data[11] != 0) throw DataError(path + ": bad PNG header");
            if (data[12] != 0) throw DataError(path + ": interlaced PNGs are not supported");
            img.channels = detail::png_channels_for_color_type(color_type, path);
            if (img.width < 1 || img.height < 1 || double(img.width) * img.height > 1e9)
                throw DataError(path + ": bad PNG dims");
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            if (!seen_ihdr) throw DataError(path + ": IDAT before IHDR");
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
        } else if (std::memcmp(type, "PLTE", 4) == 0) {
            throw DataError(path + ": palette PNGs are not supported");
        }
        off += 12 + len;
    }
    if (!seen_ihdr || !seen_iend || idat.empty()) throw DataError(path + ": incomplete PNG");

    const std::size_t stride = std::size_t(img.width) * img.channels;
    const std::size_t raw_size = (stride + 1) * img.height;
    std::vector<std::uint8_t> raw(raw_size);
    uLongf got = uLongf(raw_size);
    const int rc = ::uncompress(raw.data(), &got, idat.data(), uLong(idat.size()));
    if (rc != Z_OK || got != raw_size) throw DataError(path + ": PNG inflate failed");

    img.pixels.assign(stride * img.height, 0);
    const int bpp = img.channels;
    for (int y = 0; y < img.height; ++y) {
        const std::uint8_t filter = raw[std::size_t(y) * (stride + 1)];
        const std::uint8_t* src = raw.data() + std::size_t(y) * (stride + 1) + 1;
        std::uint8_t* dst = img.pixels.data() + std::size_t(y) * stride;
        const std::uint8_t* up = y > 0 ? dst - stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= std::size_t(bpp) ? dst[i - bpp] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= std::size_t(bpp)) ? up[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: throw DataError(path + ": bad PNG row filter");
            }
            dst[i] = std::uint8_t(v & 0xff);
        }
    }
    return img;
}

inline PngImage read_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open PNG: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_png(bytes.data(), bytes.size(), path);
}

inline std::vector<std::uint8_t> encode_png(const PngImage& img) {
    if (img.width < 1 || img.height < 1) throw ConfigError("encode_png: empty image");
    if (img.channels < 1 || img.channels > 4) throw ConfigError("encode_png: bad channel count");
    const std::size_t stride = std::size_t(img.width) * img.channels;
    if (img.pixels.size() != stride * img.height) throw ConfigError("encode_png: pixel size mismatch");

    std::vector<std::uint8_t> raw((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw[std::size_t(y) * (stride + 1)] = 0;
        std::memcpy(raw.data() + std::size_t(y) * (stride + 1) + 1,
                    img.pixels.data() + std::size_t(y) * stride, stride);
    }
    uLongf bound = ::compressBound(uLong(raw.size()));
    std::vector<std::uint8_t> z(bound);
    if (::compress2(z.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw DataError("encode_png: deflate failed");
    z.resize(bound);

    static const int color_type_for[5] = {0, 0, 4, 2, 6};
    std::vector<std::uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
    std::uint8_t ihdr[13];
    ihdr[0] = std::uint8_t(std::uint32_t(img.width) >> 24);
    ihdr[1] = std::uint8_t(std::uint32_t(img.width) >> 16);
    ihdr[2] = std::uint8_t(std::uint32_t(img.width) >> 8);
    ihdr[3] = std::uint8_t(img.width);
    ihdr[4] = std::uint8_t(std::uint32_t(img.height) >> 24);
    ihdr[5] = std::uint8_t(std::uint32_t(img.height) >> 16);
    ihdr[6] = std::uint8_t(std::uint32_t(img.height) >> 8);
    ihdr[7] = std::uint8_t(img.height);
    ihdr[8] = 8;
    ihdr[9] = std::uint8_t(color_type_for[img.channels]);
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    detail::append_chunk(out, "IHDR", ihdr, 13);
    detail::append_chunk(out, "IDAT", z.data(), z.size());
    detail::append_chunk(out, "IEND", nullptr, 0);
    return out;
}

inline void write_png(const std::string& path, const PngImage& img) {
    const std::vector<std::uint8_t> bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open PNG for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw DataError("PNG write failed: " + path);
}

// Interleaved 8-bit values to planar floats in [0,1].
inline Raster png_to_unit_raster(const PngImage& img) {
    Raster r(img.channels, img.height, img.width, Raster::Uninit{});
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y) {
            float* row = r.row(c, y);
            for (int x = 0; x < img.width; ++x) row[x] = float(img.at(y, x, c)) / 255.0f;
        }
    return r;
}

// Clamps to [0,1] and quantizes to 8 bits, round half up.
inline PngImage raster_to_png8(const Raster& r) {
    if (r.channels() < 1 || r.channels() > 4)
        throw ConfigError("raster_to_png8: channels must be 1..4, got " + r.shape());
    PngImage img;
    img.width = r.width();
    img.height = r.height();
    img.channels = r.channels();
    img.pixels.assign(std::size_t(r.size()), 0);
    for (int c = 0; c < r.channels(); ++c)
        for (int y = 0; y < r.height(); ++y) {
            const float* row = r.row(c, y);
            for (int x = 0; x < r.width(); ++x) {
                const float v = std::clamp(row[x], 0.0f, 1.0f);
                img.pixels[std::size_t(y) * img.width * img.channels +
                           std::size_t(x) * img.channels + c] =
                    std::uint8_t(std::lround(v * 255.0f));
            }
        }
    return img;
}

} // namespace tsup
