// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "tsup/errors.hpp"

namespace tsup::binio {

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), std::streamsize(n));
    if (!out) throw DataError("write failed");
}

inline void read_exact(std::istream& in, void* p, std::size_t n, const std::string& what) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in.gcount()) != n) throw DataError("truncated file while reading " + what);
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {
        (unsigned char)(v & 0xff),
        (unsigned char)((v >> 8) & 0xff),
        (unsigned char)((v >> 16) & 0xff),
        (unsigned char)((v >> 24) & 0xff),
    };
    write_bytes(out, b, 4);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    read_exact(in, b, 4, what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline void write_f32(std::ostream& out, float v) {
    write_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline float read_f32(std::istream& in, const std::string& what) {
    return std::bit_cast<float>(read_u32(in, what));
}

inline void write_f32_array(std::ostream& out, const float* v, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        write_bytes(out, v, n * 4);
    } else {
        for (std::size_t i = 0; i < n; ++i) write_f32(out, v[i]);
    }
}

inline void read_f32_array(std::istream& in, float* v, std::size_t n, const std::string& what) {
    if constexpr (std::endian::native == std::endian::little) {
        read_exact(in, v, n * 4, what);
    } else {
        for (std::size_t i = 0; i < n; ++i) v[i] = read_f32(in, what);
    }
}

inline void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, std::uint32_t(s.size()));
    write_bytes(out, s.data(), s.size());
}

inline std::string read_str(std::istream& in, const std::string& what, std::size_t max_len = 1u << 20) {
    const std::uint32_t n = read_u32(in, what);
    if (n > max_len) throw DataError(what + ": unreasonable string length");
    std::string s(n, '\0');
    read_exact(in, s.data(), n, what);
    return s;
}

} // namespace tsup::binio
