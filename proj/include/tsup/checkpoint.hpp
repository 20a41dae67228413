// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tsup/binio.hpp"
#include "tsup/model.hpp"

namespace tsup {

inline constexpr char kCheckpointMagic[4] = {'Q', 'S', 'S', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["scale"] = c.scale;
    j["features"] = c.features;
    j["mid_layers"] = c.mid_layers;
    j["variant"] = c.variant;
    j["use_dilation"] = c.use_dilation;
    j["use_blending"] = c.use_blending;
    j["condition_first"] = c.condition_first;
    j["condition_last"] = c.condition_last;
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.scale = j.value("scale", c.scale);
    c.features = j.value("features", c.features);
    c.mid_layers = j.value("mid_layers", c.mid_layers);
    c.variant = j.value("variant", c.variant);
    c.use_dilation = j.value("use_dilation", c.use_dilation);
    c.use_blending = j.value("use_blending", c.use_blending);
    c.condition_first = j.value("condition_first", c.condition_first);
    c.condition_last = j.value("condition_last", c.condition_last);
    c.validate();
    return c;
}

// Auxiliary named arrays carried alongside the model parameters
// (optimizer slots, sampler state, step counters as bit-cast floats).
struct CheckpointExtra {
    std::string name;
    Raster data;

    CheckpointExtra() : data(1, 1, 1) {}
    CheckpointExtra(std::string n, Raster d) : name(std::move(n)), data(std::move(d)) {}
};

namespace detail {

inline void write_array(std::ostream& out, const std::string& name, const Raster& r) {
    binio::write_str(out, name);
    binio::write_u32(out, 3);
    binio::write_u32(out, std::uint32_t(r.channels()));
    binio::write_u32(out, std::uint32_t(r.height()));
    binio::write_u32(out, std::uint32_t(r.width()));
    binio::write_f32_array(out, r.data(), r.size());
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const ModelState& state,
                            std::span<const CheckpointExtra> extras = {}) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    binio::write_bytes(out, kCheckpointMagic, 4);
    binio::write_u32(out, kCheckpointVersion);
    binio::write_str(out, model_config_to_json(state.config).dump());
    binio::write_u32(out, std::uint32_t(state.params.size() + extras.size()));
    for (const auto& p : state.params) detail::write_array(out, p.name, p.value);
    for (const auto& e : extras) detail::write_array(out, e.name, e.data);
    out.flush();
    if (!out) throw DataError("checkpoint write failed: " + path);
}

struct LoadedCheckpoint {
    ModelState state;
    std::vector<CheckpointExtra> extras;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    binio::read_exact(in, magic, 4, "checkpoint magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw DataError("not a checkpoint file: " + path);
    const std::uint32_t version = binio::read_u32(in, "checkpoint version");
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    nlohmann::json j = nlohmann::json::parse(binio::read_str(in, "checkpoint config"));

    LoadedCheckpoint ck;
    ck.state = build_model_state<float>(model_config_from_json(j));
    std::unordered_map<std::string, int> by_name;
    for (std::size_t i = 0; i < ck.state.params.size(); ++i)
        by_name.emplace(ck.state.params[i].name, int(i));

    std::vector<bool> seen(ck.state.params.size(), false);
    const std::uint32_t count = binio::read_u32(in, "checkpoint array count");
    for (std::uint32_t a = 0; a < count; ++a) {
        const std::string name = binio::read_str(in, "array name");
        const std::uint32_t rank = binio::read_u32(in, "array rank of " + name);
        if (rank != 3) throw DataError("array " + name + ": unsupported rank");
        const int c = int(binio::read_u32(in, "array dims"));
        const int h = int(binio::read_u32(in, "array dims"));
        const int w = int(binio::read_u32(in, "array dims"));
        if (c < 1 || h < 1 || w < 1 || double(c) * h * w > 1e9)
            throw DataError("array " + name + ": bad dims");
        Raster r(c, h, w, Raster::Uninit{});
        binio::read_f32_array(in, r.data(), r.size(), "array " + name);
        auto it = by_name.find(name);
        if (it != by_name.end()) {
            if (seen[it->second]) throw DataError("duplicate parameter " + name);
            Raster& dst = ck.state.params[it->second].value;
            if (!dst.same_shape(r))
                throw DataError("parameter " + name + ": shape " + r.shape() +
                                " does not match config (" + dst.shape() + ")");
            dst = std::move(r);
            seen[it->second] = true;
        } else {
            ck.extras.emplace_back(name, std::move(r));
        }
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) throw DataError("checkpoint missing parameter " + ck.state.params[i].name);
    return ck;
}

} // namespace tsup
