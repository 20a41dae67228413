// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tsup/dataset.hpp"
#include "tsup/image_png.hpp"
#include "tsup/metrics.hpp"
#include "tsup/model.hpp"
#include "tsup/warp.hpp"

namespace tsup {

// Per-segment scores; psnr/ssim are frame means. pixel_std covers the
// manifest's declared static ranges and is NaN when none are declared.
struct SegmentScore {
    std::string scene;
    std::string segment;
    int frames = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    double pixel_std = std::numeric_limits<double>::quiet_NaN();
    int static_frames = 0;
    double baseline_psnr = 0.0;
    double baseline_ssim = 0.0;
};

struct EvalReport {
    std::vector<SegmentScore> rows;
    SegmentScore aggregate;
};

// Scores one sequence's reconstructions against its HR targets, with the
// bicubic upsample of the same LR frames as the reference baseline.
inline SegmentScore score_sequence(const Sequence& seq, std::span<const Raster> outputs) {
    if (outputs.size() != seq.frames.size())
        throw ConfigError("score_sequence: got " + std::to_string(outputs.size()) +
                          " outputs for " + std::to_string(seq.frames.size()) + " frames");
    if (seq.frames.empty()) throw DataError("score_sequence: empty sequence");
    SegmentScore row;
    row.scene = seq.manifest.scene;
    row.segment = seq.manifest.segment;
    row.frames = int(seq.frames.size());
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        const FrameBundle& f = seq.frames[t];
        if (!f.hr_target)
            throw DataError(seq.manifest.scene + "/" + seq.manifest.segment +
                            ": scoring requires HR targets");
        const Raster& target = *f.hr_target;
        if (target.height() % f.lr_color.height() != 0)
            throw ConfigError("score_sequence: target dims are not a multiple of LR dims");
        const int s = target.height() / f.lr_color.height();
        row.psnr += psnr(outputs[t], target);
        row.ssim += ssim(outputs[t], target);
        const Raster base = bicubic_resize(f.lr_color, s);
        row.baseline_psnr += psnr(base, target);
        row.baseline_ssim += ssim(base, target);
    }
    row.psnr /= row.frames;
    row.ssim /= row.frames;
    row.baseline_psnr /= row.frames;
    row.baseline_ssim /= row.frames;

    double acc = 0.0;
    int n_static = 0;
    for (const auto& [a, b] : seq.manifest.static_ranges) {
        const int len = b - a + 1;
        if (len < 2) continue;
        acc += pixel_std(outputs.subspan(std::size_t(a), std::size_t(len))) * len;
        n_static += len;
    }
    if (n_static > 0) {
        row.pixel_std = acc / n_static;
        row.static_frames = n_static;
    }
    return row;
}

// Frame-count-weighted means across rows; pixel_std is weighted by each
// row's static frame count.
inline SegmentScore aggregate_rows(std::span<const SegmentScore> rows) {
    if (rows.empty()) throw ConfigError("aggregate_rows: no rows");
    SegmentScore agg;
    agg.scene = "all";
    double std_acc = 0.0;
    for (const SegmentScore& r : rows) {
        agg.frames += r.frames;
        agg.psnr += r.psnr * r.frames;
        agg.ssim += r.ssim * r.frames;
        agg.baseline_psnr += r.baseline_psnr * r.frames;
        agg.baseline_ssim += r.baseline_ssim * r.frames;
        if (r.static_frames > 0) {
            std_acc += r.pixel_std * r.static_frames;
            agg.static_frames += r.static_frames;
        }
    }
    agg.psnr /= agg.frames;
    agg.ssim /= agg.frames;
    agg.baseline_psnr /= agg.frames;
    agg.baseline_ssim /= agg.frames;
    if (agg.static_frames > 0) agg.pixel_std = std_acc / agg.static_frames;
    return agg;
}

// Streams a full sequence through the recurrent model.
inline std::vector<Raster> run_model(ModelState& state, const Sequence& seq) {
    SequenceRunner runner(state);
    std::vector<Raster> outputs;
    outputs.reserve(seq.frames.size());
    for (const FrameBundle& f : seq.frames)
        outputs.push_back(runner.advance(
            StepInputT<float>{&f.lr_color, &f.lr_depth, &f.lr_motion, f.jitter, f.phase}));
    return outputs;
}

namespace detail {

inline Raster center_crop(const Raster& r, int size) {
    const int c = std::min({size, r.height(), r.width()});
    return crop(r, (r.height() - c) / 2, (r.width() - c) / 2, c, c);
}

// Horizontal strip [model | baseline | target] with white separators.
inline Raster comparison_strip(const Raster& model, const Raster& baseline, const Raster& target) {
    const int h = model.height(), w = model.width(), gap = 2;
    Raster strip(model.channels(), h, 3 * w + 2 * gap);
    for (std::size_t i = 0; i < strip.size(); ++i) strip[i] = 1.0f;
    const std::array<const Raster*, 3> panels = {&model, &baseline, &target};
    for (int p = 0; p < 3; ++p)
        for (int c = 0; c < strip.channels(); ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    strip.at(c, y, p * (w + gap) + x) = panels[std::size_t(p)]->at(c, y, x);
    return strip;
}

} // namespace detail

struct EvalOptions {
    std::string out_dir; // empty: no report or crop files are written
    int crop_size = 96;  // side length of each comparison panel
};

inline void write_report_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open report for writing: " + path);
    out << "# pixel_std is reported in 8-bit units (values scaled by 255); the unit is an assumption\n";
    out << "# lpips omitted: it requires pretrained perceptual weights\n";
    out << "scene,segment,frames,psnr,ssim,pixel_std,baseline_psnr,baseline_ssim\n";
    const auto line = [&](const SegmentScore& r) {
        out << r.scene << ',' << r.segment << ',' << r.frames << ',' << metric_csv(r.psnr) << ','
            << metric_csv(r.ssim) << ',' << metric_csv(r.pixel_std) << ','
            << metric_csv(r.baseline_psnr) << ',' << metric_csv(r.baseline_ssim) << '\n';
    };
    for (const SegmentScore& r : report.rows) line(r);
    line(report.aggregate);
    out.flush();
    if (!out) throw DataError("report write failed: " + path);
}

// Full-sequence evaluation over test sequences. Writes report.csv and
// per-segment comparison crops under opts.out_dir when it is set.
inline EvalReport evaluate(ModelState& state, const std::vector<Sequence>& sequences,
                           const EvalOptions& opts = {}) {
    if (sequences.empty()) throw DataError("evaluate: no sequences");
    namespace fs = std::filesystem;
    if (!opts.out_dir.empty()) fs::create_directories(fs::path(opts.out_dir) / "crops");

    EvalReport report;
    for (const Sequence& seq : sequences) {
        const std::vector<Raster> outputs = run_model(state, seq);
        report.rows.push_back(score_sequence(seq, outputs));
        if (!opts.out_dir.empty()) {
            const std::size_t mid = seq.frames.size() / 2;
            const FrameBundle& f = seq.frames[mid];
            const int s = f.hr_target->height() / f.lr_color.height();
            const Raster strip = detail::comparison_strip(
                detail::center_crop(outputs[mid], opts.crop_size),
                detail::center_crop(bicubic_resize(f.lr_color, s), opts.crop_size),
                detail::center_crop(*f.hr_target, opts.crop_size));
            const std::string name = seq.manifest.scene + "_" + seq.manifest.segment + ".png";
            write_png((fs::path(opts.out_dir) / "crops" / name).string(), raster_to_png8(strip));
        }
    }
    report.aggregate = aggregate_rows(report.rows);
    if (!opts.out_dir.empty())
        write_report_csv((fs::path(opts.out_dir) / "report.csv").string(), report);
    return report;
}

inline EvalReport evaluate_manifests(ModelState& state, const std::vector<std::string>& manifests,
                                     const EvalOptions& opts = {}) {
    std::vector<Sequence> seqs;
    seqs.reserve(manifests.size());
    for (const std::string& p : manifests) seqs.push_back(load_sequence(p, state.config.scale, true));
    return evaluate(state, seqs, opts);
}

// Wall-clock stage medians (ms) for one recurrent step at the given HR dims.
// Absolute values are hardware-dependent; only orderings are meaningful.
struct StageProfile {
    double mv_dilation_ms = 0.0;
    double warping_ms = 0.0;
    double network_ms = 0.0;
    double total_ms = 0.0;
    int steps = 0;
};

inline StageProfile profile_model(ModelState& state, int hr_h, int hr_w, int steps = 60,
                                  int warmup = 16) {
    const ModelConfig& cfg = state.config;
    const int s = cfg.scale;
    if (hr_h < 8 * s || hr_w < 8 * s || hr_h % (8 * s) != 0 || hr_w % (8 * s) != 0)
        throw ConfigError("profile: HR dims must be positive multiples of 8*scale");
    if (steps < 1) throw ConfigError("profile: steps must be >= 1");
    const int lh = hr_h / s, lw = hr_w / s;

    SplitMix64 rng{fnv1a64("profile")};
    const auto uniform = [&rng](Raster& r, float lo, float hi) {
        for (std::size_t i = 0; i < r.size(); ++i)
            r[i] = lo + (hi - lo) * float(double(rng.next()) * 0x1p-64);
    };
    Raster color(3, lh, lw), depth(1, lh, lw), motion(2, lh, lw);
    uniform(color, 0.0f, 1.0f);
    uniform(depth, 0.05f, 0.95f);
    uniform(motion, -2.0f, 2.0f);

    using Eng = EagerEngineT<float>;
    using Clock = std::chrono::steady_clock;
    Eng eng;
    BoundModelT<float, Eng> bound(eng, state);
    auto carry = bound.init_carry(color);
    const auto js = jitter_sequence();
    const int s2 = s * s;

    std::vector<double> t_mv, t_warp, t_net, t_total;
    for (int t = 0; t < warmup + steps; ++t) {
        const int phase = t % kJitterPeriod;
        const JitterOffset j_cur = js[std::size_t(phase)];
        const JitterOffset j_prev = js[std::size_t((phase + kJitterPeriod - 1) % kJitterPeriod)];

        const auto t0 = Clock::now();
        const Raster adjusted = compensate_jitter(motion, j_prev, j_cur);
        const Raster mv_hr =
            cfg.use_dilation ? dilate_mv(adjusted, depth, s) : upsample_mv_nearest(adjusted, s);

        const auto t1 = Clock::now();
        Raster pos = warp_positions(mv_hr);
        const std::array<Eng::Handle, 2> hist = {carry.color, carry.feat};
        Eng::Handle warped = eng.concat(std::span<const Eng::Handle>(hist.data(), 2));
        warped = eng.bilinear(warped, std::move(pos));
        const Eng::Handle packed = eng.space_to_depth(warped, s);

        const auto t2 = Clock::now();
        const std::array<Eng::Handle, 3> in_parts = {eng.constant(color), eng.constant(depth),
                                                     packed};
        const Eng::Handle net_in = eng.concat(std::span<const Eng::Handle>(in_parts.data(), 3));
        auto [k_first, k_last] = bound.kernels(j_cur, phase);
        Eng::Handle h = eng.relu(eng.conv(net_in, k_first.taps, k_first.bias, cfg.features));
        for (const auto& ref : state.mid)
            h = eng.relu(eng.conv(h, eng.param(state.params[std::size_t(ref.taps)]),
                                  eng.param(state.params[std::size_t(ref.bias)]), cfg.features));
        const Eng::Handle out = eng.conv(h, k_last.taps, k_last.bias, cfg.last_out());
        const Eng::Handle cand = eng.depth_to_space(eng.slice_channels(out, 0, 3 * s2), s);
        const Eng::Handle alpha =
            eng.sigmoid(eng.depth_to_space(eng.slice_channels(out, 3 * s2, s2), s));
        const Eng::Handle feat = eng.depth_to_space(eng.slice_channels(out, 4 * s2, s2), s);
        const Eng::Handle y =
            cfg.use_blending ? eng.blend(alpha, cand, eng.slice_channels(warped, 0, 3)) : cand;
        const auto t3 = Clock::now();

        carry = typename BoundModelT<float, Eng>::Carry{y, feat};
        if (t >= warmup) {
            const auto ms = [](Clock::time_point a, Clock::time_point b) {
                return std::chrono::duration<double, std::milli>(b - a).count();
            };
            t_mv.push_back(ms(t0, t1));
            t_warp.push_back(ms(t1, t2));
            t_net.push_back(ms(t2, t3));
            t_total.push_back(ms(t0, t3));
        }
    }

    const auto median = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    StageProfile p;
    p.mv_dilation_ms = median(t_mv);
    p.warping_ms = median(t_warp);
    p.network_ms = median(t_net);
    p.total_ms = median(t_total);
    p.steps = steps;
    return p;
}

} // namespace tsup
