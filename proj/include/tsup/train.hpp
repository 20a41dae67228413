// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsup/adam.hpp"
#include "tsup/checkpoint.hpp"
#include "tsup/dataset.hpp"
#include "tsup/engine.hpp"
#include "tsup/metrics.hpp"
#include "tsup/model.hpp"
#include "tsup/tape.hpp"

namespace tsup {

struct TrainConfig {
    ModelConfig model;
    std::string data_dir;                // scanned for manifests when `manifests` is empty
    std::vector<std::string> manifests;  // explicit manifest paths take precedence
    std::string out_dir;
    int total_iters = 5000;
    int batch_size = 4;
    int clip_len = 16;
    int hr_crop = 96;
    double lr_initial = 1e-4;
    std::vector<int> lr_milestones = {2000, 4000};
    double train_fraction = 0.8;
    int checkpoint_every = 500;
    int validate_every = 500;
    std::uint64_t seed = 0;

    void validate() const {
        model.validate();
        if (total_iters < 1) throw ConfigError("train: total_iters must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (clip_len < 1) throw ConfigError("train: clip_len must be >= 1");
        if (!(lr_initial > 0.0)) throw ConfigError("train: lr_initial must be positive");
        if (train_fraction <= 0.0 || train_fraction > 1.0)
            throw ConfigError("train: train_fraction must be in (0,1]");
        if (checkpoint_every < 1) throw ConfigError("train: checkpoint_every must be >= 1");
        if (validate_every < 0) throw ConfigError("train: validate_every must be >= 0");
        for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
            if (lr_milestones[i] < 1 || lr_milestones[i] >= total_iters)
                throw ConfigError("train: lr milestone " + std::to_string(lr_milestones[i]) +
                                  " outside [1, total_iters)");
            if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
                throw ConfigError("train: lr milestones must be strictly increasing");
        }
    }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["model"] = model_config_to_json(c.model);
    j["data_dir"] = c.data_dir;
    j["manifests"] = c.manifests;
    j["out_dir"] = c.out_dir;
    j["total_iters"] = c.total_iters;
    j["batch_size"] = c.batch_size;
    j["clip_len"] = c.clip_len;
    j["hr_crop"] = c.hr_crop;
    j["lr_initial"] = c.lr_initial;
    j["lr_milestones"] = c.lr_milestones;
    j["train_fraction"] = c.train_fraction;
    j["checkpoint_every"] = c.checkpoint_every;
    j["validate_every"] = c.validate_every;
    j["seed"] = c.seed;
    return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        if (j.contains("model")) c.model = model_config_from_json(j["model"]);
        c.data_dir = j.value("data_dir", c.data_dir);
        c.manifests = j.value("manifests", c.manifests);
        c.out_dir = j.value("out_dir", c.out_dir);
        c.total_iters = j.value("total_iters", c.total_iters);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.clip_len = j.value("clip_len", c.clip_len);
        c.hr_crop = j.value("hr_crop", c.hr_crop);
        c.lr_initial = j.value("lr_initial", c.lr_initial);
        c.lr_milestones = j.value("lr_milestones", c.lr_milestones);
        c.train_fraction = j.value("train_fraction", c.train_fraction);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.validate_every = j.value("validate_every", c.validate_every);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open train config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": train config parse error: " + e.what());
    }
    return train_config_from_json(j);
}

// Step-decay schedule: the rate halves at each milestone. Iterations are
// numbered from 1.
inline double lr_at(const TrainConfig& cfg, int iteration) {
    double lr = cfg.lr_initial;
    for (int m : cfg.lr_milestones)
        if (iteration >= m) lr *= 0.5;
    return lr;
}

namespace detail {

struct ClipView {
    std::vector<StepInputT<float>> inputs;
    std::vector<const Raster*> targets;
};

inline ClipView make_clip_view(const Clip& clip) {
    ClipView v;
    for (const FrameBundle& f : clip.frames) {
        if (!f.hr_target) throw DataError("training clip is missing an HR target");
        v.inputs.push_back(StepInputT<float>{&f.lr_color, &f.lr_depth, &f.lr_motion, f.jitter, f.phase});
        v.targets.push_back(&*f.hr_target);
    }
    return v;
}

inline Raster pack_u32(std::uint32_t v) {
    Raster r(1, 1, 1);
    r[0] = std::bit_cast<float>(v);
    return r;
}

inline std::uint32_t unpack_u32(const Raster& r, const std::string& name) {
    if (r.size() != 1) throw DataError("checkpoint extra " + name + ": expected a single value");
    return std::bit_cast<std::uint32_t>(r[0]);
}

inline Raster pack_u64(std::uint64_t v) {
    Raster r(2, 1, 1);
    r[0] = std::bit_cast<float>(std::uint32_t(v & 0xffffffffu));
    r[1] = std::bit_cast<float>(std::uint32_t(v >> 32));
    return r;
}

inline std::uint64_t unpack_u64(const Raster& r, const std::string& name) {
    if (r.size() != 2) throw DataError("checkpoint extra " + name + ": expected two values");
    return std::uint64_t(std::bit_cast<std::uint32_t>(r[0])) |
           (std::uint64_t(std::bit_cast<std::uint32_t>(r[1])) << 32);
}

} // namespace detail

// One optimizer step's forward/backward over a batch of clips. A single tape
// spans the whole batch so every clip shares the per-phase kernel cache.
// Gradients are accumulated into the state (zeroed on entry); returns the
// batch loss (mean of per-clip losses).
inline double train_batch(ModelState& state, std::span<const Clip> clips) {
    if (clips.empty()) throw ConfigError("train: empty batch");
    state.zero_grads();
    Tape tape;
    TapeEngine eng(tape);
    BoundModelT<float, TapeEngine> bound(eng, state);
    TapeEngine::Handle total{};
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const detail::ClipView view = detail::make_clip_view(clips[i]);
        auto ro = bound.rollout(view.inputs, view.targets);
        total = i == 0 ? ro.loss : eng.add(total, ro.loss);
    }
    total = eng.scale(total, 1.0f / float(clips.size()));
    tape.backward(total);
    return double(tape.value(total)[0]);
}

// Single-clip step: rollout from a fresh carry, mean per-frame L1 loss,
// gradients via backprop through time accumulated into the state.
inline double train_clip(ModelState& state, const Clip& clip) {
    return train_batch(state, std::span<const Clip>(&clip, 1));
}

// Frame-weighted mean PSNR of full-sequence reconstructions.
inline double validate_psnr(ModelState& state, const std::vector<Sequence>& sequences) {
    double sum = 0.0;
    int n = 0;
    for (const Sequence& s : sequences) {
        SequenceRunner runner(state);
        for (const FrameBundle& f : s.frames) {
            if (!f.hr_target)
                throw DataError(s.manifest.scene + "/" + s.manifest.segment +
                                ": validation requires HR targets");
            const Raster& y = runner.advance(
                StepInputT<float>{&f.lr_color, &f.lr_depth, &f.lr_motion, f.jitter, f.phase});
            sum += psnr(y, *f.hr_target);
            ++n;
        }
    }
    return n > 0 ? sum / double(n) : std::numeric_limits<double>::quiet_NaN();
}

struct FitResult {
    std::string checkpoint_path;
    int iterations = 0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> final_val_psnr;
    std::vector<std::string> warnings;
};

// Full training run. Loads sequences under cfg.data_dir, splits segments per
// scene, and optimizes with Adam under the step-decay schedule. Writes
// out_dir/train_log.csv and a rolling checkpoint out_dir/model.qssc whose
// extras capture the optimizer moments, step counter, sampler stream and
// iteration, so `resume` continues the exact trajectory.
inline FitResult fit(const TrainConfig& cfg, bool resume = false, std::ostream* progress = nullptr) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const std::string ckpt_path = (fs::path(cfg.out_dir) / "model.qssc").string();
    const std::string log_path = (fs::path(cfg.out_dir) / "train_log.csv").string();

    FitResult res;
    res.checkpoint_path = ckpt_path;

    const std::vector<std::string> manifest_paths =
        cfg.manifests.empty() ? find_manifests(cfg.data_dir) : cfg.manifests;
    if (manifest_paths.empty()) throw DataError("train: no manifests under " + cfg.data_dir);
    std::vector<SequenceManifest> metas;
    std::vector<std::pair<std::string, std::string>> keys;
    for (const std::string& p : manifest_paths) {
        metas.push_back(read_manifest(p));
        keys.emplace_back(metas.back().scene, metas.back().segment);
    }
    const SplitResult split = split_segments(keys, cfg.train_fraction, cfg.seed);
    res.warnings = split.warnings;
    std::vector<Sequence> train_seqs, val_seqs;
    for (int i : split.train) train_seqs.push_back(load_sequence(metas[std::size_t(i)], cfg.model.scale, true));
    for (int i : split.val) val_seqs.push_back(load_sequence(metas[std::size_t(i)], cfg.model.scale, true));
    if (train_seqs.empty()) throw DataError("train: split produced no training sequences");

    ClipSampler sampler(&train_seqs, cfg.clip_len, cfg.hr_crop, cfg.model.scale,
                        cfg.seed ^ fnv1a64("clip-sampler"));
    res.warnings.insert(res.warnings.end(), sampler.warnings().begin(), sampler.warnings().end());

    ModelState state;
    AdamState opt(AdamConfig{float(cfg.lr_initial)});
    int start_iter = 0;

    if (resume) {
        LoadedCheckpoint ck = load_checkpoint(ckpt_path);
        if (model_config_to_json(ck.state.config) != model_config_to_json(cfg.model))
            throw ConfigError("train: checkpoint model config does not match the requested one");
        state = std::move(ck.state);
        std::unordered_map<std::string, Raster*> extras;
        for (CheckpointExtra& e : ck.extras) extras.emplace(e.name, &e.data);
        const auto take = [&](const std::string& name) -> Raster& {
            auto it = extras.find(name);
            if (it == extras.end())
                throw DataError("checkpoint has no training state (" + name +
                                "); it cannot be resumed");
            return *it->second;
        };
        start_iter = int(detail::unpack_u32(take("train.iter"), "train.iter"));
        opt.set_step(std::int64_t(detail::unpack_u32(take("opt.step"), "opt.step")));
        sampler.set_rng_state(detail::unpack_u64(take("sampler.state"), "sampler.state"));
        std::vector<const Raster*> shapes;
        for (const Param& p : state.params) shapes.push_back(&p.value);
        opt.init_slots(shapes);
        for (std::size_t i = 0; i < state.params.size(); ++i) {
            Raster& m = take("opt.m." + state.params[i].name);
            Raster& v = take("opt.v." + state.params[i].name);
            if (!m.same_shape(state.params[i].value) || !v.same_shape(state.params[i].value))
                throw DataError("checkpoint optimizer slot shape mismatch at " +
                                state.params[i].name);
            opt.first_moment(i) = std::move(m);
            opt.second_moment(i) = std::move(v);
        }
        if (start_iter >= cfg.total_iters) {
            res.iterations = start_iter;
            return res;
        }
    } else {
        state = init_params(cfg.model, std::uint32_t(cfg.seed ^ fnv1a64("init")));
    }

    std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot open training log: " + log_path);
    if (!resume) log << "iteration,loss,lr,val_psnr\n";

    std::vector<Raster*> values;
    std::vector<const Raster*> grads;
    for (Param& p : state.params) {
        values.push_back(&p.value);
        grads.push_back(&p.grad);
    }

    const auto save = [&](int iteration) {
        if (!state.values_finite())
            throw TrainError("non-finite parameter at iteration " + std::to_string(iteration));
        std::vector<CheckpointExtra> extras;
        for (std::size_t i = 0; i < state.params.size(); ++i) {
            extras.emplace_back("opt.m." + state.params[i].name, opt.first_moment(i));
            extras.emplace_back("opt.v." + state.params[i].name, opt.second_moment(i));
        }
        extras.emplace_back("opt.step", detail::pack_u32(std::uint32_t(opt.step())));
        extras.emplace_back("sampler.state", detail::pack_u64(sampler.rng_state()));
        extras.emplace_back("train.iter", detail::pack_u32(std::uint32_t(iteration)));
        save_checkpoint(ckpt_path, state, extras);
    };

    for (int it = start_iter + 1; it <= cfg.total_iters; ++it) {
        const std::vector<Clip> batch = sampler.next_batch(cfg.batch_size);
        const double loss = train_batch(state, batch);
        if (!std::isfinite(loss))
            throw TrainError("non-finite loss at iteration " + std::to_string(it));
        const double lr = lr_at(cfg, it);
        opt.config().lr = float(lr);
        opt.step_params(values, grads);

        std::optional<double> vp;
        if (cfg.validate_every > 0 && !val_seqs.empty() &&
            (it % cfg.validate_every == 0 || it == cfg.total_iters))
            vp = validate_psnr(state, val_seqs);

        log << it << ',' << metric_csv(loss) << ',' << metric_csv(lr) << ','
            << (vp ? metric_csv(*vp) : "") << '\n';
        log.flush();
        if (!log) throw DataError("training log write failed: " + log_path);

        if (it % cfg.checkpoint_every == 0 || it == cfg.total_iters) save(it);

        if (progress && (it % 25 == 0 || it == cfg.total_iters || vp))
            *progress << "iter " << it << "/" << cfg.total_iters << " loss " << metric_csv(loss)
                      << " lr " << metric_csv(lr)
                      << (vp ? " val_psnr " + metric_csv(*vp) : "") << "\n";

        res.iterations = it;
        res.final_loss = loss;
        if (vp) res.final_val_psnr = vp;
    }
    return res;
}

} // namespace tsup
