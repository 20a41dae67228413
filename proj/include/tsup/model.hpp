// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tsup/engine.hpp"
#include "tsup/ops.hpp"
#include "tsup/raster.hpp"
#include "tsup/warp.hpp"

namespace tsup {

inline constexpr int kMlpLayers = 7;
inline constexpr int kMlpHidden = 2048;
inline constexpr int kJitterPhases = 16;

struct ModelConfig {
    int scale = 2;
    int features = 32;
    int mid_layers = 3;
    std::string variant = "M";
    bool use_dilation = true;
    bool use_blending = true;
    bool condition_first = true;
    bool condition_last = true;

    int first_in() const { return 4 + 4 * scale * scale; }
    int last_out() const { return 5 * scale * scale; }

    void validate() const {
        if (scale < 2 || scale > 4) throw ConfigError("model scale must be 2, 3 or 4");
        if (features < 1) throw ConfigError("model features must be >= 1");
        if (mid_layers < 0) throw ConfigError("model mid_layers must be >= 0");
    }

    // Named sizes: S = f16-m1, M = f32-m3, L = f64-m5.
    static ModelConfig named(const std::string& variant, int scale) {
        ModelConfig c;
        c.scale = scale;
        c.variant = variant;
        if (variant == "S") {
            c.features = 16;
            c.mid_layers = 1;
        } else if (variant == "M") {
            c.features = 32;
            c.mid_layers = 3;
        } else if (variant == "L") {
            c.features = 64;
            c.mid_layers = 5;
        } else {
            throw ConfigError("unknown model variant '" + variant + "' (expected S, M or L)");
        }
        c.validate();
        return c;
    }
};

// All learnable parameters, flat in canonical order, plus index references
// into that order for each structural slot. The canonical order is
// normative: checkpoints and the optimizer identify parameters by it.
template <typename T>
struct ModelStateT {
    struct ConvRef {
        int taps = -1;
        int bias = -1;
    };
    struct MlpRef {
        std::array<int, kMlpLayers> weight{};
        std::array<int, kMlpLayers> bias{};
        bool active = false;
    };

    ModelConfig config;
    std::vector<ParamT<T>> params;
    MlpRef mlp_first, mlp_last;
    ConvRef fixed_first, fixed_last;
    std::vector<ConvRef> mid;

    void zero_grads() {
        for (auto& p : params) p.grad.zero();
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p.value.size();
        return n;
    }

    bool values_finite() const {
        for (const auto& p : params)
            if (!p.value.all_finite()) return false;
        return true;
    }
};

using ModelState = ModelStateT<float>;

namespace detail {

template <typename T>
int push_param(ModelStateT<T>& st, const std::string& name, int c, int h = 1, int w = 1) {
    st.params.emplace_back(name, c, h, w);
    return int(st.params.size()) - 1;
}

// MLP layer dims: 2 -> 2048 -> ... -> 2048 -> kernel_len
inline int mlp_in(int layer) { return layer == 0 ? 2 : kMlpHidden; }
inline int mlp_out(int layer, int kernel_len) {
    return layer == kMlpLayers - 1 ? kernel_len : kMlpHidden;
}

template <typename T>
typename ModelStateT<T>::MlpRef push_mlp(ModelStateT<T>& st, const std::string& prefix,
                                         int kernel_len) {
    typename ModelStateT<T>::MlpRef ref;
    ref.active = true;
    for (int l = 0; l < kMlpLayers; ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        ref.weight[l] = push_param(st, base + ".weight", mlp_out(l, kernel_len) * mlp_in(l));
        ref.bias[l] = push_param(st, base + ".bias", mlp_out(l, kernel_len));
    }
    return ref;
}

} // namespace detail

// Length of the flattened kernel an MLP must emit: taps then biases.
inline int flat_kernel_len(int out_ch, int in_ch) { return out_ch * in_ch * 9 + out_ch; }

// Parameter shapes and canonical order for a config; values all zero.
template <typename T>
ModelStateT<T> build_model_state(const ModelConfig& config) {
    config.validate();
    ModelStateT<T> st;
    st.config = config;
    const int f = config.features;
    if (config.condition_first) {
        st.mlp_first = detail::push_mlp(st, "kmlp_first", flat_kernel_len(f, config.first_in()));
    } else {
        st.fixed_first.taps = detail::push_param(st, "conv_first.taps", f * config.first_in() * 9);
        st.fixed_first.bias = detail::push_param(st, "conv_first.bias", f);
    }
    for (int i = 0; i < config.mid_layers; ++i) {
        typename ModelStateT<T>::ConvRef ref;
        const std::string base = "conv_mid" + std::to_string(i);
        ref.taps = detail::push_param(st, base + ".taps", f * f * 9);
        ref.bias = detail::push_param(st, base + ".bias", f);
        st.mid.push_back(ref);
    }
    if (config.condition_last) {
        st.mlp_last = detail::push_mlp(st, "kmlp_last", flat_kernel_len(config.last_out(), f));
    } else {
        st.fixed_last.taps = detail::push_param(st, "conv_last.taps", config.last_out() * f * 9);
        st.fixed_last.bias = detail::push_param(st, "conv_last.bias", config.last_out());
    }
    return st;
}

// Closed-form parameter count for a config (mirrors build_model_state).
inline std::size_t model_param_count(const ModelConfig& c) {
    auto mlp = [&](int kernel_len) {
        std::size_t n = 0;
        for (int l = 0; l < kMlpLayers; ++l)
            n += std::size_t(detail::mlp_out(l, kernel_len)) * detail::mlp_in(l) +
                 detail::mlp_out(l, kernel_len);
        return n;
    };
    const std::size_t first_len = flat_kernel_len(c.features, c.first_in());
    const std::size_t last_len = flat_kernel_len(c.last_out(), c.features);
    std::size_t n = 0;
    n += c.condition_first ? mlp(int(first_len)) : first_len;
    n += std::size_t(c.mid_layers) * (std::size_t(c.features) * c.features * 9 + c.features);
    n += c.condition_last ? mlp(int(last_len)) : last_len;
    return n;
}

// Initialization: intermediate and fixed convs get uniform fan-in init.
// Kernel MLPs get fan-in init on hidden layers; the final layer has zero
// weights and a fan-in conv init as its bias, so the predicted kernel at
// step 0 equals a standard conv init for every jitter offset.
inline ModelState init_params(const ModelConfig& config, std::uint32_t seed) {
    ModelState st = build_model_state<float>(config);
    std::mt19937 rng(seed);
    auto fill_uniform = [&rng](Raster& r, float bound) {
        std::uniform_real_distribution<float> d(-bound, bound);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = d(rng);
    };
    auto conv_bound = [](int in_ch) { return 1.0f / std::sqrt(9.0f * float(in_ch)); };
    auto init_conv_flat = [&](Raster& flat, int out_ch, int in_ch) {
        // taps then biases, both at the conv's fan-in scale
        (void)out_ch;
        fill_uniform(flat, conv_bound(in_ch));
    };
    auto init_mlp = [&](const ModelState::MlpRef& ref, int kernel_len, int conv_in) {
        for (int l = 0; l < kMlpLayers; ++l) {
            Raster& w = st.params[ref.weight[l]].value;
            Raster& b = st.params[ref.bias[l]].value;
            if (l == kMlpLayers - 1) {
                w.zero();
                init_conv_flat(b, kernel_len, conv_in);
            } else {
                const float bound = 1.0f / std::sqrt(float(detail::mlp_in(l)));
                fill_uniform(w, bound);
                fill_uniform(b, bound);
            }
        }
    };
    const int f = config.features;
    if (config.condition_first) {
        init_mlp(st.mlp_first, flat_kernel_len(f, config.first_in()), config.first_in());
    } else {
        fill_uniform(st.params[st.fixed_first.taps].value, conv_bound(config.first_in()));
        fill_uniform(st.params[st.fixed_first.bias].value, conv_bound(config.first_in()));
    }
    for (const auto& ref : st.mid) {
        fill_uniform(st.params[ref.taps].value, conv_bound(f));
        fill_uniform(st.params[ref.bias].value, conv_bound(f));
    }
    if (config.condition_last) {
        init_mlp(st.mlp_last, flat_kernel_len(config.last_out(), f), f);
    } else {
        fill_uniform(st.params[st.fixed_last.taps].value, conv_bound(f));
        fill_uniform(st.params[st.fixed_last.bias].value, conv_bound(f));
    }
    return st;
}

template <typename U, typename T>
ModelStateT<U> cast_state(const ModelStateT<T>& src) {
    ModelStateT<U> dst = build_model_state<U>(src.config);
    for (std::size_t i = 0; i < src.params.size(); ++i)
        dst.params[i].value = src.params[i].value.template cast<U>();
    return dst;
}

// One frame of model input at LR, viewed without ownership.
template <typename T>
struct StepInputT {
    const RasterT<T>* color = nullptr;  // 3ch
    const RasterT<T>* depth = nullptr;  // 1ch
    const RasterT<T>* motion = nullptr; // 2ch
    JitterOffsetT<T> jitter;
    int phase = -1; // jitter-sequence phase for kernel caching, -1 = uncached
};

// Model bound to one engine context: parameter handles plus a per-phase
// cache of predicted kernels (an entry is valid only while its stored
// jitter matches, so arbitrary-jitter data stays correct).
template <typename T, typename E>
class BoundModelT {
public:
    using Handle = typename E::Handle;

    struct Kernel {
        Handle taps, bias;
    };
    struct Carry {
        Handle color, feat;
    };
    struct StepResult {
        Handle y, feat, alpha, candidate, warped_color;
    };

    BoundModelT(E& eng, ModelStateT<T>& state) : eng_(eng), state_(state) {
        handles_.reserve(state.params.size());
        for (auto& p : state_.params) handles_.push_back(eng_.param(p));
    }

    const ModelConfig& config() const { return state_.config; }

    std::pair<Kernel, Kernel> kernels(JitterOffsetT<T> j, int phase) {
        if (phase >= 0) {
            Entry& e = cache_[phase % kJitterPhases];
            if (e.valid && e.jx == j.x && e.jy == j.y) return {e.first, e.last};
            auto made = predict_pair(j);
            e = Entry{j.x, j.y, made.first, made.second, true};
            return made;
        }
        return predict_pair(j);
    }

    Carry init_carry(const RasterT<T>& first_color) {
        const int s = config().scale;
        Carry c;
        c.color = eng_.constant(bicubic_resize(first_color, s));
        c.feat = eng_.constant(RasterT<T>(1, first_color.height() * s, first_color.width() * s));
        return c;
    }

    // One recurrent step. j_prev is the previous frame's jitter;
    // identity_warp replaces re-projection with a lattice sample (used on
    // the first frame, whose carry already lives in the current frame).
    StepResult step(const StepInputT<T>& in, JitterOffsetT<T> j_prev, const Carry& carry,
                    bool identity_warp = false) {
        const ModelConfig& cfg = config();
        const int s = cfg.scale;
        const int s2 = s * s;
        if (in.color->channels() != 3 || in.depth->channels() != 1)
            throw ConfigError("model step: expected 3-channel color and 1-channel depth");

        RasterT<T> pos;
        if (identity_warp) {
            RasterT<T> zero_mv(2, in.color->height(), in.color->width());
            pos = pipeline_positions(zero_mv, *in.depth, in.jitter, in.jitter, s, cfg.use_dilation);
        } else {
            require_motion_field(*in.motion, "model step");
            pos = pipeline_positions(*in.motion, *in.depth, j_prev, in.jitter, s, cfg.use_dilation);
        }

        std::array<Handle, 2> hist = {carry.color, carry.feat};
        Handle both = eng_.concat(std::span<const Handle>(hist.data(), 2));
        Handle warped = eng_.bilinear(both, std::move(pos));
        Handle packed = eng_.space_to_depth(warped, s);

        std::array<Handle, 3> in_parts = {eng_.constant(*in.color), eng_.constant(*in.depth), packed};
        Handle net_in = eng_.concat(std::span<const Handle>(in_parts.data(), 3));

        auto [k_first, k_last] = kernels(in.jitter, in.phase);
        Handle h = eng_.relu(eng_.conv(net_in, k_first.taps, k_first.bias, cfg.features));
        for (const auto& ref : state_.mid)
            h = eng_.relu(eng_.conv(h, handles_[ref.taps], handles_[ref.bias], cfg.features));
        Handle out = eng_.conv(h, k_last.taps, k_last.bias, cfg.last_out());

        StepResult r;
        r.candidate = eng_.depth_to_space(eng_.slice_channels(out, 0, 3 * s2), s);
        r.alpha = eng_.sigmoid(eng_.depth_to_space(eng_.slice_channels(out, 3 * s2, s2), s));
        r.feat = eng_.depth_to_space(eng_.slice_channels(out, 4 * s2, s2), s);
        r.warped_color = eng_.slice_channels(warped, 0, 3);
        r.y = cfg.use_blending ? eng_.blend(r.alpha, r.candidate, r.warped_color) : r.candidate;
        return r;
    }

    // Rollout from a fresh carry; per-frame outputs, plus the mean of
    // per-frame L1 losses when targets are given.
    struct Rollout {
        std::vector<Handle> outputs;
        Handle loss{};
        bool has_loss = false;
    };

    Rollout rollout(std::span<const StepInputT<T>> frames,
                    std::span<const RasterT<T>* const> targets = {}) {
        if (frames.empty()) throw ConfigError("rollout: no frames");
        if (!targets.empty() && targets.size() != frames.size())
            throw ConfigError("rollout: target count mismatch");
        Rollout out;
        Carry carry = init_carry(*frames[0].color);
        JitterOffsetT<T> j_prev = frames[0].jitter;
        Handle loss_sum{};
        for (std::size_t t = 0; t < frames.size(); ++t) {
            StepResult r = step(frames[t], j_prev, carry, t == 0);
            carry = Carry{r.y, r.feat};
            j_prev = frames[t].jitter;
            out.outputs.push_back(r.y);
            if (!targets.empty()) {
                Handle l = eng_.l1(r.y, *targets[t]);
                loss_sum = t == 0 ? l : eng_.add(loss_sum, l);
            }
        }
        if (!targets.empty()) {
            out.loss = eng_.scale(loss_sum, T(1) / T(double(frames.size())));
            out.has_loss = true;
        }
        return out;
    }

private:
    struct Entry {
        T jx = 0, jy = 0;
        Kernel first, last;
        bool valid = false;
    };

    Kernel predict_from_mlp(const typename ModelStateT<T>::MlpRef& ref, JitterOffsetT<T> j,
                            int out_ch, int in_ch) {
        const int kernel_len = flat_kernel_len(out_ch, in_ch);
        RasterT<T> jin(2, 1, 1);
        jin[0] = j.x;
        jin[1] = j.y;
        Handle x = eng_.constant(std::move(jin));
        for (int l = 0; l < kMlpLayers; ++l) {
            x = eng_.dense(x, handles_[ref.weight[l]], handles_[ref.bias[l]],
                           detail::mlp_out(l, kernel_len), detail::mlp_in(l));
            if (l + 1 < kMlpLayers) x = eng_.relu(x);
        }
        Kernel k;
        k.taps = eng_.slice_channels(x, 0, out_ch * in_ch * 9);
        k.bias = eng_.slice_channels(x, out_ch * in_ch * 9, out_ch);
        return k;
    }

    std::pair<Kernel, Kernel> predict_pair(JitterOffsetT<T> j) {
        const ModelConfig& cfg = config();
        Kernel first = cfg.condition_first
                           ? predict_from_mlp(state_.mlp_first, j, cfg.features, cfg.first_in())
                           : Kernel{handles_[state_.fixed_first.taps], handles_[state_.fixed_first.bias]};
        Kernel last = cfg.condition_last
                          ? predict_from_mlp(state_.mlp_last, j, cfg.last_out(), cfg.features)
                          : Kernel{handles_[state_.fixed_last.taps], handles_[state_.fixed_last.bias]};
        return {first, last};
    }

    E& eng_;
    ModelStateT<T>& state_;
    std::vector<Handle> handles_;
    std::array<Entry, kJitterPhases> cache_{};
};

// Streaming eager inference over a sequence: keeps the recurrent carry and
// the warm kernel cache between frames.
template <typename T>
class SequenceRunnerT {
public:
    explicit SequenceRunnerT(ModelStateT<T>& state) : bound_(eng_, state) {}

    const ModelConfig& config() const { return bound_.config(); }

    // Returns Y_t at HR. The first call initializes the carry from the frame.
    const RasterT<T>& advance(const StepInputT<T>& in) {
        if (!started_) {
            carry_ = bound_.init_carry(*in.color);
            started_ = true;
            last_ = bound_.step(in, in.jitter, carry_, true);
        } else {
            last_ = bound_.step(in, prev_jitter_, carry_);
        }
        carry_ = typename Bound::Carry{last_.y, last_.feat};
        prev_jitter_ = in.jitter;
        return eng_.value(last_.y);
    }

    const RasterT<T>& alpha() const { return eng_.value(last_.alpha); }
    const RasterT<T>& candidate() const { return eng_.value(last_.candidate); }

    void reset() { started_ = false; }

private:
    using Bound = BoundModelT<T, EagerEngineT<T>>;
    EagerEngineT<T> eng_;
    Bound bound_;
    typename Bound::Carry carry_{};
    typename Bound::StepResult last_{};
    JitterOffsetT<T> prev_jitter_{};
    bool started_ = false;
};

using SequenceRunner = SequenceRunnerT<float>;

} // namespace tsup
