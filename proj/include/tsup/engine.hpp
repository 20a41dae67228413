// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tsup/ops.hpp"
#include "tsup/raster.hpp"
#include "tsup/tape.hpp"

namespace tsup {

// Named parameter with a gradient accumulator of the same shape.
template <typename T>
struct ParamT {
    std::string name;
    RasterT<T> value;
    RasterT<T> grad;

    ParamT() = default;
    ParamT(std::string n, int c, int h, int w)
        : name(std::move(n)), value(c, h, w), grad(c, h, w) {}
};

using Param = ParamT<float>;

// The model's forward pass is written once against this engine concept:
// an engine turns rasters into opaque handles and applies the op set.
// EagerEngineT computes immediately; TapeEngineT records for backward.

template <typename T>
class EagerEngineT {
public:
    using Handle = std::shared_ptr<const RasterT<T>>;

    Handle constant(RasterT<T> v) const { return std::make_shared<const RasterT<T>>(std::move(v)); }
    // Borrows the parameter value; no gradient tracking.
    Handle param(ParamT<T>& p) const {
        return Handle(std::shared_ptr<const RasterT<T>>(), &p.value);
    }
    const RasterT<T>& value(const Handle& h) const { return *h; }

    Handle conv(const Handle& x, const Handle& taps, const Handle& bias, int out_ch) const {
        return constant(conv3x3_flat(*x, taps->data(), bias ? bias->data() : nullptr, out_ch));
    }
    Handle relu(const Handle& x) const { return constant(tsup::relu(*x)); }
    Handle sigmoid(const Handle& x) const { return constant(tsup::sigmoid(*x)); }
    Handle depth_to_space(const Handle& x, int s) const { return constant(tsup::depth_to_space(*x, s)); }
    Handle space_to_depth(const Handle& x, int s) const { return constant(tsup::space_to_depth(*x, s)); }
    Handle concat(std::span<const Handle> parts) const {
        std::vector<const RasterT<T>*> vs;
        vs.reserve(parts.size());
        for (const auto& p : parts) vs.push_back(p.get());
        return constant(concat_channels(std::span<const RasterT<T>* const>(vs.data(), vs.size())));
    }
    Handle slice_channels(const Handle& x, int first, int count) const {
        return constant(tsup::slice_channels(*x, first, count));
    }
    Handle bilinear(const Handle& src, RasterT<T> positions) const {
        return constant(bilinear_sample(*src, positions));
    }
    Handle blend(const Handle& mask, const Handle& cand, const Handle& hist) const {
        return constant(tsup::blend(*mask, *cand, *hist));
    }
    Handle dense(const Handle& x, const Handle& w, const Handle& b, int out_f, int in_f) const {
        return constant(dense_apply_flat(w->data(), b ? b->data() : nullptr, out_f, in_f, *x));
    }
    Handle add(const Handle& a, const Handle& b) const { return constant(tsup::add(*a, *b)); }
    Handle scale(const Handle& a, T s) const { return constant(tsup::scale(*a, s)); }
    Handle l1(const Handle& pred, RasterT<T> target) const {
        const RasterT<T>& pv = *pred;
        if (!pv.same_shape(target)) throw ConfigError("l1: shape mismatch");
        double acc = 0;
        for (std::size_t i = 0; i < pv.size(); ++i)
            acc += std::abs(double(pv[i]) - double(target[i]));
        RasterT<T> out(1, 1, 1);
        out[0] = T(acc / double(pv.size()));
        return constant(std::move(out));
    }
};

using EagerEngine = EagerEngineT<float>;

template <typename T>
class TapeEngineT {
public:
    using Handle = typename TapeT<T>::Handle;

    // train=false records values without parameter gradients (useful for
    // composition tests that only need the tape's forward semantics).
    explicit TapeEngineT(TapeT<T>& tape, bool train = true) : tape_(&tape), train_(train) {}

    Handle constant(RasterT<T> v) const { return tape_->constant(std::move(v)); }
    Handle param(ParamT<T>& p) const {
        return tape_->leaf(&p.value, train_ ? &p.grad : nullptr);
    }
    const RasterT<T>& value(Handle h) const { return tape_->value(h); }

    Handle conv(Handle x, Handle taps, Handle bias, int out_ch) const {
        return tape_->conv(x, taps, bias, out_ch);
    }
    Handle relu(Handle x) const { return tape_->relu(x); }
    Handle sigmoid(Handle x) const { return tape_->sigmoid(x); }
    Handle depth_to_space(Handle x, int s) const { return tape_->depth_to_space(x, s); }
    Handle space_to_depth(Handle x, int s) const { return tape_->space_to_depth(x, s); }
    Handle concat(std::span<const Handle> parts) const { return tape_->concat(parts); }
    Handle slice_channels(Handle x, int first, int count) const {
        return tape_->slice_channels(x, first, count);
    }
    Handle bilinear(Handle src, RasterT<T> positions) const {
        return tape_->bilinear(src, std::move(positions));
    }
    Handle blend(Handle mask, Handle cand, Handle hist) const {
        return tape_->blend(mask, cand, hist);
    }
    Handle dense(Handle x, Handle w, Handle b, int out_f, int in_f) const {
        return tape_->dense(x, w, b, out_f, in_f);
    }
    Handle add(Handle a, Handle b) const { return tape_->add(a, b); }
    Handle scale(Handle a, T s) const { return tape_->scale(a, s); }
    Handle l1(Handle pred, RasterT<T> target) const { return tape_->l1(pred, std::move(target)); }

    TapeT<T>& tape() const { return *tape_; }

private:
    TapeT<T>* tape_;
    bool train_;
};

using TapeEngine = TapeEngineT<float>;

} // namespace tsup
