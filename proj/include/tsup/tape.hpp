// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "tsup/ops.hpp"
#include "tsup/raster.hpp"

namespace tsup {

// Reverse-mode gradient tape. Forward calls record one node per op with a
// closure that applies the vector-Jacobian product; backward() replays the
// closures in exact reverse creation order. Leaf values and their gradient
// accumulators live outside the tape (the tape only borrows them), so one
// parameter set can serve many tapes and gradients accumulate across calls.
template <typename T>
class TapeT {
public:
    using Handle = int;
    static constexpr Handle none = -1;

    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    // Parameter leaf: `value` must outlive the tape; gradients accumulate
    // into `grad_sink` (same shape, caller zeroes it when starting fresh).
    Handle leaf(const RasterT<T>* value, RasterT<T>* grad_sink) {
        Node n;
        n.external = value;
        n.sink = grad_sink;
        n.requires_grad = grad_sink != nullptr;
        nodes_.push_back(std::move(n));
        return Handle(nodes_.size()) - 1;
    }

    Handle constant(RasterT<T> v) { return push(std::move(v), false); }

    // Resolved per call: nodes move when the vector grows, so no node may
    // hold a pointer into another node.
    const RasterT<T>& value(Handle h) const {
        const Node& n = nodes_.at(h);
        return n.external ? *n.external : n.owned;
    }
    bool requires_grad(Handle h) const { return nodes_.at(h).requires_grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // Gradient buffer of an op node (leaves accumulate into their sink).
    const RasterT<T>& grad_of(Handle h) const {
        const Node& n = nodes_.at(h);
        if (n.sink) return *n.sink;
        return n.grad;
    }

    // ---- ops -------------------------------------------------------------

    Handle conv(Handle x, Handle taps, Handle bias, int out_ch) {
        const RasterT<T>& xv = value(x);
        const RasterT<T>& tv = value(taps);
        const int in_ch = xv.channels();
        if (tv.size() != std::size_t(out_ch) * in_ch * 9)
            throw ConfigError("tape conv: tap count mismatch");
        const T* bptr = bias == none ? nullptr : value(bias).data();
        if (bias != none && value(bias).size() != std::size_t(out_ch))
            throw ConfigError("tape conv: bias count mismatch");
        RasterT<T> out = conv3x3_flat(xv, tv.data(), bptr, out_ch);
        const bool need = requires_grad(x) || requires_grad(taps) ||
                          (bias != none && requires_grad(bias));
        Handle h = push(std::move(out), need);
        if (need)
            nodes_[h].backprop = [this, h, x, taps, bias, in_ch]() {
                const RasterT<T>& g = nodes_[h].grad;
                if (requires_grad(taps) || (bias != none && requires_grad(bias))) {
                    T* gt = requires_grad(taps) ? grad_buf(taps).data() : nullptr;
                    T* gb = (bias != none && requires_grad(bias)) ? grad_buf(bias).data() : nullptr;
                    if (gt || gb) {
                        // weight grads need both buffers or a scratch for the missing one
                        if (gt && gb) {
                            conv3x3_backward_weights(value(x), g, gt, gb);
                        } else {
                            RasterT<T> scratch_t, scratch_b;
                            if (!gt) { scratch_t = RasterT<T>(int(value(taps).size()), 1, 1); gt = scratch_t.data(); }
                            if (!gb) { scratch_b = RasterT<T>(g.channels(), 1, 1); gb = scratch_b.data(); }
                            conv3x3_backward_weights(value(x), g, gt, gb);
                        }
                    }
                }
                if (requires_grad(x))
                    accumulate(x, conv3x3_backward_input(g, value(taps).data(), in_ch));
            };
        return h;
    }

    Handle relu(Handle x) {
        Handle h = push(tsup::relu(value(x)), requires_grad(x));
        if (nodes_[h].requires_grad)
            nodes_[h].backprop = [this, h, x]() {
                const RasterT<T>& g = nodes_[h].grad;
                const RasterT<T>& xv = value(x);
                RasterT<T>& gx = grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (xv[i] > T(0)) gx[i] += g[i];
            };
        return h;
    }

    Handle sigmoid(Handle x) {
        Handle h = push(tsup::sigmoid(value(x)), requires_grad(x));
        if (nodes_[h].requires_grad)
            nodes_[h].backprop = [this, h, x]() {
                const RasterT<T>& g = nodes_[h].grad;
                const RasterT<T>& y = value(h);
                RasterT<T>& gx = grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i)
                    gx[i] += g[i] * y[i] * (T(1) - y[i]);
            };
        return h;
    }

    Handle depth_to_space(Handle x, int s) {
        Handle h = push(tsup::depth_to_space(value(x), s), requires_grad(x));
        if (nodes_[h].requires_grad)
            nodes_[h].backprop = [this, h, x, s]() {
                accumulate(x, tsup::space_to_depth(nodes_[h].grad, s));
            };
        return h;
    }

    Handle space_to_depth(Handle x, int s) {
        Handle h = push(tsup::space_to_depth(value(x), s), requires_grad(x));
        if (nodes_[h].requires_grad)
            nodes_[h].backprop = [this, h, x, s]() {
                accumulate(x, tsup::depth_to_space(nodes_[h].grad, s));
            };
        return h;
    }

    Handle concat(std::span<const Handle> parts) {
        std::vector<const RasterT<T>*> vs;
        bool need = false;
        for (Handle p : parts) {
            vs.push_back(&value(p));
            need = need || requires_grad(p);
        }
        RasterT<T> out = concat_channels(std::span<const RasterT<T>* const>(vs.data(), vs.size()));
        Handle h = push(std::move(out), need);
        if (need) {
            std::vector<Handle> ps(parts.begin(), parts.end());
            nodes_[h].backprop = [this, h, ps = std::move(ps)]() {
                const RasterT<T>& g = nodes_[h].grad;
                int first = 0;
                for (Handle p : ps) {
                    const int pc = value(p).channels();
                    if (requires_grad(p)) {
                        RasterT<T>& gp = grad_buf(p);
                        const T* gs = g.channel(first);
                        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += gs[i];
                    }
                    first += pc;
                }
            };
        }
        return h;
    }

    Handle slice_channels(Handle x, int first, int count) {
        Handle h = push(tsup::slice_channels(value(x), first, count), requires_grad(x));
        if (nodes_[h].requires_grad)
            nodes_[h].backprop = [this, h, x, first]() {
                const RasterT<T>& g = nodes_[h].grad;
                RasterT<T>& gx = grad_buf(x);
                T* dst = gx.channel(first);
                for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
            };
        return h;
    }

    // Positions are data, not differentiated; gradient flows to the source.
    Handle bilinear(Handle src, RasterT<T> positions) {
        auto pos = std::make_shared<const RasterT<T>>(std::move(positions));
        Handle h = push(bilinear_sample(value(src), *pos), requires_grad(src));
        if (nodes_[h].requires_grad)
            nodes_[h].backprop = [this, h, src, pos]() {
                bilinear_backward_source(nodes_[h].grad, *pos, grad_buf(src));
            };
        return h;
    }

    Handle blend(Handle mask, Handle candidate, Handle history) {
        const bool need = requires_grad(mask) || requires_grad(candidate) || requires_grad(history);
        Handle h = push(tsup::blend(value(mask), value(candidate), value(history)), need);
        if (need)
            nodes_[h].backprop = [this, h, mask, candidate, history]() {
                const RasterT<T>& g = nodes_[h].grad;
                const RasterT<T>& m = value(mask);
                const RasterT<T>& cv = value(candidate);
                const RasterT<T>& hv = value(history);
                const std::size_t plane = std::size_t(m.height()) * m.width();
                if (requires_grad(mask)) {
                    RasterT<T>& gm = grad_buf(mask);
                    for (int c = 0; c < cv.channels(); ++c) {
                        const T* gc = g.channel(c);
                        const T* cd = cv.channel(c);
                        const T* hd = hv.channel(c);
                        for (std::size_t i = 0; i < plane; ++i)
                            gm[i] += gc[i] * (cd[i] - hd[i]);
                    }
                }
                if (requires_grad(candidate)) {
                    RasterT<T>& gc = grad_buf(candidate);
                    for (int c = 0; c < cv.channels(); ++c) {
                        const T* gs = g.channel(c);
                        T* gd = gc.channel(c);
                        for (std::size_t i = 0; i < plane; ++i) gd[i] += gs[i] * m[i];
                    }
                }
                if (requires_grad(history)) {
                    RasterT<T>& gh = grad_buf(history);
                    for (int c = 0; c < cv.channels(); ++c) {
                        const T* gs = g.channel(c);
                        T* gd = gh.channel(c);
                        for (std::size_t i = 0; i < plane; ++i) gd[i] += gs[i] * (T(1) - m[i]);
                    }
                }
            };
        return h;
    }

    Handle dense(Handle x, Handle w, Handle b, int out_f, int in_f) {
        const RasterT<T>& xv = value(x);
        if (int(xv.size()) != in_f) throw ConfigError("tape dense: input size mismatch");
        if (int(value(w).size()) != out_f * in_f) throw ConfigError("tape dense: weight size mismatch");
        const T* bptr = b == none ? nullptr : value(b).data();
        RasterT<T> out = dense_apply_flat(value(w).data(), bptr, out_f, in_f, xv);
        const bool need = requires_grad(x) || requires_grad(w) || (b != none && requires_grad(b));
        Handle h = push(std::move(out), need);
        if (need)
            nodes_[h].backprop = [this, h, x, w, b, out_f, in_f]() {
                const RasterT<T>& g = nodes_[h].grad;
                T* gx = requires_grad(x) ? grad_buf(x).data() : nullptr;
                T* gw = requires_grad(w) ? grad_buf(w).data() : nullptr;
                T* gb = (b != none && requires_grad(b)) ? grad_buf(b).data() : nullptr;
                dense_backward_flat(value(w).data(), out_f, in_f, value(x).data(), g.data(),
                                    gx, gw, gb);
            };
        return h;
    }

    Handle add(Handle a, Handle b) {
        const bool need = requires_grad(a) || requires_grad(b);
        Handle h = push(tsup::add(value(a), value(b)), need);
        if (need)
            nodes_[h].backprop = [this, h, a, b]() {
                const RasterT<T>& g = nodes_[h].grad;
                if (requires_grad(a)) accumulate(a, g);
                if (requires_grad(b)) accumulate(b, g);
            };
        return h;
    }

    Handle scale(Handle a, T s) {
        Handle h = push(tsup::scale(value(a), s), requires_grad(a));
        if (nodes_[h].requires_grad)
            nodes_[h].backprop = [this, h, a, s]() {
                const RasterT<T>& g = nodes_[h].grad;
                RasterT<T>& ga = grad_buf(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
            };
        return h;
    }

    // Mean absolute error against a fixed target; produces a scalar node.
    Handle l1(Handle pred, RasterT<T> target) {
        const RasterT<T>& pv = value(pred);
        if (!pv.same_shape(target)) throw ConfigError("tape l1: shape mismatch");
        auto tgt = std::make_shared<const RasterT<T>>(std::move(target));
        double acc = 0;
        for (std::size_t i = 0; i < pv.size(); ++i)
            acc += std::abs(double(pv[i]) - double((*tgt)[i]));
        RasterT<T> out(1, 1, 1);
        out[0] = T(acc / double(pv.size()));
        Handle h = push(std::move(out), requires_grad(pred));
        if (nodes_[h].requires_grad)
            nodes_[h].backprop = [this, h, pred, tgt]() {
                const T g = nodes_[h].grad[0] / T(double(tgt->size()));
                const RasterT<T>& pv = value(pred);
                RasterT<T>& gp = grad_buf(pred);
                for (std::size_t i = 0; i < pv.size(); ++i) {
                    const T d = pv[i] - (*tgt)[i];
                    if (d > T(0)) gp[i] += g;
                    else if (d < T(0)) gp[i] -= g;
                }
            };
        return h;
    }

    // Fixed-weight inner product; scalar node (used by gradient checks).
    Handle weighted_sum(Handle x, RasterT<T> weights) {
        const RasterT<T>& xv = value(x);
        if (xv.size() != weights.size()) throw ConfigError("tape weighted_sum: size mismatch");
        auto w = std::make_shared<const RasterT<T>>(std::move(weights));
        double acc = 0;
        for (std::size_t i = 0; i < xv.size(); ++i) acc += double(xv[i]) * double((*w)[i]);
        RasterT<T> out(1, 1, 1);
        out[0] = T(acc);
        Handle h = push(std::move(out), requires_grad(x));
        if (nodes_[h].requires_grad)
            nodes_[h].backprop = [this, h, x, w]() {
                const T g = nodes_[h].grad[0];
                RasterT<T>& gx = grad_buf(x);
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * (*w)[i];
            };
        return h;
    }

    // ---- backward --------------------------------------------------------

    void backward(Handle loss) {
        if (loss < 0 || loss >= Handle(nodes_.size()))
            throw UsageError("tape backward: invalid loss handle");
        if (value(loss).size() != 1) throw UsageError("tape backward: loss must be scalar");
        if (!nodes_[loss].requires_grad)
            throw UsageError("tape backward: loss does not depend on any parameter");
        grad_buf(loss)[0] += T(1);
        for (Handle h = loss; h >= 0; --h) {
            Node& n = nodes_[h];
            if (n.grad_live && n.backprop) n.backprop();
        }
    }

private:
    struct Node {
        RasterT<T> owned;
        const RasterT<T>* external = nullptr;
        RasterT<T> grad;
        RasterT<T>* sink = nullptr;
        bool grad_live = false;
        bool requires_grad = false;
        std::function<void()> backprop;
    };

    Handle push(RasterT<T> v, bool need) {
        Node n;
        n.owned = std::move(v);
        n.requires_grad = need;
        nodes_.push_back(std::move(n));
        return Handle(nodes_.size()) - 1;
    }

    RasterT<T>& grad_buf(Handle h) {
        Node& n = nodes_[h];
        if (n.sink) {
            n.grad_live = true;
            return *n.sink;
        }
        if (!n.grad_live) {
            const RasterT<T>& v = value(h);
            n.grad = RasterT<T>(v.channels(), v.height(), v.width());
            n.grad_live = true;
        }
        return n.grad;
    }

    void accumulate(Handle h, const RasterT<T>& g) {
        RasterT<T>& dst = grad_buf(h);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }

    std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

} // namespace tsup
