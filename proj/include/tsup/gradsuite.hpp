// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tsup/engine.hpp"
#include "tsup/gradcheck.hpp"
#include "tsup/model.hpp"
#include "tsup/ops.hpp"
#include "tsup/tape.hpp"

namespace tsup {

// One row of the gradient pass table: an analytic-vs-finite-difference check
// for a single input of a single op (or the whole-model rollout).
struct GradCase {
    std::string name;
    int checked = 0;
    double max_err = 0.0;
    double tol = 0.0;
    std::string worst;
    bool pass = false;
};

namespace detail {

using GradRaster = RasterT<double>;

inline GradRaster grad_random(std::mt19937& rng, int c, int h, int w, double lo = -1.0,
                              double hi = 1.0) {
    GradRaster r(c, h, w, GradRaster::Uninit{});
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = dist(rng);
    return r;
}

inline std::span<double> grad_span(GradRaster& r) { return {r.data(), r.size()}; }

inline std::span<const double> grad_cspan(const GradRaster& r) { return {r.data(), r.size()}; }

template <typename F>
GradCase grad_case(std::string name, std::span<double> x, std::span<const double> g, F&& eval,
                   double tol, double h = 1e-3, int max_coords = -1, std::uint32_t seed = 0) {
    FdReport rep = fd_check(x, g, eval, h, max_coords, seed, name);
    GradCase c;
    c.name = std::move(name);
    c.checked = rep.checked;
    c.max_err = rep.max_err;
    c.tol = tol;
    c.worst = rep.worst;
    c.pass = rep.ok(tol);
    return c;
}

} // namespace detail

// Checks every differentiable op against 64-bit central finite differences
// and finishes with a 16-step rollout of a tiny model. Deterministic.
inline std::vector<GradCase> gradient_suite(bool include_rollout = true) {
    using detail::grad_case;
    using detail::grad_cspan;
    using detail::grad_random;
    using detail::grad_span;
    using DRaster = detail::GradRaster;
    using DTape = TapeT<double>;
    constexpr double kTol = 1e-4;
    std::vector<GradCase> table;

    {
        std::mt19937 rng(101);
        DRaster x = grad_random(rng, 3, 5, 5);
        ConvKernelT<double> k(2, 3);
        k.taps = grad_random(rng, int(k.taps.size()), 1, 1);
        k.bias = grad_random(rng, 2, 1, 1);
        DRaster w = grad_random(rng, 2, 5, 5);
        DRaster gx(3, 5, 5), gt(int(k.taps.size()), 1, 1), gb(2, 1, 1);
        {
            DTape tape;
            auto out =
                tape.conv(tape.leaf(&x, &gx), tape.leaf(&k.taps, &gt), tape.leaf(&k.bias, &gb), 2);
            tape.backward(tape.weighted_sum(out, w));
        }
        auto eval = [&]() {
            auto out = conv3x3_flat(x, k.taps.data(), k.bias.data(), 2);
            double s = 0;
            for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
            return s;
        };
        table.push_back(grad_case("conv3x3.input", grad_span(x), grad_cspan(gx), eval, kTol));
        table.push_back(grad_case("conv3x3.taps", grad_span(k.taps), grad_cspan(gt), eval, kTol));
        table.push_back(grad_case("conv3x3.bias", grad_span(k.bias), grad_cspan(gb), eval, kTol));
    }

    {
        std::mt19937 rng(102);
        DenseLayerT<double> l1(5, 4), l2(3, 5);
        l1.weights = grad_random(rng, 20, 1, 1);
        l1.bias = grad_random(rng, 5, 1, 1);
        l2.weights = grad_random(rng, 15, 1, 1);
        l2.bias = grad_random(rng, 3, 1, 1);
        DRaster x = grad_random(rng, 4, 1, 1);
        DRaster w = grad_random(rng, 3, 1, 1);
        DRaster gx(4, 1, 1), gw1(20, 1, 1), gb1(5, 1, 1), gw2(15, 1, 1), gb2(3, 1, 1);
        auto eval = [&]() {
            std::vector<DenseLayerT<double>> ls = {l1, l2};
            std::vector<Activation> acts = {Activation::Relu, Activation::None};
            auto y = dense_forward<double>(ls, acts, x);
            double s = 0;
            for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
            return s;
        };
        {
            DTape tape;
            auto h1 = tape.relu(tape.dense(tape.leaf(&x, &gx), tape.leaf(&l1.weights, &gw1),
                                           tape.leaf(&l1.bias, &gb1), 5, 4));
            auto h2 = tape.dense(h1, tape.leaf(&l2.weights, &gw2), tape.leaf(&l2.bias, &gb2), 3, 5);
            tape.backward(tape.weighted_sum(h2, w));
        }
        table.push_back(grad_case("dense.input", grad_span(x), grad_cspan(gx), eval, kTol));
        table.push_back(grad_case("dense.weights1", grad_span(l1.weights), grad_cspan(gw1), eval, kTol));
        table.push_back(grad_case("dense.bias1", grad_span(l1.bias), grad_cspan(gb1), eval, kTol));
        table.push_back(grad_case("dense.weights2", grad_span(l2.weights), grad_cspan(gw2), eval, kTol));
        table.push_back(grad_case("dense.bias2", grad_span(l2.bias), grad_cspan(gb2), eval, kTol));
    }

    {
        // relu -> sigmoid -> depth_to_space; inputs nudged off the relu kink.
        std::mt19937 rng(103);
        DRaster x = grad_random(rng, 4, 4, 4);
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::abs(x[i]) < 0.05) x[i] = x[i] < 0 ? -0.1 : 0.1;
        DRaster w = grad_random(rng, 1, 8, 8);
        DRaster gx(4, 4, 4);
        auto eval = [&]() {
            auto y = depth_to_space(sigmoid(relu(x)), 2);
            double s = 0;
            for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
            return s;
        };
        {
            DTape tape;
            auto h = tape.depth_to_space(tape.sigmoid(tape.relu(tape.leaf(&x, &gx))), 2);
            tape.backward(tape.weighted_sum(h, w));
        }
        table.push_back(grad_case("relu_sigmoid_d2s.input", grad_span(x), grad_cspan(gx), eval, kTol));
    }

    {
        std::mt19937 rng(104);
        DRaster x = grad_random(rng, 1, 6, 6);
        DRaster w = grad_random(rng, 4, 3, 3);
        DRaster gx(1, 6, 6);
        auto eval = [&]() {
            auto sl = slice_channels(concat_channels(space_to_depth(x, 2), space_to_depth(x, 2)), 2, 4);
            double s = 0;
            for (std::size_t i = 0; i < sl.size(); ++i) s += sl[i] * w[i];
            return s;
        };
        {
            DTape tape;
            auto packed = tape.space_to_depth(tape.leaf(&x, &gx), 2);
            std::vector<DTape::Handle> parts = {packed, packed};
            tape.backward(tape.weighted_sum(tape.slice_channels(tape.concat(parts), 2, 4), w));
        }
        table.push_back(grad_case("s2d_concat_slice.input", grad_span(x), grad_cspan(gx), eval, kTol));
    }

    {
        std::mt19937 rng(105);
        DRaster src = grad_random(rng, 2, 6, 7);
        DRaster gs(2, 6, 7);
        DRaster pos(2, 4, 5, DRaster::Uninit{});
        std::uniform_real_distribution<double> cx(-1.0, 7.5), cy(-1.0, 6.5);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 5; ++x) {
                pos.at(0, y, x) = cx(rng);
                pos.at(1, y, x) = cy(rng);
            }
        DRaster w = grad_random(rng, 2, 4, 5);
        auto eval = [&]() {
            auto out = bilinear_sample(src, pos);
            double s = 0;
            for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
            return s;
        };
        {
            DTape tape;
            tape.backward(tape.weighted_sum(tape.bilinear(tape.leaf(&src, &gs), pos), w));
        }
        table.push_back(grad_case("bilinear.source", grad_span(src), grad_cspan(gs), eval, kTol));
    }

    {
        std::mt19937 rng(106);
        DRaster mask = grad_random(rng, 1, 4, 4, 0.1, 0.9);
        DRaster cand = grad_random(rng, 3, 4, 4);
        DRaster hist = grad_random(rng, 3, 4, 4);
        DRaster gm(1, 4, 4), gc(3, 4, 4), gh(3, 4, 4);
        DRaster w = grad_random(rng, 3, 4, 4);
        auto eval = [&]() {
            auto out = blend(mask, cand, hist);
            double s = 0;
            for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
            return s;
        };
        {
            DTape tape;
            auto out = tape.blend(tape.leaf(&mask, &gm), tape.leaf(&cand, &gc), tape.leaf(&hist, &gh));
            tape.backward(tape.weighted_sum(out, w));
        }
        table.push_back(grad_case("blend.mask", grad_span(mask), grad_cspan(gm), eval, kTol));
        table.push_back(grad_case("blend.candidate", grad_span(cand), grad_cspan(gc), eval, kTol));
        table.push_back(grad_case("blend.history", grad_span(hist), grad_cspan(gh), eval, kTol));
    }

    {
        // L1 objective through add/scale; targets offset so |pred-target| > 0.
        std::mt19937 rng(107);
        DRaster a = grad_random(rng, 2, 3, 3);
        DRaster b = grad_random(rng, 2, 3, 3);
        DRaster target = grad_random(rng, 2, 3, 3, 3.0, 4.0);
        DRaster ga(2, 3, 3), gb(2, 3, 3);
        auto eval = [&]() {
            auto s = add(scale(a, 0.7), b);
            double acc = 0;
            for (std::size_t i = 0; i < s.size(); ++i) acc += std::abs(s[i] - target[i]);
            return acc / double(s.size());
        };
        {
            DTape tape;
            auto s = tape.add(tape.scale(tape.leaf(&a, &ga), 0.7), tape.leaf(&b, &gb));
            tape.backward(tape.l1(s, target));
        }
        table.push_back(grad_case("l1_add_scale.left", grad_span(a), grad_cspan(ga), eval, kTol));
        table.push_back(grad_case("l1_add_scale.right", grad_span(b), grad_cspan(gb), eval, kTol));
    }

    {
        // Full 16-step rollout of a tiny model, sampled coordinates per tensor.
        ModelConfig cfg;
        cfg.scale = 2;
        cfg.features = 4;
        cfg.mid_layers = 1;
        ModelState st32 = init_params(cfg, 307);
        {
            // Leave the zero-final-weight init so the MLP trunks carry gradient.
            std::mt19937 rng(311);
            std::uniform_real_distribution<float> d(-0.05f, 0.05f);
            for (const auto* mlp : {&st32.mlp_first, &st32.mlp_last}) {
                if (!mlp->active) continue;
                Raster& w = st32.params[mlp->weight[kMlpLayers - 1]].value;
                for (std::size_t i = 0; i < w.size(); ++i) w[i] = d(rng);
            }
        }
        ModelStateT<double> st = cast_state<double>(st32);

        std::mt19937 rng(313);
        const int n = 16, lh = 12, lw = 12, s = 2;
        std::vector<DRaster> color, depth, motion, target;
        std::vector<JitterOffsetT<double>> jit;
        std::uniform_real_distribution<double> jd(-0.5, 0.5);
        std::vector<JitterOffsetT<double>> seq;
        for (int i = 0; i < 4; ++i) seq.push_back({jd(rng), jd(rng)});
        for (int t = 0; t < n; ++t) {
            color.push_back(grad_random(rng, 3, lh, lw, 0.0, 1.0));
            depth.push_back(grad_random(rng, 1, lh, lw, 0.05, 1.0));
            motion.push_back(grad_random(rng, 2, lh, lw, -1.5, 1.5));
            target.push_back(grad_random(rng, 3, lh * s, lw * s, 0.0, 1.0));
            jit.push_back(seq[t % 4]);
        }
        std::vector<StepInputT<double>> inputs;
        std::vector<const DRaster*> targets;
        for (int t = 0; t < n; ++t) {
            StepInputT<double> in;
            in.color = &color[t];
            in.depth = &depth[t];
            in.motion = &motion[t];
            in.jitter = jit[t];
            in.phase = t % 4;
            inputs.push_back(in);
            targets.push_back(&target[t]);
        }

        auto eval = [&]() {
            EagerEngineT<double> eng;
            BoundModelT<double, EagerEngineT<double>> bm(eng, st);
            auto ro = bm.rollout(inputs, targets);
            return double(eng.value(ro.loss)[0]);
        };
        st.zero_grads();
        {
            TapeT<double> tape;
            TapeEngineT<double> eng(tape, true);
            BoundModelT<double, TapeEngineT<double>> bm(eng, st);
            auto ro = bm.rollout(inputs, targets);
            tape.backward(ro.loss);
        }

        GradCase roll;
        roll.name = "rollout.16step";
        roll.tol = 1e-3;
        roll.pass = true;
        for (std::size_t i = 0; i < st.params.size(); ++i) {
            auto& p = st.params[i];
            std::span<double> x(p.value.data(), p.value.size());
            std::span<const double> g(p.grad.data(), p.grad.size());
            FdReport rep = fd_check(x, g, eval, 1e-5, 4, std::uint32_t(1000 + i), p.name);
            roll.checked += rep.checked;
            if (rep.max_err > roll.max_err) {
                roll.max_err = rep.max_err;
                roll.worst = rep.worst;
            }
            roll.pass = roll.pass && rep.ok(roll.tol);
        }
        table.push_back(std::move(roll));
    }

    return table;
}

// Renders the pass table; returns true when every case passed.
inline bool format_gradient_table(const std::vector<GradCase>& table, std::ostream& os) {
    os << std::left << std::setw(26) << "case" << std::right << std::setw(9) << "checked"
       << std::setw(14) << "max rel err" << std::setw(10) << "tol" << "  result\n";
    bool all = !table.empty();
    for (const auto& c : table) {
        std::ostringstream err, tol;
        err << std::scientific << std::setprecision(2) << c.max_err;
        tol << std::scientific << std::setprecision(0) << c.tol;
        os << std::left << std::setw(26) << c.name << std::right << std::setw(9) << c.checked
           << std::setw(14) << err.str() << std::setw(10) << tol.str() << "  "
           << (c.pass ? "PASS" : "FAIL") << "\n";
        if (!c.pass && !c.worst.empty()) os << "    worst: " << c.worst << "\n";
        all = all && c.pass;
    }
    return all;
}

} // namespace tsup
