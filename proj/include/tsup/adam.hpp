// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tsup/raster.hpp"

namespace tsup {

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
};

// First/second moment accumulators per parameter, plus the step counter.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    AdamConfig& config() { return cfg_; }
    const AdamConfig& config() const { return cfg_; }
    std::int64_t step() const { return step_; }
    void set_step(std::int64_t s) { step_ = s; }

    std::size_t slot_count() const { return slots_.size(); }
    Raster& first_moment(std::size_t i) { return slots_[i].m; }
    Raster& second_moment(std::size_t i) { return slots_[i].v; }

    // Pre-creates zeroed moment slots so a checkpoint restore can fill them
    // before the first step.
    void init_slots(const std::vector<const Raster*>& params) {
        if (!slots_.empty()) throw UsageError("adam: slots already initialized");
        slots_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            slots_[i].m = Raster(params[i]->channels(), params[i]->height(), params[i]->width());
            slots_[i].v = Raster(params[i]->channels(), params[i]->height(), params[i]->width());
        }
    }

    // Parameters are identified by position; the caller must pass them in
    // the same order every step.
    void step_params(const std::vector<Raster*>& params, const std::vector<const Raster*>& grads) {
        if (params.size() != grads.size())
            throw ConfigError("adam: parameter/gradient count mismatch");
        if (slots_.empty()) {
            slots_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                slots_[i].m = Raster(params[i]->channels(), params[i]->height(), params[i]->width());
                slots_[i].v = Raster(params[i]->channels(), params[i]->height(), params[i]->width());
            }
        }
        if (slots_.size() != params.size())
            throw ConfigError("adam: parameter count changed between steps");
        ++step_;
        const double b1 = cfg_.beta1, b2 = cfg_.beta2;
        const double corr1 = 1.0 - std::pow(b1, double(step_));
        const double corr2 = 1.0 - std::pow(b2, double(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Raster& p = *params[i];
            const Raster& g = *grads[i];
            if (!p.same_shape(g) || !p.same_shape(slots_[i].m))
                throw ConfigError("adam: shape mismatch at parameter " + std::to_string(i));
            Raster& m = slots_[i].m;
            Raster& v = slots_[i].v;
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double gj = g[j];
                const double mj = b1 * m[j] + (1.0 - b1) * gj;
                const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
                m[j] = float(mj);
                v[j] = float(vj);
                const double mhat = mj / corr1;
                const double vhat = vj / corr2;
                p[j] = float(p[j] - double(cfg_.lr) * mhat / (std::sqrt(vhat) + double(cfg_.epsilon)));
            }
        }
    }

private:
    struct Slot {
        Raster m, v;
    };
    AdamConfig cfg_;
    std::int64_t step_ = 0;
    std::vector<Slot> slots_;
};

} // namespace tsup
