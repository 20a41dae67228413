// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>

namespace tsup {

struct FdReport {
    double max_err = 0;   // |analytic - fd| / max(1, |fd|), worst coordinate
    int checked = 0;
    std::string worst;

    bool ok(double tol) const { return checked > 0 && max_err <= tol; }
};

// Central finite differences against an analytic gradient. `eval` recomputes
// the scalar objective from the current contents of `x`; entries of `x` are
// perturbed in place and restored. With max_coords >= 0 a seeded random
// subset of coordinates is checked.
template <typename F>
FdReport fd_check(std::span<double> x, std::span<const double> analytic, F&& eval,
                  double h, int max_coords = -1, std::uint32_t seed = 0,
                  const std::string& label = {}) {
    FdReport rep;
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    if (max_coords >= 0 && std::size_t(max_coords) < idx.size()) {
        std::mt19937 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(max_coords);
    }
    for (std::size_t i : idx) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = eval();
        x[i] = keep - h;
        const double down = eval();
        x[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
        ++rep.checked;
        if (err > rep.max_err) {
            rep.max_err = err;
            rep.worst = label + "[" + std::to_string(i) + "] analytic=" +
                        std::to_string(analytic[i]) + " fd=" + std::to_string(fd);
        }
    }
    return rep;
}

} // namespace tsup
