// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "litesc/autodiff.hpp"
#include "litesc/params.hpp"

namespace litesc::testing {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b));
}

// Central finite differences of a scalar-valued rebuild function against the
// analytic gradient stored in the ParamSet after one backward pass.
// `build` must construct the graph from the current parameter values and
// return the scalar loss value.
//
// The per-entry error is |analytic - fd| / (floor + |analytic| + |fd|) with a
// floor tied to the largest gradient seen, so truncation noise on near-zero
// entries is not amplified into false alarms while genuinely wrong entries
// of consequential size still register.
inline double max_grad_err(ParamSet<double>& ps, const std::function<double()>& build,
                           double h = 1e-6) {
    std::map<std::string, std::vector<double>> snapshot;
    double scale = 0.0;
    for (auto& [name, p] : ps) {
        auto& g = snapshot[name];
        g.reserve(p.grad.size());
        for (size_t i = 0; i < p.grad.size(); ++i) {
            g.push_back(p.grad[i]);
            scale = std::max(scale, std::abs(p.grad[i]));
        }
    }
    double floor = 1e-3 * (1.0 + scale);
    double worst = 0.0;
    for (auto& [name, p] : ps) {
        if (!p.trainable) continue;
        const auto& g = snapshot[name];
        for (size_t i = 0; i < p.value.size(); ++i) {
            double analytic = g[i];
            double orig = p.value[i];
            p.value[i] = orig + h;
            double fp = build();
            p.value[i] = orig - h;
            double fm = build();
            p.value[i] = orig;
            double fd = (fp - fm) / (2.0 * h);
            double err = std::abs(analytic - fd) / (floor + std::abs(analytic) + std::abs(fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace litesc::testing
