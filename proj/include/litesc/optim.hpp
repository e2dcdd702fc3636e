// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>

#include "litesc/params.hpp"

namespace litesc {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Entries pinned by a sparsity mask are skipped
// entirely so pruned weights stay exactly zero through any amount of
// fine-tuning.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamSet<T>& params) { step(params, cfg_.lr); }

    void step(ParamSet<T>& params, double lr) {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (auto& [name, p] : params) {
            if (!p.trainable) continue;
            if (!p.has_grad)
                throw std::logic_error("adam: no gradient recorded for " + name);
            if (p.m.size() != p.value.size()) {
                p.m = Tensor<T>(p.value.shape());
                p.v = Tensor<T>(p.value.shape());
            }
            const bool masked = !p.mask.empty();
            for (size_t i = 0; i < p.value.size(); ++i) {
                if (masked && !p.mask[i]) {
                    p.value[i] = T(0);
                    continue;
                }
                double g = double(p.grad[i]);
                double m = cfg_.beta1 * double(p.m[i]) + (1.0 - cfg_.beta1) * g;
                double v = cfg_.beta2 * double(p.v[i]) + (1.0 - cfg_.beta2) * g * g;
                p.m[i] = T(m);
                p.v[i] = T(v);
                p.value[i] -= T(lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps));
            }
        }
        params.zero_grads();
    }

    void reset() { t_ = 0; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    uint64_t t_ = 0;
};

}  // namespace litesc
