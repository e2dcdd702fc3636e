// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "litesc/rng.hpp"
#include "litesc/tensor.hpp"

namespace litesc {

// Partition tags: 'a' channel encoder, 'b' semantic encoder, 'x' semantic
// decoder, 'd' channel decoder, 'o' anything else (estimator nets, norms).
template <typename T>
struct Param {
    Tensor<T> value;
    Tensor<T> grad;
    char partition = 'o';
    bool trainable = true;

    // Adam state, lazily sized on first step.
    Tensor<T> m, v;
    // Sparsity mask; empty means dense. 0 entries stay pinned at zero.
    std::vector<uint8_t> mask;

    bool has_grad = false;
};

template <typename T>
class ParamSet {
public:
    Param<T>& add(const std::string& name, Tensor<T> value, char partition) {
        auto [it, fresh] = params_.emplace(name, Param<T>{});
        if (!fresh) throw std::invalid_argument("duplicate parameter: " + name);
        it->second.value = std::move(value);
        it->second.grad = Tensor<T>(it->second.value.shape());
        it->second.partition = partition;
        return it->second;
    }

    Param<T>& dense(const std::string& name, size_t in, size_t out, char part, Rng& rng) {
        Tensor<T> w({in, out});
        T bound = T(std::sqrt(6.0 / double(in + out)));
        for (size_t i = 0; i < w.size(); ++i) w[i] = T(rng.uniform(-bound, bound));
        add(name + ".w", std::move(w), part);
        add(name + ".b", Tensor<T>({out}), part);
        return at(name + ".w");
    }

    Param<T>& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
        return it->second;
    }
    const Param<T>& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    void remove(const std::string& name) { params_.erase(name); }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    size_t count() const { return params_.size(); }

    void zero_grads() {
        for (auto& [name, p] : params_) {
            p.grad.fill(T(0));
            p.has_grad = false;
        }
    }

    void apply_masks() {
        for (auto& [name, p] : params_) {
            if (p.mask.empty()) continue;
            for (size_t i = 0; i < p.value.size(); ++i)
                if (!p.mask[i]) p.value[i] = T(0);
        }
    }

    size_t weight_count(bool weights_only = true) const {
        size_t n = 0;
        for (const auto& [name, p] : params_) {
            if (weights_only && !counts_as_weight(name, p)) continue;
            n += p.value.size();
        }
        return n;
    }

    // Pruning and the size accounting cover weight matrices only; biases and
    // norm gains are a rounding error in count but not in damage.
    static bool counts_as_weight(const std::string& name, const Param<T>& p) {
        return p.trainable && p.value.rank() >= 2 && name.size() >= 2 &&
               name.compare(name.size() - 2, 2, ".w") == 0;
    }

private:
    std::map<std::string, Param<T>> params_;
};

}  // namespace litesc
