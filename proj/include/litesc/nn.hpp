// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "litesc/autodiff.hpp"
#include "litesc/params.hpp"
#include "litesc/rng.hpp"

namespace litesc {

enum class LayerKind {
    Embedding,
    Dense,
    Relu,
    Sigmoid,
    Softmax,
    LayerNorm,
    MultiHeadAttention,
    TransformerBlock,
    Prediction,
};

struct LayerSpec {
    LayerKind kind;
    size_t units = 0;
    size_t heads = 1;
};

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Embedding: return "embedding";
        case LayerKind::Dense: return "dense";
        case LayerKind::Relu: return "relu";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::Softmax: return "softmax";
        case LayerKind::LayerNorm: return "layer_norm";
        case LayerKind::MultiHeadAttention: return "multi_head_attention";
        case LayerKind::TransformerBlock: return "transformer_block";
        case LayerKind::Prediction: return "prediction";
    }
    return "?";
}

// Composite helpers shared by the stack runner and the transceiver graphs.

template <typename T>
typename Graph<T>::Var dense(Graph<T>& g, typename Graph<T>::Var x, ParamSet<T>& ps,
                             const std::string& name) {
    return g.add_bias(g.matmul(x, g.leaf(ps.at(name + ".w"))), g.leaf(ps.at(name + ".b")));
}

template <typename T>
typename Graph<T>::Var layer_norm(Graph<T>& g, typename Graph<T>::Var x, ParamSet<T>& ps,
                                  const std::string& name) {
    return g.layer_norm(x, g.leaf(ps.at(name + ".g")), g.leaf(ps.at(name + ".bias")));
}

template <typename T>
void add_layer_norm_params(ParamSet<T>& ps, const std::string& name, size_t width, char part) {
    Tensor<T> gain({width});
    gain.fill(T(1));
    ps.add(name + ".g", std::move(gain), part);
    ps.add(name + ".bias", Tensor<T>({width}), part);
}

template <typename T>
void add_attention_params(ParamSet<T>& ps, const std::string& name, size_t d, char part, Rng& rng) {
    ps.dense(name + ".q", d, d, part, rng);
    ps.dense(name + ".k", d, d, part, rng);
    ps.dense(name + ".v", d, d, part, rng);
    ps.dense(name + ".o", d, d, part, rng);
}

template <typename T>
typename Graph<T>::Var attention(Graph<T>& g, typename Graph<T>::Var x, ParamSet<T>& ps,
                                 const std::string& name, size_t batch, size_t len, size_t heads,
                                 const std::vector<uint8_t>& mask) {
    return g.multi_head_attention(x, g.leaf(ps.at(name + ".q.w")), g.leaf(ps.at(name + ".q.b")),
                                  g.leaf(ps.at(name + ".k.w")), g.leaf(ps.at(name + ".k.b")),
                                  g.leaf(ps.at(name + ".v.w")), g.leaf(ps.at(name + ".v.b")),
                                  g.leaf(ps.at(name + ".o.w")), g.leaf(ps.at(name + ".o.b")),
                                  batch, len, heads, mask);
}

template <typename T>
void add_transformer_block_params(ParamSet<T>& ps, const std::string& name, size_t d, char part,
                                  Rng& rng) {
    add_attention_params(ps, name + ".att", d, part, rng);
    add_layer_norm_params(ps, name + ".ln1", d, part);
    ps.dense(name + ".ff1", d, 4 * d, part, rng);
    ps.dense(name + ".ff2", 4 * d, d, part, rng);
    add_layer_norm_params(ps, name + ".ln2", d, part);
}

// Post-norm residual block: LN(x + attention), then LN(x + feed-forward).
template <typename T>
typename Graph<T>::Var transformer_block(Graph<T>& g, typename Graph<T>::Var x, ParamSet<T>& ps,
                                         const std::string& name, size_t batch, size_t len,
                                         size_t heads, const std::vector<uint8_t>& mask) {
    auto att = attention(g, x, ps, name + ".att", batch, len, heads, mask);
    auto h = layer_norm(g, g.add(x, att), ps, name + ".ln1");
    auto ff = dense(g, g.relu(dense(g, h, ps, name + ".ff1")), ps, name + ".ff2");
    return layer_norm(g, g.add(h, ff), ps, name + ".ln2");
}

// Spec-driven stack evaluation: treats the input rows as one sequence.
// Parameters are looked up as "L<i>.<role>" in declaration order.
template <typename T>
typename Graph<T>::Var forward_stack(Graph<T>& g, ParamSet<T>& ps,
                                     const std::vector<LayerSpec>& spec,
                                     typename Graph<T>::Var x,
                                     const std::vector<int>* token_ids = nullptr) {
    size_t len = x->val.rows();
    std::vector<uint8_t> mask(len, 1);
    for (size_t i = 0; i < spec.size(); ++i) {
        const LayerSpec& l = spec[i];
        std::string name = "L" + std::to_string(i);
        try {
            switch (l.kind) {
                case LayerKind::Embedding: {
                    std::vector<int> ids;
                    if (token_ids) {
                        ids = *token_ids;
                    } else {
                        ids.reserve(x->val.size());
                        for (size_t j = 0; j < x->val.size(); ++j) ids.push_back(int(x->val[j]));
                    }
                    x = g.embedding(g.leaf(ps.at(name + ".w")), ids);
                    len = ids.size();
                    mask.assign(len, 1);
                    break;
                }
                case LayerKind::Dense:
                    x = dense(g, x, ps, name);
                    break;
                case LayerKind::Relu:
                    x = g.relu(x);
                    break;
                case LayerKind::Sigmoid:
                    x = g.sigmoid(x);
                    break;
                case LayerKind::Softmax:
                    x = g.row_softmax(x);
                    break;
                case LayerKind::LayerNorm:
                    x = layer_norm(g, x, ps, name);
                    break;
                case LayerKind::MultiHeadAttention:
                    x = attention(g, x, ps, name, 1, len, l.heads, mask);
                    break;
                case LayerKind::TransformerBlock:
                    x = transformer_block(g, x, ps, name, 1, len, l.heads, mask);
                    break;
                case LayerKind::Prediction:
                    x = g.row_softmax(dense(g, x, ps, name));
                    break;
            }
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("layer " + std::to_string(i) + " (" +
                                        layer_kind_name(l.kind) + "): " + e.what());
        }
    }
    return x;
}

// Registers the parameters a stack needs, given the input width.
template <typename T>
void add_stack_params(ParamSet<T>& ps, const std::vector<LayerSpec>& spec, size_t in_width,
                      char part, Rng& rng, size_t vocab = 0) {
    size_t w = in_width;
    for (size_t i = 0; i < spec.size(); ++i) {
        const LayerSpec& l = spec[i];
        std::string name = "L" + std::to_string(i);
        switch (l.kind) {
            case LayerKind::Embedding: {
                Tensor<T> table({vocab, l.units});
                T bound = T(std::sqrt(6.0 / double(vocab + l.units)));
                for (size_t j = 0; j < table.size(); ++j) table[j] = T(rng.uniform(-bound, bound));
                ps.add(name + ".w", std::move(table), part);
                w = l.units;
                break;
            }
            case LayerKind::Dense:
            case LayerKind::Prediction:
                ps.dense(name, w, l.units, part, rng);
                w = l.units;
                break;
            case LayerKind::LayerNorm:
                add_layer_norm_params(ps, name, w, part);
                break;
            case LayerKind::MultiHeadAttention:
                add_attention_params(ps, name, w, part, rng);
                break;
            case LayerKind::TransformerBlock:
                add_transformer_block_params(ps, name, w, part, rng);
                break;
            default:
                break;
        }
    }
}

// Sinusoidal position code, added to embeddings before the encoder stack.
template <typename T>
inline void add_position_code(Tensor<T>& x, size_t offset = 0) {
    size_t L = x.rows(), d = x.cols();
    for (size_t p = 0; p < L; ++p)
        for (size_t j = 0; j < d; j += 2) {
            double angle = double(p + offset) / std::pow(10000.0, double(j) / double(d));
            x.at(p, j) += T(std::sin(angle));
            if (j + 1 < d) x.at(p, j + 1) += T(std::cos(angle));
        }
}

}  // namespace litesc
