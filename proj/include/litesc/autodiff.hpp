// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "litesc/params.hpp"
#include "litesc/tensor.hpp"

namespace litesc {

// Ties-to-even rounding, used by every quantizer so results do not depend on
// the platform's default rint behaviour being left alone.
template <typename T>
inline T round_even(T x) {
    T f = std::floor(x);
    T r = x - f;
    if (r > T(0.5)) return f + T(1);
    if (r < T(0.5)) return f;
    return (std::fmod(f, T(2)) == T(0)) ? f : f + T(1);
}

namespace detail {

// C += A * B, all row-major. The i-k-j order keeps the inner loop streaming.
template <typename T>
void gemm_nn(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    size_t R = a.rows(), K = a.cols(), C = b.cols();
    for (size_t i = 0; i < R; ++i) {
        const T* arow = a.data() + i * K;
        T* crow = c.data() + i * C;
        for (size_t k = 0; k < K; ++k) {
            T av = arow[k];
            if (av == T(0)) continue;
            const T* brow = b.data() + k * C;
            for (size_t j = 0; j < C; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A * B^T
template <typename T>
void gemm_nt(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    size_t R = a.rows(), K = a.cols(), C = b.rows();
    for (size_t i = 0; i < R; ++i) {
        const T* arow = a.data() + i * K;
        T* crow = c.data() + i * C;
        for (size_t j = 0; j < C; ++j) {
            const T* brow = b.data() + j * K;
            T acc = T(0);
            for (size_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

// C += A^T * B
template <typename T>
void gemm_tn(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    size_t K = a.rows(), R = a.cols(), C = b.cols();
    for (size_t k = 0; k < K; ++k) {
        const T* arow = a.data() + k * R;
        const T* brow = b.data() + k * C;
        for (size_t i = 0; i < R; ++i) {
            T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c.data() + i * C;
            for (size_t j = 0; j < C; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

// Reverse-mode tape. Nodes are created in forward order; backward() replays
// the recorded closures in reverse. One Graph instance per training step.
template <typename T>
class Graph {
public:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        std::function<void()> back;
    };
    using Var = std::shared_ptr<Node>;

    Var constant(Tensor<T> v) {
        auto n = std::make_shared<Node>();
        n->val = std::move(v);
        n->grad = Tensor<T>(n->val.shape());
        tape_.push_back(n);
        return n;
    }

    // Leaf bound to a parameter: backward accumulates into the ParamSet grad.
    Var leaf(Param<T>& p) {
        auto n = constant(p.value);
        Param<T>* pp = &p;
        Node* raw = n.get();
        n->back = [pp, raw]() {
            for (size_t i = 0; i < raw->grad.size(); ++i) pp->grad[i] += raw->grad[i];
            pp->has_grad = true;
        };
        return n;
    }

    Var matmul(Var a, Var b) {
        if (a->val.cols() != b->val.rows())
            throw std::invalid_argument("matmul: inner dimensions disagree " +
                                        shape_str(a->val.shape()) + " x " + shape_str(b->val.shape()));
        auto n = make({a->val.rows(), b->val.cols()});
        detail::gemm_nn(a->val, b->val, n->val);
        Node* raw = n.get();
        n->back = [a, b, raw]() {
            detail::gemm_nt(raw->grad, b->val, a->grad);
            detail::gemm_tn(a->val, raw->grad, b->grad);
        };
        return n;
    }

    Var add(Var a, Var b) {
        if (!a->val.same_shape(b->val)) throw std::invalid_argument("add: shape mismatch");
        auto n = make(a->val.shape());
        for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = a->val[i] + b->val[i];
        Node* raw = n.get();
        n->back = [a, b, raw]() {
            for (size_t i = 0; i < raw->grad.size(); ++i) {
                a->grad[i] += raw->grad[i];
                b->grad[i] += raw->grad[i];
            }
        };
        return n;
    }

    Var sub(Var a, Var b) {
        if (!a->val.same_shape(b->val)) throw std::invalid_argument("sub: shape mismatch");
        auto n = make(a->val.shape());
        for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = a->val[i] - b->val[i];
        Node* raw = n.get();
        n->back = [a, b, raw]() {
            for (size_t i = 0; i < raw->grad.size(); ++i) {
                a->grad[i] += raw->grad[i];
                b->grad[i] -= raw->grad[i];
            }
        };
        return n;
    }

    Var mul(Var a, Var b) {
        if (!a->val.same_shape(b->val)) throw std::invalid_argument("mul: shape mismatch");
        auto n = make(a->val.shape());
        for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = a->val[i] * b->val[i];
        Node* raw = n.get();
        n->back = [a, b, raw]() {
            for (size_t i = 0; i < raw->grad.size(); ++i) {
                a->grad[i] += raw->grad[i] * b->val[i];
                b->grad[i] += raw->grad[i] * a->val[i];
            }
        };
        return n;
    }

    // y = k*x + c elementwise with scalar constants.
    Var affine(Var a, T k, T c) {
        auto n = make(a->val.shape());
        for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = k * a->val[i] + c;
        Node* raw = n.get();
        n->back = [a, raw, k]() {
            for (size_t i = 0; i < raw->grad.size(); ++i) a->grad[i] += k * raw->grad[i];
        };
        return n;
    }

    // Rows of a get b added; b is a 1-D bias.
    Var add_bias(Var a, Var b) {
        size_t R = a->val.rows(), C = a->val.cols();
        if (b->val.size() != C) throw std::invalid_argument("add_bias: width mismatch");
        auto n = make(a->val.shape());
        for (size_t i = 0; i < R; ++i)
            for (size_t j = 0; j < C; ++j) n->val[i * C + j] = a->val[i * C + j] + b->val[j];
        Node* raw = n.get();
        n->back = [a, b, raw, R, C]() {
            for (size_t i = 0; i < R; ++i)
                for (size_t j = 0; j < C; ++j) {
                    a->grad[i * C + j] += raw->grad[i * C + j];
                    b->grad[j] += raw->grad[i * C + j];
                }
        };
        return n;
    }

    Var relu(Var a) {
        auto n = make(a->val.shape());
        for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = a->val[i] > T(0) ? a->val[i] : T(0);
        Node* raw = n.get();
        n->back = [a, raw]() {
            for (size_t i = 0; i < raw->grad.size(); ++i)
                if (a->val[i] > T(0)) a->grad[i] += raw->grad[i];
        };
        return n;
    }

    Var sigmoid(Var a) {
        auto n = make(a->val.shape());
        for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = T(1) / (T(1) + std::exp(-a->val[i]));
        Node* raw = n.get();
        n->back = [a, raw]() {
            for (size_t i = 0; i < raw->grad.size(); ++i) {
                T y = raw->val[i];
                a->grad[i] += raw->grad[i] * y * (T(1) - y);
            }
        };
        return n;
    }

    Var row_softmax(Var a) {
        size_t R = a->val.rows(), C = a->val.cols();
        auto n = make(a->val.shape());
        for (size_t i = 0; i < R; ++i) {
            const T* x = a->val.data() + i * C;
            T* y = n->val.data() + i * C;
            T mx = x[0];
            for (size_t j = 1; j < C; ++j) mx = std::max(mx, x[j]);
            T sum = T(0);
            for (size_t j = 0; j < C; ++j) {
                y[j] = std::exp(x[j] - mx);
                sum += y[j];
            }
            for (size_t j = 0; j < C; ++j) y[j] /= sum;
        }
        Node* raw = n.get();
        n->back = [a, raw, R, C]() {
            for (size_t i = 0; i < R; ++i) {
                const T* y = raw->val.data() + i * C;
                const T* g = raw->grad.data() + i * C;
                T dot = T(0);
                for (size_t j = 0; j < C; ++j) dot += y[j] * g[j];
                T* ga = a->grad.data() + i * C;
                for (size_t j = 0; j < C; ++j) ga[j] += y[j] * (g[j] - dot);
            }
        };
        return n;
    }

    Var layer_norm(Var a, Var gain, Var bias, T eps = T(1e-5)) {
        size_t R = a->val.rows(), C = a->val.cols();
        if (gain->val.size() != C || bias->val.size() != C)
            throw std::invalid_argument("layer_norm: gain/bias width mismatch");
        auto n = make(a->val.shape());
        auto inv_std = std::make_shared<std::vector<T>>(R);
        auto xhat = std::make_shared<std::vector<T>>(R * C);
        for (size_t i = 0; i < R; ++i) {
            const T* x = a->val.data() + i * C;
            T mean = T(0);
            for (size_t j = 0; j < C; ++j) mean += x[j];
            mean /= T(C);
            T var = T(0);
            for (size_t j = 0; j < C; ++j) var += (x[j] - mean) * (x[j] - mean);
            var /= T(C);
            T is = T(1) / std::sqrt(var + eps);
            (*inv_std)[i] = is;
            for (size_t j = 0; j < C; ++j) {
                T h = (x[j] - mean) * is;
                (*xhat)[i * C + j] = h;
                n->val[i * C + j] = gain->val[j] * h + bias->val[j];
            }
        }
        Node* raw = n.get();
        n->back = [a, gain, bias, raw, inv_std, xhat, R, C]() {
            for (size_t i = 0; i < R; ++i) {
                const T* g = raw->grad.data() + i * C;
                const T* h = xhat->data() + i * C;
                T sum_g = T(0), sum_gh = T(0);
                for (size_t j = 0; j < C; ++j) {
                    T gj = g[j] * gain->val[j];
                    sum_g += gj;
                    sum_gh += gj * h[j];
                    gain->grad[j] += g[j] * h[j];
                    bias->grad[j] += g[j];
                }
                T is = (*inv_std)[i];
                T* ga = a->grad.data() + i * C;
                for (size_t j = 0; j < C; ++j) {
                    T gj = g[j] * gain->val[j];
                    ga[j] += is * (gj - sum_g / T(C) - h[j] * sum_gh / T(C));
                }
            }
        };
        return n;
    }

    // Row gather; backward scatter-adds into the table.
    Var embedding(Var table, const std::vector<int>& ids) {
        size_t C = table->val.cols();
        auto n = make({ids.size(), C});
        for (size_t i = 0; i < ids.size(); ++i) {
            size_t r = size_t(ids[i]);
            if (r >= table->val.rows()) throw std::out_of_range("embedding: id outside table");
            for (size_t j = 0; j < C; ++j) n->val[i * C + j] = table->val[r * C + j];
        }
        Node* raw = n.get();
        n->back = [table, raw, ids, C]() {
            for (size_t i = 0; i < ids.size(); ++i) {
                size_t r = size_t(ids[i]);
                for (size_t j = 0; j < C; ++j) table->grad[r * C + j] += raw->grad[i * C + j];
            }
        };
        return n;
    }

    // Forward rounds to the nearest integer (ties to even); backward passes
    // the upstream gradient through untouched.
    Var ste_round(Var a) {
        auto n = make(a->val.shape());
        for (size_t i = 0; i < n->val.size(); ++i) n->val[i] = round_even(a->val[i]);
        Node* raw = n.get();
        n->back = [a, raw]() {
            for (size_t i = 0; i < raw->grad.size(); ++i) a->grad[i] += raw->grad[i];
        };
        return n;
    }

    // Saturating clamp; gradient flows only where the input was in range.
    Var clamp(Var a, T lo, T hi) {
        auto n = make(a->val.shape());
        for (size_t i = 0; i < n->val.size(); ++i)
            n->val[i] = std::min(std::max(a->val[i], lo), hi);
        Node* raw = n.get();
        n->back = [a, raw, lo, hi]() {
            for (size_t i = 0; i < raw->grad.size(); ++i)
                if (a->val[i] >= lo && a->val[i] <= hi) a->grad[i] += raw->grad[i];
        };
        return n;
    }

    Var concat_cols(Var a, Var b) {
        size_t R = a->val.rows(), Ca = a->val.cols(), Cb = b->val.cols();
        if (b->val.rows() != R) throw std::invalid_argument("concat_cols: row mismatch");
        auto n = make({R, Ca + Cb});
        for (size_t i = 0; i < R; ++i) {
            for (size_t j = 0; j < Ca; ++j) n->val[i * (Ca + Cb) + j] = a->val[i * Ca + j];
            for (size_t j = 0; j < Cb; ++j) n->val[i * (Ca + Cb) + Ca + j] = b->val[i * Cb + j];
        }
        Node* raw = n.get();
        n->back = [a, b, raw, R, Ca, Cb]() {
            for (size_t i = 0; i < R; ++i) {
                for (size_t j = 0; j < Ca; ++j) a->grad[i * Ca + j] += raw->grad[i * (Ca + Cb) + j];
                for (size_t j = 0; j < Cb; ++j) b->grad[i * Cb + j] += raw->grad[i * (Ca + Cb) + Ca + j];
            }
        };
        return n;
    }

    // Per-row mean of squares, emitted as an R x 1 column.
    Var mean_sq_rows(Var a) {
        size_t R = a->val.rows(), C = a->val.cols();
        auto n = make({R, size_t(1)});
        for (size_t i = 0; i < R; ++i) {
            T s = T(0);
            for (size_t j = 0; j < C; ++j) s += a->val[i * C + j] * a->val[i * C + j];
            n->val[i] = s / T(C);
        }
        Node* raw = n.get();
        n->back = [a, raw, R, C]() {
            for (size_t i = 0; i < R; ++i) {
                T g = raw->grad[i] * T(2) / T(C);
                for (size_t j = 0; j < C; ++j) a->grad[i * C + j] += g * a->val[i * C + j];
            }
        };
        return n;
    }

    Var sum_all(Var a) {
        auto n = make({size_t(1)});
        T s = T(0);
        for (size_t i = 0; i < a->val.size(); ++i) s += a->val[i];
        n->val[0] = s;
        Node* raw = n.get();
        n->back = [a, raw]() {
            for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += raw->grad[0];
        };
        return n;
    }

    // 0.5 * sum((a - target)^2) * scale, as a scalar.
    Var half_sq_err(Var a, const Tensor<T>& target, T scale) {
        if (!a->val.same_shape(target)) throw std::invalid_argument("half_sq_err: shape mismatch");
        auto n = make({size_t(1)});
        T s = T(0);
        for (size_t i = 0; i < a->val.size(); ++i) {
            T d = a->val[i] - target[i];
            s += d * d;
        }
        n->val[0] = T(0.5) * s * scale;
        Node* raw = n.get();
        auto tgt = std::make_shared<Tensor<T>>(target);
        n->back = [a, raw, tgt, scale]() {
            T g = raw->grad[0] * scale;
            for (size_t i = 0; i < a->val.size(); ++i)
                a->grad[i] += g * (a->val[i] - (*tgt)[i]);
        };
        return n;
    }

    // Two-term token loss over probability rows: for each unmasked row with
    // one-hot target t,  -log p_t - sum_{i != t} log(1 - p_i),  averaged over
    // unmasked rows. The second term charges every wrongly raised
    // alternative, not just the realized token. Probabilities are clamped
    // away from 0 and 1 by eps inside the logs; that leg of the gradient is
    // dropped where the clamp is active.
    Var token_loss(Var pred, const std::vector<int>& targets,
                   const std::vector<uint8_t>& mask, double eps = 1e-12) {
        size_t R = pred->val.rows(), C = pred->val.cols();
        if (targets.size() != R || mask.size() != R)
            throw std::invalid_argument("token_loss: target/mask length mismatch");
        size_t m = 0;
        for (uint8_t u : mask) m += u;
        if (m == 0) throw std::invalid_argument("token_loss: all rows masked out");
        auto n = make({size_t(1)});
        double total = 0.0;
        for (size_t i = 0; i < R; ++i) {
            if (!mask[i]) continue;
            size_t t = size_t(targets[i]);
            if (t >= C) throw std::out_of_range("token_loss: target outside vocabulary");
            const T* p = pred->val.data() + i * C;
            for (size_t j = 0; j < C; ++j) {
                double pj = std::min(std::max(double(p[j]), eps), 1.0 - eps);
                if (j == t)
                    total -= std::log(pj);
                else
                    total -= std::log(1.0 - pj);
            }
        }
        n->val[0] = T(total / double(m));
        Node* raw = n.get();
        auto tgts = std::make_shared<std::vector<int>>(targets);
        auto msk = std::make_shared<std::vector<uint8_t>>(mask);
        n->back = [pred, raw, tgts, msk, m, R, C, eps]() {
            double g = double(raw->grad[0]) / double(m);
            for (size_t i = 0; i < R; ++i) {
                if (!(*msk)[i]) continue;
                size_t t = size_t((*tgts)[i]);
                const T* p = pred->val.data() + i * C;
                T* gp = pred->grad.data() + i * C;
                for (size_t j = 0; j < C; ++j) {
                    double pj = double(p[j]);
                    if (j == t) {
                        if (pj > eps) gp[j] += T(g * (-1.0 / pj));
                    } else {
                        if (pj < 1.0 - eps) gp[j] += T(g * (1.0 / (1.0 - pj)));
                    }
                }
            }
        };
        return n;
    }

    // Per-sentence power normalization: each block of L rows is scaled so its
    // mean square over unmasked entries is 1; masked rows are zeroed.
    Var power_norm(Var a, size_t batch, size_t len, const std::vector<uint8_t>& mask) {
        size_t C = a->val.cols();
        if (a->val.rows() != batch * len) throw std::invalid_argument("power_norm: row count mismatch");
        auto n = make(a->val.shape());
        auto scales = std::make_shared<std::vector<T>>(batch);
        auto dims = std::make_shared<std::vector<T>>(batch);
        for (size_t b = 0; b < batch; ++b) {
            T ss = T(0), d = T(0);
            for (size_t l = 0; l < len; ++l) {
                if (!mask[b * len + l]) continue;
                const T* x = a->val.data() + (b * len + l) * C;
                for (size_t j = 0; j < C; ++j) ss += x[j] * x[j];
                d += T(C);
            }
            T s = (ss > T(0)) ? std::sqrt(d / ss) : T(0);
            (*scales)[b] = s;
            (*dims)[b] = d;
            for (size_t l = 0; l < len; ++l) {
                T* y = n->val.data() + (b * len + l) * C;
                const T* x = a->val.data() + (b * len + l) * C;
                T k = mask[b * len + l] ? s : T(0);
                for (size_t j = 0; j < C; ++j) y[j] = k * x[j];
            }
        }
        Node* raw = n.get();
        auto msk = std::make_shared<std::vector<uint8_t>>(mask);
        n->back = [a, raw, scales, dims, msk, batch, len, C]() {
            for (size_t b = 0; b < batch; ++b) {
                T s = (*scales)[b], d = (*dims)[b];
                if (s == T(0)) continue;
                T dot = T(0);
                for (size_t l = 0; l < len; ++l) {
                    if (!(*msk)[b * len + l]) continue;
                    const T* g = raw->grad.data() + (b * len + l) * C;
                    const T* x = a->val.data() + (b * len + l) * C;
                    for (size_t j = 0; j < C; ++j) dot += g[j] * x[j];
                }
                T k2 = dot * s * s * s / d;
                for (size_t l = 0; l < len; ++l) {
                    if (!(*msk)[b * len + l]) continue;
                    const T* g = raw->grad.data() + (b * len + l) * C;
                    const T* x = a->val.data() + (b * len + l) * C;
                    T* ga = a->grad.data() + (b * len + l) * C;
                    for (size_t j = 0; j < C; ++j) ga[j] += s * g[j] - k2 * x[j];
                }
            }
        };
        return n;
    }

    // One fixed linear map per sentence, applied at every position: row r in
    // block b becomes M_b x_r. The maps enter as constants (a channel is not
    // trainable), so backward only routes gradients through x.
    Var rowwise_linear(Var x, const Tensor<T>& mats, size_t batch, size_t len) {
        size_t d = x->val.cols();
        if (x->val.rows() != batch * len)
            throw std::invalid_argument("rowwise_linear: row count mismatch");
        if (mats.rank() != 2 || mats.rows() != batch || mats.cols() != d * d)
            throw std::invalid_argument("rowwise_linear: expected one d*d map per sentence");
        auto n = make(x->val.shape());
        auto m = std::make_shared<Tensor<T>>(mats);
        for (size_t b = 0; b < batch; ++b) {
            const T* M = m->data() + b * d * d;
            for (size_t l = 0; l < len; ++l) {
                const T* in = x->val.data() + (b * len + l) * d;
                T* out = n->val.data() + (b * len + l) * d;
                for (size_t j = 0; j < d; ++j) {
                    T s = T(0);
                    const T* row = M + j * d;
                    for (size_t i = 0; i < d; ++i) s += row[i] * in[i];
                    out[j] = s;
                }
            }
        }
        Node* raw = n.get();
        n->back = [x, raw, m, batch, len, d]() {
            for (size_t b = 0; b < batch; ++b) {
                const T* M = m->data() + b * d * d;
                for (size_t l = 0; l < len; ++l) {
                    const T* g = raw->grad.data() + (b * len + l) * d;
                    T* gx = x->grad.data() + (b * len + l) * d;
                    for (size_t j = 0; j < d; ++j) {
                        const T* row = M + j * d;
                        T gj = g[j];
                        if (gj == T(0)) continue;
                        for (size_t i = 0; i < d; ++i) gx[i] += row[i] * gj;
                    }
                }
            }
        };
        return n;
    }

    // Scaled dot-product attention over a padded batch, all heads in one op.
    // x is (batch*len) x d; the mask marks valid tokens. Padding rows are
    // blocked from acting as keys; their own outputs are dropped by the loss.
    Var multi_head_attention(Var x, Var wq, Var bq, Var wk, Var bk, Var wv, Var bv,
                             Var wo, Var bo, size_t batch, size_t len, size_t heads,
                             const std::vector<uint8_t>& mask) {
        size_t d = x->val.cols();
        if (d % heads != 0) throw std::invalid_argument("attention: heads must divide width");
        size_t dh = d / heads;
        T inv_sqrt = T(1) / std::sqrt(T(dh));

        auto q = add_bias(matmul(x, wq), bq);
        auto k = add_bias(matmul(x, wk), bk);
        auto v = add_bias(matmul(x, wv), bv);

        auto ctx = make({batch * len, d});
        auto attn = std::make_shared<std::vector<T>>(batch * heads * len * len);
        for (size_t b = 0; b < batch; ++b) {
            size_t base = b * len;
            for (size_t h = 0; h < heads; ++h) {
                T* A = attn->data() + (b * heads + h) * len * len;
                for (size_t i = 0; i < len; ++i) {
                    const T* qi = q->val.data() + (base + i) * d + h * dh;
                    T* arow = A + i * len;
                    T mx = -std::numeric_limits<T>::infinity();
                    for (size_t j = 0; j < len; ++j) {
                        if (!mask[base + j]) {
                            arow[j] = -std::numeric_limits<T>::infinity();
                            continue;
                        }
                        const T* kj = k->val.data() + (base + j) * d + h * dh;
                        T s = T(0);
                        for (size_t e = 0; e < dh; ++e) s += qi[e] * kj[e];
                        arow[j] = s * inv_sqrt;
                        mx = std::max(mx, arow[j]);
                    }
                    T sum = T(0);
                    for (size_t j = 0; j < len; ++j) {
                        arow[j] = mask[base + j] ? std::exp(arow[j] - mx) : T(0);
                        sum += arow[j];
                    }
                    for (size_t j = 0; j < len; ++j) arow[j] /= sum;
                    T* ci = ctx->val.data() + (base + i) * d + h * dh;
                    for (size_t j = 0; j < len; ++j) {
                        if (arow[j] == T(0)) continue;
                        const T* vj = v->val.data() + (base + j) * d + h * dh;
                        for (size_t e = 0; e < dh; ++e) ci[e] += arow[j] * vj[e];
                    }
                }
            }
        }
        Node* craw = ctx.get();
        auto msk = std::make_shared<std::vector<uint8_t>>(mask);
        ctx->back = [q, k, v, craw, attn, msk, batch, len, heads, dh, d, inv_sqrt]() {
            std::vector<T> gA(len * len);
            for (size_t b = 0; b < batch; ++b) {
                size_t base = b * len;
                for (size_t h = 0; h < heads; ++h) {
                    const T* A = attn->data() + (b * heads + h) * len * len;
                    // d ctx -> d attn and d v
                    for (size_t i = 0; i < len; ++i) {
                        const T* gc = craw->grad.data() + (base + i) * d + h * dh;
                        T* garow = gA.data() + i * len;
                        for (size_t j = 0; j < len; ++j) {
                            garow[j] = T(0);
                            if (A[i * len + j] == T(0)) continue;
                            const T* vj = v->val.data() + (base + j) * d + h * dh;
                            T acc = T(0);
                            for (size_t e = 0; e < dh; ++e) acc += gc[e] * vj[e];
                            garow[j] = acc;
                            T* gv = v->grad.data() + (base + j) * d + h * dh;
                            T aij = A[i * len + j];
                            for (size_t e = 0; e < dh; ++e) gv[e] += aij * gc[e];
                        }
                    }
                    // softmax backward, then into q and k
                    for (size_t i = 0; i < len; ++i) {
                        const T* arow = A + i * len;
                        T* garow = gA.data() + i * len;
                        T dot = T(0);
                        for (size_t j = 0; j < len; ++j) dot += arow[j] * garow[j];
                        const T* qi = q->val.data() + (base + i) * d + h * dh;
                        T* gqi = q->grad.data() + (base + i) * d + h * dh;
                        for (size_t j = 0; j < len; ++j) {
                            if (!(*msk)[base + j]) continue;
                            T gs = arow[j] * (garow[j] - dot) * inv_sqrt;
                            if (gs == T(0)) continue;
                            const T* kj = k->val.data() + (base + j) * d + h * dh;
                            T* gkj = k->grad.data() + (base + j) * d + h * dh;
                            for (size_t e = 0; e < dh; ++e) {
                                gqi[e] += gs * kj[e];
                                gkj[e] += gs * qi[e];
                            }
                        }
                    }
                }
            }
        };
        return add_bias(matmul(ctx, wo), bo);
    }

    // Seeds d(loss)/d(loss) = 1 and replays the tape backwards.
    void backward(Var loss) {
        if (loss->val.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
        if (tape_.empty()) throw std::logic_error("backward: nothing recorded");
        loss->grad[0] = T(1);
        for (size_t i = tape_.size(); i > 0; --i) {
            auto& n = tape_[i - 1];
            if (n->back) n->back();
        }
    }

    void clear() { tape_.clear(); }
    size_t recorded() const { return tape_.size(); }

private:
    Var make(std::vector<size_t> shape) {
        auto n = std::make_shared<Node>();
        n->val = Tensor<T>(std::move(shape));
        n->grad = Tensor<T>(n->val.shape());
        tape_.push_back(n);
        return n;
    }

    std::vector<Var> tape_;
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace litesc
