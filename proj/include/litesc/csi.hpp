// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "litesc/autodiff.hpp"
#include "litesc/channel.hpp"
#include "litesc/checkpoint.hpp"
#include "litesc/linalg.hpp"
#include "litesc/optim.hpp"
#include "litesc/params.hpp"

namespace litesc {

enum class CsiMode { Perfect, Rough, Refined, None };

inline const char* csi_mode_name(CsiMode m) {
    switch (m) {
        case CsiMode::Perfect: return "perfect";
        case CsiMode::Rough: return "rough";
        case CsiMode::Refined: return "refined";
        default: return "none";
    }
}

inline CsiMode csi_mode_from_name(const std::string& s) {
    if (s == "perfect") return CsiMode::Perfect;
    if (s == "rough") return CsiMode::Rough;
    if (s == "refined") return CsiMode::Refined;
    if (s == "none") return CsiMode::None;
    throw std::invalid_argument("unknown csi mode: " + s);
}

struct CsiEstimate {
    CsiMode mode = CsiMode::None;
    CMat h_est;
    double snr_db = 0.0;
};

// H_rough = Y_pilot P⁻¹. With the identity pilots used everywhere here this
// collapses to H + noise, which is the estimate the denoiser is trained on.
inline CMat ls_estimate(const CMat& y_pilot, const CMat& p_pilot) {
    if (p_pilot.rows() != p_pilot.cols())
        throw std::invalid_argument("ls_estimate: pilot matrix must be square");
    if (y_pilot.cols() != p_pilot.rows())
        throw std::invalid_argument("ls_estimate: pilot/observation shapes disagree");
    try {
        return transpose(lu_solve(transpose(p_pilot), transpose(y_pilot)));
    } catch (const std::runtime_error&) {
        throw std::invalid_argument("ls_estimate: singular pilot matrix");
    }
}

struct ChannelStats {
    Fading kind = Fading::Rayleigh;
    double rician_k = 0.0;

    double prior_mean() const {
        return kind == Fading::Rician ? std::sqrt(rician_k / (rician_k + 1.0)) : 0.0;
    }
    // per real dimension
    double prior_var() const {
        switch (kind) {
            case Fading::Awgn: return 0.0;
            case Fading::Rayleigh: return 0.5;
            default: return 0.5 / (rician_k + 1.0);
        }
    }
};

// Per-entry Wiener shrinkage of the rough estimate toward the prior mean, the
// best linear estimate when only the marginal second-order statistics are
// trusted. sigma_n2 is the estimate-noise variance per real dimension.
inline CMat lmmse_estimate(const CMat& h_rough, const ChannelStats& stats, double sigma_n2) {
    if (sigma_n2 < 0.0) throw std::invalid_argument("lmmse_estimate: negative noise variance");
    double v = stats.prior_var();
    if (v <= 0.0) throw std::invalid_argument("lmmse_estimate: prior covariance not positive");
    double a = v / (v + sigma_n2);
    cplx mu(stats.prior_mean(), 0.0);
    CMat out = h_rough;
    for (auto& h : out.data()) h = mu + a * (h - mu);
    return out;
}

// Re parts row-major, then Im parts row-major: one flat real feature vector
// per channel matrix.
inline void flatten_channel(const CMat& h, float* out) {
    size_t m = h.data().size();
    for (size_t i = 0; i < m; ++i) {
        out[i] = float(h.data()[i].real());
        out[m + i] = float(h.data()[i].imag());
    }
}

inline CMat unflatten_channel(const float* in, size_t n) {
    CMat h(n, n);
    size_t m = n * n;
    for (size_t i = 0; i < m; ++i) h.data()[i] = cplx(double(in[i]), double(in[m + i]));
    return h;
}

// Residual MLP over the flattened estimate. The network sees the estimate
// plus its mean-square power (a noise-level hint) and predicts the noise to
// subtract; a zero-initialized last layer makes it start as the identity.
struct DenoiserModel {
    ParamSet<float> ps;
    size_t n = 0;
    double snr_lo = 0.0, snr_hi = 0.0;

    size_t feature_dim() const { return 2 * n * n; }

    void save(const std::string& path) const {
        ParamSet<float> copy = ps;
        auto& meta = copy.add("denoiser.meta",
                              TensorF::from({3}, {float(n), float(snr_lo), float(snr_hi)}), 'o');
        meta.trainable = false;
        save_params(path, copy);
    }

    static DenoiserModel load(const std::string& path) {
        DenoiserModel m;
        m.ps = load_params<float>(path);
        auto& meta = m.ps.at("denoiser.meta");
        m.n = size_t(meta.value[0]);
        m.snr_lo = double(meta.value[1]);
        m.snr_hi = double(meta.value[2]);
        m.ps.remove("denoiser.meta");
        return m;
    }
};

namespace detail {

inline typename Graph<float>::Var denoiser_forward(Graph<float>& g, DenoiserModel& model,
                                                   typename Graph<float>::Var x) {
    auto msq = g.mean_sq_rows(x);
    auto h = g.concat_cols(x, msq);
    auto& ps = model.ps;
    h = g.relu(g.add_bias(g.matmul(h, g.leaf(ps.at("dn.f1.w"))), g.leaf(ps.at("dn.f1.b"))));
    h = g.relu(g.add_bias(g.matmul(h, g.leaf(ps.at("dn.f2.w"))), g.leaf(ps.at("dn.f2.b"))));
    h = g.relu(g.add_bias(g.matmul(h, g.leaf(ps.at("dn.f3.w"))), g.leaf(ps.at("dn.f3.b"))));
    h = g.add_bias(g.matmul(h, g.leaf(ps.at("dn.f4.w"))), g.leaf(ps.at("dn.f4.b")));
    return g.sub(x, h);
}

}  // namespace detail

// Draws (H_rough, H_true) pairs; implementations own the fading law and the
// pilot-noise level.
using PairSource = std::function<std::pair<CMat, CMat>(Rng&)>;

// Identity-pilot LS pairs over spatially correlated Rayleigh fading, pilot
// SNR uniform in [snr_lo, snr_hi] dB.
inline PairSource make_ls_pair_source(size_t n, double rho, double snr_lo, double snr_hi) {
    return [n, rho, snr_lo, snr_hi](Rng& rng) {
        auto ch = sample_correlated_rayleigh(n, rho, rng);
        double snr = rng.uniform(snr_lo, snr_hi);
        double sigma = std::sqrt(noise_var(snr));
        CMat rough = ch.h;
        for (auto& v : rough.data()) v += cplx(sigma * rng.normal(), sigma * rng.normal());
        return std::make_pair(rough, ch.h);
    };
}

struct DenoiserConfig {
    size_t steps = 4000;
    size_t batch = 64;
    double lr = 1e-3;
    double snr_lo = 0.0, snr_hi = 10.0;
    uint64_t seed = 1;
    // anneal each rough input toward the truth with per-sample weight
    // min(1, 1.6u): a third of the batch sees clean anchors, the rest a
    // graded noise level, which keeps the net honest at high SNR.
    bool blend_augment = true;
};

inline DenoiserModel train_denoiser(size_t n, const PairSource& pairs,
                                    const DenoiserConfig& cfg = {}) {
    if (!pairs) throw std::invalid_argument("train_denoiser: empty pair stream");
    if (n == 0) throw std::invalid_argument("train_denoiser: dims must be positive");
    if (cfg.steps * cfg.batch < 1000)
        throw std::invalid_argument("train_denoiser: fewer than 1k training pairs");

    DenoiserModel model;
    model.n = n;
    model.snr_lo = cfg.snr_lo;
    model.snr_hi = cfg.snr_hi;
    size_t d = model.feature_dim();

    Rng rng(cfg.seed);
    auto& ps = model.ps;
    ps.dense("dn.f1", d + 1, 256, 'o', rng);
    ps.dense("dn.f2", 256, 256, 'o', rng);
    ps.dense("dn.f3", 256, 256, 'o', rng);
    ps.dense("dn.f4", 256, d, 'o', rng);
    ps.at("dn.f4.w").value.fill(0.0f);

    Adam<float> opt({float(cfg.lr), 0.9f, 0.999f, 1e-8f});
    TensorF x({cfg.batch, d}), y({cfg.batch, d});
    std::vector<float> rough(d), truth(d);
    for (size_t step = 0; step < cfg.steps; ++step) {
        for (size_t b = 0; b < cfg.batch; ++b) {
            auto [h_rough, h_true] = pairs(rng);
            if (h_rough.rows() != n || h_true.rows() != n)
                throw std::invalid_argument("train_denoiser: pair dims mismatch");
            flatten_channel(h_rough, rough.data());
            flatten_channel(h_true, truth.data());
            double lam = cfg.blend_augment ? std::min(1.0, 1.6 * rng.uniform()) : 1.0;
            for (size_t i = 0; i < d; ++i) {
                y.at(b, i) = truth[i];
                x.at(b, i) = truth[i] + float(lam) * (rough[i] - truth[i]);
            }
        }
        Graph<float> g;
        auto pred = detail::denoiser_forward(g, model, g.constant(x));
        auto loss = g.half_sq_err(pred, y, 1.0f / float(cfg.batch));
        g.backward(loss);
        opt.step(ps);
    }
    return model;
}

inline CMat refine(DenoiserModel& model, const CMat& h_rough) {
    if (h_rough.rows() != model.n || h_rough.cols() != model.n)
        throw std::invalid_argument("refine: input shape differs from training shape");
    size_t d = model.feature_dim();
    TensorF x({1, d});
    flatten_channel(h_rough, x.data());
    Graph<float> g;
    auto out = detail::denoiser_forward(g, model, g.constant(x));
    return unflatten_channel(out->val.data(), model.n);
}

// Batched refinement: one graph instead of one per matrix.
inline std::vector<CMat> refine_batch(DenoiserModel& model, const std::vector<CMat>& rough) {
    size_t d = model.feature_dim();
    TensorF x({rough.size(), d});
    for (size_t i = 0; i < rough.size(); ++i) {
        if (rough[i].rows() != model.n || rough[i].cols() != model.n)
            throw std::invalid_argument("refine: input shape differs from training shape");
        flatten_channel(rough[i], x.data() + i * d);
    }
    Graph<float> g;
    auto out = detail::denoiser_forward(g, model, g.constant(x));
    std::vector<CMat> result(rough.size());
    for (size_t i = 0; i < rough.size(); ++i)
        result[i] = unflatten_channel(out->val.data() + i * d, model.n);
    return result;
}

// Mean squared error per complex entry, the yardstick all three estimators
// are compared with.
inline double mse_per_entry(const CMat& est, const CMat& truth) {
    double s = 0.0;
    for (size_t i = 0; i < est.data().size(); ++i) s += std::norm(est.data()[i] - truth.data()[i]);
    return s / double(est.data().size());
}

}  // namespace litesc
