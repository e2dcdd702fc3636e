// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "litesc/autodiff.hpp"
#include "litesc/linalg.hpp"
#include "litesc/rng.hpp"
#include "litesc/tensor.hpp"

namespace litesc {

enum class Fading { Awgn, Rayleigh, Rician };

inline const char* fading_name(Fading f) {
    switch (f) {
        case Fading::Awgn: return "awgn";
        case Fading::Rayleigh: return "rayleigh";
        default: return "rician";
    }
}

inline Fading fading_from_name(const std::string& s) {
    if (s == "awgn") return Fading::Awgn;
    if (s == "rayleigh") return Fading::Rayleigh;
    if (s == "rician") return Fading::Rician;
    throw std::invalid_argument("unknown fading kind: " + s);
}

// Noise variance per real dimension for a given SNR, with unit per-dimension
// signal power assumed on the transmit side.
inline double noise_var(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

struct ChannelRealization {
    CMat h;
    Fading kind = Fading::Awgn;
    double sigma_n2 = 0.0;

    std::vector<double> real_expanded() const { return to_real_expansion(h); }
};

inline cplx draw_cn(Rng& rng) {
    // CN(0,1): each real dimension carries half the unit power
    const double s = std::sqrt(0.5);
    return cplx(s * rng.normal(), s * rng.normal());
}

inline ChannelRealization sample_channel(Fading kind, size_t n, double rician_k, Rng& rng) {
    if (n == 0) throw std::invalid_argument("sample_channel: dims must be positive");
    if (kind == Fading::Rician && rician_k < 0.0)
        throw std::invalid_argument("sample_channel: rician k must be nonnegative");
    ChannelRealization ch;
    ch.kind = kind;
    ch.h = CMat(n, n);
    switch (kind) {
        case Fading::Awgn:
            ch.h = CMat::identity(n);
            break;
        case Fading::Rayleigh:
            for (auto& v : ch.h.data()) v = draw_cn(rng);
            break;
        case Fading::Rician: {
            double mu = std::sqrt(rician_k / (rician_k + 1.0));
            double sigma = std::sqrt(1.0 / (rician_k + 1.0));
            for (auto& v : ch.h.data()) v = mu + sigma * draw_cn(rng);
            break;
        }
    }
    return ch;
}

// Lower Cholesky factor of the exponential correlation matrix ρ^|i−j|.
inline std::vector<double> correlation_chol(size_t n, double rho) {
    std::vector<double> r(n * n), l(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) r[i * n + j] = std::pow(rho, std::abs(double(i) - double(j)));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double s = r[i * n + j];
            for (size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
            if (i == j) {
                if (s <= 0.0) throw std::runtime_error("correlation_chol: not positive definite");
                l[i * n + i] = std::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    return l;
}

// Spatially correlated Rayleigh fading: H = L G Lᵀ with L the Cholesky factor
// of the exponential correlation and G i.i.d. CN(0,1). Unit diagonals keep the
// per-entry marginal at CN(0,1), so estimators that only assume the marginal
// stay honest while the entries themselves become statistically dependent.
inline ChannelRealization sample_correlated_rayleigh(size_t n, double rho, Rng& rng) {
    if (n == 0) throw std::invalid_argument("sample_correlated_rayleigh: dims must be positive");
    if (rho < 0.0 || rho >= 1.0)
        throw std::invalid_argument("sample_correlated_rayleigh: rho must be in [0,1)");
    ChannelRealization ch;
    ch.kind = Fading::Rayleigh;
    if (rho == 0.0) {
        ch.h = CMat(n, n);
        for (auto& v : ch.h.data()) v = draw_cn(rng);
        return ch;
    }
    auto l = correlation_chol(n, rho);
    CMat g(n, n);
    for (auto& v : g.data()) v = draw_cn(rng);
    CMat lg(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t k = 0; k <= i; ++k) {
            double lik = l[i * n + k];
            if (lik == 0.0) continue;
            for (size_t j = 0; j < n; ++j) lg.at(i, j) += lik * g.at(k, j);
        }
    ch.h = CMat(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            cplx s = 0.0;
            for (size_t k = 0; k <= j; ++k) s += lg.at(i, k) * l[j * n + k];
            ch.h.at(i, j) = s;
        }
    return ch;
}

// Y = HX + N. Noise is circular Gaussian with per-real-dimension variance
// 10^(−snr_db/10); callers are expected to hand in power-normalized X.
inline CMat transmit(const CMat& x, const ChannelRealization& ch, double snr_db, Rng& rng) {
    if (x.rows() != ch.h.cols())
        throw std::invalid_argument("transmit: X rows " + std::to_string(x.rows()) +
                                    " vs H cols " + std::to_string(ch.h.cols()));
    CMat y = matmul(ch.h, x);
    double sigma = std::sqrt(noise_var(snr_db));
    if (sigma > 0.0)
        for (auto& v : y.data()) v += cplx(sigma * rng.normal(), sigma * rng.normal());
    return y;
}

struct IllConditioned : std::runtime_error {
    explicit IllConditioned(double cond)
        : std::runtime_error("zero_forcing: channel condition " + std::to_string(cond) +
                             " exceeds threshold"),
          condition(cond) {}
    double condition;
};

constexpr double ZF_COND_THRESHOLD = 1e8;

// Ỹ = (HᴴH)⁻¹ HᴴY: multiplicative channel turned into additive noise.
inline CMat zero_forcing(const CMat& y, const CMat& h, double cond_threshold = ZF_COND_THRESHOLD) {
    if (y.rows() != h.rows()) throw std::invalid_argument("zero_forcing: Y rows vs H rows");
    CMat hh = hermitian(h);
    CMat gram = matmul(hh, h);
    double c = cond1(gram);
    if (!(c < cond_threshold)) throw IllConditioned(c);
    return lu_solve(gram, matmul(hh, y));
}

struct ConstellationSpec {
    int m_bits = 0;
    float x_min = 0.0f;
    float x_max = 0.0f;
    float q_x = 0.0f;
};

// Running min/max with exponential forgetting; first observation seeds the
// range, later ones blend in with weight c.
struct EmaRange {
    bool started = false;
    double lo = 0.0, hi = 0.0;

    void observe(double batch_lo, double batch_hi, double c) {
        if (!started) {
            lo = batch_lo;
            hi = batch_hi;
            started = true;
        } else {
            lo = (1.0 - c) * lo + c * batch_lo;
            hi = (1.0 - c) * hi + c * batch_hi;
        }
    }
};

inline ConstellationSpec calibrate_constellation(const std::vector<TensorF>& batches, int m_bits,
                                                 double c) {
    if (batches.empty()) throw std::invalid_argument("calibrate_constellation: no batches");
    if (m_bits < 1 || m_bits > 16)
        throw std::invalid_argument("calibrate_constellation: m_bits out of range");
    EmaRange range;
    for (const auto& b : batches) {
        if (b.empty()) throw std::invalid_argument("calibrate_constellation: empty batch");
        double lo = b[0], hi = b[0];
        for (float v : b.vec()) {
            lo = std::min(lo, double(v));
            hi = std::max(hi, double(v));
        }
        range.observe(lo, hi, c);
    }
    if (!(range.hi > range.lo))
        throw std::runtime_error("calibrate_constellation: degenerate range");
    ConstellationSpec spec;
    spec.m_bits = m_bits;
    spec.x_min = float(range.lo);
    spec.x_max = float(range.hi);
    spec.q_x = float((std::pow(2.0, m_bits) - 1.0) / (range.hi - range.lo));
    return spec;
}

inline TensorF constellation_quantize_dequantize(const TensorF& x, const ConstellationSpec& spec) {
    if (spec.q_x <= 0.0f) throw std::invalid_argument("constellation spec not calibrated");
    double levels = std::pow(2.0, spec.m_bits) - 1.0;
    TensorF out = x;
    for (auto& v : out.vec()) {
        double q = round_even(double(spec.q_x) * (double(v) - double(spec.x_min)));
        q = std::min(std::max(q, 0.0), levels);
        v = float(q / double(spec.q_x) + double(spec.x_min));
    }
    return out;
}

}  // namespace litesc
