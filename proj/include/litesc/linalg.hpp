// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace litesc {

using cplx = std::complex<double>;

// Dense row-major complex matrix, double precision throughout. Model math is
// float; everything that inverts or conditions a channel stays in double.
class CMat {
public:
    CMat() : rows_(0), cols_(0) {}
    CMat(size_t rows, size_t cols) : rows_(rows), cols_(cols), a_(rows * cols) {}

    static CMat identity(size_t n) {
        CMat m(n, n);
        for (size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    cplx& at(size_t r, size_t c) { return a_[r * cols_ + c]; }
    const cplx& at(size_t r, size_t c) const { return a_[r * cols_ + c]; }
    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    std::vector<cplx>& data() { return a_; }
    const std::vector<cplx>& data() const { return a_; }

private:
    size_t rows_, cols_;
    std::vector<cplx> a_;
};

inline CMat matmul(const CMat& a, const CMat& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: " + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()));
    CMat out(a.rows(), b.cols());
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t k = 0; k < a.cols(); ++k) {
            cplx aik = a.at(i, k);
            if (aik == cplx(0.0)) continue;
            for (size_t j = 0; j < b.cols(); ++j) out.at(i, j) += aik * b.at(k, j);
        }
    return out;
}

inline CMat transpose(const CMat& a) {
    CMat out(a.cols(), a.rows());
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

inline CMat hermitian(const CMat& a) {
    CMat out(a.cols(), a.rows());
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t j = 0; j < a.cols(); ++j) out.at(j, i) = std::conj(a.at(i, j));
    return out;
}

inline CMat add(const CMat& a, const CMat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("add: shape mismatch");
    CMat out = a;
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

inline CMat scale(const CMat& a, cplx s) {
    CMat out = a;
    for (auto& v : out.data()) v *= s;
    return out;
}

inline double fro_norm2(const CMat& a) {
    double s = 0.0;
    for (const auto& v : a.data()) s += std::norm(v);
    return s;
}

// max column sum of absolute values
inline double norm1(const CMat& a) {
    double best = 0.0;
    for (size_t j = 0; j < a.cols(); ++j) {
        double s = 0.0;
        for (size_t i = 0; i < a.rows(); ++i) s += std::abs(a.at(i, j));
        best = std::max(best, s);
    }
    return best;
}

namespace detail {

struct LuFactors {
    CMat lu;
    std::vector<size_t> perm;
    bool singular = false;
};

inline LuFactors lu_factor(CMat a) {
    size_t n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("lu_factor: square matrix required");
    LuFactors f{std::move(a), {}, false};
    f.perm.resize(n);
    for (size_t i = 0; i < n; ++i) f.perm[i] = i;
    for (size_t k = 0; k < n; ++k) {
        size_t pivot = k;
        double best = std::abs(f.lu.at(k, k));
        for (size_t i = k + 1; i < n; ++i) {
            double m = std::abs(f.lu.at(i, k));
            if (m > best) {
                best = m;
                pivot = i;
            }
        }
        if (best == 0.0) {
            f.singular = true;
            return f;
        }
        if (pivot != k) {
            for (size_t j = 0; j < n; ++j) std::swap(f.lu.at(k, j), f.lu.at(pivot, j));
            std::swap(f.perm[k], f.perm[pivot]);
        }
        for (size_t i = k + 1; i < n; ++i) {
            cplx m = f.lu.at(i, k) / f.lu.at(k, k);
            f.lu.at(i, k) = m;
            for (size_t j = k + 1; j < n; ++j) f.lu.at(i, j) -= m * f.lu.at(k, j);
        }
    }
    return f;
}

inline CMat lu_apply(const LuFactors& f, const CMat& b) {
    size_t n = f.lu.rows();
    if (b.rows() != n) throw std::invalid_argument("lu_apply: rhs row mismatch");
    CMat x(n, b.cols());
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < b.cols(); ++j) x.at(i, j) = b.at(f.perm[i], j);
    for (size_t j = 0; j < b.cols(); ++j) {
        for (size_t i = 1; i < n; ++i)
            for (size_t k = 0; k < i; ++k) x.at(i, j) -= f.lu.at(i, k) * x.at(k, j);
        for (size_t i = n; i-- > 0;) {
            for (size_t k = i + 1; k < n; ++k) x.at(i, j) -= f.lu.at(i, k) * x.at(k, j);
            x.at(i, j) /= f.lu.at(i, i);
        }
    }
    return x;
}

}  // namespace detail

// Solves A X = B by partially pivoted LU. Throws on exactly singular input.
inline CMat lu_solve(const CMat& a, const CMat& b) {
    auto f = detail::lu_factor(a);
    if (f.singular) throw std::runtime_error("lu_solve: singular matrix");
    return detail::lu_apply(f, b);
}

inline CMat inverse(const CMat& a) { return lu_solve(a, CMat::identity(a.rows())); }

// 1-norm condition number, computed exactly from the inverse. Matrices here
// are channel sized (a handful of antennas), so the O(n^3) inverse is cheap.
// Returns +inf when the matrix does not factor.
inline double cond1(const CMat& a) {
    auto f = detail::lu_factor(a);
    if (f.singular) return std::numeric_limits<double>::infinity();
    CMat inv = detail::lu_apply(f, CMat::identity(a.rows()));
    return norm1(a) * norm1(inv);
}

// Real 2n x 2m image of a complex matrix: [Re -Im; Im Re]. Acting on stacked
// [Re(x); Im(x)] vectors it reproduces complex multiplication.
inline std::vector<double> to_real_expansion(const CMat& h) {
    size_t n = h.rows(), m = h.cols();
    std::vector<double> out(4 * n * m);
    size_t w = 2 * m;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j) {
            double re = h.at(i, j).real(), im = h.at(i, j).imag();
            out[i * w + j] = re;
            out[i * w + (m + j)] = -im;
            out[(n + i) * w + j] = im;
            out[(n + i) * w + (m + j)] = re;
        }
    return out;
}

inline std::vector<double> complex_to_stacked(const std::vector<cplx>& x) {
    std::vector<double> out(2 * x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i].real();
        out[x.size() + i] = x[i].imag();
    }
    return out;
}

inline std::vector<cplx> stacked_to_complex(const std::vector<double>& v) {
    if (v.size() % 2 != 0) throw std::invalid_argument("stacked_to_complex: odd length");
    size_t n = v.size() / 2;
    std::vector<cplx> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = cplx(v[i], v[n + i]);
    return out;
}

}  // namespace litesc
