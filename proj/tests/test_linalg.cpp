// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "litesc/linalg.hpp"
#include "litesc/rng.hpp"

using namespace litesc;

namespace {

CMat random_cmat(Rng& rng, size_t n, size_t m) {
    CMat a(n, m);
    for (auto& v : a.data()) v = cplx(rng.normal(), rng.normal());
    return a;
}

double max_abs_diff(const CMat& a, const CMat& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

}  // namespace

TEST_CASE("lu solve reproduces known solutions") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        size_t n = 1 + rng.below(10);
        CMat a = random_cmat(rng, n, n);
        CMat x_true = random_cmat(rng, n, 3);
        CMat b = matmul(a, x_true);
        CMat x = lu_solve(a, b);
        REQUIRE(max_abs_diff(x, x_true) < 1e-9);
    }
}

TEST_CASE("lu solve pivots past zero diagonals") {
    CMat a(2, 2);
    a.at(0, 0) = 0.0;
    a.at(0, 1) = 1.0;
    a.at(1, 0) = 1.0;
    a.at(1, 1) = 0.0;
    CMat b(2, 1);
    b.at(0, 0) = cplx(2.0, 1.0);
    b.at(1, 0) = cplx(3.0, -1.0);
    CMat x = lu_solve(a, b);
    REQUIRE(std::abs(x.at(0, 0) - cplx(3.0, -1.0)) < 1e-14);
    REQUIRE(std::abs(x.at(1, 0) - cplx(2.0, 1.0)) < 1e-14);
}

TEST_CASE("singular systems throw and report infinite condition") {
    CMat a(2, 2);
    a.at(0, 0) = 1.0;
    a.at(0, 1) = 2.0;
    a.at(1, 0) = 2.0;
    a.at(1, 1) = 4.0;
    REQUIRE_THROWS_AS(lu_solve(a, CMat::identity(2)), std::runtime_error);
    REQUIRE(std::isinf(cond1(a)));
}

TEST_CASE("inverse times original is the identity") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        size_t n = 1 + rng.below(8);
        CMat a = random_cmat(rng, n, n);
        REQUIRE(max_abs_diff(matmul(a, inverse(a)), CMat::identity(n)) < 1e-9);
    }
}

TEST_CASE("hermitian transpose conjugates and flips") {
    Rng rng(7);
    CMat a = random_cmat(rng, 3, 5);
    CMat ah = hermitian(a);
    REQUIRE(ah.rows() == 5);
    REQUIRE(ah.cols() == 3);
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 5; ++j) REQUIRE(ah.at(j, i) == std::conj(a.at(i, j)));
    // A^H A is hermitian positive semidefinite: real nonnegative diagonal
    CMat g = matmul(ah, a);
    for (size_t i = 0; i < 5; ++i) {
        REQUIRE(g.at(i, i).imag() == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(g.at(i, i).real() >= 0.0);
    }
}

TEST_CASE("condition number basics") {
    REQUIRE(cond1(CMat::identity(4)) == Catch::Approx(1.0).epsilon(1e-12));

    CMat d(2, 2);
    d.at(0, 0) = 1.0;
    d.at(1, 1) = 1e-10;
    REQUIRE(cond1(d) == Catch::Approx(1e10).epsilon(1e-6));

    // scaling the whole matrix leaves the condition number alone
    Rng rng(8);
    CMat a = random_cmat(rng, 5, 5);
    REQUIRE(cond1(scale(a, cplx(37.0, 0.0))) == Catch::Approx(cond1(a)).epsilon(1e-9));
}

TEST_CASE("matrix 1-norm is the max column sum") {
    CMat a(2, 2);
    a.at(0, 0) = cplx(3.0, 4.0);   // abs 5
    a.at(1, 0) = cplx(0.0, 2.0);   // abs 2
    a.at(0, 1) = cplx(-1.0, 0.0);  // abs 1
    a.at(1, 1) = cplx(0.0, 0.0);
    REQUIRE(norm1(a) == Catch::Approx(7.0).epsilon(1e-15));
    REQUIRE(fro_norm2(a) == Catch::Approx(25.0 + 4.0 + 1.0).epsilon(1e-15));
}

TEST_CASE("real expansion reproduces complex multiplication") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        size_t n = 1 + rng.below(6), m = 1 + rng.below(6);
        CMat h = random_cmat(rng, n, m);
        std::vector<cplx> x(m);
        for (auto& v : x) v = cplx(rng.normal(), rng.normal());

        std::vector<cplx> y(n);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < m; ++j) y[i] += h.at(i, j) * x[j];

        auto hr = to_real_expansion(h);
        auto xr = complex_to_stacked(x);
        std::vector<double> yr(2 * n, 0.0);
        for (size_t i = 0; i < 2 * n; ++i)
            for (size_t j = 0; j < 2 * m; ++j) yr[i] += hr[i * 2 * m + j] * xr[j];

        auto yc = stacked_to_complex(yr);
        for (size_t i = 0; i < n; ++i) REQUIRE(std::abs(yc[i] - y[i]) < 1e-12);
    }
}

TEST_CASE("stacked layout round-trips") {
    std::vector<cplx> x{{1.0, 2.0}, {-3.0, 0.5}};
    auto s = complex_to_stacked(x);
    REQUIRE(s == std::vector<double>{1.0, -3.0, 2.0, 0.5});
    auto back = stacked_to_complex(s);
    REQUIRE(back == x);
    REQUIRE_THROWS_AS(stacked_to_complex(std::vector<double>{1.0, 2.0, 3.0}),
                      std::invalid_argument);
}
