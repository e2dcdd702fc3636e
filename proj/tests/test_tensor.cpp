// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "litesc/rng.hpp"
#include "litesc/tensor.hpp"

using namespace litesc;

TEST_CASE("tensor shape and storage agree") {
    TensorD t({3, 4});
    REQUIRE(t.size() == 12);
    REQUIRE(t.rows() == 3);
    REQUIRE(t.cols() == 4);
    t.at(2, 3) = 7.0;
    REQUIRE(t[11] == 7.0);
}

TEST_CASE("tensor from rejects mismatched data") {
    REQUIRE_THROWS_AS(TensorD::from({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("reshape preserves elements and checks count") {
    auto t = TensorD::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto r = t.reshaped({3, 2});
    REQUIRE(r.at(2, 1) == 6.0);
    REQUIRE_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
}

TEST_CASE("cast converts precision") {
    auto t = TensorD::from({2}, {1.5, -2.25});
    auto f = t.cast<float>();
    REQUIRE(f[0] == 1.5f);
    REQUIRE(f[1] == -2.25f);
}

TEST_CASE("rng streams are deterministic and splittable") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
    Rng c = a.split(1), d = a.split(2);
    REQUIRE(c.next_u64() != d.next_u64());
}

TEST_CASE("rng normal moments are sane") {
    Rng r(7);
    double sum = 0, sq = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        sum += x;
        sq += x * x;
    }
    REQUIRE(std::abs(sum / n) < 0.01);
    REQUIRE(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("rng shuffle is a permutation and seed-stable") {
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    Rng r1(3);
    r1.shuffle(v);
    std::vector<int> w{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    Rng r2(3);
    r2.shuffle(w);
    REQUIRE(v == w);
    std::sort(v.begin(), v.end());
    REQUIRE(v == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}
