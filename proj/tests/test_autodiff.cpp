// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "gradcheck.hpp"
#include "litesc/autodiff.hpp"
#include "litesc/rng.hpp"

using namespace litesc;
using litesc::testing::max_grad_err;
using litesc::testing::rel_err;

namespace {

TensorD random_tensor(std::vector<size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    TensorD t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("round_even matches banker's rounding") {
    REQUIRE(round_even(1.4) == 1.0);
    REQUIRE(round_even(1.5) == 2.0);
    REQUIRE(round_even(2.5) == 2.0);
    REQUIRE(round_even(-0.5) == 0.0);
    REQUIRE(round_even(-1.5) == -2.0);
    REQUIRE(round_even(127.5) == 128.0);
    REQUIRE(round_even(126.5) == 126.0);
}

TEST_CASE("matmul forward against straight-line evaluation") {
    GraphD g;
    auto a = g.constant(TensorD::from({2, 3}, {1, 2, 3, 4, 5, 6}));
    auto b = g.constant(TensorD::from({3, 2}, {7, 8, 9, 10, 11, 12}));
    auto c = g.matmul(a, b);
    REQUIRE(c->val.at(0, 0) == 58.0);
    REQUIRE(c->val.at(0, 1) == 64.0);
    REQUIRE(c->val.at(1, 0) == 139.0);
    REQUIRE(c->val.at(1, 1) == 154.0);
}

TEST_CASE("matmul rejects mismatched inner dims") {
    GraphD g;
    auto a = g.constant(TensorD({2, 3}));
    auto b = g.constant(TensorD({2, 2}));
    REQUIRE_THROWS_AS(g.matmul(a, b), std::invalid_argument);
}

TEST_CASE("gradient of sum(W x) is the broadcast input") {
    Rng rng(1);
    ParamSet<double> ps;
    ps.add("w", random_tensor({3, 2}, rng), 'o');
    TensorD x = random_tensor({4, 3}, rng);
    GraphD g;
    auto loss = g.sum_all(g.matmul(g.constant(x), g.leaf(ps.at("w"))));
    g.backward(loss);
    // d/dW[k][j] sum_i (x W)[i][j] = sum_i x[i][k]
    for (size_t k = 0; k < 3; ++k) {
        double col = 0;
        for (size_t i = 0; i < 4; ++i) col += x.at(i, k);
        for (size_t j = 0; j < 2; ++j)
            REQUIRE(rel_err(ps.at("w").grad[k * 2 + j], col) < 1e-12);
    }
}

TEST_CASE("every elementwise op passes finite differences") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        ParamSet<double> ps;
        ps.add("a", random_tensor({3, 4}, rng, 0.2, 1.5), 'o');
        ps.add("b", random_tensor({3, 4}, rng, 0.2, 1.5), 'o');
        TensorD c = random_tensor({3, 4}, rng);

        auto build = [&](auto op) {
            return [&, op]() {
                GraphD g;
                auto va = g.leaf(ps.at("a"));
                auto vb = g.leaf(ps.at("b"));
                auto out = op(g, va, vb);
                auto loss = g.sum_all(g.mul(out, g.constant(c)));
                ps.zero_grads();
                g.backward(loss);
                return loss->val[0];
            };
        };

        SECTION("add seed " + std::to_string(seed)) {
            auto f = build([](GraphD& g, auto a, auto b) { return g.add(a, b); });
            f();
            REQUIRE(max_grad_err(ps, f) < 1e-4);
        }
        SECTION("sub seed " + std::to_string(seed)) {
            auto f = build([](GraphD& g, auto a, auto b) { return g.sub(a, b); });
            f();
            REQUIRE(max_grad_err(ps, f) < 1e-4);
        }
        SECTION("mul seed " + std::to_string(seed)) {
            auto f = build([](GraphD& g, auto a, auto b) { return g.mul(a, b); });
            f();
            REQUIRE(max_grad_err(ps, f) < 1e-4);
        }
        SECTION("relu seed " + std::to_string(seed)) {
            ps.at("a").value = random_tensor({3, 4}, rng, 0.1, 1.0);
            for (size_t i = 0; i < 6; ++i) ps.at("a").value[i] = -ps.at("a").value[i];
            auto f = build([](GraphD& g, auto a, auto) { return g.relu(a); });
            f();
            REQUIRE(max_grad_err(ps, f) < 1e-4);
        }
        SECTION("sigmoid seed " + std::to_string(seed)) {
            auto f = build([](GraphD& g, auto a, auto) { return g.sigmoid(a); });
            f();
            REQUIRE(max_grad_err(ps, f) < 1e-4);
        }
        SECTION("affine seed " + std::to_string(seed)) {
            auto f = build([](GraphD& g, auto a, auto) { return g.affine(a, 2.5, -0.25); });
            f();
            REQUIRE(max_grad_err(ps, f) < 1e-4);
        }
        SECTION("softmax seed " + std::to_string(seed)) {
            auto f = build([](GraphD& g, auto a, auto) { return g.row_softmax(a); });
            f();
            REQUIRE(max_grad_err(ps, f) < 1e-4);
        }
        SECTION("concat and mean square seed " + std::to_string(seed)) {
            TensorD c9 = random_tensor({3, 9}, rng);
            auto f = [&]() {
                GraphD g;
                auto cat = g.concat_cols(g.leaf(ps.at("a")), g.mean_sq_rows(g.leaf(ps.at("b"))));
                auto out = g.concat_cols(cat, g.leaf(ps.at("b")));
                auto loss = g.sum_all(g.mul(out, g.constant(c9)));
                ps.zero_grads();
                g.backward(loss);
                return loss->val[0];
            };
            f();
            REQUIRE(max_grad_err(ps, f) < 1e-4);
        }
    }
}

TEST_CASE("matmul and bias pass finite differences") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed + 10);
        ParamSet<double> ps;
        ps.add("w", random_tensor({4, 3}, rng), 'o');
        ps.add("b", random_tensor({3}, rng), 'o');
        TensorD x = random_tensor({2, 4}, rng);
        TensorD c = random_tensor({2, 3}, rng);
        auto f = [&]() {
            GraphD g;
            auto y = g.add_bias(g.matmul(g.constant(x), g.leaf(ps.at("w"))), g.leaf(ps.at("b")));
            auto loss = g.sum_all(g.mul(y, g.constant(c)));
            ps.zero_grads();
            g.backward(loss);
            return loss->val[0];
        };
        f();
        REQUIRE(max_grad_err(ps, f) < 1e-4);
    }
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(5);
    GraphD g;
    auto x = g.constant(random_tensor({8, 16}, rng, -4.0, 4.0));
    auto y = g.row_softmax(x);
    for (size_t i = 0; i < 8; ++i) {
        double s = 0;
        for (size_t j = 0; j < 16; ++j) s += y->val.at(i, j);
        REQUIRE(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("two-term token loss matches hand evaluation on uniform rows") {
    GraphD g;
    auto p = g.constant(TensorD::from({1, 4}, {0.25, 0.25, 0.25, 0.25}));
    auto loss = g.token_loss(p, {2}, {1});
    // -ln(1/4) plus three charges of -ln(3/4)
    double expect = -std::log(0.25) - 3.0 * std::log(0.75);
    REQUIRE(std::abs(loss->val[0] - 2.2493) < 5e-4);
    REQUIRE(rel_err(loss->val[0], expect) < 1e-12);
}

TEST_CASE("token loss is zero for a perfect one-hot prediction and grads stay finite") {
    GraphD g;
    auto p = g.constant(TensorD::from({2, 3}, {1, 0, 0, 0, 0, 1}));
    auto loss = g.token_loss(p, {0, 2}, {1, 1});
    REQUIRE(std::abs(loss->val[0]) < 1e-9);
    g.backward(loss);
    for (size_t i = 0; i < 6; ++i) REQUIRE(std::isfinite(p->grad[i]));
}

TEST_CASE("token loss equals independent scalar evaluation on random distributions") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        size_t V = 2 + rng.below(8);
        size_t R = 1 + rng.below(4);
        TensorD logits = random_tensor({R, V}, rng, -2, 2);
        std::vector<int> tgt(R);
        std::vector<uint8_t> mask(R, 1);
        for (size_t i = 0; i < R; ++i) tgt[i] = int(rng.below(V));
        GraphD g;
        auto p = g.row_softmax(g.constant(logits));
        auto loss = g.token_loss(p, tgt, mask);
        // independent evaluation from the raw definition
        double expect = 0;
        for (size_t i = 0; i < R; ++i) {
            double mx = logits.at(i, 0);
            for (size_t j = 1; j < V; ++j) mx = std::max(mx, logits.at(i, j));
            double z = 0;
            for (size_t j = 0; j < V; ++j) z += std::exp(logits.at(i, j) - mx);
            for (size_t j = 0; j < V; ++j) {
                double pj = std::exp(logits.at(i, j) - mx) / z;
                if (int(j) == tgt[i])
                    expect -= std::log(pj);
                else
                    expect += (0.0 - 1.0) * std::log(1.0 - pj);
            }
        }
        expect /= double(R);
        REQUIRE(rel_err(loss->val[0], expect) < 1e-9);
    }
}

TEST_CASE("token loss through softmax passes finite differences") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed + 100);
        ParamSet<double> ps;
        ps.add("z", random_tensor({3, 5}, rng, -1.5, 1.5), 'o');
        std::vector<int> tgt{1, 4, 0};
        std::vector<uint8_t> mask{1, 1, 0};
        auto f = [&]() {
            GraphD g;
            auto loss = g.token_loss(g.row_softmax(g.leaf(ps.at("z"))), tgt, mask);
            ps.zero_grads();
            g.backward(loss);
            return loss->val[0];
        };
        f();
        REQUIRE(max_grad_err(ps, f) < 1e-4);
    }
}

TEST_CASE("power normalization hits unit power and passes finite differences") {
    Rng rng(21);
    ParamSet<double> ps;
    ps.add("x", random_tensor({6, 4}, rng, -2, 2), 'o');
    std::vector<uint8_t> mask{1, 1, 1, 0, 1, 1};  // batch of 2, length 3, one pad
    auto f = [&]() {
        GraphD g;
        auto y = g.power_norm(g.leaf(ps.at("x")), 2, 3, mask);
        auto loss = g.sum_all(g.mul(y, g.constant(TensorD::from(
                                           {6, 4}, [&] {
                                               std::vector<double> v(24);
                                               Rng r2(99);
                                               for (auto& e : v) e = r2.uniform(-1, 1);
                                               return v;
                                           }()))));
        ps.zero_grads();
        g.backward(loss);
        return loss->val[0];
    };
    f();
    {
        GraphD g;
        auto y = g.power_norm(g.leaf(ps.at("x")), 2, 3, mask);
        double ss = 0;
        for (size_t l = 0; l < 3; ++l)
            for (size_t j = 0; j < 4; ++j) ss += y->val.at(l, j) * y->val.at(l, j);
        REQUIRE(std::abs(ss / 12.0 - 1.0) < 1e-12);
        // padded row is zeroed
        for (size_t j = 0; j < 4; ++j) REQUIRE(y->val.at(3, j) == 0.0);
        ss = 0;
        for (size_t l = 4; l < 6; ++l)
            for (size_t j = 0; j < 4; ++j) ss += y->val.at(l, j) * y->val.at(l, j);
        REQUIRE(std::abs(ss / 8.0 - 1.0) < 1e-12);
    }
    REQUIRE(max_grad_err(ps, f) < 1e-4);
}

TEST_CASE("ste round: forward rounds, backward is the identity") {
    GraphD g;
    auto x = g.constant(TensorD::from({4}, {1.4, -0.6, 2.5, 3.5}));
    auto y = g.ste_round(x);
    REQUIRE(y->val[0] == 1.0);
    REQUIRE(y->val[1] == -1.0);
    REQUIRE(y->val[2] == 2.0);
    REQUIRE(y->val[3] == 4.0);
    auto loss = g.sum_all(g.mul(y, g.constant(TensorD::from({4}, {2, 3, 5, 7}))));
    g.backward(loss);
    REQUIRE(x->grad[0] == 2.0);
    REQUIRE(x->grad[1] == 3.0);
    REQUIRE(x->grad[2] == 5.0);
    REQUIRE(x->grad[3] == 7.0);
}

TEST_CASE("ste round deliberately disagrees with finite differences on the forward") {
    // The estimator's whole point: the forward is a staircase whose true
    // derivative is zero almost everywhere, while the backward reports 1.
    ParamSet<double> ps;
    ps.add("x", TensorD::from({1}, {0.3}), 'o');
    auto f = [&]() {
        GraphD g;
        auto loss = g.sum_all(g.ste_round(g.leaf(ps.at("x"))));
        ps.zero_grads();
        g.backward(loss);
        return loss->val[0];
    };
    f();
    REQUIRE(ps.at("x").grad[0] == 1.0);
    double h = 1e-5;
    ps.at("x").value[0] = 0.3 + h;
    double fp = f();
    ps.at("x").value[0] = 0.3 - h;
    double fm = f();
    REQUIRE((fp - fm) / (2 * h) == 0.0);
}

TEST_CASE("clamp saturates and gates gradients") {
    ParamSet<double> ps;
    ps.add("x", TensorD::from({3}, {-2.0, 0.5, 9.0}), 'o');
    GraphD g;
    auto y = g.clamp(g.leaf(ps.at("x")), 0.0, 1.0);
    REQUIRE(y->val[0] == 0.0);
    REQUIRE(y->val[1] == 0.5);
    REQUIRE(y->val[2] == 1.0);
    auto loss = g.sum_all(y);
    g.backward(loss);
    REQUIRE(ps.at("x").grad[0] == 0.0);
    REQUIRE(ps.at("x").grad[1] == 1.0);
    REQUIRE(ps.at("x").grad[2] == 0.0);
}

TEST_CASE("backward before any recording is a state error") {
    GraphD g;
    REQUIRE_THROWS_AS(
        [&] {
            GraphD empty;
            auto loss = g.constant(TensorD::from({1}, {0.0}));
            empty.backward(loss);
        }(),
        std::logic_error);
}

TEST_CASE("embedding gather and scatter pass finite differences") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed + 40);
        ParamSet<double> ps;
        ps.add("tab", random_tensor({6, 3}, rng), 'o');
        std::vector<int> ids{4, 1, 4, 0};
        TensorD c = random_tensor({4, 3}, rng);
        auto f = [&]() {
            GraphD g;
            auto y = g.embedding(g.leaf(ps.at("tab")), ids);
            auto loss = g.sum_all(g.mul(y, g.constant(c)));
            ps.zero_grads();
            g.backward(loss);
            return loss->val[0];
        };
        f();
        REQUIRE(max_grad_err(ps, f) < 1e-4);
    }
}
