// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "litesc/autodiff.hpp"
#include "litesc/optim.hpp"

using namespace litesc;

TEST_CASE("one adam step on w^2 moves toward zero") {
    ParamSet<double> ps;
    ps.add("w", TensorD::from({1}, {1.0}), 'o');
    Adam<double> opt({.lr = 0.1});
    GraphD g;
    auto w = g.leaf(ps.at("w"));
    auto loss = g.sum_all(g.mul(w, w));
    g.backward(loss);
    opt.step(ps);
    REQUIRE(std::abs(ps.at("w").value[0]) < 1.0);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    ParamSet<double> ps;
    ps.add("w", TensorD::from({2}, {0.7, -0.3}), 'o');
    Adam<double> opt;
    ps.at("w").has_grad = true;  // populated, all zeros
    opt.step(ps);
    REQUIRE(ps.at("w").value[0] == 0.7);
    REQUIRE(ps.at("w").value[1] == -0.3);
}

TEST_CASE("missing gradient is a state error") {
    ParamSet<double> ps;
    ps.add("w", TensorD::from({1}, {1.0}), 'o');
    Adam<double> opt;
    REQUIRE_THROWS_AS(opt.step(ps), std::logic_error);
}

TEST_CASE("200 steps on a quadratic bowl converge") {
    ParamSet<double> ps;
    ps.add("w", TensorD::from({3}, {1.0, -0.8, 0.5}), 'o');
    Adam<double> opt({.lr = 0.05});
    for (int i = 0; i < 200; ++i) {
        GraphD g;
        auto w = g.leaf(ps.at("w"));
        auto loss = g.sum_all(g.mul(w, w));
        g.backward(loss);
        opt.step(ps);
    }
    double norm = 0;
    for (size_t i = 0; i < 3; ++i) norm += ps.at("w").value[i] * ps.at("w").value[i];
    REQUIRE(std::sqrt(norm) < 1e-2);
}

TEST_CASE("grads are zeroed after a step") {
    ParamSet<double> ps;
    ps.add("w", TensorD::from({1}, {1.0}), 'o');
    Adam<double> opt;
    GraphD g;
    auto loss = g.sum_all(g.leaf(ps.at("w")));
    g.backward(loss);
    REQUIRE(ps.at("w").grad[0] == 1.0);
    opt.step(ps);
    REQUIRE(ps.at("w").grad[0] == 0.0);
    REQUIRE_FALSE(ps.at("w").has_grad);
}

TEST_CASE("masked entries never move") {
    ParamSet<double> ps;
    ps.add("w", TensorD::from({4}, {0.0, 1.0, 0.0, 2.0}), 'o');
    ps.at("w").mask = {0, 1, 0, 1};
    Adam<double> opt({.lr = 0.1});
    for (int i = 0; i < 50; ++i) {
        GraphD g;
        auto w = g.leaf(ps.at("w"));
        auto loss = g.sum_all(g.mul(w, w));
        g.backward(loss);
        opt.step(ps);
    }
    REQUIRE(ps.at("w").value[0] == 0.0);
    REQUIRE(ps.at("w").value[2] == 0.0);
    REQUIRE(std::abs(ps.at("w").value[1]) < 1.0);
}

TEST_CASE("training is bit-identical across reruns with the same seed") {
    auto run = []() {
        Rng rng(123);
        ParamSet<double> ps;
        ps.dense("d", 4, 4, 'o', rng);
        Adam<double> opt;
        for (int i = 0; i < 20; ++i) {
            TensorD x({2, 4});
            for (size_t j = 0; j < x.size(); ++j) x[j] = rng.uniform(-1, 1);
            GraphD g;
            auto y = g.add_bias(g.matmul(g.constant(x), g.leaf(ps.at("d.w"))),
                                g.leaf(ps.at("d.b")));
            auto loss = g.sum_all(g.mul(y, y));
            g.backward(loss);
            opt.step(ps);
        }
        return ps.at("d.w").value;
    };
    auto a = run();
    auto b = run();
    for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}
