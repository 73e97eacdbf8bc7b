#include <doctest.h>

#include "gmlp/autodiff.hpp"
#include "gmlp/gradcheck.hpp"

using namespace gmlp;
using TensorD = Tensor<double>;
using Tape = ad::Tape<double>;

TEST_CASE("backward of sum is all ones") {
    Rng rng(1);
    Tape t;
    auto x = t.leaf(TensorD::randn({3, 4}, rng));
    t.backward(t.sum_to_scalar(x));
    const TensorD g = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 1.0);
}

TEST_CASE("backward of sum of squares") {
    Tape t;
    auto x = t.leaf(TensorD({3}, {1, 2, 3}));
    t.backward(t.sum_to_scalar(t.mul(x, x)));
    const TensorD g = t.grad(x);
    CHECK(g[0] == doctest::Approx(2.0));
    CHECK(g[1] == doctest::Approx(4.0));
    CHECK(g[2] == doctest::Approx(6.0));
}

TEST_CASE("backward of sum(gelu(x W)) matches finite differences") {
    Rng rng(2);
    const TensorD x0 = TensorD::randn({4, 5}, rng, 0.5);
    const TensorD w0 = TensorD::randn({5, 3}, rng, 0.5);
    auto f = [](const std::vector<TensorD>& in) {
        Tape t;
        auto x = t.leaf(in[0]);
        auto w = t.leaf(in[1]);
        return t.value(t.sum_to_scalar(t.gelu(t.matmul(x, w))))[0];
    };
    Tape t;
    auto x = t.leaf(x0);
    auto w = t.leaf(w0);
    t.backward(t.sum_to_scalar(t.gelu(t.matmul(x, w))));
    for (std::size_t arg = 0; arg < 2; ++arg) {
        const TensorD g_fd = finite_diff_grad(f, {x0, w0}, arg);
        const TensorD g_ad = t.grad(arg == 0 ? x : w);
        CHECK(max_relative_error(g_ad, g_fd) <= 1e-5);
    }
}

TEST_CASE("non-scalar loss is rejected") {
    Tape t;
    auto x = t.leaf(TensorD({2, 2}, {1, 2, 3, 4}));
    CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("backward on a consumed tape is rejected") {
    Tape t;
    auto x = t.leaf(TensorD({2}, {1, 2}));
    auto loss = t.sum_to_scalar(x);
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), std::runtime_error);
}

TEST_CASE("parameters unreachable from the loss get all-zero gradients") {
    Tape t;
    auto x = t.leaf(TensorD({2}, {1, 2}));
    auto unused = t.leaf(TensorD({3}, {5, 6, 7}));
    t.backward(t.sum_to_scalar(x));
    const TensorD g = t.grad(unused);
    CHECK(g.shape() == Shape{3});
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("gradients accumulate over fan-out") {
    // y = x*x summed twice through different paths: d/dx (sum(x*x) + sum(x*x))
    Tape t;
    auto x = t.leaf(TensorD({2}, {3, -1}));
    auto a = t.sum_to_scalar(t.mul(x, x));
    auto b = t.sum_to_scalar(t.mul(x, x));
    t.backward(t.add(a, b));
    const TensorD g = t.grad(x);
    CHECK(g[0] == doctest::Approx(12.0));
    CHECK(g[1] == doctest::Approx(-4.0));
}

TEST_CASE("zero upstream adjoint produces zero parameter gradients") {
    Rng rng(3);
    Tape t;
    auto w = t.leaf(TensorD::randn({4, 4}, rng));
    auto x = t.leaf(TensorD::randn({4, 4}, rng));
    auto loss = t.scale(t.sum_to_scalar(t.matmul(x, w)), 0.0);
    t.backward(loss);
    const TensorD g = t.grad(w);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("split gradient is the concatenation of upstream gradients") {
    Rng rng(4);
    const TensorD x0 = TensorD::randn({3, 6}, rng);
    const TensorD ca = TensorD::randn({3, 3}, rng);
    const TensorD cb = TensorD::randn({3, 3}, rng);
    auto f = [&](const std::vector<TensorD>& in) {
        Tape t;
        auto x = t.leaf(in[0]);
        auto [a, b] = t.split_last_axis(x);
        auto la = t.sum_to_scalar(t.mul(a, t.leaf(ca)));
        auto lb = t.sum_to_scalar(t.mul(b, t.leaf(cb)));
        return t.value(t.add(la, lb))[0];
    };
    Tape t;
    auto x = t.leaf(x0);
    auto [a, b] = t.split_last_axis(x);
    auto la = t.sum_to_scalar(t.mul(a, t.leaf(ca)));
    auto lb = t.sum_to_scalar(t.mul(b, t.leaf(cb)));
    t.backward(t.add(la, lb));
    const TensorD g_ad = t.grad(x);
    const TensorD g_fd = finite_diff_grad(f, {x0}, 0);
    CHECK(max_relative_error(g_ad, g_fd) <= 1e-5);
    // and elementwise it is exactly [ca | cb]
    const TensorD expected = concat_last_axis(ca, cb);
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(g_ad[i] == doctest::Approx(expected[i]).epsilon(1e-14));
}

TEST_CASE("finite_diff_grad basics") {
    SUBCASE("gradient of sum is ones") {
        auto f = [](const std::vector<TensorD>& in) { return sum_all(in[0]); };
        const TensorD g = finite_diff_grad(f, {TensorD({4}, {1, 2, 3, 4})}, 0);
        for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("sum of squares at x=[3]") {
        auto f = [](const std::vector<TensorD>& in) { return in[0][0] * in[0][0]; };
        const TensorD g = finite_diff_grad(f, {TensorD({1}, {3.0})}, 0, 1e-5);
        CHECK(std::abs(g[0] - 6.0) <= 1e-8);
    }
    SUBCASE("sum of softmax rows is conserved") {
        Rng rng(5);
        auto f = [](const std::vector<TensorD>& in) { return sum_all(softmax_rows(in[0])); };
        const TensorD g = finite_diff_grad(f, {TensorD::randn({3, 5}, rng)}, 0);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i]) <= 1e-6);
    }
    SUBCASE("eps must be positive") {
        auto f = [](const std::vector<TensorD>& in) { return sum_all(in[0]); };
        CHECK_THROWS_AS(finite_diff_grad(f, {TensorD({1}, {0.0})}, 0, 0.0),
                        std::invalid_argument);
    }
}

TEST_CASE("relative error guard avoids false failures for near-zero pairs") {
    TensorD a({2}, {0.0, 1.0});
    TensorD b({2}, {1e-12, 1.0});
    CHECK(max_relative_error(a, b) <= 1e-4);
}

TEST_CASE("gradient_check passes any linear function tightly") {
    Rng rng(6);
    const TensorD c = TensorD::randn({4, 4}, rng);
    const TensorD x0 = TensorD::randn({4, 4}, rng);
    auto f = [&](const std::vector<TensorD>& in) { return sum_all(mul(in[0], c)); };
    auto analytic = [&]() { return c; };
    const GradCheckRow row = gradient_check("linear", f, analytic, {x0}, 0, 1e-7);
    CHECK(row.pass);
}

TEST_CASE("matmul adjoint agrees with finite differences on both operands") {
    Rng rng(7);
    const TensorD a0 = TensorD::randn({3, 4}, rng);
    const TensorD b0 = TensorD::randn({4, 2}, rng);
    const TensorD c = TensorD::randn({3, 2}, rng);
    auto f = [&](const std::vector<TensorD>& in) { return sum_all(mul(matmul(in[0], in[1]), c)); };
    Tape t;
    auto a = t.leaf(a0);
    auto b = t.leaf(b0);
    t.backward(t.sum_to_scalar(t.mul(t.matmul(a, b), t.leaf(c))));
    CHECK(max_relative_error(t.grad(a), finite_diff_grad(f, {a0, b0}, 0)) <= 1e-6);
    CHECK(max_relative_error(t.grad(b), finite_diff_grad(f, {a0, b0}, 1)) <= 1e-6);
}
