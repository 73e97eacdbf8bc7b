#include <doctest.h>

#include "gmlp/tensor.hpp"

using namespace gmlp;
using TensorD = Tensor<double>;

namespace {

TensorD identity(std::size_t n) {
    TensorD eye({n, n});
    for (std::size_t i = 0; i < n; ++i) eye.at(i, i) = 1.0;
    return eye;
}

}  // namespace

TEST_CASE("matmul identity is bitwise exact") {
    Rng rng(1);
    const TensorD a = TensorD::randn({7, 5}, rng);
    const TensorD out = matmul(a, identity(5));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(out[i] == a[i]);
}

TEST_CASE("matmul zero annihilates") {
    Rng rng(2);
    const TensorD z = TensorD::zeros({3, 4});
    const TensorD b = TensorD::randn({4, 6}, rng);
    const TensorD out = matmul(z, b);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("matmul hand-computed dot products") {
    const TensorD a({2, 2}, {1, 2, 3, 4});
    const TensorD b({2, 1}, {5, 6});
    const TensorD out = matmul(a, b);
    // oracle: row-by-column dots, 1*5+2*6 and 3*5+4*6 (exact in binary fp)
    CHECK(out.at(0, 0) == 17.0);
    CHECK(out.at(1, 0) == 39.0);
}

TEST_CASE("matmul rejects mismatched inner extents and reports both shapes") {
    const TensorD a({2, 3});
    const TensorD b({4, 2});
    try {
        matmul(a, b);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("elementwise ops reject shape-incompatible operands") {
    const TensorD a({2, 3});
    const TensorD b({3, 2});
    CHECK_THROWS_AS(add(a, b), std::invalid_argument);
    CHECK_THROWS_AS(mul(a, b), std::invalid_argument);
    CHECK_THROWS_AS(sub(a, b), std::invalid_argument);
}

TEST_CASE("softmax of equal values is uniform") {
    const TensorD x = TensorD::full({2, 5}, 3.7);
    const TensorD s = softmax_rows(x);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax limit case [0, large]") {
    const TensorD x({1, 2}, {0.0, 50.0});
    const TensorD s = softmax_rows(x);
    CHECK(s[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(s[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("softmax closed-form exp ratio") {
    // oracle: exp(0) : exp(ln 3) = 1 : 3
    const TensorD x({1, 2}, {0.0, std::log(3.0)});
    const TensorD s = softmax_rows(x);
    CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one for random inputs in [-30, 30]") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        TensorD x({8, 13});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform() * 60.0 - 30.0;
        const TensorD s = softmax_rows(x);
        for (std::size_t r = 0; r < 8; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < 13; ++c) sum += s.at(r, c);
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("softmax rejects non-finite input") {
    TensorD x({1, 2}, {0.0, std::numeric_limits<double>::infinity()});
    CHECK_THROWS_AS(softmax_rows(x), std::invalid_argument);
}

TEST_CASE("split definition and round trip") {
    const TensorD x({1, 4}, {1, 2, 3, 4});
    const auto [a, b] = split_last_axis(x);
    CHECK(a.at(0, 0) == 1.0);
    CHECK(a.at(0, 1) == 2.0);
    CHECK(b.at(0, 0) == 3.0);
    CHECK(b.at(0, 1) == 4.0);

    Rng rng(4);
    const TensorD y = TensorD::randn({5, 8}, rng);
    const auto [u, v] = split_last_axis(y);
    const TensorD back = concat_last_axis(u, v);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(back[i] == y[i]);
}

TEST_CASE("split rejects odd last extent") {
    CHECK_THROWS_AS(split_last_axis(TensorD({2, 5})), std::invalid_argument);
}

TEST_CASE("gelu exact values") {
    CHECK(gelu_scalar(0.0) == 0.0);
    // oracle: Phi(1) from the Gaussian CDF
    CHECK(gelu_scalar(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
    CHECK(std::abs(gelu_scalar(-10.0)) <= 1e-6);
}

TEST_CASE("layer_norm constant row collapses to zero") {
    const TensorD x = TensorD::full({3, 6}, 4.2);
    const TensorD out = layer_norm(x, TensorD::ones({6}), TensorD::zeros({6}));
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("layer_norm unit-variance row is preserved") {
    // oracle: mean 0, population variance 1 -> output x / sqrt(1 + eps)
    const TensorD x({1, 2}, {-1.0, 1.0});
    const TensorD out = layer_norm(x, TensorD::ones({2}), TensorD::zeros({2}));
    CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("layer_norm gamma=0 leaves only beta") {
    Rng rng(5);
    const TensorD x = TensorD::randn({4, 3}, rng);
    TensorD beta({3}, {1.0, -2.0, 0.5});
    const TensorD out = layer_norm(x, TensorD::zeros({3}), beta);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(out.at(i, j) == beta[j]);
}

TEST_CASE("layer_norm pre-affine rows have zero mean and unit variance") {
    Rng rng(6);
    const TensorD x = TensorD::randn({10, 32}, rng, 3.0);
    const TensorD out = layer_norm(x, TensorD::ones({32}), TensorD::zeros({32}));
    for (std::size_t i = 0; i < 10; ++i) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < 32; ++j) mean += out.at(i, j);
        mean /= 32.0;
        for (std::size_t j = 0; j < 32; ++j)
            var += (out.at(i, j) - mean) * (out.at(i, j) - mean);
        var /= 32.0;
        CHECK(std::abs(mean) <= 1e-10);
        CHECK(std::abs(var - 1.0) <= 1e-6);
    }
}

TEST_CASE("toeplitz materialization") {
    SUBCASE("n=1") {
        const TensorD w({1}, {5.0});
        const TensorD out = toeplitz_materialize(w, 1);
        CHECK(out.at(0, 0) == 5.0);
    }
    SUBCASE("n=2 index map") {
        // oracle: W[i][j] = w[j - i + n - 1] -> [[b, c], [a, b]]
        const TensorD w({3}, {10.0, 20.0, 30.0});
        const TensorD out = toeplitz_materialize(w, 2);
        CHECK(out.at(0, 0) == 20.0);
        CHECK(out.at(0, 1) == 30.0);
        CHECK(out.at(1, 0) == 10.0);
        CHECK(out.at(1, 1) == 20.0);
    }
    SUBCASE("bad length rejected") {
        CHECK_THROWS_AS(toeplitz_materialize(TensorD({4}), 2), std::invalid_argument);
    }
}

// Reference construction by literal pad / tile / reshape / column-slice over a
// flat vector, independent of the index-map formula.
TEST_CASE("toeplitz matches the pad-tile reference procedure") {
    Rng rng(7);
    for (std::size_t n : {2ul, 3ul, 5ul, 8ul}) {
        const TensorD w = TensorD::randn({2 * n - 1}, rng);
        std::vector<double> t;  // pad w with n zeros, tile n times, drop last n
        for (std::size_t rep = 0; rep < n; ++rep) {
            for (std::size_t i = 0; i < 2 * n - 1; ++i) t.push_back(w[i]);
            for (std::size_t i = 0; i < n; ++i) t.push_back(0.0);
        }
        t.resize(t.size() - n);
        const std::size_t cols = 3 * n - 2;  // reshape to [n x (n + 2n-2)]
        const std::size_t r = n - 1;
        const TensorD full = toeplitz_materialize(w, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                CHECK(full.at(i, j) == t[i * cols + r + j]);
    }
}

TEST_CASE("toeplitz diagonals are bitwise constant") {
    Rng rng(8);
    const std::size_t n = 9;
    const TensorD full = toeplitz_materialize(TensorD::randn({2 * n - 1}, rng), n);
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = 0; j + 1 < n; ++j)
            CHECK(full.at(i, j) == full.at(i + 1, j + 1));
}

TEST_CASE("bias broadcasts") {
    const TensorD x = TensorD::zeros({2, 3});
    const TensorD cb({3}, {1, 2, 3});
    const TensorD out = add_channel_bias(x, cb);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(out.at(i, j) == cb[j]);

    const TensorD tb({2}, {5, 7});
    const TensorD out2 = add_token_bias(x, tb);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(out2.at(i, j) == tb[i]);

    CHECK_THROWS_AS(add_channel_bias(x, tb), std::invalid_argument);
    CHECK_THROWS_AS(add_token_bias(x, cb), std::invalid_argument);
}

TEST_CASE("tensor invariant: data length must match shape") {
    CHECK_THROWS_AS(TensorD({2, 2}, {1.0, 2.0}), std::invalid_argument);
}
