#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gmlp/rng.hpp"

namespace gmlp {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::invalid_argument(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

// Dense row-major n-dimensional array. The only value type that flows through
// the network. No strides, no views; arithmetic rejects shape-incompatible
// operands instead of broadcasting (the single exception is the explicit
// rank-1 bias broadcast in add_channel_bias / add_token_bias).
//
// Treat tensors as immutable once constructed; kernels return fresh values,
// so sharing read-only across threads is safe. Per output element, matmul
// accumulates in ascending k, which keeps results bit-reproducible.
template <typename T>
class Tensor {
public:
    Tensor() = default;  // inert placeholder (size 0); real tensors come from the factories

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {}

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        require(data_.size() == shape_numel(shape_),
                "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                    shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

    static Tensor scalar(T v) { return Tensor({}, {v}); }

    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = static_cast<T>(rng.normal(0.0, stddev));
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& x : data_) {
            if (!std::isfinite(static_cast<double>(x))) return false;
        }
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    require(a.same_shape(b), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                 " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---- elementwise kernels ----------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return out;
}

template <typename T>
void accumulate(Tensor<T>& into, const Tensor<T>& x) {
    detail::require_same_shape(into, x, "accumulate");
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += x[i];
}

template <typename T>
T sum_all(const Tensor<T>& a) {
    T s = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}

// ---- matmul -----------------------------------------------------------------

// C[i][j] = sum_k A[i][k] * B[k][j], accumulated in ascending k for every
// output element so results are bit-reproducible run to run. The i-k-j loop
// order keeps B accesses contiguous without changing that per-element order.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() == 2 && b.rank() == 2,
            "matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
    require(a.extent(1) == b.extent(0), "matmul: inner extents differ, " + shape_str(a.shape()) +
                                            " vs " + shape_str(b.shape()));
    const std::size_t m = a.extent(0), k = a.extent(1), p = b.extent(1);
    Tensor<T> c({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c.data() + i * p;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T aik = a.data()[i * k + kk];
            const T* brow = b.data() + kk * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    require(a.rank() == 2, "transpose: expected rank-2, got " + shape_str(a.shape()));
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor<T> out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

// ---- sanctioned bias broadcasts ----------------------------------------------

// X[n x c] + bias[c], bias added to every row (channel bias).
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    require(x.rank() == 2 && bias.rank() == 1 && bias.extent(0) == x.extent(1),
            "add_channel_bias: need X[n x c] and bias[c], got " + shape_str(x.shape()) + " and " +
                shape_str(bias.shape()));
    Tensor<T> out = x;
    const std::size_t n = x.extent(0), c = x.extent(1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) += bias[j];
    return out;
}

// X[n x c] + bias[n], bias[i] added to every channel of row i (token bias).
template <typename T>
Tensor<T> add_token_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    require(x.rank() == 2 && bias.rank() == 1 && bias.extent(0) == x.extent(0),
            "add_token_bias: need X[n x c] and bias[n], got " + shape_str(x.shape()) + " and " +
                shape_str(bias.shape()));
    Tensor<T> out = x;
    const std::size_t n = x.extent(0), c = x.extent(1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) += bias[i];
    return out;
}

// ---- softmax ------------------------------------------------------------------

// Row-wise exp-normalization with max subtraction. Rejects non-finite input.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    require(x.rank() == 2 && x.extent(1) >= 1,
            "softmax_rows: expected [m x k] with k >= 1, got " + shape_str(x.shape()));
    require(x.all_finite(), "softmax_rows: non-finite input");
    const std::size_t m = x.extent(0), k = x.extent(1);
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.data() + i * k;
        T* orow = out.data() + i * k;
        T mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        for (std::size_t j = 0; j < k; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += orow[j];
        }
        for (std::size_t j = 0; j < k; ++j) orow[j] /= denom;
    }
    return out;
}

// ---- split / concat over the last axis ----------------------------------------

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_last_axis(const Tensor<T>& x) {
    require(x.rank() >= 1, "split_last_axis: rank must be >= 1");
    const std::size_t last = x.extent(x.rank() - 1);
    require(last % 2 == 0,
            "split_last_axis: last extent must be even, got " + shape_str(x.shape()));
    const std::size_t half = last / 2;
    Shape hshape = x.shape();
    hshape.back() = half;
    Tensor<T> a(hshape), b(hshape);
    const std::size_t rows = x.size() / last;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = x.data() + r * last;
        for (std::size_t j = 0; j < half; ++j) {
            a[r * half + j] = src[j];
            b[r * half + j] = src[half + j];
        }
    }
    return {std::move(a), std::move(b)};
}

template <typename T>
Tensor<T> concat_last_axis(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "concat_last_axis");
    require(a.rank() >= 1, "concat_last_axis: rank must be >= 1");
    const std::size_t half = a.extent(a.rank() - 1);
    Shape shape = a.shape();
    shape.back() = 2 * half;
    Tensor<T> out(shape);
    const std::size_t rows = a.size() / half;
    for (std::size_t r = 0; r < rows; ++r) {
        T* dst = out.data() + r * 2 * half;
        for (std::size_t j = 0; j < half; ++j) {
            dst[j] = a[r * half + j];
            dst[half + j] = b[r * half + j];
        }
    }
    return out;
}

// ---- GeLU (exact Gaussian CDF form) --------------------------------------------

template <typename T>
T gelu_scalar(T x) {
    const double xd = static_cast<double>(x);
    return static_cast<T>(xd * 0.5 * (1.0 + std::erf(xd / 1.4142135623730951)));
}

// d/dx gelu = Phi(x) + x * phi(x)
template <typename T>
T gelu_grad_scalar(T x) {
    const double xd = static_cast<double>(x);
    const double cdf = 0.5 * (1.0 + std::erf(xd / 1.4142135623730951));
    const double pdf = std::exp(-0.5 * xd * xd) * 0.3989422804014327;
    return static_cast<T>(cdf + xd * pdf);
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_scalar(out[i]);
    return out;
}

// ---- layer normalization over the channel (last) axis ---------------------------

inline constexpr double kLayerNormEps = 1e-6;

// Per-row mean subtraction, division by sqrt(population variance + eps), then
// affine. Returns the output; optionally exposes the normalized rows and the
// inverse stddev per row for the backward pass.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>* out_xhat = nullptr, Tensor<T>* out_inv_std = nullptr) {
    require(x.rank() == 2, "layer_norm: expected [n x c], got " + shape_str(x.shape()));
    const std::size_t n = x.extent(0), c = x.extent(1);
    require(gamma.rank() == 1 && gamma.extent(0) == c && beta.rank() == 1 && beta.extent(0) == c,
            "layer_norm: gamma/beta must have shape [c]");
    Tensor<T> out(x.shape());
    Tensor<T> xhat(x.shape());
    Tensor<T> inv_std({n});
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = x.data() + i * c;
        T mean = T(0);
        for (std::size_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<T>(c);
        T var = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            const T d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T istd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
        inv_std[i] = istd;
        for (std::size_t j = 0; j < c; ++j) {
            const T xh = (row[j] - mean) * istd;
            xhat[i * c + j] = xh;
            out[i * c + j] = gamma[j] * xh + beta[j];
        }
    }
    if (out_xhat) *out_xhat = std::move(xhat);
    if (out_inv_std) *out_inv_std = std::move(inv_std);
    return out;
}

// ---- Toeplitz materialization ---------------------------------------------------

// W[i][j] = w[(j - i) + (n - 1)]; constant along every diagonal. The parameter
// vector has exactly 2n-1 entries.
template <typename T>
Tensor<T> toeplitz_materialize(const Tensor<T>& w, std::size_t n) {
    require(w.rank() == 1, "toeplitz_materialize: expected rank-1 parameter vector");
    require(n >= 1 && w.extent(0) == 2 * n - 1,
            "toeplitz_materialize: need exactly 2n-1 = " + std::to_string(2 * n - 1) +
                " entries, got " + std::to_string(w.extent(0)));
    Tensor<T> out({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = w[j - i + n - 1];
    return out;
}

}  // namespace gmlp
