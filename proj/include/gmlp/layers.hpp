#pragma once

#include <optional>

#include "gmlp/autodiff.hpp"
#include "gmlp/config.hpp"
#include "gmlp/rng.hpp"

namespace gmlp::nn {

enum class Mode { Train, Eval };

// Spatial projection weights as tape nodes. In dense mode `w` is the full
// [n x n] matrix; in toeplitz mode it is the [2n-1] parameter vector that gets
// materialized on use. `b` is the token-specific bias of length n, added as a
// per-row scalar across channels.
template <typename T>
struct SpatialWeights {
    SpatialMode mode = SpatialMode::Dense;
    typename ad::Tape<T>::Id w{};
    typename ad::Tape<T>::Id b{};
    std::size_t n = 0;
};

template <typename T>
struct NormParams {
    typename ad::Tape<T>::Id gamma{};
    typename ad::Tape<T>::Id beta{};
};

// Single-head attention weights; no biases, one fused qkv projection.
template <typename T>
struct TinyAttnWeights {
    typename ad::Tape<T>::Id wqkv{};  // [d_model x 3*d_attn]
    typename ad::Tape<T>::Id wo{};    // [d_attn x d_out]
    std::size_t d_attn = 64;
};

// X[n x a] * P[a x b] + bias[b].
template <typename T>
typename ad::Tape<T>::Id channel_proj(ad::Tape<T>& t, typename ad::Tape<T>::Id x,
                                      typename ad::Tape<T>::Id p, typename ad::Tape<T>::Id bias) {
    return t.add_channel_bias(t.matmul(x, p), bias);
}

// f(Z) = W Z + b with W shared across channels and b a token bias. The same
// projection weights apply to every channel column.
template <typename T>
typename ad::Tape<T>::Id spatial_proj(ad::Tape<T>& t, typename ad::Tape<T>::Id z,
                                      const SpatialWeights<T>& sw) {
    const auto& zv = t.value(z);
    require(zv.rank() == 2 && zv.extent(0) == sw.n,
            "spatial_proj: Z rows " + shape_str(zv.shape()) + " do not match n=" +
                std::to_string(sw.n));
    typename ad::Tape<T>::Id w2d =
        sw.mode == SpatialMode::Toeplitz ? t.toeplitz(sw.w, sw.n) : sw.w;
    require(t.value(w2d).rank() == 2 && t.value(w2d).extent(0) == sw.n &&
                t.value(w2d).extent(1) == sw.n,
            "spatial_proj: W must be [n x n]");
    return t.add_token_bias(t.matmul(w2d, z), sw.b);
}

// Spatial Gating Unit. Input Z[n x e]; the gate input is normalized before the
// spatial projection. Output channel count is e for linear/additive/
// multiplicative and e/2 for multiplicative_split. `gate_add`, when present,
// is added to the spatial projection output after its bias (the tiny-attention
// fusion point).
template <typename T>
typename ad::Tape<T>::Id sgu(ad::Tape<T>& t, typename ad::Tape<T>::Id z, SguVariant variant,
                             const SpatialWeights<T>& sw, const NormParams<T>& norm,
                             std::optional<typename ad::Tape<T>::Id> gate_add = std::nullopt) {
    const auto& zv = t.value(z);
    require(zv.rank() == 2, "sgu: Z must be [n x e]");
    auto gated = [&](typename ad::Tape<T>::Id gate_in) {
        auto f = spatial_proj(t, t.layer_norm(gate_in, norm.gamma, norm.beta), sw);
        if (gate_add) f = t.add(f, *gate_add);
        return f;
    };
    switch (variant) {
        case SguVariant::Linear:
            return gated(z);
        case SguVariant::Additive:
            return t.add(z, gated(z));
        case SguVariant::Multiplicative:
            return t.mul(z, gated(z));
        case SguVariant::MultiplicativeSplit: {
            require(zv.extent(1) % 2 == 0,
                    "sgu: multiplicative_split requires an even channel count, got " +
                        shape_str(zv.shape()));
            auto [z1, z2] = t.split_last_axis(z);
            return t.mul(z1, gated(z2));
        }
    }
    fail("sgu: bad variant");
}

// Single-head scaled dot-product attention over the normalized block input.
// q, k, v come from one fused projection split three ways; no masking and no
// positional terms.
template <typename T>
typename ad::Tape<T>::Id tiny_attention(ad::Tape<T>& t, typename ad::Tape<T>::Id xn,
                                        const TinyAttnWeights<T>& tw) {
    const auto& qkv_w = t.value(tw.wqkv);
    require(qkv_w.rank() == 2 && qkv_w.extent(1) == 3 * tw.d_attn,
            "tiny_attention: Wqkv must be [d_model x 3*d_attn]");
    const std::size_t a = tw.d_attn;
    auto qkv = t.matmul(xn, tw.wqkv);  // [n x 3*d_attn], thirds are q | k | v
    auto q = t.slice_cols(qkv, 0, a);
    auto k = t.slice_cols(qkv, a, a);
    auto v = t.slice_cols(qkv, 2 * a, a);
    auto scores = t.scale(t.matmul(q, t.transpose(k)),
                          static_cast<T>(1.0 / std::sqrt(static_cast<double>(a))));
    auto attn = t.softmax_rows(scores);
    return t.matmul(t.matmul(attn, v), tw.wo);
}

// Attention probabilities only (value path skipped); used for map export.
template <typename T>
Tensor<T> tiny_attention_weights(ad::Tape<T>& t, typename ad::Tape<T>::Id xn,
                                 const TinyAttnWeights<T>& tw) {
    const std::size_t a = tw.d_attn;
    auto qkv = t.matmul(xn, tw.wqkv);
    auto q = t.slice_cols(qkv, 0, a);
    auto k = t.slice_cols(qkv, a, a);
    auto scores = t.scale(t.matmul(q, t.transpose(k)),
                          static_cast<T>(1.0 / std::sqrt(static_cast<double>(a))));
    return t.value(t.softmax_rows(scores));
}

// Whole-branch drop. Train mode: with probability 1-survival_p the branch
// becomes zeros, otherwise it is scaled by 1/survival_p. Eval mode returns the
// branch unscaled and consumes no randomness.
template <typename T>
typename ad::Tape<T>::Id stochastic_depth(ad::Tape<T>& t, typename ad::Tape<T>::Id branch,
                                          double survival_p, Mode mode, Rng& rng) {
    require(survival_p > 0.0 && survival_p <= 1.0,
            "stochastic_depth: survival_p must be in (0, 1]");
    if (mode == Mode::Eval) return branch;
    const bool keep = rng.uniform() < survival_p;
    return t.scale(branch, keep ? static_cast<T>(1.0 / survival_p) : T(0));
}

// Two-layer token-mixing MLP: W2^T * gelu(W1^T * X + b1) + b2, applied along
// the token axis with hidden width d_spatial. W1 is [n x d_spatial], W2 is
// [d_spatial x n]; b1 has length d_spatial, b2 length n.
template <typename T>
typename ad::Tape<T>::Id mixer_token_mlp(ad::Tape<T>& t, typename ad::Tape<T>::Id x,
                                         typename ad::Tape<T>::Id w1, typename ad::Tape<T>::Id b1,
                                         typename ad::Tape<T>::Id w2, typename ad::Tape<T>::Id b2) {
    const auto& xv = t.value(x);
    const auto& w1v = t.value(w1);
    const auto& w2v = t.value(w2);
    require(xv.rank() == 2 && w1v.rank() == 2 && w2v.rank() == 2 && w1v.extent(0) == xv.extent(0) &&
                w2v.extent(1) == xv.extent(0) && w1v.extent(1) == w2v.extent(0),
            "mixer_token_mlp: shapes do not conform, X=" + shape_str(xv.shape()) +
                " W1=" + shape_str(w1v.shape()) + " W2=" + shape_str(w2v.shape()));
    auto h = t.gelu(t.add_token_bias(t.matmul(t.transpose(w1), x), b1));
    return t.add_token_bias(t.matmul(t.transpose(w2), h), b2);
}

}  // namespace gmlp::nn
