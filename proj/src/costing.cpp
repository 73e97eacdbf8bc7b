#include "gmlp/costing.hpp"

#include "gmlp/tensor.hpp"

namespace gmlp::costing {

namespace {

using u64 = std::uint64_t;

void push(CostReport& r, const std::string& name, u64 params, u64 macs) {
    r.items.push_back({name, params, macs});
    r.total_params += params;
    r.total_macs += macs;
}

void finish(CostReport& r) { r.total_flops = 2 * r.total_macs; }

}  // namespace

u64 sgu_spatial_macs(u64 n, u64 e, SguVariant variant) {
    if (variant == SguVariant::MultiplicativeSplit) {
        require(e % 2 == 0, "sgu_spatial_macs: split variant needs even e");
        return n * n * (e / 2);
    }
    return n * n * e;
}

u64 attention_scores_mix_macs(u64 n, u64 d_attn) { return 2 * n * n * d_attn; }

// Itemization convention: every tensor the model allocates is counted,
// including norm affines and biases. The MLM output projection is tied to the
// embedding (zero extra weights, one bias of vocab_size); the embedding table
// carries one extra sentinel row for the mask token. The vision head pools
// over tokens, so it has no class-token parameters.
CostReport count_params(const ModelConfig& cfg) {
    require(cfg.L >= 0, "count_params: L must be >= 0");
    const u64 d = cfg.d_model, ffn = cfg.d_ffn, n = cfg.n;
    const u64 gate = cfg.gate_channels();
    const u64 out_ch = cfg.sgu_output_channels();
    CostReport r;

    if (cfg.protocol == Protocol::MlmToken) {
        push(r, "embedding", (static_cast<u64>(cfg.vocab_size) + 1) * d, 0);
    } else {
        push(r, "patch_embed", static_cast<u64>(cfg.patch_dim()) * d + d, 0);
    }

    u64 block = 0;
    block += 2 * d;            // block norm
    block += d * ffn + ffn;    // proj_in
    block += 2 * gate;         // gate norm
    block += (cfg.spatial_mode == SpatialMode::Toeplitz ? 2 * n - 1 : n * n) + n;  // spatial W, b
    block += out_ch * d + d;   // proj_out
    if (cfg.tiny_attn) {
        const u64 a = *cfg.tiny_attn;
        block += d * 3 * a + a * out_ch;  // fused qkv + output projection, no biases
    }
    push(r, "blocks(" + std::to_string(cfg.L) + ")", static_cast<u64>(cfg.L) * block, 0);

    push(r, "final_norm", 2 * d, 0);
    if (cfg.protocol == Protocol::MlmToken) {
        push(r, "head(tied)", static_cast<u64>(cfg.vocab_size), 0);  // output bias only
    } else {
        push(r, "head", d * static_cast<u64>(cfg.num_classes) + cfg.num_classes, 0);
    }
    finish(r);
    return r;
}

CostReport count_macs(const ModelConfig& cfg, int n_in) {
    require(n_in >= 1, "count_macs: n must be >= 1");
    const u64 n = n_in, d = cfg.d_model, ffn = cfg.d_ffn;
    const u64 out_ch = cfg.sgu_output_channels();
    CostReport r;

    if (cfg.protocol == Protocol::VisionPatch)
        push(r, "patch_embed", 0, n * static_cast<u64>(cfg.patch_dim()) * d);
    else
        push(r, "embedding", 0, 0);  // table lookup

    u64 block = 0;
    block += n * d * ffn;                                     // proj_in
    block += sgu_spatial_macs(n, ffn, cfg.sgu_variant);       // spatial gating
    block += n * out_ch * d;                                  // proj_out
    if (cfg.tiny_attn) {
        const u64 a = *cfg.tiny_attn;
        block += n * d * 3 * a;                   // fused qkv projection
        block += attention_scores_mix_macs(n, a); // scores + value mix
        block += n * a * out_ch;                  // output projection
    }
    push(r, "blocks(" + std::to_string(cfg.L) + ")", 0, static_cast<u64>(cfg.L) * block);

    push(r, "final_norm", 0, 0);
    if (cfg.protocol == Protocol::MlmToken)
        push(r, "head(tied)", 0, n * d * static_cast<u64>(cfg.vocab_size));
    else
        push(r, "head", 0, d * static_cast<u64>(cfg.num_classes));
    finish(r);
    return r;
}

CostReport analyze(const ModelConfig& cfg, int n) {
    const CostReport p = count_params(cfg);
    const CostReport m = count_macs(cfg, n);
    require(p.items.size() == m.items.size(), "analyze: breakdown mismatch");
    CostReport r;
    for (std::size_t i = 0; i < p.items.size(); ++i)
        push(r, p.items[i].component, p.items[i].params, m.items[i].macs);
    finish(r);
    return r;
}

}  // namespace gmlp::costing
