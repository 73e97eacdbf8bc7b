#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmlp/config.hpp"

namespace gmlp::costing {

struct CostItem {
    std::string component;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
};

struct CostReport {
    std::vector<CostItem> items;
    std::uint64_t total_params = 0;
    std::uint64_t total_macs = 0;
    std::uint64_t total_flops = 0;  // 2 * total_macs
};

// Spatial gating MACs: the projection acts on the gate half for the split
// variant (n^2 * e / 2) and on all e channels otherwise (n^2 * e).
std::uint64_t sgu_spatial_macs(std::uint64_t n, std::uint64_t e, SguVariant variant);

// Single-head attention scores + value mix: q k^T plus A v, 2 * n^2 * d.
std::uint64_t attention_scores_mix_macs(std::uint64_t n, std::uint64_t d_attn);

// Closed-form parameter count from the config alone; matches the instantiated
// ParamStore total exactly. Accepts L >= 0 (L = 0 leaves embeddings/head only).
CostReport count_params(const ModelConfig& cfg);

// Closed-form multiply-add count per forward pass at sequence length n.
// Only projection/attention multiplies are counted (normalization, bias adds
// and activations are excluded); FLOPs are reported as 2 * MACs.
CostReport count_macs(const ModelConfig& cfg, int n);

// Params and MACs merged into one per-component table.
CostReport analyze(const ModelConfig& cfg, int n);

}  // namespace gmlp::costing
