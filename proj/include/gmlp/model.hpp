#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "gmlp/config.hpp"
#include "gmlp/layers.hpp"

namespace gmlp::model {

using nn::Mode;

inline constexpr std::size_t kNoEntry = std::numeric_limits<std::size_t>::max();

struct InitSpec {
    enum class Kind { Zeros, Ones, Normal };
    Kind kind = Kind::Zeros;
    double stddev = 0.0;
    bool decay = false;      // participates in decoupled weight decay
    bool trainable = true;

    static InitSpec zeros(bool decay = false) { return {Kind::Zeros, 0.0, decay, true}; }
    static InitSpec ones() { return {Kind::Ones, 0.0, false, true}; }
    static InitSpec normal(double stddev, bool decay = true) {
        return {Kind::Normal, stddev, decay, true};
    }
};

// Named, ordered collection of parameter tensors. Iteration order is the
// registration order and is what every consumer (init draws, optimizer state,
// checkpoints, tape binding) keys off. When built without materialization the
// store records names/shapes/init metadata only, which lets the closed-form
// cost accounting be cross-checked against presets too large to allocate.
template <typename T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Shape shape;
        InitSpec init;
        Tensor<T> tensor;  // empty when the store is shape-only
    };

    explicit ParamStore(bool materialize = true) : materialize_(materialize) {}

    std::size_t add(const std::string& name, Shape shape, InitSpec init, Rng& rng) {
        require(!index_.count(name), "ParamStore: duplicate parameter name " + name);
        Entry e{name, shape, init, Tensor<T>()};
        if (materialize_) {
            switch (init.kind) {
                case InitSpec::Kind::Zeros: e.tensor = Tensor<T>::zeros(shape); break;
                case InitSpec::Kind::Ones: e.tensor = Tensor<T>::ones(shape); break;
                case InitSpec::Kind::Normal:
                    e.tensor = Tensor<T>::randn(shape, rng, init.stddev);
                    break;
            }
        }
        entries_.push_back(std::move(e));
        index_[name] = entries_.size() - 1;
        return entries_.size() - 1;
    }

    bool materialized() const { return materialize_; }
    std::size_t count() const { return entries_.size(); }
    const Entry& entry(std::size_t i) const { return entries_[i]; }
    Entry& entry(std::size_t i) { return entries_[i]; }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "ParamStore: no parameter named " + name);
        return it->second;
    }

    Tensor<T>& tensor(const std::string& name) { return entries_[index_of(name)].tensor; }
    const Tensor<T>& tensor(const std::string& name) const {
        return entries_[index_of(name)].tensor;
    }

    std::uint64_t total_scalars() const {
        std::uint64_t sum = 0;
        for (const auto& e : entries_) sum += shape_numel(e.shape);
        return sum;
    }

private:
    bool materialize_;
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class BlockKind { Gmlp, TransformerBaseline, MixerBaseline };

struct BuildOptions {
    BlockKind kind = BlockKind::Gmlp;
    bool spatial_zero_init = false;  // W exactly 0 (the init-identity limit) instead of sigma
    bool freeze_spatial = false;     // spatial projection weights excluded from updates
    int transformer_heads = 4;       // baseline only; heads * head_dim = d_model
    int mixer_d_spatial = 0;         // baseline only; 0 means 3*n
};

// Spatial weight init: near-zero breaks gradient symmetry while keeping the
// gate at ~identity; the bias starts at exactly one.
inline constexpr double kSpatialInitStddev = 1e-3;

template <typename T>
struct BlockEntries {
    // gMLP / aMLP
    std::size_t norm_g = kNoEntry, norm_b = kNoEntry;
    std::size_t u_w = kNoEntry, u_b = kNoEntry;
    std::size_t sgu_norm_g = kNoEntry, sgu_norm_b = kNoEntry;
    std::size_t sp_w = kNoEntry, sp_b = kNoEntry;
    std::size_t v_w = kNoEntry, v_b = kNoEntry;
    std::size_t attn_wqkv = kNoEntry, attn_wo = kNoEntry;
    // transformer / mixer baselines (second sublayer shares u_/v_ slots)
    std::size_t norm2_g = kNoEntry, norm2_b = kNoEntry;
    std::size_t tok_w1 = kNoEntry, tok_b1 = kNoEntry;
    std::size_t tok_w2 = kNoEntry, tok_b2 = kNoEntry;
};

// A built model: config + options + parameters + the entry-index map used by
// the forward pass. Construction via Model<T>::build.
template <typename T>
class Model {
public:
    using Tape = ad::Tape<T>;
    using Id = typename Tape::Id;

    static Model build(const ModelConfig& cfg, Rng& rng, BuildOptions opts = {},
                       bool materialize = true) {
        cfg.validate();
        if (opts.kind == BlockKind::TransformerBaseline)
            require(cfg.d_model % opts.transformer_heads == 0,
                    "transformer baseline: heads must divide d_model");
        Model m(cfg, opts, materialize);
        m.register_params(rng);
        return m;
    }

    const ModelConfig& config() const { return cfg_; }
    const BuildOptions& options() const { return opts_; }
    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }

    // MLM vocabulary: ids [0, vocab_size) are data tokens, the embedding table
    // carries one extra sentinel row used as the mask token.
    int mask_token_id() const { return cfg_.vocab_size; }

    // ---- tape binding -------------------------------------------------------

    struct Binding {
        Tape* tape = nullptr;
        Id base = 0;
        Id of(std::size_t entry) const { return base + static_cast<Id>(entry); }
    };

    // Registers every parameter tensor as a tape leaf, in entry order.
    Binding bind(Tape& t) const {
        require(store_.materialized(), "Model: cannot bind a shape-only store");
        Binding b{&t, static_cast<Id>(t.size())};
        for (std::size_t i = 0; i < store_.count(); ++i) {
            Id id = t.leaf(store_.entry(i).tensor);
            (void)id;
        }
        return b;
    }

    // ---- forward ------------------------------------------------------------

    // Token protocol: embedding lookup, L blocks, final layer norm.
    Id hidden_tokens(Tape& t, const Binding& b, const std::vector<int>& tokens, Mode mode,
                     Rng& rng) const {
        require(cfg_.protocol == Protocol::MlmToken, "hidden_tokens: not an mlm_token model");
        require(static_cast<int>(tokens.size()) == cfg_.n,
                "hidden_tokens: expected exactly n=" + std::to_string(cfg_.n) + " tokens");
        std::vector<std::size_t> idx(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            require(tokens[i] >= 0 && tokens[i] <= mask_token_id(),
                    "hidden_tokens: token id out of range");
            idx[i] = static_cast<std::size_t>(tokens[i]);
        }
        Id x = t.gather_rows(b.of(embed_), std::move(idx));
        if (pos_emb_ != kNoEntry) x = t.add(x, b.of(pos_emb_));
        x = run_blocks(t, b, x, mode, rng);
        return t.layer_norm(x, b.of(final_norm_g_), b.of(final_norm_b_));
    }

    // Vision protocol: linear patch embedding over pre-flattened patches
    // [n x patch_dim], L blocks, final layer norm.
    Id hidden_patches(Tape& t, const Binding& b, const Tensor<T>& patches, Mode mode,
                      Rng& rng) const {
        require(cfg_.protocol == Protocol::VisionPatch, "hidden_patches: not a vision model");
        require(patches.rank() == 2 && patches.extent(0) == static_cast<std::size_t>(cfg_.n) &&
                    patches.extent(1) == static_cast<std::size_t>(cfg_.patch_dim()),
                "hidden_patches: expected [n x patch_dim] = [" + std::to_string(cfg_.n) + " x " +
                    std::to_string(cfg_.patch_dim()) + "], got " + shape_str(patches.shape()));
        Id x = nn::channel_proj(t, t.leaf(patches), b.of(patch_w_), b.of(patch_b_));
        x = run_blocks(t, b, x, mode, rng);
        return t.layer_norm(x, b.of(final_norm_g_), b.of(final_norm_b_));
    }

    // Logits for the rows of `hidden` listed in `positions`, against the data
    // vocabulary. Tied to the embedding transpose, plus an output bias.
    Id mlm_logits_at(Tape& t, const Binding& b, Id hidden,
                     const std::vector<std::size_t>& positions) const {
        Id h = t.gather_rows(hidden, positions);
        Id logits_full = t.matmul(h, t.transpose(b.of(embed_)));
        Id logits = t.slice_cols(logits_full, 0, static_cast<std::size_t>(cfg_.vocab_size));
        return t.add_channel_bias(logits, b.of(out_bias_));
    }

    // Mean-pool over tokens followed by the classifier head: [1 x num_classes].
    Id vision_logits(Tape& t, const Binding& b, Id hidden) const {
        const std::size_t n = static_cast<std::size_t>(cfg_.n);
        Id pool = t.leaf(Tensor<T>::full({1, n}, static_cast<T>(1.0 / static_cast<double>(n))));
        Id pooled = t.matmul(pool, hidden);
        return nn::channel_proj(t, pooled, b.of(head_w_), b.of(head_b_));
    }

    // Per-block attention probability maps for an MLM input (aMLP only).
    std::vector<Tensor<T>> attention_maps(const std::vector<int>& tokens) const {
        require(cfg_.tiny_attn.has_value(), "attention_maps: model has no tiny attention");
        Tape t;
        Binding b = bind(t);
        Rng rng(0);
        std::vector<Tensor<T>> maps;
        std::vector<std::size_t> idx(tokens.begin(), tokens.end());
        Id x = t.gather_rows(b.of(embed_), idx);
        for (const auto& be : blocks_) {
            Id xn = t.layer_norm(x, b.of(be.norm_g), b.of(be.norm_b));
            nn::TinyAttnWeights<T> tw{b.of(be.attn_wqkv), b.of(be.attn_wo),
                                      static_cast<std::size_t>(*cfg_.tiny_attn)};
            maps.push_back(nn::tiny_attention_weights(t, xn, tw));
            x = gmlp_block_forward(t, b, x, be, Mode::Eval, rng);
        }
        return maps;
    }

    const std::vector<BlockEntries<T>>& blocks() const { return blocks_; }

    // Forward one gMLP/aMLP block (exposed for block-level tests).
    Id block_forward(Tape& t, const Binding& b, Id x, std::size_t block_idx, Mode mode,
                     Rng& rng) const {
        const BlockEntries<T>& be = blocks_.at(block_idx);
        switch (opts_.kind) {
            case BlockKind::Gmlp: return gmlp_block_forward(t, b, x, be, mode, rng);
            case BlockKind::TransformerBaseline:
                return transformer_block_forward(t, b, x, be, mode, rng);
            case BlockKind::MixerBaseline: return mixer_block_forward(t, b, x, be, mode, rng);
        }
        fail("block_forward: bad kind");
    }

private:
    Model(const ModelConfig& cfg, const BuildOptions& opts, bool materialize)
        : cfg_(cfg), opts_(opts), store_(materialize) {}

    // ---- parameter registration ---------------------------------------------

    void register_params(Rng& rng) {
        const auto d = static_cast<std::size_t>(cfg_.d_model);
        const auto n = static_cast<std::size_t>(cfg_.n);
        if (cfg_.protocol == Protocol::MlmToken) {
            embed_ = store_.add("embed.tokens",
                                {static_cast<std::size_t>(cfg_.vocab_size) + 1, d},
                                InitSpec::normal(1.0 / std::sqrt(static_cast<double>(d))), rng);
            if (opts_.kind == BlockKind::TransformerBaseline)
                pos_emb_ = store_.add("embed.positions", {n, d}, InitSpec::normal(0.02), rng);
        } else {
            const auto pd = static_cast<std::size_t>(cfg_.patch_dim());
            patch_w_ = store_.add("stem.patch.weight", {pd, d},
                                  InitSpec::normal(1.0 / std::sqrt(static_cast<double>(pd))), rng);
            patch_b_ = store_.add("stem.patch.bias", {d}, InitSpec::zeros(), rng);
        }
        for (int l = 0; l < cfg_.L; ++l) register_block(l, rng);
        final_norm_g_ = store_.add("final_norm.gamma", {d}, InitSpec::ones(), rng);
        final_norm_b_ = store_.add("final_norm.beta", {d}, InitSpec::zeros(), rng);
        if (cfg_.protocol == Protocol::MlmToken) {
            out_bias_ = store_.add("head.out_bias", {static_cast<std::size_t>(cfg_.vocab_size)},
                                   InitSpec::zeros(), rng);
        } else {
            const auto classes = static_cast<std::size_t>(cfg_.num_classes);
            head_w_ = store_.add("head.weight", {d, classes},
                                 InitSpec::normal(1.0 / std::sqrt(static_cast<double>(d))), rng);
            head_b_ = store_.add("head.bias", {classes}, InitSpec::zeros(), rng);
        }
    }

    std::string block_prefix(int l) const {
        std::string idx = std::to_string(l);
        while (idx.size() < 3) idx.insert(idx.begin(), '0');
        return "block" + idx + ".";
    }

    void register_block(int l, Rng& rng) {
        const auto d = static_cast<std::size_t>(cfg_.d_model);
        const auto ffn = static_cast<std::size_t>(cfg_.d_ffn);
        const auto n = static_cast<std::size_t>(cfg_.n);
        const std::string p = block_prefix(l);
        BlockEntries<T> be;
        const double lecun_d = 1.0 / std::sqrt(static_cast<double>(d));
        switch (opts_.kind) {
            case BlockKind::Gmlp: {
                const auto gate = static_cast<std::size_t>(cfg_.gate_channels());
                const auto out_ch = static_cast<std::size_t>(cfg_.sgu_output_channels());
                be.norm_g = store_.add(p + "norm.gamma", {d}, InitSpec::ones(), rng);
                be.norm_b = store_.add(p + "norm.beta", {d}, InitSpec::zeros(), rng);
                be.u_w = store_.add(p + "proj_in.weight", {d, ffn}, InitSpec::normal(lecun_d), rng);
                be.u_b = store_.add(p + "proj_in.bias", {ffn}, InitSpec::zeros(), rng);
                be.sgu_norm_g = store_.add(p + "sgu.norm.gamma", {gate}, InitSpec::ones(), rng);
                be.sgu_norm_b = store_.add(p + "sgu.norm.beta", {gate}, InitSpec::zeros(), rng);
                InitSpec sp = opts_.spatial_zero_init ? InitSpec::zeros(true)
                                                      : InitSpec::normal(kSpatialInitStddev);
                sp.trainable = !opts_.freeze_spatial;
                const Shape sp_shape = cfg_.spatial_mode == SpatialMode::Toeplitz
                                           ? Shape{2 * n - 1}
                                           : Shape{n, n};
                be.sp_w = store_.add(p + "sgu.spatial.weight", sp_shape, sp, rng);
                InitSpec spb = InitSpec::ones();
                spb.trainable = !opts_.freeze_spatial;
                be.sp_b = store_.add(p + "sgu.spatial.bias", {n}, spb, rng);
                be.v_w = store_.add(p + "proj_out.weight", {out_ch, d},
                                    InitSpec::normal(1.0 / std::sqrt(static_cast<double>(out_ch))),
                                    rng);
                be.v_b = store_.add(p + "proj_out.bias", {d}, InitSpec::zeros(), rng);
                if (cfg_.tiny_attn) {
                    const auto a = static_cast<std::size_t>(*cfg_.tiny_attn);
                    be.attn_wqkv = store_.add(p + "attn.wqkv", {d, 3 * a},
                                              InitSpec::normal(lecun_d), rng);
                    be.attn_wo = store_.add(
                        p + "attn.wo", {a, static_cast<std::size_t>(cfg_.sgu_output_channels())},
                        InitSpec::normal(1.0 / std::sqrt(static_cast<double>(a))), rng);
                }
                break;
            }
            case BlockKind::TransformerBaseline: {
                be.norm_g = store_.add(p + "attn.norm.gamma", {d}, InitSpec::ones(), rng);
                be.norm_b = store_.add(p + "attn.norm.beta", {d}, InitSpec::zeros(), rng);
                be.attn_wqkv =
                    store_.add(p + "attn.wqkv", {d, 3 * d}, InitSpec::normal(lecun_d), rng);
                be.attn_wo = store_.add(p + "attn.wo", {d, d}, InitSpec::normal(lecun_d), rng);
                be.norm2_g = store_.add(p + "ffn.norm.gamma", {d}, InitSpec::ones(), rng);
                be.norm2_b = store_.add(p + "ffn.norm.beta", {d}, InitSpec::zeros(), rng);
                be.u_w =
                    store_.add(p + "ffn.proj_in.weight", {d, ffn}, InitSpec::normal(lecun_d), rng);
                be.u_b = store_.add(p + "ffn.proj_in.bias", {ffn}, InitSpec::zeros(), rng);
                be.v_w = store_.add(p + "ffn.proj_out.weight", {ffn, d},
                                    InitSpec::normal(1.0 / std::sqrt(static_cast<double>(ffn))),
                                    rng);
                be.v_b = store_.add(p + "ffn.proj_out.bias", {d}, InitSpec::zeros(), rng);
                break;
            }
            case BlockKind::MixerBaseline: {
                const auto ds = static_cast<std::size_t>(
                    opts_.mixer_d_spatial > 0 ? opts_.mixer_d_spatial : 3 * cfg_.n);
                be.norm_g = store_.add(p + "token_mlp.norm.gamma", {d}, InitSpec::ones(), rng);
                be.norm_b = store_.add(p + "token_mlp.norm.beta", {d}, InitSpec::zeros(), rng);
                be.tok_w1 = store_.add(p + "token_mlp.w1", {n, ds},
                                       InitSpec::normal(1.0 / std::sqrt(static_cast<double>(n))),
                                       rng);
                be.tok_b1 = store_.add(p + "token_mlp.b1", {ds}, InitSpec::zeros(), rng);
                be.tok_w2 = store_.add(p + "token_mlp.w2", {ds, n},
                                       InitSpec::normal(1.0 / std::sqrt(static_cast<double>(ds))),
                                       rng);
                be.tok_b2 = store_.add(p + "token_mlp.b2", {n}, InitSpec::zeros(), rng);
                be.norm2_g = store_.add(p + "ffn.norm.gamma", {d}, InitSpec::ones(), rng);
                be.norm2_b = store_.add(p + "ffn.norm.beta", {d}, InitSpec::zeros(), rng);
                be.u_w =
                    store_.add(p + "ffn.proj_in.weight", {d, ffn}, InitSpec::normal(lecun_d), rng);
                be.u_b = store_.add(p + "ffn.proj_in.bias", {ffn}, InitSpec::zeros(), rng);
                be.v_w = store_.add(p + "ffn.proj_out.weight", {ffn, d},
                                    InitSpec::normal(1.0 / std::sqrt(static_cast<double>(ffn))),
                                    rng);
                be.v_b = store_.add(p + "ffn.proj_out.bias", {d}, InitSpec::zeros(), rng);
                break;
            }
        }
        blocks_.push_back(be);
    }

    // ---- block forwards -------------------------------------------------------

    Id run_blocks(Tape& t, const Binding& b, Id x, Mode mode, Rng& rng) const {
        for (std::size_t l = 0; l < blocks_.size(); ++l)
            x = block_forward(t, b, x, l, mode, rng);
        return x;
    }

    nn::SpatialWeights<T> spatial_weights(const Binding& b, const BlockEntries<T>& be) const {
        return nn::SpatialWeights<T>{cfg_.spatial_mode, b.of(be.sp_w), b.of(be.sp_b),
                                     static_cast<std::size_t>(cfg_.n)};
    }

    // shortcut + proj_out(sgu(gelu(proj_in(norm(x))))), branch gated by
    // stochastic depth. Tiny attention, when configured, reads the normalized
    // block input and is added to the gate after its bias.
    Id gmlp_block_forward(Tape& t, const Binding& b, Id x, const BlockEntries<T>& be, Mode mode,
                          Rng& rng) const {
        Id shortcut = x;
        Id xn = t.layer_norm(x, b.of(be.norm_g), b.of(be.norm_b));
        Id z = t.gelu(nn::channel_proj(t, xn, b.of(be.u_w), b.of(be.u_b)));
        std::optional<Id> gate_add;
        if (cfg_.tiny_attn) {
            nn::TinyAttnWeights<T> tw{b.of(be.attn_wqkv), b.of(be.attn_wo),
                                      static_cast<std::size_t>(*cfg_.tiny_attn)};
            gate_add = nn::tiny_attention(t, xn, tw);
        }
        nn::NormParams<T> gate_norm{b.of(be.sgu_norm_g), b.of(be.sgu_norm_b)};
        Id gated = nn::sgu(t, z, cfg_.sgu_variant, spatial_weights(b, be), gate_norm, gate_add);
        Id y = nn::channel_proj(t, gated, b.of(be.v_w), b.of(be.v_b));
        y = nn::stochastic_depth(t, y, cfg_.survival_prob, mode, rng);
        return t.add(y, shortcut);
    }

    Id multihead_attention(Tape& t, const Binding& b, Id xn, const BlockEntries<T>& be) const {
        const std::size_t d = static_cast<std::size_t>(cfg_.d_model);
        const std::size_t h = static_cast<std::size_t>(opts_.transformer_heads);
        const std::size_t dh = d / h;
        Id qkv = t.matmul(xn, b.of(be.attn_wqkv));  // [n x 3d], thirds q | k | v
        Id out{};
        for (std::size_t i = 0; i < h; ++i) {
            Id q = t.slice_cols(qkv, i * dh, dh);
            Id k = t.slice_cols(qkv, d + i * dh, dh);
            Id v = t.slice_cols(qkv, 2 * d + i * dh, dh);
            Id scores = t.scale(t.matmul(q, t.transpose(k)),
                                static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
            Id ctx = t.matmul(t.softmax_rows(scores), v);
            out = i == 0 ? ctx : t.concat_cols(out, ctx);
        }
        return t.matmul(out, b.of(be.attn_wo));
    }

    Id ffn_sublayer(Tape& t, const Binding& b, Id x, const BlockEntries<T>& be, Mode mode,
                    Rng& rng) const {
        Id xn = t.layer_norm(x, b.of(be.norm2_g), b.of(be.norm2_b));
        Id h = t.gelu(nn::channel_proj(t, xn, b.of(be.u_w), b.of(be.u_b)));
        Id y = nn::channel_proj(t, h, b.of(be.v_w), b.of(be.v_b));
        y = nn::stochastic_depth(t, y, cfg_.survival_prob, mode, rng);
        return t.add(y, x);
    }

    Id transformer_block_forward(Tape& t, const Binding& b, Id x, const BlockEntries<T>& be,
                                 Mode mode, Rng& rng) const {
        Id xn = t.layer_norm(x, b.of(be.norm_g), b.of(be.norm_b));
        Id a = multihead_attention(t, b, xn, be);
        a = nn::stochastic_depth(t, a, cfg_.survival_prob, mode, rng);
        x = t.add(a, x);
        return ffn_sublayer(t, b, x, be, mode, rng);
    }

    Id mixer_block_forward(Tape& t, const Binding& b, Id x, const BlockEntries<T>& be, Mode mode,
                           Rng& rng) const {
        Id xn = t.layer_norm(x, b.of(be.norm_g), b.of(be.norm_b));
        Id mixed = nn::mixer_token_mlp(t, xn, b.of(be.tok_w1), b.of(be.tok_b1), b.of(be.tok_w2),
                                       b.of(be.tok_b2));
        mixed = nn::stochastic_depth(t, mixed, cfg_.survival_prob, mode, rng);
        x = t.add(mixed, x);
        return ffn_sublayer(t, b, x, be, mode, rng);
    }

    ModelConfig cfg_;
    BuildOptions opts_;
    ParamStore<T> store_;
    std::vector<BlockEntries<T>> blocks_;

    std::size_t embed_ = kNoEntry, pos_emb_ = kNoEntry;
    std::size_t patch_w_ = kNoEntry, patch_b_ = kNoEntry;
    std::size_t final_norm_g_ = kNoEntry, final_norm_b_ = kNoEntry;
    std::size_t head_w_ = kNoEntry, head_b_ = kNoEntry;
    std::size_t out_bias_ = kNoEntry;
};

// Flattens an [H x W x C] image into [n x patch*patch*C] row-major patches.
template <typename T>
Tensor<T> flatten_patches(const Tensor<T>& image, int patch_size) {
    require(image.rank() == 3, "flatten_patches: expected [H x W x C]");
    const std::size_t h = image.extent(0), w = image.extent(1), c = image.extent(2);
    const auto p = static_cast<std::size_t>(patch_size);
    require(p >= 1 && h % p == 0 && w % p == 0, "flatten_patches: patch must tile the image");
    const std::size_t gh = h / p, gw = w / p;
    Tensor<T> out({gh * gw, p * p * c});
    for (std::size_t gi = 0; gi < gh; ++gi)
        for (std::size_t gj = 0; gj < gw; ++gj) {
            const std::size_t row = gi * gw + gj;
            std::size_t col = 0;
            for (std::size_t pi = 0; pi < p; ++pi)
                for (std::size_t pj = 0; pj < p; ++pj)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        out.at(row, col++) = image[((gi * p + pi) * w + (gj * p + pj)) * c + ch];
        }
    return out;
}

}  // namespace gmlp::model
