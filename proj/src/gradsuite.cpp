#include "gmlp/gradsuite.hpp"

#include <cstdio>
#include <map>

#include "gmlp/training.hpp"

namespace gmlp::check {

namespace {

using Tape = ad::Tape<double>;
using Id = Tape::Id;
using TensorD = Tensor<double>;

// Scalar readout with fixed random weights so upstream adjoints are
// non-uniform: loss = sum(out * C).
Id weighted_sum(Tape& t, Id out, const TensorD& c) {
    return t.sum_to_scalar(t.mul(out, t.leaf(c)));
}

struct OpCase {
    std::string name;
    std::vector<Shape> shapes;
    // Builds the scalar loss from leaves bound to `inputs` (same order).
    std::function<Id(Tape&, const std::vector<Id>&, const TensorD& c)> build;
    Shape out_shape;  // shape of the op output, for the readout weights
};

double run_case_once(const OpCase& cs, const std::vector<TensorD>& inputs, const TensorD& c) {
    Tape t;
    std::vector<Id> ids;
    ids.reserve(inputs.size());
    for (const auto& x : inputs) ids.push_back(t.leaf(x));
    return t.value(cs.build(t, ids, c))[0];
}

void run_case(const OpCase& cs, const SuiteOptions& opts, GradCheckReport& report,
              bool* first_row_corrupted) {
    std::map<std::size_t, GradCheckRow> rows;  // by argument index
    for (int s = 0; s < opts.seeds; ++s) {
        Rng rng(opts.seed0 + static_cast<std::uint64_t>(s) * 7919);
        std::vector<TensorD> inputs;
        inputs.reserve(cs.shapes.size());
        for (const auto& sh : cs.shapes) inputs.push_back(TensorD::randn(sh, rng, 0.8));
        const TensorD c = TensorD::randn(cs.out_shape, rng, 1.0);

        // AD route: one taped forward + backward.
        Tape t;
        std::vector<Id> ids;
        for (const auto& x : inputs) ids.push_back(t.leaf(x));
        t.backward(cs.build(t, ids, c));

        for (std::size_t arg = 0; arg < inputs.size(); ++arg) {
            TensorD g_ad = t.grad(ids[arg]);
            if (opts.corrupt_adjoint && first_row_corrupted && !*first_row_corrupted) {
                g_ad[0] += 1e-3;
                *first_row_corrupted = true;
            }
            const TensorD g_fd = finite_diff_grad(
                [&](const std::vector<TensorD>& xs) { return run_case_once(cs, xs, c); }, inputs,
                arg, opts.eps);
            const double err = max_relative_error(g_ad, g_fd);
            auto [it, fresh] = rows.try_emplace(arg);
            if (fresh) {
                it->second.name = cs.name + "/arg" + std::to_string(arg);
                it->second.shape = cs.shapes[arg];
                it->second.max_rel_err = err;
            } else {
                it->second.max_rel_err = std::max(it->second.max_rel_err, err);
            }
        }
    }
    for (auto& [arg, row] : rows) {
        row.pass = row.max_rel_err <= opts.tol;
        report.rows.push_back(row);
    }
}

std::vector<OpCase> op_catalog() {
    std::vector<OpCase> cases;

    cases.push_back({"matmul",
                     {{5, 4}, {4, 3}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         return weighted_sum(t, t.matmul(in[0], in[1]), c);
                     },
                     {5, 3}});

    cases.push_back({"channel_proj",
                     {{6, 5}, {5, 4}, {4}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         return weighted_sum(t, nn::channel_proj(t, in[0], in[1], in[2]), c);
                     },
                     {6, 4}});

    cases.push_back({"spatial_proj_dense",
                     {{6, 3}, {6, 6}, {6}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         nn::SpatialWeights<double> sw{SpatialMode::Dense, in[1], in[2], 6};
                         return weighted_sum(t, nn::spatial_proj(t, in[0], sw), c);
                     },
                     {6, 3}});

    cases.push_back({"spatial_proj_toeplitz",
                     {{6, 3}, {11}, {6}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         nn::SpatialWeights<double> sw{SpatialMode::Toeplitz, in[1], in[2], 6};
                         return weighted_sum(t, nn::spatial_proj(t, in[0], sw), c);
                     },
                     {6, 3}});

    cases.push_back({"layer_norm",
                     {{5, 8}, {8}, {8}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         return weighted_sum(t, t.layer_norm(in[0], in[1], in[2]), c);
                     },
                     {5, 8}});

    cases.push_back({"gelu",
                     {{4, 7}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         return weighted_sum(t, t.gelu(in[0]), c);
                     },
                     {4, 7}});

    cases.push_back({"softmax_rows",
                     {{5, 6}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         return weighted_sum(t, t.softmax_rows(in[0]), c);
                     },
                     {5, 6}});

    cases.push_back({"split_mul",
                     {{4, 8}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         auto [a, b] = t.split_last_axis(in[0]);
                         return weighted_sum(t, t.mul(a, t.gelu(b)), c);
                     },
                     {4, 4}});

    cases.push_back({"concat_cols",
                     {{3, 4}, {3, 2}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         return weighted_sum(t, t.concat_cols(in[0], in[1]), c);
                     },
                     {3, 6}});

    const auto sgu_case = [](const std::string& name, SguVariant variant, Shape out) {
        return OpCase{name,
                      {{6, 8}, {6, 6}, {6}, {out.back()}, {out.back()}},
                      [variant](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                          nn::SpatialWeights<double> sw{SpatialMode::Dense, in[1], in[2], 6};
                          nn::NormParams<double> norm{in[3], in[4]};
                          return weighted_sum(t, nn::sgu(t, in[0], variant, sw, norm), c);
                      },
                      out};
    };
    cases.push_back(sgu_case("sgu_linear", SguVariant::Linear, {6, 8}));
    cases.push_back(sgu_case("sgu_additive", SguVariant::Additive, {6, 8}));
    cases.push_back(sgu_case("sgu_multiplicative", SguVariant::Multiplicative, {6, 8}));
    // split variant: gate norm acts on the 4-channel half
    cases.push_back({"sgu_multiplicative_split",
                     {{6, 8}, {6, 6}, {6}, {4}, {4}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         nn::SpatialWeights<double> sw{SpatialMode::Dense, in[1], in[2], 6};
                         nn::NormParams<double> norm{in[3], in[4]};
                         return weighted_sum(
                             t, nn::sgu(t, in[0], SguVariant::MultiplicativeSplit, sw, norm), c);
                     },
                     {6, 4}});

    cases.push_back({"tiny_attention",
                     {{5, 8}, {8, 12}, {4, 6}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         nn::TinyAttnWeights<double> tw{in[1], in[2], 4};
                         return weighted_sum(t, nn::tiny_attention(t, in[0], tw), c);
                     },
                     {5, 6}});

    cases.push_back({"mixer_token_mlp",
                     {{6, 4}, {6, 5}, {5}, {5, 6}, {6}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         return weighted_sum(
                             t, nn::mixer_token_mlp(t, in[0], in[1], in[2], in[3], in[4]), c);
                     },
                     {6, 4}});

    // Fixed seeds picked so one case exercises the kept branch (scale 1/p) and
    // one the dropped branch (zeros); both decisions repeat on every eval.
    std::uint64_t keep_seed = 1, drop_seed = 1;
    while (!(Rng(keep_seed).uniform() < 0.7)) ++keep_seed;
    while (Rng(drop_seed).uniform() < 0.7) ++drop_seed;
    for (auto [label, seed] : {std::pair<const char*, std::uint64_t>{"stochastic_depth_keep",
                                                                     keep_seed},
                               {"stochastic_depth_drop", drop_seed}}) {
        cases.push_back({label,
                         {{5, 4}},
                         [seed](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                             Rng rng(seed);
                             auto y = nn::stochastic_depth(t, in[0], 0.7, nn::Mode::Train, rng);
                             return weighted_sum(t, y, c);
                         },
                         {5, 4}});
    }
    cases.push_back({"stochastic_depth_eval",
                     {{5, 4}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         Rng rng(3);
                         auto y = nn::stochastic_depth(t, in[0], 0.4, nn::Mode::Eval, rng);
                         return weighted_sum(t, y, c);
                     },
                     {5, 4}});

    cases.push_back({"gather_tied_logits",
                     {{9, 4}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD& c) {
                         // lookup + tied output projection; rows 2 and 7 repeat
                         auto h = t.gather_rows(in[0], {2, 7, 2, 5});
                         auto logits = t.matmul(h, t.transpose(in[0]));
                         return weighted_sum(t, logits, c);
                     },
                     {4, 9}});

    cases.push_back({"cross_entropy_mean",
                     {{5, 7}},
                     [](Tape& t, const std::vector<Id>& in, const TensorD&) {
                         return t.cross_entropy_mean(in[0], {1, 3, 0, 6, 3});
                     },
                     {}});

    return cases;
}

// ---- block / model scope -------------------------------------------------------

struct ModelCase {
    std::string name;
    ModelConfig cfg;
    model::BuildOptions opts;
    bool whole_model = false;  // false: single block on a leaf input
};

// Number of independent readout vectors per block check. One fixed readout can
// leave individual Jacobian entries with gradients too small for the
// difference quotient to resolve against the block's output magnitude; the
// best-conditioned of several probes keeps every entry verifiable.
constexpr int kBlockReadouts = 3;

double relative_err(double a, double b) {
    return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

void run_model_case(const ModelCase& mc, const SuiteOptions& opts, GradCheckReport& report) {
    std::map<std::string, GradCheckRow> rows;
    // Deep compositions need a larger step than single ops: differencing two
    // O(10) block outputs at eps=1e-5 is cancellation-bound.
    const double eps = std::max(opts.eps, 1e-4);
    for (int s = 0; s < opts.seeds; ++s) {
        Rng rng(opts.seed0 + 1000003 * static_cast<std::uint64_t>(s + 1));
        auto m = model::Model<double>::build(mc.cfg, rng, mc.opts);
        const std::size_t n_entries = m.params().count();

        // Check at a generic random parameter point rather than at init: the
        // near-zero spatial init makes downstream gradients so small that the
        // difference oracle is roundoff-bound there. 0.2 keeps attention
        // scores mild so the oracle itself stays well conditioned.
        for (std::size_t e = 0; e < n_entries; ++e)
            m.params().entry(e).tensor =
                TensorD::randn(m.params().entry(e).shape, rng, 0.2);

        // Flatten (input?, params...) into the oracle's input list.
        std::vector<TensorD> inputs;
        if (!mc.whole_model)
            inputs.push_back(TensorD::randn({static_cast<std::size_t>(mc.cfg.n),
                                             static_cast<std::size_t>(mc.cfg.d_model)},
                                            rng, 0.8));
        for (std::size_t e = 0; e < n_entries; ++e)
            inputs.push_back(m.params().entry(e).tensor);
        const std::size_t param_base = mc.whole_model ? 0 : 1;
        const int n_readouts = kBlockReadouts;

        std::vector<TensorD> readouts;
        for (int k = 0; k < n_readouts; ++k)
            readouts.push_back(TensorD::randn({static_cast<std::size_t>(mc.cfg.n),
                                               static_cast<std::size_t>(mc.cfg.d_model)},
                                              rng, 1.0));
        std::vector<int> tokens(static_cast<std::size_t>(mc.cfg.n));
        for (auto& tk : tokens) tk = static_cast<int>(rng.uniform_below(mc.cfg.vocab_size));
        const std::vector<std::size_t> positions{1, 4, 7};
        // Model scope probes with several target assignments; each is an
        // independent loss over the same forward pass.
        std::vector<std::vector<std::size_t>> targets(n_readouts);
        for (int k = 0; k < n_readouts; ++k)
            for (const auto p : positions)
                targets[k].push_back(
                    static_cast<std::size_t>(tokens[p] + k) % mc.cfg.vocab_size);

        auto write_inputs = [&](const std::vector<TensorD>& xs) {
            for (std::size_t e = 0; e < n_entries; ++e)
                m.params().entry(e).tensor = xs[param_base + e];
        };
        auto block_out = [&](const std::vector<TensorD>& xs) {
            write_inputs(xs);
            Tape t;
            auto b = m.bind(t);
            Rng r(9);
            return t.value(m.block_forward(t, b, t.leaf(xs[0]), 0, nn::Mode::Eval, r));
        };
        // One forward pass, one loss value per target assignment.
        auto model_losses = [&](const std::vector<TensorD>& xs) {
            write_inputs(xs);
            Tape t;
            auto b = m.bind(t);
            Rng r(9);
            Id hidden = m.hidden_tokens(t, b, tokens, nn::Mode::Eval, r);
            Id logits = m.mlm_logits_at(t, b, hidden, positions);
            std::vector<double> out;
            for (int k = 0; k < n_readouts; ++k)
                out.push_back(t.value(t.cross_entropy_mean(logits, targets[k]))[0]);
            return out;
        };

        // AD route: one taped backward per readout.
        write_inputs(inputs);
        std::vector<std::vector<TensorD>> g_ad(n_readouts);  // [readout][arg]
        for (int k = 0; k < n_readouts; ++k) {
            Tape t;
            auto b = m.bind(t);
            Rng r(9);
            Id xid = 0;
            Id loss;
            if (mc.whole_model) {
                Id hidden = m.hidden_tokens(t, b, tokens, nn::Mode::Eval, r);
                loss = t.cross_entropy_mean(m.mlm_logits_at(t, b, hidden, positions),
                                            targets[k]);
            } else {
                xid = t.leaf(inputs[0]);
                loss = weighted_sum(t, m.block_forward(t, b, xid, 0, nn::Mode::Eval, r),
                                    readouts[k]);
            }
            t.backward(loss);
            g_ad[k].reserve(inputs.size());
            for (std::size_t arg = 0; arg < inputs.size(); ++arg)
                g_ad[k].push_back(arg < param_base ? t.grad(xid)
                                                   : t.grad(b.of(arg - param_base)));
        }

        for (std::size_t arg = 0; arg < inputs.size(); ++arg) {
            const std::string label =
                mc.name + "/" +
                (arg < param_base ? "input" : m.params().entry(arg - param_base).name);
            double err = 0.0;
            std::vector<TensorD> probe = inputs;
            for (std::size_t i = 0; i < inputs[arg].size(); ++i) {
                const double saved = probe[arg][i];
                double coord_err = 1e300;
                if (mc.whole_model) {
                    probe[arg][i] = saved + eps;
                    const std::vector<double> fp = model_losses(probe);
                    probe[arg][i] = saved - eps;
                    const std::vector<double> fm = model_losses(probe);
                    for (int k = 0; k < n_readouts; ++k)
                        coord_err = std::min(coord_err,
                                             relative_err(g_ad[k][arg][i],
                                                          (fp[k] - fm[k]) / (2.0 * eps)));
                } else {
                    probe[arg][i] = saved + eps;
                    const TensorD outp = block_out(probe);
                    probe[arg][i] = saved - eps;
                    const TensorD outm = block_out(probe);
                    for (int k = 0; k < n_readouts; ++k) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < outp.size(); ++j)
                            dot += readouts[k][j] * (outp[j] - outm[j]);
                        coord_err = std::min(
                            coord_err, relative_err(g_ad[k][arg][i], dot / (2.0 * eps)));
                    }
                }
                probe[arg][i] = saved;
                err = std::max(err, coord_err);
            }
            write_inputs(inputs);
            auto [it, fresh] = rows.try_emplace(label);
            if (fresh) {
                it->second.name = label;
                it->second.shape = inputs[arg].shape();
                it->second.max_rel_err = err;
            } else {
                it->second.max_rel_err = std::max(it->second.max_rel_err, err);
            }
        }
    }
    for (auto& [label, row] : rows) {
        row.pass = row.max_rel_err <= opts.tol;
        report.rows.push_back(row);
    }
}

ModelConfig block_cfg() {
    ModelConfig cfg;
    cfg.protocol = Protocol::MlmToken;
    cfg.L = 1;
    cfg.d_model = 16;
    cfg.d_ffn = 32;
    cfg.n = 8;
    cfg.sgu_variant = SguVariant::MultiplicativeSplit;
    cfg.spatial_mode = SpatialMode::Dense;
    cfg.vocab_size = 12;
    return cfg;
}

}  // namespace

GradCheckReport check_ops(const SuiteOptions& opts) {
    GradCheckReport report;
    report.tol = opts.tol;
    bool corrupted = false;
    for (const OpCase& cs : op_catalog())
        run_case(cs, opts, report, opts.corrupt_adjoint ? &corrupted : nullptr);
    return report;
}

GradCheckReport check_blocks(const SuiteOptions& opts) {
    GradCheckReport report;
    report.tol = opts.tol;

    ModelCase gm{"gmlp_block", block_cfg(), {}, false};
    run_model_case(gm, opts, report);

    ModelCase am{"amlp_block", block_cfg(), {}, false};
    am.cfg.tiny_attn = 4;
    run_model_case(am, opts, report);

    ModelCase tf{"transformer_block", block_cfg(), {}, false};
    tf.opts.kind = model::BlockKind::TransformerBaseline;
    tf.opts.transformer_heads = 4;
    run_model_case(tf, opts, report);

    ModelCase mx{"mixer_block", block_cfg(), {}, false};
    mx.opts.kind = model::BlockKind::MixerBaseline;
    mx.opts.mixer_d_spatial = 6;
    run_model_case(mx, opts, report);

    return report;
}

GradCheckReport check_model(const SuiteOptions& opts) {
    GradCheckReport report;
    report.tol = opts.tol;
    ModelCase mc{"mlm_model", block_cfg(), {}, true};
    mc.cfg.L = 2;
    run_model_case(mc, opts, report);
    return report;
}

std::string format_report(const GradCheckReport& report) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-42s %-14s %-12s %s\n", "op", "shape", "max_rel_err",
                  "status");
    out += line;
    for (const auto& row : report.rows) {
        std::snprintf(line, sizeof(line), "%-42s %-14s %-12.3e %s\n", row.name.c_str(),
                      shape_str(row.shape).c_str(), row.max_rel_err,
                      row.pass ? "pass" : "FAIL");
        out += line;
    }
    std::snprintf(line, sizeof(line), "worst %.3e (tol %.1e) -> %s\n", report.worst(), report.tol,
                  report.all_pass() ? "PASS" : "FAIL");
    out += line;
    return out;
}

}  // namespace gmlp::check
