#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gmlp/checkpoint.hpp"
#include "gmlp/costing.hpp"
#include "gmlp/gradsuite.hpp"
#include "gmlp/training.hpp"

namespace fs = std::filesystem;
using namespace gmlp;

namespace {

std::uint64_t resolve_seed(std::int64_t flag_seed) {
    if (flag_seed >= 0) return static_cast<std::uint64_t>(flag_seed);
    if (const char* env = std::getenv("GMLP_SEED")) return std::strtoull(env, nullptr, 10);
    return 0;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---- analyze ----------------------------------------------------------------

int cmd_analyze(const std::string& config, int seq_len, const std::string& format) {
    ModelConfig cfg = resolve_config(config);
    const int n = seq_len > 0 ? seq_len : cfg.n;
    const costing::CostReport r = costing::analyze(cfg, n);
    if (format == "csv") {
        std::printf("component,params,macs,flops\n");
        for (const auto& it : r.items)
            std::printf("%s,%" PRIu64 ",%" PRIu64 ",%" PRIu64 "\n", it.component.c_str(),
                        it.params, it.macs, 2 * it.macs);
        std::printf("total,%" PRIu64 ",%" PRIu64 ",%" PRIu64 "\n", r.total_params, r.total_macs,
                    r.total_flops);
    } else {
        std::printf("config: %s  (protocol %s, L=%d, d_model=%d, d_ffn=%d, n=%d)\n",
                    config.c_str(), to_string(cfg.protocol).c_str(), cfg.L, cfg.d_model,
                    cfg.d_ffn, n);
        std::printf("%-22s %16s %18s %18s\n", "component", "params", "MACs", "FLOPs");
        for (const auto& it : r.items)
            std::printf("%-22s %16" PRIu64 " %18" PRIu64 " %18" PRIu64 "\n", it.component.c_str(),
                        it.params, it.macs, 2 * it.macs);
        std::printf("%-22s %16" PRIu64 " %18" PRIu64 " %18" PRIu64 "\n", "total", r.total_params,
                    r.total_macs, r.total_flops);
        std::printf("params: %.2fM   MACs: %.3fB   FLOPs: %.3fB\n",
                    static_cast<double>(r.total_params) / 1e6,
                    static_cast<double>(r.total_macs) / 1e9,
                    static_cast<double>(r.total_flops) / 1e9);
    }
    return 0;
}

// ---- gradcheck ----------------------------------------------------------------

int cmd_gradcheck(const std::string& scope, std::uint64_t seed, int seeds, double tol,
                  bool corrupt) {
    check::SuiteOptions opts;
    opts.seed0 = seed + 1;
    opts.tol = tol;
    opts.corrupt_adjoint = corrupt;
    GradCheckReport report;
    if (scope == "op") {
        opts.seeds = seeds;
        report = check::check_ops(opts);
    } else if (scope == "block") {
        opts.seeds = seeds;
        report = check::check_blocks(opts);
    } else if (scope == "model") {
        opts.seeds = std::min(seeds, 3);  // whole-model FD is expensive
        report = check::check_model(opts);
    } else {
        std::fprintf(stderr, "gradcheck: unknown scope '%s' (op|block|model)\n", scope.c_str());
        return 2;
    }
    std::fputs(check::format_report(report).c_str(), stdout);
    return report.all_pass() ? 0 : 1;
}

// ---- train ----------------------------------------------------------------------

struct TrainArgs {
    std::string task = "copy_shift_1";
    std::string config = "micro";
    int steps = 2000;
    std::int64_t seed = -1;
    std::string out_dir = "train_out";
    std::string dtype = "f32";
    int batch = 16;
    double peak_lr = 3e-3;
    int warmup = 100;
    double weight_decay = 0.01;
    bool freeze_spatial = false;
    std::string mask_split;  // "mask,random" fractions of selected positions
    int eval_every = 50;
    int eval_batch = 64;
};

template <typename T>
int run_train(const TrainArgs& a) {
    ModelConfig cfg = resolve_config(a.config);
    train::SynthTask task = train::parse_task(a.task, cfg.n, cfg.vocab_size);

    train::TrainConfig tc;
    tc.total_steps = a.steps;
    tc.warmup_steps = std::min(a.warmup, a.steps);
    tc.peak_lr = a.peak_lr;
    tc.weight_decay = a.weight_decay;
    tc.batch_size = a.batch;
    tc.seed = resolve_seed(a.seed);
    tc.eval_every = a.eval_every;
    tc.eval_batch = a.eval_batch;
    if (!a.mask_split.empty()) {
        const auto comma = a.mask_split.find(',');
        require(comma != std::string::npos, "--mask-split expects 'mask,random'");
        tc.mask_frac = std::stod(a.mask_split.substr(0, comma));
        tc.random_frac = std::stod(a.mask_split.substr(comma + 1));
    }

    model::BuildOptions opts;
    opts.spatial_zero_init = a.freeze_spatial;
    opts.freeze_spatial = a.freeze_spatial;
    Rng init_rng(tc.seed);
    auto m = model::Model<T>::build(cfg, init_rng, opts);

    fs::create_directories(a.out_dir);
    const std::string csv_path = a.out_dir + "/metrics.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    require(static_cast<bool>(csv), "cannot write " + csv_path);
    csv << "step,lr,train_loss,eval_loss,toeplitzness_mean\n";
    auto on_row = [&](const train::MetricRow& row) {
        csv << row.step << ',' << fmt_double(row.lr) << ',' << fmt_double(row.train_loss) << ','
            << fmt_double(row.eval_loss) << ',' << fmt_double(row.toeplitzness_mean) << '\n';
        csv.flush();
    };

    try {
        const train::TrainResult result = train::train(m, task, tc, on_row);
        io::save_params(m.params(), a.out_dir + "/checkpoint.gmlp");
        std::printf("final_eval_loss %s\n", fmt_double(result.final_eval_loss).c_str());
        std::printf("wall_seconds %.2f\n", result.wall_seconds);
        std::printf("metrics %s\ncheckpoint %s/checkpoint.gmlp\n", csv_path.c_str(),
                    a.out_dir.c_str());
        return 0;
    } catch (const train::DivergenceError& e) {
        std::fprintf(stderr, "%s (partial log kept at %s)\n", e.what(), csv_path.c_str());
        return 1;
    }
}

// ---- ablate ----------------------------------------------------------------------

int cmd_ablate(const std::string& variants_csv, const std::string& task_name,
               const std::string& config, int steps, std::int64_t seed_flag) {
    ModelConfig base = resolve_config(config);
    const std::uint64_t seed = resolve_seed(seed_flag);

    std::vector<std::string> variants;
    std::stringstream ss(variants_csv);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) variants.push_back(item);
    require(!variants.empty(), "ablate: empty variant list");

    std::printf("%-22s %12s %16s %16s\n", "variant", "params", "final_train", "final_eval");
    for (const std::string& v : variants) {
        ModelConfig cfg = base;
        model::BuildOptions opts;
        if (v == "linear") cfg.sgu_variant = SguVariant::Linear;
        else if (v == "additive") cfg.sgu_variant = SguVariant::Additive;
        else if (v == "multiplicative") cfg.sgu_variant = SguVariant::Multiplicative;
        else if (v == "multiplicative_split") cfg.sgu_variant = SguVariant::MultiplicativeSplit;
        else if (v == "mixer") opts.kind = model::BlockKind::MixerBaseline;
        else if (v == "transformer") opts.kind = model::BlockKind::TransformerBaseline;
        else if (v == "frozen") {
            opts.spatial_zero_init = true;
            opts.freeze_spatial = true;
        } else {
            std::fprintf(stderr,
                         "ablate: unknown variant '%s' (linear, additive, multiplicative, "
                         "multiplicative_split, mixer, transformer, frozen)\n",
                         v.c_str());
            return 2;
        }
        if (opts.kind == model::BlockKind::TransformerBaseline && cfg.d_model % 4 == 0)
            opts.transformer_heads = 4;
        else if (opts.kind == model::BlockKind::TransformerBaseline)
            opts.transformer_heads = 1;

        train::SynthTask task = train::parse_task(task_name, cfg.n, cfg.vocab_size);
        train::TrainConfig tc;
        tc.total_steps = steps;
        tc.warmup_steps = std::min(100, steps);
        tc.seed = seed;
        Rng init_rng(seed);
        auto m = model::Model<double>::build(cfg, init_rng, opts);
        const train::TrainResult r = train::train(m, task, tc);
        const double final_train = r.rows.empty() ? 0.0 : r.rows.back().train_loss;
        std::printf("%-22s %12" PRIu64 " %16.6f %16.6f\n", v.c_str(),
                    m.params().total_scalars(), final_train, r.final_eval_loss);
    }
    return 0;
}

// ---- dump-filters -------------------------------------------------------------------

void write_matrix_csv(const std::string& path, const Tensor<double>& w) {
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), "cannot write " + path);
    for (std::size_t i = 0; i < w.extent(0); ++i) {
        for (std::size_t j = 0; j < w.extent(1); ++j)
            out << (j ? "," : "") << fmt_double(w.at(i, j));
        out << '\n';
    }
}

void write_row_csv(const std::string& path, const Tensor<double>& w, std::size_t row) {
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), "cannot write " + path);
    for (std::size_t j = 0; j < w.extent(1); ++j) out << (j ? "," : "") << fmt_double(w.at(row, j));
    out << '\n';
}

// Min-max normalized 8-bit binary PGM of one spatial filter row reshaped to
// the (square) patch grid.
void write_row_pgm(const std::string& path, const Tensor<double>& w, std::size_t row) {
    const std::size_t n = w.extent(1);
    const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    require(g * g == n, "pgm export: n=" + std::to_string(n) + " is not a square patch grid");
    double lo = w.at(row, 0), hi = w.at(row, 0);
    for (std::size_t j = 0; j < n; ++j) {
        lo = std::min(lo, w.at(row, j));
        hi = std::max(hi, w.at(row, j));
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "cannot write " + path);
    out << "P5\n" << g << " " << g << "\n255\n";
    for (std::size_t j = 0; j < n; ++j) {
        const double v = (w.at(row, j) - lo) / span;
        out.put(static_cast<char>(std::llround(v * 255.0)));
    }
}

int cmd_dump_filters(const std::string& ckpt_path, const std::string& out_dir,
                     const std::string& format, const std::string& config,
                     const std::string& tokens_csv) {
    const std::vector<io::RawEntry> entries = io::load_raw(ckpt_path);
    fs::create_directories(out_dir);

    int exported = 0;
    for (const io::RawEntry& e : entries) {
        if (e.name.find(".spatial.weight") == std::string::npos) continue;
        Tensor<double> w = io::raw_to_double(e);
        if (w.rank() == 1) w = toeplitz_materialize(w, (w.extent(0) + 1) / 2);
        std::string base = e.name.substr(0, e.name.find('.'));
        const std::size_t n = w.extent(0);
        const std::size_t mid = n / 2;
        if (format == "pgm") {
            write_row_pgm(out_dir + "/" + base + "_row" + std::to_string(mid) + ".pgm", w, mid);
        } else {
            write_matrix_csv(out_dir + "/" + base + "_W.csv", w);
            write_row_csv(out_dir + "/" + base + "_row" + std::to_string(mid) + ".csv", w, mid);
        }
        ++exported;
    }
    if (exported == 0) {
        std::fprintf(stderr,
                     "dump-filters: no spatial weight tensors in %s (looked for "
                     "*.sgu.spatial.weight)\n",
                     ckpt_path.c_str());
        return 1;
    }
    std::printf("exported %d spatial filter set(s) to %s\n", exported, out_dir.c_str());

    // Attention map export (aMLP checkpoints) needs the model config to
    // rebuild the forward pass.
    const bool has_attn = std::any_of(entries.begin(), entries.end(), [](const io::RawEntry& e) {
        return e.name.find(".attn.wqkv") != std::string::npos;
    });
    if (has_attn && !config.empty()) {
        ModelConfig cfg = resolve_config(config);
        Rng rng(0);
        auto m = model::Model<double>::build(cfg, rng);
        io::load_params(m.params(), ckpt_path);
        std::vector<int> tokens;
        if (!tokens_csv.empty()) {
            std::stringstream ts(tokens_csv);
            for (std::string item; std::getline(ts, item, ',');) tokens.push_back(std::stoi(item));
        } else {
            for (int i = 0; i < cfg.n; ++i) tokens.push_back(i % cfg.vocab_size);
        }
        require(static_cast<int>(tokens.size()) == cfg.n,
                "dump-filters: need exactly n tokens for the attention map");
        const auto maps = m.attention_maps(tokens);
        Tensor<double> max_map = maps.at(0);
        for (const auto& a : maps)
            for (std::size_t i = 0; i < max_map.size(); ++i)
                max_map[i] = std::max(max_map[i], a[i]);
        write_matrix_csv(out_dir + "/attention_max.csv", max_map);
        std::printf("exported max-over-blocks attention map for %zu block(s)\n", maps.size());
    }
    return 0;
}

// ---- fit-scaling ----------------------------------------------------------------------

int cmd_fit_scaling(const std::string& points_path, int samples) {
    std::ifstream in(points_path);
    if (!in) {
        std::fprintf(stderr, "fit-scaling: cannot open %s\n", points_path.c_str());
        return 1;
    }
    std::vector<double> xs, ys;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string a, b, extra;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',')) {
            std::fprintf(stderr, "fit-scaling: line %d: expected 'x,y'\n", lineno);
            return 1;
        }
        if (std::getline(ls, extra, ',')) {
            std::fprintf(stderr, "fit-scaling: line %d: too many fields\n", lineno);
            return 1;
        }
        char* endx = nullptr;
        char* endy = nullptr;
        const double x = std::strtod(a.c_str(), &endx);
        const double y = std::strtod(b.c_str(), &endy);
        const bool xok = endx && *endx == '\0' && !a.empty();
        const bool yok = endy && *endy == '\0' && !b.empty();
        if (!xok || !yok) {
            if (lineno == 1) continue;  // header row
            std::fprintf(stderr, "fit-scaling: line %d: non-numeric value\n", lineno);
            return 1;
        }
        xs.push_back(x);
        ys.push_back(y);
    }
    const train::PowerLawFit fit = train::fit_power_law(xs, ys);
    std::printf("a %s\nalpha %s\nresidual %s\n", fmt_double(fit.coefficient).c_str(),
                fmt_double(fit.exponent).c_str(), fmt_double(fit.residual).c_str());
    if (samples > 1 && !xs.empty()) {
        double lo = xs[0], hi = xs[0];
        for (const double x : xs) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        std::printf("x,fitted_y\n");
        for (int i = 0; i < samples; ++i) {
            const double t = static_cast<double>(i) / (samples - 1);
            const double x = lo * std::pow(hi / lo, t);
            std::printf("%s,%s\n", fmt_double(x).c_str(),
                        fmt_double(fit.coefficient * std::pow(x, -fit.exponent)).c_str());
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gMLP family models: analysis, verification, training, export"};
    app.require_subcommand(1);

    // analyze
    std::string an_config, an_format = "table";
    int an_seqlen = 0;
    auto* analyze = app.add_subcommand("analyze", "parameter and multiply-add accounting");
    analyze->add_option("--config", an_config, "preset name or config JSON path")->required();
    analyze->add_option("--seq-len", an_seqlen, "sequence length override");
    analyze->add_option("--format", an_format, "table|csv");

    // gradcheck
    std::string gc_scope = "op";
    std::int64_t gc_seed = -1;
    int gc_seeds = 20;
    double gc_tol = 1e-5;
    bool gc_corrupt = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks (f64)");
    gradcheck->add_option("--scope", gc_scope, "op|block|model");
    gradcheck->add_option("--seed", gc_seed, "seed (falls back to GMLP_SEED, then 0)");
    gradcheck->add_option("--seeds", gc_seeds,
                          "random restarts per check (model scope caps at 3)");
    gradcheck->add_option("--tol", gc_tol, "max relative error tolerance");
    gradcheck->add_flag("--corrupt-adjoint", gc_corrupt,
                        "testing hook: falsify one gradient to exercise failure reporting");

    // train
    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "desk-scale MLM training on a synthetic task");
    tr->add_option("--task", ta.task, "copy_shift_<k>|mod_sum|periodic");
    tr->add_option("--config", ta.config, "preset name or config JSON path");
    tr->add_option("--steps", ta.steps, "total optimization steps");
    tr->add_option("--seed", ta.seed, "seed (falls back to GMLP_SEED, then 0)");
    tr->add_option("--out", ta.out_dir, "output directory for metrics.csv + checkpoint");
    tr->add_option("--dtype", ta.dtype, "f32|f64");
    tr->add_option("--batch", ta.batch, "batch size");
    tr->add_option("--peak-lr", ta.peak_lr, "peak learning rate");
    tr->add_option("--warmup", ta.warmup, "warmup steps");
    tr->add_option("--weight-decay", ta.weight_decay, "decoupled weight decay");
    tr->add_option("--eval-every", ta.eval_every, "eval cadence in steps");
    tr->add_option("--eval-batch", ta.eval_batch, "held-out eval batch size");
    tr->add_option("--mask-split", ta.mask_split,
                   "corruption split 'mask,random' (keep = remainder); default 1,0");
    tr->add_flag("--freeze-spatial", ta.freeze_spatial,
                 "spatial weights pinned at zero (no-cross-token control)");

    // ablate
    std::string ab_variants = "linear,additive,multiplicative,multiplicative_split";
    std::string ab_task = "copy_shift_1", ab_config = "micro";
    int ab_steps = 1000;
    std::int64_t ab_seed = -1;
    auto* ablate = app.add_subcommand("ablate", "train gating variants on one task");
    ablate->add_option("--variants", ab_variants,
                       "comma list: linear,additive,multiplicative,multiplicative_split,"
                       "mixer,transformer,frozen");
    ablate->add_option("--task", ab_task, "synthetic task");
    ablate->add_option("--config", ab_config, "preset name or config JSON path");
    ablate->add_option("--steps", ab_steps, "steps per variant");
    ablate->add_option("--seed", ab_seed, "shared seed");

    // dump-filters
    std::string df_ckpt, df_out = "filters_out", df_format = "csv", df_config, df_tokens;
    auto* dump = app.add_subcommand("dump-filters", "export spatial weights / attention maps");
    dump->add_option("--checkpoint", df_ckpt, "checkpoint path")->required();
    dump->add_option("--out", df_out, "output directory");
    dump->add_option("--format", df_format, "csv|pgm");
    dump->add_option("--config", df_config, "model config (enables attention map export)");
    dump->add_option("--tokens", df_tokens, "comma list of token ids for the attention map");

    // fit-scaling
    std::string fsc_points;
    int fsc_samples = 0;
    auto* fsc = app.add_subcommand("fit-scaling", "power-law fit of (params, metric) points");
    fsc->add_option("--points", fsc_points, "CSV file of positive x,y pairs")->required();
    fsc->add_option("--samples", fsc_samples, "also emit this many fitted-curve samples");

    CLI11_PARSE(app, argc, argv);

    try {
        if (analyze->parsed()) return cmd_analyze(an_config, an_seqlen, an_format);
        if (gradcheck->parsed())
            return cmd_gradcheck(gc_scope, resolve_seed(gc_seed), gc_seeds, gc_tol, gc_corrupt);
        if (tr->parsed()) {
            require(ta.dtype == "f32" || ta.dtype == "f64", "--dtype must be f32 or f64");
            return ta.dtype == "f64" ? run_train<double>(ta) : run_train<float>(ta);
        }
        if (ablate->parsed())
            return cmd_ablate(ab_variants, ab_task, ab_config, ab_steps, ab_seed);
        if (dump->parsed())
            return cmd_dump_filters(df_ckpt, df_out, df_format, df_config, df_tokens);
        if (fsc->parsed()) return cmd_fit_scaling(fsc_points, fsc_samples);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
