#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gmlp/model.hpp"

namespace gmlp::train {

// Optimizer and schedule settings. Defaults mirror the MLM pretraining recipe
// (AdamW, betas (0.9, 0.999), eps 1e-6, weight decay 0.01, linear decay),
// scaled down to desk-size step counts.
struct TrainConfig {
    double peak_lr = 3e-3;
    int warmup_steps = 100;
    int total_steps = 2000;
    enum class Decay { Linear, Cosine };
    Decay decay = Decay::Linear;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-6;
    int batch_size = 16;
    std::uint64_t seed = 0;

    // Corruption split applied to selected positions. Synthetic-task training
    // defaults to pure mask replacement so the token-independent loss floor is
    // exactly log(vocab); BERT-style streams use 0.8 / 0.1 (keep = remainder).
    double mask_frac = 1.0;
    double random_frac = 0.0;

    int eval_batch = 64;
    int eval_every = 50;

    void validate() const {
        require(total_steps >= 1, "train config: total_steps must be >= 1");
        require(warmup_steps >= 0 && warmup_steps <= total_steps,
                "train config: need 0 <= warmup_steps <= total_steps");
        require(peak_lr > 0.0, "train config: peak_lr must be positive");
        require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
                "train config: betas must lie in [0, 1)");
        require(adam_eps > 0.0, "train config: adam_eps must be positive");
        require(weight_decay >= 0.0, "train config: weight_decay must be >= 0");
        require(batch_size >= 1 && eval_batch >= 1 && eval_every >= 1,
                "train config: batch sizes and eval cadence must be >= 1");
        require(mask_frac >= 0.0 && random_frac >= 0.0 && mask_frac + random_frac <= 1.0,
                "train config: corruption fractions must be nonnegative and sum to <= 1");
    }
};

// Warmup ramp 0 -> peak over warmup_steps, then decay to zero (linear or
// cosine). Steps are 1-indexed by the training loop; step 0 maps to lr 0.
inline double lr_schedule(int step, const TrainConfig& tc) {
    require(step >= 0 && step <= tc.total_steps, "lr_schedule: step out of [0, total_steps]");
    if (step <= tc.warmup_steps) {
        if (tc.warmup_steps == 0) return tc.peak_lr;
        return tc.peak_lr * static_cast<double>(step) / static_cast<double>(tc.warmup_steps);
    }
    const double progress = static_cast<double>(step - tc.warmup_steps) /
                            static_cast<double>(tc.total_steps - tc.warmup_steps);
    if (tc.decay == TrainConfig::Decay::Linear) return tc.peak_lr * (1.0 - progress);
    return tc.peak_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// ---- optimizer ---------------------------------------------------------------

template <typename T>
struct TrainState {
    int step = 0;
    std::vector<Tensor<T>> m;  // first moments, aligned with ParamStore entries
    std::vector<Tensor<T>> v;  // second moments

    static TrainState init(const model::ParamStore<T>& params) {
        TrainState st;
        st.m.reserve(params.count());
        st.v.reserve(params.count());
        for (std::size_t i = 0; i < params.count(); ++i) {
            st.m.push_back(Tensor<T>::zeros(params.entry(i).shape));
            st.v.push_back(Tensor<T>::zeros(params.entry(i).shape));
        }
        return st;
    }
};

template <typename T>
using NamedGrads = std::vector<std::pair<std::string, Tensor<T>>>;

// Bias-corrected Adam step plus decoupled weight decay lr_t * wd * theta.
// Grads must be aligned with the store by name; norm gains and bias vectors
// (decay=false entries) are excluded from the decay term, frozen entries are
// skipped entirely.
template <typename T>
void adamw_step(model::ParamStore<T>& params, const NamedGrads<T>& grads, TrainState<T>& state,
                double lr_t, const TrainConfig& tc) {
    require(grads.size() == params.count(),
            "adamw_step: got " + std::to_string(grads.size()) + " grads for " +
                std::to_string(params.count()) + " parameters");
    state.step += 1;
    const double b1 = tc.adam_beta1, b2 = tc.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, state.step);
    const double corr2 = 1.0 - std::pow(b2, state.step);
    for (std::size_t e = 0; e < params.count(); ++e) {
        auto& entry = params.entry(e);
        require(grads[e].first == entry.name, "adamw_step: grad name '" + grads[e].first +
                                                  "' misaligned with parameter '" + entry.name +
                                                  "'");
        if (!entry.init.trainable) continue;
        const Tensor<T>& g = grads[e].second;
        detail::require_same_shape(g, entry.tensor, "adamw_step");
        Tensor<T>& m = state.m[e];
        Tensor<T>& v = state.v[e];
        Tensor<T>& theta = entry.tensor;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
            const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / corr1;
            const double vhat = vi / corr2;
            double update = lr_t * mhat / (std::sqrt(vhat) + tc.adam_eps);
            if (entry.init.decay) update += lr_t * tc.weight_decay * static_cast<double>(theta[i]);
            theta[i] = static_cast<T>(static_cast<double>(theta[i]) - update);
        }
    }
}

// ---- MLM masking ----------------------------------------------------------------

struct MaskPlan {
    std::vector<int> corrupted;
    std::vector<std::size_t> positions;  // ascending
    std::vector<int> targets;            // originals at positions
};

// Selects ceil(rate * len) distinct positions and corrupts them: mask_frac of
// the selections become the mask token (id = vocab), random_frac a random
// vocab token, the remainder stay unchanged. Targets are the original tokens.
inline MaskPlan mlm_mask(const std::vector<int>& tokens, double rate, Rng& rng, int vocab,
                         double mask_frac = 0.8, double random_frac = 0.1) {
    require(!tokens.empty(), "mlm_mask: empty sequence");
    require(rate >= 0.0 && rate < 1.0, "mlm_mask: rate must lie in [0, 1)");
    require(mask_frac >= 0.0 && random_frac >= 0.0 && mask_frac + random_frac <= 1.0,
            "mlm_mask: bad corruption split");
    const std::size_t len = tokens.size();
    const auto want = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(len)));
    std::vector<std::size_t> order(len);
    for (std::size_t i = 0; i < len; ++i) order[i] = i;
    for (std::size_t i = 0; i < want; ++i) {  // partial Fisher-Yates
        const std::size_t j = i + rng.uniform_below(len - i);
        std::swap(order[i], order[j]);
    }
    MaskPlan plan;
    plan.corrupted = tokens;
    plan.positions.assign(order.begin(), order.begin() + want);
    std::sort(plan.positions.begin(), plan.positions.end());
    for (const std::size_t p : plan.positions) {
        plan.targets.push_back(tokens[p]);
        const double u = rng.uniform();
        if (u < mask_frac)
            plan.corrupted[p] = vocab;  // mask sentinel
        else if (u < mask_frac + random_frac)
            plan.corrupted[p] = static_cast<int>(rng.uniform_below(vocab));
        // else: left unchanged
    }
    return plan;
}

// ---- synthetic tasks ----------------------------------------------------------------

enum class TaskKind { CopyShift, ModSum, Periodic };

struct SynthTask {
    TaskKind kind = TaskKind::CopyShift;
    int shift = 1;  // copy_shift offset k
    int n = 16;
    int vocab = 16;
    int mask_count = 0;  // 0 -> ceil(0.15 * n)

    int masks() const {
        return mask_count > 0 ? mask_count
                              : static_cast<int>(std::ceil(0.15 * static_cast<double>(n)));
    }
};

// Parses "copy_shift_3", "mod_sum", "periodic".
SynthTask parse_task(const std::string& name, int n, int vocab);

struct Example {
    std::vector<int> tokens;             // uncorrupted sequence
    std::vector<std::size_t> positions;  // mask plan, ascending
};

// Deterministic under the rng state. Masked positions are chosen so that the
// positions they are recoverable from stay visible.
Example synth_generate(const SynthTask& task, Rng& rng);

// ---- Toeplitz-ness score -------------------------------------------------------------

// 1 - (mean within-diagonal variance / total variance), clamped to [0, 1].
// Exactly-Toeplitz matrices score 1; a zero-variance (constant) matrix is 1 by
// convention. Accumulation in double regardless of T.
template <typename T>
double toeplitzness(const Tensor<T>& w) {
    require(w.rank() == 2 && w.extent(0) == w.extent(1), "toeplitzness: W must be square");
    const std::size_t n = w.extent(0);
    double total_mean = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) total_mean += static_cast<double>(w[i]);
    total_mean /= static_cast<double>(n * n);
    double total_var = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) {
        const double d = static_cast<double>(w[i]) - total_mean;
        total_var += d * d;
    }
    total_var /= static_cast<double>(n * n);
    if (total_var <= 0.0) return 1.0;  // constant matrix, Toeplitz by convention
    double mean_diag_var = 0.0;
    const auto nn = static_cast<std::ptrdiff_t>(n);
    for (std::ptrdiff_t off = -(nn - 1); off <= nn - 1; ++off) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
        double s = 0.0;
        std::size_t m = 0;
        bool constant = true;
        const double first = static_cast<double>(
            w[static_cast<std::size_t>(lo) * n + static_cast<std::size_t>(lo + off)]);
        for (std::ptrdiff_t i = lo; i < nn && i + off < nn; ++i) {
            const double x = static_cast<double>(w[static_cast<std::size_t>(i) * n +
                                                   static_cast<std::size_t>(i + off)]);
            constant = constant && x == first;
            s += x;
            ++m;
        }
        if (constant) continue;  // bitwise-constant diagonal contributes exactly zero
        const double mean = s / static_cast<double>(m);
        double var = 0.0;
        for (std::ptrdiff_t i = lo; i < nn && i + off < nn; ++i) {
            const double x = static_cast<double>(w[static_cast<std::size_t>(i) * n +
                                                   static_cast<std::size_t>(i + off)]);
            var += (x - mean) * (x - mean);
        }
        mean_diag_var += var / static_cast<double>(m);
    }
    mean_diag_var /= static_cast<double>(2 * n - 1);
    const double score = 1.0 - mean_diag_var / total_var;
    return std::min(1.0, std::max(0.0, score));
}

// ---- power-law fit ---------------------------------------------------------------------

struct PowerLawFit {
    double coefficient = 0.0;  // a in y ~ a * x^(-alpha)
    double exponent = 0.0;     // alpha
    double residual = 0.0;     // RMS residual in log-log space
};

// Least squares on (log x, log y). Requires >= 2 points, all positive, with at
// least two distinct x.
PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y);

// ---- training loop ----------------------------------------------------------------------

struct MetricRow {
    int step = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double eval_loss = 0.0;
    double toeplitzness_mean = 0.0;
};

struct TrainResult {
    std::vector<MetricRow> rows;
    double final_eval_loss = 0.0;
    double wall_seconds = 0.0;
};

struct DivergenceError : std::runtime_error {
    int step;
    explicit DivergenceError(int s)
        : std::runtime_error("training diverged (non-finite loss) at step " + std::to_string(s)),
          step(s) {}
};

namespace detail_train {

template <typename T>
double mean_spatial_toeplitzness(const model::Model<T>& m) {
    double acc = 0.0;
    std::size_t cnt = 0;
    for (const auto& be : m.blocks()) {
        if (be.sp_w == model::kNoEntry) continue;
        const Tensor<T>& w = m.params().entry(be.sp_w).tensor;
        const Tensor<T> full = w.rank() == 1
                                   ? gmlp::toeplitz_materialize(w, (w.extent(0) + 1) / 2)
                                   : w;
        acc += toeplitzness(full);
        ++cnt;
    }
    return cnt ? acc / static_cast<double>(cnt) : 0.0;
}

// Mean masked cross entropy over one batch; positions/targets from the task,
// corruption from `crng`.
template <typename T>
typename ad::Tape<T>::Id batch_loss(const model::Model<T>& m, ad::Tape<T>& tape,
                                    const typename model::Model<T>::Binding& b,
                                    const std::vector<Example>& batch, const TrainConfig& tc,
                                    nn::Mode mode, Rng& crng, Rng& sd_rng) {
    using Id = typename ad::Tape<T>::Id;
    Id loss{};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Example& ex = batch[i];
        std::vector<int> corrupted = ex.tokens;
        std::vector<std::size_t> targets_sz;
        for (const std::size_t p : ex.positions) {
            targets_sz.push_back(static_cast<std::size_t>(ex.tokens[p]));
            const double u = crng.uniform();
            if (u < tc.mask_frac)
                corrupted[p] = m.mask_token_id();
            else if (u < tc.mask_frac + tc.random_frac)
                corrupted[p] = static_cast<int>(crng.uniform_below(m.config().vocab_size));
        }
        Id hidden = m.hidden_tokens(tape, b, corrupted, mode, sd_rng);
        Id logits = m.mlm_logits_at(tape, b, hidden, ex.positions);
        Id li = tape.cross_entropy_mean(logits, targets_sz);
        loss = i == 0 ? li : tape.add(loss, li);
    }
    return tape.scale(loss, static_cast<T>(1.0 / static_cast<double>(batch.size())));
}

}  // namespace detail_train

// Masked cross entropy on the held-out eval batch derived from tc.seed; the
// same quantity train() reports as eval_loss.
template <typename T>
double evaluate(const model::Model<T>& m, const SynthTask& task, const TrainConfig& tc) {
    Rng eval_rng = Rng(tc.seed).fork(0xE7A1);
    std::vector<Example> eval_batch;
    eval_batch.reserve(tc.eval_batch);
    for (int i = 0; i < tc.eval_batch; ++i) eval_batch.push_back(synth_generate(task, eval_rng));
    Rng ecrng = Rng(tc.seed).fork(0xEC04);
    Rng esd(0);  // unused in eval mode
    ad::Tape<T> tape;
    auto b = m.bind(tape);
    auto loss = detail_train::batch_loss(m, tape, b, eval_batch, tc, nn::Mode::Eval, ecrng, esd);
    return static_cast<double>(tape.value(loss)[0]);
}

// Synthetic-task MLM training. Deterministic function of (model init, task,
// config): identical seeds give bitwise-identical metric logs. `on_row` fires
// after every step so callers can stream the log (kept on divergence).
template <typename T>
TrainResult train(model::Model<T>& m, const SynthTask& task, const TrainConfig& tc,
                  const std::function<void(const MetricRow&)>& on_row = {}) {
    tc.validate();
    require(m.config().protocol == Protocol::MlmToken, "train: model protocol must be mlm_token");
    require(task.n == m.config().n && task.vocab == m.config().vocab_size,
            "train: task geometry does not match the model config");
    const auto t0 = std::chrono::steady_clock::now();

    Rng data_rng = Rng(tc.seed).fork(0xDA7A);
    Rng corrupt_rng = Rng(tc.seed).fork(0xC0DE);
    Rng sd_rng = Rng(tc.seed).fork(0x5DE9);

    TrainResult result;
    TrainState<T> state = TrainState<T>::init(m.params());
    double last_eval = evaluate(m, task, tc);
    double last_tplz = detail_train::mean_spatial_toeplitzness(m);

    for (int step = 1; step <= tc.total_steps; ++step) {
        std::vector<Example> batch;
        batch.reserve(tc.batch_size);
        for (int i = 0; i < tc.batch_size; ++i) batch.push_back(synth_generate(task, data_rng));

        ad::Tape<T> tape;
        auto b = m.bind(tape);
        auto loss =
            detail_train::batch_loss(m, tape, b, batch, tc, nn::Mode::Train, corrupt_rng, sd_rng);
        const double train_loss = static_cast<double>(tape.value(loss)[0]);
        const bool diverged = !std::isfinite(train_loss);
        if (!diverged) {
            tape.backward(loss);
            NamedGrads<T> grads;
            grads.reserve(m.params().count());
            for (std::size_t e = 0; e < m.params().count(); ++e)
                grads.emplace_back(m.params().entry(e).name, tape.grad(b.of(e)));
            adamw_step(m.params(), grads, state, lr_schedule(step, tc), tc);
            if (step % tc.eval_every == 0 || step == tc.total_steps) {
                last_eval = evaluate(m, task, tc);
                last_tplz = detail_train::mean_spatial_toeplitzness(m);
            }
        }
        MetricRow row{step, lr_schedule(step, tc), train_loss, last_eval, last_tplz};
        result.rows.push_back(row);
        if (on_row) on_row(row);
        if (diverged) throw DivergenceError(step);
    }
    result.final_eval_loss = last_eval;
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace gmlp::train
