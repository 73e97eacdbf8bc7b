#include "gmlp/training.hpp"

#include <algorithm>
#include <cmath>

namespace gmlp::train {

SynthTask parse_task(const std::string& name, int n, int vocab) {
    SynthTask t;
    t.n = n;
    t.vocab = vocab;
    if (name.rfind("copy_shift_", 0) == 0) {
        t.kind = TaskKind::CopyShift;
        const std::string suffix = name.substr(std::string("copy_shift_").size());
        require(!suffix.empty() && suffix.find_first_not_of("0123456789") == std::string::npos,
                "bad task name: " + name);
        t.shift = std::stoi(suffix);
        require(t.shift >= 1 && t.shift < n, "copy_shift: need 1 <= k < n");
    } else if (name == "mod_sum") {
        t.kind = TaskKind::ModSum;
    } else if (name == "periodic") {
        t.kind = TaskKind::Periodic;
    } else {
        fail("unknown task '" + name + "'; expected copy_shift_<k>, mod_sum or periodic");
    }
    return t;
}

namespace {

// Picks up to `want` mask positions from [lo, n) such that for every accepted
// position p, neither p - span nor p + span is also accepted. This keeps the
// position each target is recoverable from visible.
std::vector<std::size_t> pick_positions(int n, int lo, int span, int want, Rng& rng) {
    std::vector<std::size_t> cand;
    for (int i = lo; i < n; ++i) cand.push_back(static_cast<std::size_t>(i));
    for (std::size_t i = 0; i + 1 < cand.size(); ++i) {
        const std::size_t j = i + rng.uniform_below(cand.size() - i);
        std::swap(cand[i], cand[j]);
    }
    std::vector<std::size_t> sel;
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    for (const std::size_t p : cand) {
        if (static_cast<int>(sel.size()) == want) break;
        const bool left = p >= static_cast<std::size_t>(span) && taken[p - span];
        const bool right = p + span < static_cast<std::size_t>(n) && taken[p + span];
        if (left || right) continue;
        taken[p] = 1;
        sel.push_back(p);
    }
    std::sort(sel.begin(), sel.end());
    return sel;
}

}  // namespace

Example synth_generate(const SynthTask& task, Rng& rng) {
    require(task.n >= 4, "synth_generate: n must be >= 4");
    require(task.vocab >= 4, "synth_generate: vocab must be >= 4");
    const int n = task.n, vocab = task.vocab;
    Example ex;
    ex.tokens.resize(static_cast<std::size_t>(n));
    switch (task.kind) {
        case TaskKind::CopyShift: {
            const int k = task.shift;
            require(k >= 1 && k < n, "copy_shift: need 1 <= k < n");
            for (int i = 0; i < n; ++i)
                ex.tokens[i] = static_cast<int>(rng.uniform_below(vocab));
            ex.positions = pick_positions(n, k, k, task.masks(), rng);
            // Targets are recoverable from a fixed offset: each masked token is
            // made equal to its k-left neighbor.
            for (const std::size_t p : ex.positions) ex.tokens[p] = ex.tokens[p - k];
            break;
        }
        case TaskKind::ModSum: {
            ex.tokens[0] = static_cast<int>(rng.uniform_below(vocab));
            ex.tokens[1] = static_cast<int>(rng.uniform_below(vocab));
            for (int i = 2; i < n; ++i)
                ex.tokens[i] = (ex.tokens[i - 1] + ex.tokens[i - 2]) % vocab;
            // Conservative span keeps both summands of every target visible.
            ex.positions = pick_positions(n, 2, 2, task.masks(), rng);
            break;
        }
        case TaskKind::Periodic: {
            const int max_period = std::min(8, n / 2);
            const int period = 2 + static_cast<int>(rng.uniform_below(
                                       static_cast<std::uint64_t>(max_period - 1)));
            std::vector<int> pattern(static_cast<std::size_t>(period));
            for (auto& v : pattern) v = static_cast<int>(rng.uniform_below(vocab));
            for (int i = 0; i < n; ++i) ex.tokens[i] = pattern[i % period];
            ex.positions = pick_positions(n, period, period, task.masks(), rng);
            break;
        }
    }
    return ex;
}

PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), "fit_power_law: x/y length mismatch");
    require(x.size() >= 2, "fit_power_law: need at least 2 points");
    const std::size_t n = x.size();
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        require(x[i] > 0.0 && y[i] > 0.0, "fit_power_law: all values must be positive");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    require(sxx > 0.0, "fit_power_law: need at least two distinct x values");
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    PowerLawFit fit;
    fit.exponent = -slope;
    fit.coefficient = std::exp(intercept);
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ly[i] - (intercept + slope * lx[i]);
        rss += r * r;
    }
    fit.residual = std::sqrt(rss / static_cast<double>(n));
    return fit;
}

}  // namespace gmlp::train
