#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "gmlp/tensor.hpp"

namespace gmlp {

// Scalar-valued function of a list of tensors. Must be pure and deterministic.
using ScalarFn = std::function<double(const std::vector<Tensor<double>>&)>;

// Central differences (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps) per coordinate of
// inputs[which], 64-bit. This is the independent oracle used throughout the
// test suites; it never touches adjoint code.
inline Tensor<double> finite_diff_grad(const ScalarFn& f, std::vector<Tensor<double>> inputs,
                                       std::size_t which, double eps = 1e-5) {
    require(eps > 0.0, "finite_diff_grad: eps must be positive");
    Tensor<double> g(inputs[which].shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double saved = inputs[which][i];
        inputs[which][i] = saved + eps;
        const double fp = f(inputs);
        inputs[which][i] = saved - eps;
        const double fm = f(inputs);
        inputs[which][i] = saved;
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|), elementwise max over the tensor.
inline double max_relative_error(const Tensor<double>& g_ad, const Tensor<double>& g_fd) {
    detail::require_same_shape(g_ad, g_fd, "max_relative_error");
    double worst = 0.0;
    for (std::size_t i = 0; i < g_ad.size(); ++i) {
        const double denom = std::max(1e-8, std::abs(g_ad[i]) + std::abs(g_fd[i]));
        worst = std::max(worst, std::abs(g_ad[i] - g_fd[i]) / denom);
    }
    return worst;
}

struct GradCheckRow {
    std::string name;        // op / block / parameter under check
    Shape shape;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    double tol = 1e-5;

    bool all_pass() const {
        return std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.pass; });
    }

    double worst() const {
        double w = 0.0;
        for (const auto& r : rows) w = std::max(w, r.max_rel_err);
        return w;
    }
};

// Checks the analytic gradient (computed by `analytic`, typically one taped
// backward) of inputs[which] against central differences of `f`.
inline GradCheckRow gradient_check(const std::string& name, const ScalarFn& f,
                                   const std::function<Tensor<double>()>& analytic,
                                   const std::vector<Tensor<double>>& inputs, std::size_t which,
                                   double tol, double eps = 1e-5) {
    const Tensor<double> g_ad = analytic();
    const Tensor<double> g_fd = finite_diff_grad(f, inputs, which, eps);
    GradCheckRow row;
    row.name = name;
    row.shape = inputs[which].shape();
    row.max_rel_err = max_relative_error(g_ad, g_fd);
    row.pass = row.max_rel_err <= tol;
    return row;
}

}  // namespace gmlp
