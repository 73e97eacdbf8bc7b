#pragma once

#include <string>

#include "gmlp/gradcheck.hpp"

namespace gmlp::check {

struct SuiteOptions {
    int seeds = 20;
    double tol = 1e-5;
    double eps = 1e-5;
    std::uint64_t seed0 = 1;
    bool corrupt_adjoint = false;  // test hook: falsifies one gradient on purpose
};

// Finite-difference checks for every layer primitive (64-bit). One report row
// per (op, argument); max relative error aggregated over seeds.
GradCheckReport check_ops(const SuiteOptions& opts);

// Whole-block checks: gMLP, aMLP, transformer baseline and mixer baseline at
// 8 tokens x 16 channels; every parameter tensor plus the input is checked.
GradCheckReport check_blocks(const SuiteOptions& opts);

// Whole-model check: masked cross-entropy loss of a micro MLM model against
// finite differences over every parameter.
GradCheckReport check_model(const SuiteOptions& opts);

// Plain-text table: op name, shape, max rel err, pass/fail.
std::string format_report(const GradCheckReport& report);

}  // namespace gmlp::check
