#pragma once

#include <functional>

#include "sodkit/tensor.hpp"

namespace sodkit {

// Scalar-valued function of leaf tensors; must rebuild its graph from the
// given leaves on every call so finite differences see fresh forwards.
using ScalarFn = std::function<Value(const std::vector<Value>&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    long long coords_checked = 0;
};

// Central finite differences at step h against reverse-mode gradients.
// Relative error per coordinate: |analytic - numeric| / max(1, |numeric|).
// With max_coords >= 0 only a deterministic random subset of coordinates per
// input is differenced (the analytic side always covers everything).
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Value>& inputs,
                           double step = 1e-5, long long max_coords = -1,
                           std::uint64_t coord_seed = 0);

struct SuiteEntry {
    std::string name;
    double max_rel_err;
    double tol;
    bool pass;
};

// The named primitive suite: every network primitive plus the composite CRM
// stage and full network, `seeds` random restarts each.
std::vector<SuiteEntry> run_gradient_suite(int seeds);

}  // namespace sodkit
