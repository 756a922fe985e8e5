#pragma once

#include <functional>
#include <string>

#include "dpin/tensor.hpp"

namespace dpin::nn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    std::size_t coords_checked = 0;
    // Set when an analytic gradient entry is non-finite; max_rel_err becomes
    // +inf and `failure` names the parameter path.
    bool analytic_finite = true;
    std::string failure;

    bool passed(double tol) const { return analytic_finite && max_rel_err <= tol; }
};

// Central-difference check of `analytic` against the scalar function `f`.
// For every coordinate: numeric = (f(x+eps) - f(x-eps)) / (2 eps), and the
// relative error is |a - n| / max(1e-8, |a| + |n|). Parameters are restored
// bit-exactly after probing. eps must lie in [1e-7, 1e-4].
GradCheckReport grad_check(ParamSet& params,
                           const std::function<double(const ParamSet&)>& f,
                           const ParamSet& analytic, double eps);

}  // namespace dpin::nn
