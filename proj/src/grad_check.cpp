#include "dpin/grad_check.hpp"

#include <cmath>
#include <limits>

namespace dpin::nn {

GradCheckReport grad_check(ParamSet& params,
                           const std::function<double(const ParamSet&)>& f,
                           const ParamSet& analytic, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-4))
        throw ConfigError("grad_check: eps must be in [1e-7, 1e-4]");
    GradCheckReport rep;
    for (auto& [name, w] : params.values) {
        const Tensor& a = analytic.at(name);
        check_same_shape(w, a, "grad_check");
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double av = a[i];
            if (!std::isfinite(av)) {
                rep.analytic_finite = false;
                rep.failure = "non-finite analytic gradient at " + name + "[" +
                              std::to_string(i) + "]";
                rep.max_rel_err = std::numeric_limits<double>::infinity();
                return rep;
            }
            const double saved = w[i];
            w[i] = saved + eps;
            const double fp = f(params);
            w[i] = saved - eps;
            const double fm = f(params);
            w[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double rel =
                std::abs(av - numeric) /
                std::max(1e-8, std::abs(av) + std::abs(numeric));
            ++rep.coords_checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = name;
                rep.worst_index = static_cast<int>(i);
            }
        }
    }
    return rep;
}

}  // namespace dpin::nn
