#include "dpin/optimizer.hpp"

#include <cmath>

#include "dpin/kernels.hpp"

namespace dpin::nn {

namespace {

void check_keys(const ParamSet& params, const ParamSet& grads) {
    for (const auto& [name, t] : params.values) {
        auto it = grads.values.find(name);
        if (it == grads.values.end())
            throw ConsistencyError("adam_step: no gradient for parameter '" +
                                   name + "'");
        check_same_shape(t, it->second, "adam_step");
    }
    for (const auto& [name, t] : grads.values)
        if (!params.values.count(name))
            throw ConsistencyError("adam_step: gradient for unknown parameter '" +
                                   name + "'");
}

}  // namespace

void adam_step(ParamSet& params, const ParamSet& grads,
               const TrainingHyper& hyper, const AdamConfig& cfg) {
    hyper.validate();
    check_keys(params, grads);
    params.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(params.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(params.step));
    const auto& k = kern::active();
    for (auto& [name, w] : params.values) {
        AdamState& st = params.opt[name];
        if (st.m.empty()) {
            st.m = Tensor(w.rows(), w.cols());
            st.v = Tensor(w.rows(), w.cols());
        }
        const Tensor& g = grads.at(name);
        k.adam(w.data(), st.m.data(), st.v.data(), g.data(), w.size(),
               hyper.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, bc1, bc2);
    }
}

void polyak_update(ParamSet& target, const ParamSet& online, double tau) {
    if (tau < 0 || tau > 1) throw ConfigError("polyak_update: tau must be in [0,1]");
    for (auto& [name, t] : target.values) {
        auto it = online.values.find(name);
        if (it == online.values.end())
            throw ConsistencyError("polyak_update: online net missing '" + name + "'");
        check_same_shape(t, it->second, "polyak_update");
        kern::active().axpby(1.0 - tau, it->second.data(), tau, t.data(), t.size());
    }
    for (const auto& [name, t] : online.values)
        if (!target.values.count(name))
            throw ConsistencyError("polyak_update: target net missing '" + name + "'");
}

void copy_values(ParamSet& dst, const ParamSet& src) {
    for (auto& [name, t] : dst.values) {
        const Tensor& s = src.at(name);
        check_same_shape(t, s, "copy_values");
        t = s;
    }
}

}  // namespace dpin::nn
