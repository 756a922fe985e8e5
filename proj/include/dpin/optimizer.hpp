#pragma once

#include "dpin/tensor.hpp"

namespace dpin::nn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update with bias correction. `grads` must be keyed exactly like
// `params`; moment state lives inside `params` and is advanced in place.
void adam_step(ParamSet& params, const ParamSet& grads,
               const TrainingHyper& hyper, const AdamConfig& cfg = {});

// target <- tau * target + (1 - tau) * online, elementwise over all tensors.
void polyak_update(ParamSet& target, const ParamSet& online, double tau);

// Hard sync of values (optimizer state untouched).
void copy_values(ParamSet& dst, const ParamSet& src);

}  // namespace dpin::nn
