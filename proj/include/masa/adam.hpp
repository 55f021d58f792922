#pragma once

#include <cstdint>
#include <vector>

#include "masa/tensor.hpp"

namespace masa {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Classic coupled L2: decay is added to the gradient before the moment
    // updates.
    double weight_decay = 0.0;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t step = 0;
};

AdamState make_adam_state(const std::vector<Tensor*>& params);

// One bias-corrected Adam update. `grads[i]` must match `params[i]` in
// element count.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const std::vector<double>*>& grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace masa
