#include "masa/adam.hpp"

#include <cmath>

namespace masa {

AdamState make_adam_state(const std::vector<Tensor*>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Tensor* p : params) {
        st.m.emplace_back(p->values.size(), 0.0);
        st.v.emplace_back(p->values.size(), 0.0);
    }
    return st;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const std::vector<double>*>& grads,
               AdamState& state, const AdamConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DimensionError("adam_step: parameter/gradient/state count mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p];
        const std::vector<double>& g = *grads[p];
        if (g.size() != t.values.size())
            throw DimensionError("adam_step: gradient size mismatch for parameter " +
                                 std::to_string(p));
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            const double gi = g[i] + cfg.weight_decay * t.values[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            t.values[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace masa
