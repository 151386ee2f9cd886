#include "seqcomp/adam.hpp"

#include <cmath>

#include "seqcomp/error.hpp"

namespace seqcomp::num {

AdamState AdamState::make(const std::vector<Tensor*>& params, double lr) {
    AdamState s;
    s.lr = lr;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.push_back(Tensor::zeros(p->shape));
        s.v.push_back(Tensor::zeros(p->shape));
    }
    return s;
}

void adam_step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: parameter/gradient/state counts disagree");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        if (!p.same_shape(g) || !p.same_shape(state.m[k]))
            throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(k));
        auto& m = state.m[k].values;
        auto& v = state.v[k].values;
        for (size_t i = 0; i < p.values.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g.values[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g.values[i] * g.values[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace seqcomp::num
