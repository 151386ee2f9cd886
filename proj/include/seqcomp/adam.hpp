#pragma once

#include <cstdint>
#include <vector>

#include "seqcomp/tensor.hpp"

namespace seqcomp::num {

// Bias-corrected Adam over an ordered parameter list. Moment buffers are
// index-aligned with the parameter vector passed at construction.
struct AdamState {
    int64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState make(const std::vector<Tensor*>& params, double lr);
};

// One deterministic update in place. Shapes of params/grads/state must agree.
void adam_step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state);

}  // namespace seqcomp::num
