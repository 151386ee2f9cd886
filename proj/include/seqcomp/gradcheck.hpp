#pragma once

#include <functional>
#include <string>

#include "seqcomp/tensor.hpp"

namespace seqcomp::num {

struct GradCheckReport {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int worst_index = -1;
    bool pass = false;
};

// Compares an analytic gradient against central differences
// (f(x + h e_i) - f(x - h e_i)) / 2h, coordinate by coordinate. The relative
// error denominator is max(1, |analytic|, |numeric|). Throws NumericalError
// if f evaluates to a non-finite value anywhere on the stencil.
GradCheckReport grad_check(const std::function<double(const Tensor&)>& f,
                           const std::function<Tensor(const Tensor&)>& analytic_grad,
                           const Tensor& x, double h, double tol);

std::string to_string(const GradCheckReport& r);

}  // namespace seqcomp::num
