#pragma once

#include "seqcomp/tensor.hpp"

namespace seqcomp::num {

// Thin SVD a = u * diag(sigma) * v^T with r = min(rows, cols).
// sigma is non-increasing and non-negative; u is m x r, v is n x r, both with
// orthonormal columns (zero singular directions are completed from the
// standard basis). Sign convention: the largest-magnitude entry of each u
// column is positive.
struct SvdResult {
    Tensor u;
    Tensor sigma;  // 1-D, length r
    Tensor v;

    Tensor reconstruct() const;
};

// One-sided Jacobi with a 200-sweep cap and 1e-12 convergence threshold.
// Throws NumericalError on non-convergence, reporting the matrix condition.
SvdResult svd(const Tensor& a);

}  // namespace seqcomp::num
