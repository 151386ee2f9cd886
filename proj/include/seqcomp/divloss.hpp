#pragma once

#include "seqcomp/graph.hpp"
#include "seqcomp/svd.hpp"
#include "seqcomp/tensor.hpp"

namespace seqcomp::diversity {

using num::Graph;
using num::SvdResult;
using num::Tensor;
using num::Var;

inline constexpr double kDefaultEps = 1e-8;

// Product of all K singular values of a K x P bank (K <= P); the generalized
// parallelepiped volume of the rows.
double volume(const Tensor& s);

// -sum_i 2 log(sigma_i + eps). Lower is more diverse; the minimum over
// unit-norm rows is -2K log(1 + eps), attained exactly at orthonormal rows.
double dcs_loss(const Tensor& s_norm, double eps = kDefaultEps);

// Analytic gradient of dcs_loss with respect to the (already normalized)
// bank: -sum_i (2 / (sigma_i + eps)) u_i v_i^T. When singular values are
// closer than 1e-9 the SVD is taken on a deterministically perturbed copy
// (i.i.d. N(0, 1e-10)) and *degenerate is set.
Tensor dcs_sigma_gradient(const Tensor& s_norm, double eps = kDefaultEps,
                          bool* degenerate = nullptr);

// Full-chain gradient with respect to the raw bank: the sigma gradient of
// the row-normalized view composed with the normalize_rows Jacobian.
Tensor dcs_gradient(const Tensor& raw, double eps = kDefaultEps, bool* degenerate = nullptr);

// max over i != j of |row_i . row_j| for a unit-row bank; 0 for K < 2.
double orthogonality_gap(const Tensor& s_norm);

// mse + lambda_dcs * dcs. lambda_dcs must be positive.
double total_loss(double mse, double dcs, double lambda_dcs);

struct VolumeReport {
    Tensor sigma;
    double volume = 0.0;
    double loss = 0.0;
    double orthogonality_gap = 0.0;
};
VolumeReport volume_report(const Tensor& s_norm, double eps = kDefaultEps);

// Graph node for the loss of an already-normalized bank; its backward applies
// the analytic singular-value derivative. Compose with Graph::normalize_rows
// to differentiate through to raw parameters.
Var dcs_loss_var(Graph& g, Var s_norm, double eps = kDefaultEps);

// Plain gradient descent on dcs_loss alone, starting from a raw bank.
// Stops early once the orthogonality gap of the normalized view falls below
// gap_stop.
struct DescentResult {
    Tensor raw;
    int steps = 0;
    double final_loss = 0.0;
    double final_gap = 0.0;
};
DescentResult gd_diversify(Tensor raw, double lr, int max_steps, double eps = kDefaultEps,
                           double gap_stop = 0.0);

}  // namespace seqcomp::diversity
