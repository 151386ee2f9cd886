#include "seqcomp/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "seqcomp/error.hpp"

namespace seqcomp::num {

Tensor SvdResult::reconstruct() const {
    const int m = u.rows(), r = sigma.cols(), n = v.rows();
    Tensor out = Tensor::zeros({m, n});
    for (int k = 0; k < r; ++k) {
        const double s = sigma.values[k];
        if (s == 0.0) continue;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.at(i, j) += s * u.at(i, k) * v.at(j, k);
    }
    return out;
}

namespace {

constexpr int kMaxSweeps = 200;
constexpr double kConvergence = 1e-12;

// Hestenes one-sided Jacobi on a tall (m >= n) matrix: orthogonalize the
// columns of B = A * V, then sigma_j = ||B_j|| and u_j = B_j / sigma_j.
SvdResult svd_tall(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    Tensor b = a;
    Tensor v = Tensor::identity(n);

    auto col_dot = [&](const Tensor& t, int p, int q) {
        double s = 0.0;
        for (int i = 0; i < t.rows(); ++i) s += t.at(i, p) * t.at(i, q);
        return s;
    };
    auto rotate_cols = [&](Tensor& t, int p, int q, double c, double s) {
        for (int i = 0; i < t.rows(); ++i) {
            const double tp = t.at(i, p), tq = t.at(i, q);
            t.at(i, p) = c * tp - s * tq;
            t.at(i, q) = s * tp + c * tq;
        }
    };

    bool converged = false;
    double worst_off = 0.0;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        converged = true;
        worst_off = 0.0;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double alpha = col_dot(b, p, p);
                const double beta = col_dot(b, q, q);
                const double gamma = col_dot(b, p, q);
                const double denom = std::sqrt(alpha * beta);
                if (denom == 0.0 || std::abs(gamma) <= kConvergence * denom) continue;
                converged = false;
                worst_off = std::max(worst_off, std::abs(gamma) / denom);
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate_cols(b, p, q, c, s);
                rotate_cols(v, p, q, c, s);
            }
        }
    }
    if (!converged) {
        throw NumericalError("svd: one-sided Jacobi did not converge after " +
                             std::to_string(kMaxSweeps) + " sweeps; worst normalized "
                             "off-diagonal " + std::to_string(worst_off));
    }

    std::vector<double> norms(n);
    for (int j = 0; j < n; ++j) norms[j] = std::sqrt(col_dot(b, j, j));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return norms[i] > norms[j]; });

    Tensor u = Tensor::zeros({m, n});
    Tensor sigma = Tensor::zeros({n});
    Tensor vr = Tensor::zeros({n, n});
    const double sigma_max = norms[order[0]];
    const double zero_cut = std::max(1e-300, sigma_max * 1e-14);
    for (int k = 0; k < n; ++k) {
        const int j = order[k];
        sigma.values[k] = norms[j];
        for (int i = 0; i < n; ++i) vr.at(i, k) = v.at(i, j);
        if (norms[j] > zero_cut) {
            for (int i = 0; i < m; ++i) u.at(i, k) = b.at(i, j) / norms[j];
        }
    }

    // Complete u columns for zero singular values from the standard basis.
    for (int k = 0; k < n; ++k) {
        if (sigma.values[k] > zero_cut) continue;
        sigma.values[k] = 0.0;
        for (int cand = 0; cand < m; ++cand) {
            std::vector<double> e(m, 0.0);
            e[cand] = 1.0;
            for (int j = 0; j < n; ++j) {
                if (j == k) continue;
                double d = 0.0;
                for (int i = 0; i < m; ++i) d += e[i] * u.at(i, j);
                for (int i = 0; i < m; ++i) e[i] -= d * u.at(i, j);
            }
            double nrm = 0.0;
            for (double x : e) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > 1e-6) {
                for (int i = 0; i < m; ++i) u.at(i, k) = e[i] / nrm;
                break;
            }
        }
    }

    // Deterministic sign: the largest-magnitude entry of each u column is
    // positive (ties broken by lowest row index).
    for (int k = 0; k < n; ++k) {
        int imax = 0;
        for (int i = 1; i < m; ++i)
            if (std::abs(u.at(i, k)) > std::abs(u.at(imax, k))) imax = i;
        if (u.at(imax, k) < 0.0) {
            for (int i = 0; i < m; ++i) u.at(i, k) = -u.at(i, k);
            for (int i = 0; i < n; ++i) vr.at(i, k) = -vr.at(i, k);
        }
    }

    return SvdResult{std::move(u), std::move(sigma), std::move(vr)};
}

}  // namespace

SvdResult svd(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("svd: expected a matrix, got " + a.shape_str());
    if (!a.all_finite()) throw NumericalError("svd: non-finite input");
    if (a.rows() >= a.cols()) return svd_tall(a);
    SvdResult t = svd_tall(transpose(a));
    // a = (u s v^T)^T of the transpose: swap factors.
    SvdResult out{std::move(t.v), std::move(t.sigma), std::move(t.u)};
    // Re-apply the sign convention to the swapped u.
    const int m = out.u.rows(), r = out.sigma.cols(), n = out.v.rows();
    for (int k = 0; k < r; ++k) {
        int imax = 0;
        for (int i = 1; i < m; ++i)
            if (std::abs(out.u.at(i, k)) > std::abs(out.u.at(imax, k))) imax = i;
        if (out.u.at(imax, k) < 0.0) {
            for (int i = 0; i < m; ++i) out.u.at(i, k) = -out.u.at(i, k);
            for (int i = 0; i < n; ++i) out.v.at(i, k) = -out.v.at(i, k);
        }
    }
    return out;
}

}  // namespace seqcomp::num
