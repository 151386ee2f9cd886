#include "seqcomp/divloss.hpp"

#include <cmath>
#include <cstring>

#include "seqcomp/error.hpp"
#include "seqcomp/rng.hpp"

namespace seqcomp::diversity {

namespace {

void require_wide(const Tensor& s, const char* who) {
    if (s.rank() != 2) throw ShapeError(std::string(who) + ": expected a matrix");
    if (s.rows() > s.cols())
        throw ConfigError(std::string(who) + ": bank has more rows (" + std::to_string(s.rows()) +
                          ") than columns (" + std::to_string(s.cols()) +
                          "), volume would be rank-deficient");
}

bool spectrum_degenerate(const Tensor& sigma) {
    for (int i = 0; i + 1 < sigma.cols(); ++i)
        if (sigma.values[i] - sigma.values[i + 1] < 1e-9) return true;
    return false;
}

// Content-keyed deterministic jitter so repeated calls perturb identically.
Tensor perturbed_copy(const Tensor& s) {
    uint64_t key = 0x9E3779B97F4A7C15ULL;
    for (double v : s.values) {
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        key = (key ^ bits) * 0x100000001B3ULL;
    }
    num::CounterRng rng(key);
    Tensor out = s;
    for (double& v : out.values) v += rng.normal() * 1e-10;
    return out;
}

SvdResult svd_for_gradient(const Tensor& s_norm, bool* degenerate) {
    SvdResult dec = num::svd(s_norm);
    if (spectrum_degenerate(dec.sigma)) {
        if (degenerate) *degenerate = true;
        dec = num::svd(perturbed_copy(s_norm));
    }
    return dec;
}

}  // namespace

double volume(const Tensor& s) {
    require_wide(s, "volume");
    SvdResult dec = num::svd(s);
    double prod = 1.0;
    for (double sig : dec.sigma.values) prod *= sig;
    return prod;
}

double dcs_loss(const Tensor& s_norm, double eps) {
    require_wide(s_norm, "dcs_loss");
    if (eps <= 0.0) throw ConfigError("dcs_loss: eps must be positive");
    SvdResult dec = num::svd(s_norm);
    double loss = 0.0;
    for (double sig : dec.sigma.values) loss -= 2.0 * std::log(sig + eps);
    return loss;
}

Tensor dcs_sigma_gradient(const Tensor& s_norm, double eps, bool* degenerate) {
    require_wide(s_norm, "dcs_gradient");
    if (degenerate) *degenerate = false;
    SvdResult dec = svd_for_gradient(s_norm, degenerate);
    const int k = s_norm.rows(), p = s_norm.cols();
    Tensor grad = Tensor::zeros({k, p});
    for (int r = 0; r < dec.sigma.cols(); ++r) {
        const double w = -2.0 / (dec.sigma.values[r] + eps);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < p; ++j) grad.at(i, j) += w * dec.u.at(i, r) * dec.v.at(j, r);
    }
    return grad;
}

Tensor dcs_gradient(const Tensor& raw, double eps, bool* degenerate) {
    Tensor s_norm = num::normalize_rows(raw);
    Tensor g_norm = dcs_sigma_gradient(s_norm, eps, degenerate);
    const int k = raw.rows(), p = raw.cols();
    Tensor out = Tensor::zeros({k, p});
    for (int i = 0; i < k; ++i) {
        double norm_sq = 0.0, dot = 0.0;
        for (int j = 0; j < p; ++j) {
            norm_sq += raw.at(i, j) * raw.at(i, j);
            dot += g_norm.at(i, j) * s_norm.at(i, j);
        }
        const double norm = std::sqrt(norm_sq);
        for (int j = 0; j < p; ++j)
            out.at(i, j) = (g_norm.at(i, j) - dot * s_norm.at(i, j)) / norm;
    }
    return out;
}

double orthogonality_gap(const Tensor& s_norm) {
    if (s_norm.rank() != 2) throw ShapeError("orthogonality_gap: expected a matrix");
    double gap = 0.0;
    for (int i = 0; i < s_norm.rows(); ++i)
        for (int j = i + 1; j < s_norm.rows(); ++j) {
            double dot = 0.0;
            for (int c = 0; c < s_norm.cols(); ++c) dot += s_norm.at(i, c) * s_norm.at(j, c);
            gap = std::max(gap, std::abs(dot));
        }
    return gap;
}

double total_loss(double mse, double dcs, double lambda_dcs) {
    if (lambda_dcs <= 0.0) throw ConfigError("total_loss: lambda_dcs must be positive");
    return mse + lambda_dcs * dcs;
}

VolumeReport volume_report(const Tensor& s_norm, double eps) {
    require_wide(s_norm, "volume_report");
    SvdResult dec = num::svd(s_norm);
    VolumeReport rep;
    rep.sigma = dec.sigma;
    rep.volume = 1.0;
    rep.loss = 0.0;
    for (double sig : dec.sigma.values) {
        rep.volume *= sig;
        rep.loss -= 2.0 * std::log(sig + eps);
    }
    rep.orthogonality_gap = orthogonality_gap(s_norm);
    return rep;
}

Var dcs_loss_var(Graph& g, Var s_norm, double eps) {
    Tensor loss({1}, {dcs_loss(g.value(s_norm), eps)});
    const Tensor bank = g.value(s_norm);
    return g.custom(std::move(loss), {s_norm}, [s_norm, bank, eps](Graph& gg, int self) {
        const double g0 = gg.grad_ro(self)[0];
        Tensor grad = dcs_sigma_gradient(bank, eps);
        auto& gs = gg.grads(s_norm.id);
        for (size_t i = 0; i < gs.size(); ++i) gs[i] += g0 * grad.values[i];
    });
}

DescentResult gd_diversify(Tensor raw, double lr, int max_steps, double eps, double gap_stop) {
    DescentResult res;
    for (int step = 0; step < max_steps; ++step) {
        Tensor grad = dcs_gradient(raw, eps);
        for (size_t i = 0; i < raw.values.size(); ++i) raw.values[i] -= lr * grad.values[i];
        res.steps = step + 1;
        if (gap_stop > 0.0 && orthogonality_gap(num::normalize_rows(raw)) < gap_stop) break;
    }
    Tensor s_norm = num::normalize_rows(raw);
    res.final_loss = dcs_loss(s_norm, eps);
    res.final_gap = orthogonality_gap(s_norm);
    res.raw = std::move(raw);
    return res;
}

}  // namespace seqcomp::diversity
