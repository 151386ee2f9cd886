#include "seqcomp/richness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqcomp/error.hpp"
#include "seqcomp/svd.hpp"

namespace seqcomp::richness {

double gaussian_entropy(const Tensor& z, double eps) {
    if (z.rank() != 2) throw ShapeError("gaussian_entropy: expected a sample matrix");
    if (z.rows() < 1) throw ShapeError("gaussian_entropy: need at least one sample row");
    if (eps <= 0.0) throw ConfigError("gaussian_entropy: ridge eps must be positive");
    if (!z.all_finite()) throw NumericalError("gaussian_entropy: non-finite input");

    const int n = z.rows(), d = z.cols();
    num::SvdResult dec = num::svd(z);
    // Eigenvalues of Z^T Z / n are sigma_i^2 / n, padded with zeros up to d.
    double log_det = 0.0;
    const int r = dec.sigma.cols();
    for (int i = 0; i < r; ++i)
        log_det += std::log(dec.sigma.values[i] * dec.sigma.values[i] / n + eps);
    log_det += (d - std::min(r, d)) * std::log(eps);

    const double two_pi_e = 2.0 * 3.14159265358979323846 * std::exp(1.0);
    return 0.5 * (d * std::log(two_pi_e) + log_det);
}

double dominant_sv_ratio_spectrum(const std::vector<double>& sigma, double threshold) {
    if (threshold <= 0.0) throw ConfigError("dominant_sv_ratio: threshold must be positive");
    if (sigma.empty()) return 0.0;
    int above = 0;
    for (double s : sigma)
        if (s > threshold) ++above;
    return static_cast<double>(above) / static_cast<double>(sigma.size());
}

double dominant_sv_ratio(const Tensor& z, double threshold) {
    return dominant_sv_ratio_spectrum(num::svd(z).sigma.values, threshold);
}

RichnessReport richness_report(const Tensor& z, double eps, double threshold) {
    RichnessReport rep;
    rep.entropy = gaussian_entropy(z, eps);
    rep.sv_spectrum = num::svd(z).sigma.values;
    rep.dominant_ratio = dominant_sv_ratio_spectrum(rep.sv_spectrum, threshold);
    rep.n_samples = z.rows();
    rep.dim = z.cols();
    return rep;
}

Tensor similarity_map(const Tensor& z) {
    if (z.rank() != 2) throw ShapeError("similarity_map: expected a matrix");
    const int l = z.rows(), d = z.cols();
    std::vector<double> norms(l);
    for (int i = 0; i < l; ++i) {
        double sq = 0.0;
        for (int j = 0; j < d; ++j) sq += z.at(i, j) * z.at(i, j);
        norms[i] = std::sqrt(sq);
    }
    Tensor out = Tensor::zeros({l, l});
    for (int i = 0; i < l; ++i) {
        for (int j = i; j < l; ++j) {
            double sim = 0.0;
            if (norms[i] > 0.0 && norms[j] > 0.0) {
                double dot = 0.0;
                for (int c = 0; c < d; ++c) dot += z.at(i, c) * z.at(j, c);
                sim = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
            }
            out.at(i, j) = sim;
            out.at(j, i) = sim;
        }
    }
    return out;
}

namespace {

// Continued-fraction core of the regularized incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEpsIter = 3e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEpsIter) return h;
    }
    throw NumericalError("incomplete_beta: continued fraction did not converge");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct RankedDiffs {
    std::vector<double> ranks;  // mid-ranks of |d|, aligned with diffs
    std::vector<double> diffs;  // non-zero differences
    double tie_correction = 0.0;
};

RankedDiffs rank_differences(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ShapeError("wilcoxon_signed_rank: paired vectors must have equal length");
    RankedDiffs rd;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) rd.diffs.push_back(d);
    }
    if (rd.diffs.empty())
        throw DegenerateInputError("wilcoxon_signed_rank: all paired differences are zero");

    const size_t n = rd.diffs.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t i, size_t j) {
        return std::abs(rd.diffs[i]) < std::abs(rd.diffs[j]);
    });
    rd.ranks.assign(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n &&
               std::abs(rd.diffs[order[j + 1]]) == std::abs(rd.diffs[order[i]])) ++j;
        const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        const double t = static_cast<double>(j - i + 1);
        if (t > 1.0) rd.tie_correction += (t * t * t - t);
        for (size_t k = i; k <= j; ++k) rd.ranks[order[k]] = mid;
        i = j + 1;
    }
    return rd;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

StatReport pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ShapeError("pearson: vectors must have equal length");
    const int n = static_cast<int>(xs.size());
    if (n < 3) throw ConfigError("pearson: need at least 3 samples, got " + std::to_string(n));

    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw DegenerateInputError("pearson: constant input makes the correlation undefined");

    const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    StatReport rep;
    rep.statistic = r;
    rep.n = n;
    const double nu = n - 2;
    if (std::abs(r) >= 1.0) {
        rep.p_value = 0.0;
    } else {
        const double t2 = r * r * nu / (1.0 - r * r);
        rep.p_value = incomplete_beta(nu / 2.0, 0.5, nu / (nu + t2));
    }
    return rep;
}

StatReport wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    RankedDiffs rd = rank_differences(a, b);
    const int n = static_cast<int>(rd.diffs.size());
    double w_plus = 0.0, rank_total = 0.0;
    for (int i = 0; i < n; ++i) {
        rank_total += rd.ranks[i];
        if (rd.diffs[i] > 0.0) w_plus += rd.ranks[i];
    }

    StatReport rep;
    rep.statistic = w_plus;
    rep.n = n;

    const double center = rank_total / 2.0;
    const double observed_dev = std::abs(w_plus - center);
    if (n <= kWilcoxonExactLimit) {
        // Exact two-sided tail over all sign assignments of the observed ranks.
        const uint64_t total = 1ULL << n;
        uint64_t extreme = 0;
        for (uint64_t mask = 0; mask < total; ++mask) {
            double w = 0.0;
            for (int i = 0; i < n; ++i)
                if (mask & (1ULL << i)) w += rd.ranks[i];
            if (std::abs(w - center) >= observed_dev - 1e-12) ++extreme;
        }
        rep.p_value = static_cast<double>(extreme) / static_cast<double>(total);
    } else {
        const double mu = n * (n + 1) / 4.0;
        const double var = n * (n + 1) * (2.0 * n + 1.0) / 24.0 - rd.tie_correction / 48.0;
        const double sd = std::sqrt(var);
        if (observed_dev == 0.0 || sd == 0.0) {
            rep.p_value = 1.0;
        } else {
            const double z = (observed_dev - 0.5) / sd;  // continuity correction
            rep.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(z)));
        }
        (void)mu;
    }
    return rep;
}

nlohmann::json to_json(const RichnessReport& report) {
    return nlohmann::json{{"entropy", report.entropy},
                          {"sv_spectrum", report.sv_spectrum},
                          {"dominant_ratio", report.dominant_ratio},
                          {"n_samples", report.n_samples},
                          {"dim", report.dim}};
}

nlohmann::json to_json(const StatReport& report) {
    return nlohmann::json{{"statistic", report.statistic},
                          {"p_value", report.p_value},
                          {"n", report.n}};
}

std::vector<DynamicsRow> track_dynamics(const std::vector<int>& epochs,
                                        const std::vector<double>& entropies,
                                        const std::vector<double>& val_mses) {
    if (epochs.size() != entropies.size() || epochs.size() != val_mses.size())
        throw ShapeError("track_dynamics: column lengths disagree");
    std::vector<DynamicsRow> rows;
    rows.reserve(epochs.size());
    for (size_t i = 0; i < epochs.size(); ++i) {
        DynamicsRow row;
        row.epoch = epochs[i];
        row.entropy = entropies[i];
        row.val_mse = val_mses[i];
        const size_t lo = i >= 2 ? i - 2 : 0;
        double acc = 0.0;
        for (size_t j = lo; j <= i; ++j) acc += entropies[j];
        row.entropy_smoothed = acc / static_cast<double>(i - lo + 1);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace seqcomp::richness
