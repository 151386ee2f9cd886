#pragma once

#include <vector>

#include <json.hpp>

#include "seqcomp/tensor.hpp"

namespace seqcomp::richness {

using num::Tensor;

inline constexpr double kEntropyRidge = 1e-6;
inline constexpr double kDominantThreshold = 0.1;

struct RichnessReport {
    double entropy = 0.0;         // nats
    std::vector<double> sv_spectrum;
    double dominant_ratio = 0.0;  // in [0, 1]
    int n_samples = 0;
    int dim = 0;
};

struct StatReport {
    double statistic = 0.0;
    double p_value = 1.0;
    int n = 0;
};

// 0.5 * log((2 pi e)^d det(Z^T Z / n + eps I)). Rows of z are samples. The
// determinant is accumulated as a sum of log-eigenvalues of the ridge-shifted
// Gram matrix, never as a raw product.
double gaussian_entropy(const Tensor& z, double eps = kEntropyRidge);

// Fraction of singular values strictly above the threshold.
double dominant_sv_ratio(const Tensor& z, double threshold = kDominantThreshold);
double dominant_sv_ratio_spectrum(const std::vector<double>& sigma,
                                  double threshold = kDominantThreshold);

RichnessReport richness_report(const Tensor& z, double eps = kEntropyRidge,
                               double threshold = kDominantThreshold);

// Cosine similarity between every pair of rows; zero rows map to 0.
Tensor similarity_map(const Tensor& z);

// Sample correlation with a two-sided p-value from the t distribution on
// n - 2 degrees of freedom. Requires n >= 3 and non-constant inputs.
StatReport pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Signed-rank statistic W (ranks of positive differences, ties mid-ranked,
// zero differences dropped) with a two-sided p-value: exact enumeration for
// n <= 12, normal approximation with continuity correction above.
StatReport wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);
inline constexpr int kWilcoxonExactLimit = 12;

// Per-epoch training diagnostics aligned for plotting; the smoothed entropy
// column is a trailing moving average of window 3.
struct DynamicsRow {
    int epoch = 0;
    double entropy = 0.0;
    double entropy_smoothed = 0.0;
    double val_mse = 0.0;
};
std::vector<DynamicsRow> track_dynamics(const std::vector<int>& epochs,
                                        const std::vector<double>& entropies,
                                        const std::vector<double>& val_mses);

// Regularized incomplete beta function (used for the t-distribution CDF);
// exposed because tests cross-check the p-value path against it.
double incomplete_beta(double a, double b, double x);

nlohmann::json to_json(const RichnessReport& report);
nlohmann::json to_json(const StatReport& report);

}  // namespace seqcomp::richness
