#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seqcomp/pipeline.hpp"
#include "seqcomp/tensor.hpp"

namespace seqcomp::data {

using num::Tensor;
using tok::SeriesWindow;

enum class Split { kTrain, kVal, kTest };

struct Dataset {
    std::string name;
    Tensor values;  // T x N
    std::vector<std::string> channel_names;
    std::vector<std::string> timestamps;
    int train_end = 0;  // [0, train_end) is the training split
    int val_end = 0;    // [train_end, val_end) validation, rest test
    std::string frequency = "h";
    int season_m = 1;

    // Standardization statistics (training rows only), set by standardize().
    std::vector<double> norm_mean, norm_std;
    bool standardized = false;

    int length() const { return values.rows(); }
    int channels() const { return values.cols(); }
    std::pair<int, int> split_range(Split s) const;
    void validate_splits() const;
};

// First column is a date string, remaining columns are numeric channels, with
// a header row. Malformed content is rejected with the offending line number.
Dataset load_csv(const std::string& path);
void write_csv(const std::string& path, const Dataset& ds);

// Named split presets: sizes (train, val, test) as used on the standard
// long-horizon benchmarks, or "frac:<train>:<val>" fractions.
void apply_split_preset(Dataset& ds, const std::string& preset);

// Per-channel z-scoring with statistics from training rows only; std is
// floored at 1e-5. The inverse transform is retained on the dataset.
Dataset standardize(const Dataset& ds);
Tensor destandardize(const Dataset& ds, const Tensor& values);

struct WindowSampler {
    int t_in = 96;
    int t_out = 96;
    int stride = 1;
    Split split = Split::kTrain;
};

// Lazy view over every window of a split. Look-back may reach back into the
// preceding split; targets never cross the split boundary.
class WindowSet {
public:
    WindowSet(const Dataset& ds, const WindowSampler& sampler);
    int size() const { return static_cast<int>(starts_.size()); }
    SeriesWindow get(int i) const;
    int start(int i) const { return starts_[i]; }

private:
    const Dataset* ds_;
    WindowSampler sampler_;
    std::vector<int> starts_;
};

// ---- metrics ----
double mse(const Tensor& y, const Tensor& y_hat);
double mae(const Tensor& y, const Tensor& y_hat);
// 200/T sum |y - yhat| / (|y| + |yhat|), zero-denominator terms contribute 0.
double smape(const Tensor& y, const Tensor& y_hat);
double mape(const Tensor& y, const Tensor& y_hat);
// Scale is the mean absolute m-step naive error over history ++ y.
double mase(const Tensor& y, const Tensor& y_hat, const std::vector<double>& history, int m);
double owa(double smape_value, double mase_value, double smape_naive2, double mase_naive2);

// Seasonal-naive forecast: step t repeats the history value m steps back in
// the final cycle; m = 1 is last-value persistence.
std::vector<double> naive2_forecast(const std::vector<double>& history, int m, int horizon);

struct MetricsReport {
    double mse = 0.0, mae = 0.0, smape = 0.0, mape = 0.0, mase = 0.0, owa = 0.0;
    double naive2_mse = 0.0;
    std::vector<double> mse_per_step;
    int windows = 0;
};

// Random-phase multi-sine channels plus linear trend and Gaussian noise,
// fully determined by the seed. Phases come from a separate stream so the
// clean signal is unchanged by the noise level.
Dataset synth_multisine(uint64_t seed, int t, int n, const std::vector<double>& periods,
                        double noise_std, double trend);

int default_season_m(const std::string& frequency);

}  // namespace seqcomp::data
