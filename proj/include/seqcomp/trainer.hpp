#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqcomp/adam.hpp"
#include "seqcomp/datakit.hpp"
#include "seqcomp/encoder.hpp"
#include "seqcomp/gradcheck.hpp"
#include "seqcomp/richness.hpp"

namespace seqcomp::train {

using nlohmann::json;

struct TrainConfig {
    int t_in = 96;
    int t_out = 96;
    int patch_len = 16;
    int stride = 8;
    int k_complementors = 3;
    double lambda_dcs = 0.1;
    double lr = 1e-4;
    int batch_size = 16;
    int heads = 4;
    int blocks = 2;
    int embed_dim = 512;
    int d_ff = 0;  // 0 resolves to 2 * embed_dim
    double dropout = 0.0;
    int epochs = 10;
    int patience = 3;
    uint64_t seed = 0;
    int runs = 5;
    std::string tokenize_mode = "patch";  // patch | invert
    bool share_complementors = false;
    bool diversification = true;
    std::string dataset;
    std::string split_preset = "frac:0.7:0.1";
    int season_m = 0;  // 0 resolves from the dataset frequency
    int train_window_stride = 1;
    int eval_window_stride = 1;
    std::string out_dir = ".";

    void validate() const;
    int resolved_d_ff() const { return d_ff > 0 ? d_ff : 2 * embed_dim; }
    enc::ModelConfig model_config(int n_channels) const;

    static TrainConfig from_json(const json& j);             // unknown keys rejected
    static TrainConfig from_json_file(const std::string& path);
    void apply_json(const json& j);
    json to_json() const;
    uint64_t config_hash() const;  // FNV-1a over the canonical dump
};

// Versioned text container of the full trainable state. Values serialize at
// 17 significant digits, so save/load round-trips are bit-exact.
struct Checkpoint {
    int version = 1;
    TrainConfig config;
    enc::ModelParams params;
    num::AdamState adam;
    int epoch = 0;
    double best_val_mse = 0.0;
    uint64_t rng_counter = 0;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

struct StepLog {
    double l_mse = 0.0;
    double l_dcs = 0.0;
    double l_obj = 0.0;
};

struct EpochLog {
    int epoch = 0;
    double train_mse = 0.0;
    double train_dcs = 0.0;
    double train_obj = 0.0;
    double val_mse = 0.0;
    double entropy = 0.0;       // Gaussian entropy of full Z_enc, probe batch
    double entropy_orig = 0.0;  // same over original token rows only
    double dominant_ratio = 0.0;
    double wall_seconds = 0.0;
};

struct RunRecord {
    uint64_t seed = 0;
    int best_epoch = -1;
    bool diverged = false;
    std::vector<EpochLog> epochs;
    std::vector<StepLog> steps;
    data::MetricsReport test;
};

struct ExperimentRecord {
    uint64_t config_hash = 0;
    TrainConfig config;
    std::vector<RunRecord> runs;
    data::MetricsReport mean_test;

    json to_json(bool include_timing = true) const;
    std::string deterministic_json() const;  // wall-clock excluded
};

struct TrainOutput {
    ExperimentRecord record;
    std::vector<Checkpoint> checkpoints;  // one per run, best-validation state
};

// Mini-batch Adam on mse + lambda * dcs with early stopping on validation
// MSE; the best-validation checkpoint is retained. Richness of Z_enc over a
// fixed probe batch (first validation windows) is logged every epoch.
TrainOutput train(const TrainConfig& cfg, const data::Dataset* preloaded = nullptr);

data::MetricsReport evaluate(const enc::ModelParams& params, const data::Dataset& ds,
                             data::Split split, int window_stride = 1, int season_m = 1);
data::MetricsReport evaluate(const Checkpoint& ckpt, const data::Dataset& ds, data::Split split);

struct ProbeRichness {
    double entropy = 0.0;
    double entropy_orig = 0.0;
    double dominant_ratio = 0.0;
};
ProbeRichness probe_richness(const enc::ModelParams& params, const data::Dataset& ds,
                             int max_windows, int eval_stride = 1);

struct AblationRow {
    int k = 0;
    bool diversified = false;
    double mse = 0.0;
    double mae = 0.0;
};
// Cross product of k_grid and diversification modes; the diversified variant
// is skipped for k < 2.
std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<int>& k_grid,
                                bool with_div, bool without_div,
                                const data::Dataset* preloaded = nullptr);

struct AnalyzeRow {
    std::string label;
    double entropy = 0.0;
    double dominant_ratio = 0.0;
    double mse = 0.0;
};
struct AnalyzeReport {
    std::vector<AnalyzeRow> rows;
    richness::StatReport entropy_vs_mse;
    richness::StatReport ratio_vs_mse;
    bool has_ratio = false;
};
// Pearson correlation of representation richness against MSE over >= 3 pairs.
AnalyzeReport analyze_pairs(const std::vector<std::pair<double, double>>& richness_and_mse);
AnalyzeReport analyze_checkpoints(const std::vector<std::string>& paths, const data::Dataset& ds);

// Wilcoxon signed-rank over paired per-setting metrics.
richness::StatReport compare(const std::vector<double>& a, const std::vector<double>& b);

struct GradcheckComponent {
    std::string name;
    num::GradCheckReport report;
};
struct GradcheckAllReport {
    std::vector<GradcheckComponent> components;
    bool all_pass = true;
};
// Finite-difference validation of every differentiable component plus the two
// end-to-end paths (input -> mse loss, bank -> diversification loss) on tiny
// shapes. `corrupt` scales one component's analytic gradient by 1.01 as a
// harness negative control.
GradcheckAllReport gradcheck_all(uint64_t seed, const std::string& corrupt = "");

}  // namespace seqcomp::train
