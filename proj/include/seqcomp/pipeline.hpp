#pragma once

#include <string>
#include <vector>

#include "seqcomp/graph.hpp"
#include "seqcomp/rng.hpp"
#include "seqcomp/tensor.hpp"

namespace seqcomp::tok {

using num::CounterRng;
using num::Graph;
using num::Tensor;
using num::Var;

// One look-back/horizon pair of multivariate observations.
struct SeriesWindow {
    Tensor x;  // t_in x n
    Tensor y;  // t_out x n
    std::vector<std::string> channel_names;
};

// Strided patching geometry. The token count per channel is
// (t_in - patch_len) / stride + 2, realized by replicating the final value
// `stride` times before windowing.
struct PatchConfig {
    int patch_len = 16;
    int stride = 8;
    int t_in = 96;

    int token_count() const;  // L_c
    void validate() const;
};

// Flat index map realizing patchify as a gather from a length-t_in channel.
std::vector<int> patch_index_map(const PatchConfig& cfg);

// Per-window, per-channel normalization state; std is floored at 1e-5.
struct RevinState {
    std::vector<double> mean;
    std::vector<double> std;
};
inline constexpr double kRevinStdFloor = 1e-5;

// The learnable complementor rows, one bank per channel (or a single shared
// bank). Rows enter the model through their unit-norm view.
struct ComplementorBank {
    std::vector<Tensor> raw;  // each k x width
    int k = 0;

    // First k rows of a random orthonormal basis, per bank.
    static ComplementorBank init(int n_banks, int k, int width, CounterRng& rng);

    Tensor normalized(int bank) const;
    // Re-seed any (near-)zero row in place; returns how many rows were reset.
    int reseed_zero_rows(CounterRng& rng);
};

// Token matrix plus the original/complementor row split.
struct TokenSequence {
    Tensor tokens;
    int n_original = 0;
    int n_complementors = 0;

    TokenSequence(Tensor t, int orig, int comp);
};

// ---- plain operation surface ----
std::pair<Tensor, RevinState> revin_normalize(const Tensor& x);
Tensor revin_denormalize(const Tensor& y_hat, const RevinState& state);
Tensor patchify(const std::vector<double>& channel, const PatchConfig& cfg);
TokenSequence attach_complementors(const Tensor& z0, const Tensor& s_norm);
TokenSequence embed(const TokenSequence& z0, const Tensor& w_e, const Tensor& b_e);
TokenSequence add_positional(const TokenSequence& z_embed, const Tensor& pos);
TokenSequence invert_tokenize(const Tensor& x, const Tensor& s_norm);
Tensor normalize_rows(const Tensor& raw);

// ---- graph mirror used by the differentiable forward pass ----
struct RevinVars {
    Var normalized;
    Var mean;
    Var std;
};
RevinVars revin_normalize_var(Graph& g, Var x_channel);
Var revin_denormalize_var(Graph& g, Var y_hat, const RevinVars& state);
Var patchify_var(Graph& g, Var x_channel, const PatchConfig& cfg);

}  // namespace seqcomp::tok
