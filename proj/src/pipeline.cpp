#include "seqcomp/pipeline.hpp"

#include <cmath>

#include "seqcomp/error.hpp"

namespace seqcomp::tok {

int PatchConfig::token_count() const { return (t_in - patch_len) / stride + 2; }

void PatchConfig::validate() const {
    if (patch_len <= 0 || stride <= 0 || t_in <= 0)
        throw ConfigError("patch config: all sizes must be positive");
    if (patch_len > t_in)
        throw ConfigError("patch config: patch_len " + std::to_string(patch_len) +
                          " exceeds t_in " + std::to_string(t_in));
    if (stride > patch_len)
        throw ConfigError("patch config: stride " + std::to_string(stride) +
                          " exceeds patch_len " + std::to_string(patch_len));
}

std::vector<int> patch_index_map(const PatchConfig& cfg) {
    cfg.validate();
    const int l_c = cfg.token_count();
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(l_c) * cfg.patch_len);
    for (int i = 0; i < l_c; ++i)
        for (int j = 0; j < cfg.patch_len; ++j)
            idx.push_back(std::min(i * cfg.stride + j, cfg.t_in - 1));
    return idx;
}

ComplementorBank ComplementorBank::init(int n_banks, int k, int width, CounterRng& rng) {
    if (k > width)
        throw ConfigError("complementor bank: k " + std::to_string(k) + " exceeds row width " +
                          std::to_string(width));
    ComplementorBank bank;
    bank.k = k;
    for (int b = 0; b < n_banks; ++b) {
        Tensor raw = Tensor::zeros({k, width});
        // Gram-Schmidt over Gaussian rows; k <= width makes this well posed.
        for (int i = 0; i < k; ++i) {
            while (true) {
                for (int j = 0; j < width; ++j) raw.at(i, j) = rng.normal();
                for (int p = 0; p < i; ++p) {
                    double dot = 0.0;
                    for (int j = 0; j < width; ++j) dot += raw.at(i, j) * raw.at(p, j);
                    for (int j = 0; j < width; ++j) raw.at(i, j) -= dot * raw.at(p, j);
                }
                double norm = 0.0;
                for (int j = 0; j < width; ++j) norm += raw.at(i, j) * raw.at(i, j);
                norm = std::sqrt(norm);
                if (norm > 1e-8) {
                    for (int j = 0; j < width; ++j) raw.at(i, j) /= norm;
                    break;
                }
            }
        }
        bank.raw.push_back(std::move(raw));
    }
    return bank;
}

Tensor ComplementorBank::normalized(int b) const { return tok::normalize_rows(raw[b]); }

int ComplementorBank::reseed_zero_rows(CounterRng& rng) {
    int reseeded = 0;
    for (Tensor& t : raw) {
        for (int i = 0; i < t.rows(); ++i) {
            double sq = 0.0;
            for (int j = 0; j < t.cols(); ++j) sq += t.at(i, j) * t.at(i, j);
            if (std::sqrt(sq) < 1e-12) {
                for (int j = 0; j < t.cols(); ++j) t.at(i, j) = rng.normal() * 0.02;
                ++reseeded;
            }
        }
    }
    return reseeded;
}

TokenSequence::TokenSequence(Tensor t, int orig, int comp)
    : tokens(std::move(t)), n_original(orig), n_complementors(comp) {
    if (tokens.rows() != orig + comp)
        throw ShapeError("token sequence: " + std::to_string(tokens.rows()) + " rows but " +
                         std::to_string(orig) + "+" + std::to_string(comp) + " declared");
}

std::pair<Tensor, RevinState> revin_normalize(const Tensor& x) {
    const int t = x.rows(), n = x.cols();
    RevinState state;
    state.mean.resize(n);
    state.std.resize(n);
    Tensor out = x;
    for (int c = 0; c < n; ++c) {
        double mean = 0.0;
        for (int i = 0; i < t; ++i) mean += x.at(i, c);
        mean /= t;
        double var = 0.0;
        for (int i = 0; i < t; ++i) var += (x.at(i, c) - mean) * (x.at(i, c) - mean);
        var /= t;
        const double sd = std::max(std::sqrt(var), kRevinStdFloor);
        state.mean[c] = mean;
        state.std[c] = sd;
        for (int i = 0; i < t; ++i) out.at(i, c) = (x.at(i, c) - mean) / sd;
    }
    return {std::move(out), std::move(state)};
}

Tensor revin_denormalize(const Tensor& y_hat, const RevinState& state) {
    const int n = y_hat.cols();
    if (static_cast<int>(state.mean.size()) != n)
        throw ShapeError("revin_denormalize: state has " + std::to_string(state.mean.size()) +
                         " channels, forecast has " + std::to_string(n));
    Tensor out = y_hat;
    for (int c = 0; c < n; ++c)
        for (int i = 0; i < y_hat.rows(); ++i) out.at(i, c) = y_hat.at(i, c) * state.std[c] + state.mean[c];
    return out;
}

Tensor patchify(const std::vector<double>& channel, const PatchConfig& cfg) {
    if (static_cast<int>(channel.size()) != cfg.t_in)
        throw ConfigError("patchify: channel length " + std::to_string(channel.size()) +
                          " does not match configured t_in " + std::to_string(cfg.t_in));
    const auto idx = patch_index_map(cfg);
    Tensor x({cfg.t_in}, channel);
    return num::gather(x, idx, {cfg.token_count(), cfg.patch_len});
}

TokenSequence attach_complementors(const Tensor& z0, const Tensor& s_norm) {
    if (s_norm.size() == 0 || s_norm.rows() == 0) return TokenSequence(z0, z0.rows(), 0);
    if (s_norm.cols() != z0.cols())
        throw ShapeError("attach_complementors: width mismatch, " + z0.shape_str() + " vs " +
                         s_norm.shape_str());
    return TokenSequence(num::concat_rows(z0, s_norm), z0.rows(), s_norm.rows());
}

TokenSequence embed(const TokenSequence& z0, const Tensor& w_e, const Tensor& b_e) {
    Tensor out = num::add_row_broadcast(num::matmul(z0.tokens, w_e), b_e);
    return TokenSequence(std::move(out), z0.n_original, z0.n_complementors);
}

TokenSequence add_positional(const TokenSequence& z_embed, const Tensor& pos) {
    if (pos.rows() != z_embed.n_original || pos.cols() != z_embed.tokens.cols())
        throw ShapeError("add_positional: encoding is " + pos.shape_str() + " but " +
                         std::to_string(z_embed.n_original) + " original rows of width " +
                         std::to_string(z_embed.tokens.cols()) + " expected");
    Tensor out = z_embed.tokens;
    for (int i = 0; i < pos.rows(); ++i)
        for (int j = 0; j < pos.cols(); ++j) out.at(i, j) += pos.at(i, j);
    return TokenSequence(std::move(out), z_embed.n_original, z_embed.n_complementors);
}

TokenSequence invert_tokenize(const Tensor& x, const Tensor& s_norm) {
    Tensor variates = num::transpose(x);  // n x t_in
    if (s_norm.size() == 0 || s_norm.rows() == 0)
        return TokenSequence(std::move(variates), x.cols(), 0);
    if (s_norm.cols() != x.rows())
        throw ShapeError("invert_tokenize: complementor width " + std::to_string(s_norm.cols()) +
                         " does not match t_in " + std::to_string(x.rows()));
    return TokenSequence(num::concat_rows(variates, s_norm), x.cols(), s_norm.rows());
}

Tensor normalize_rows(const Tensor& raw) { return num::normalize_rows(raw); }

RevinVars revin_normalize_var(Graph& g, Var x_channel) {
    Var mean = g.reduce_mean(x_channel);
    Var centered = g.sub_scalar(x_channel, mean);
    Var var = g.reduce_mean(g.mul(centered, centered));
    Var sd = g.clamp_min(g.sqrt(var), kRevinStdFloor);
    return RevinVars{g.div_scalar(centered, sd), mean, sd};
}

Var revin_denormalize_var(Graph& g, Var y_hat, const RevinVars& state) {
    return g.add_scalar(g.mul_scalar(y_hat, state.std), state.mean);
}

Var patchify_var(Graph& g, Var x_channel, const PatchConfig& cfg) {
    if (g.value(x_channel).size() != cfg.t_in)
        throw ConfigError("patchify: channel length does not match configured t_in");
    return g.gather(x_channel, patch_index_map(cfg), {cfg.token_count(), cfg.patch_len});
}

}  // namespace seqcomp::tok
