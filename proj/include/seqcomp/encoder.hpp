#pragma once

#include <string>
#include <utility>
#include <vector>

#include "seqcomp/graph.hpp"
#include "seqcomp/pipeline.hpp"
#include "seqcomp/tensor.hpp"

namespace seqcomp::enc {

using num::CounterRng;
using num::Graph;
using num::Tensor;
using num::Var;
using tok::ComplementorBank;
using tok::PatchConfig;

enum class TokenizeMode { kPatch, kInvert };

struct ModelConfig {
    int t_in = 96;
    int t_out = 96;
    int patch_len = 16;
    int stride = 8;
    int k_complementors = 3;
    int d_model = 32;
    int heads = 4;
    int blocks = 2;
    int d_ff = 64;
    int n_channels = 1;
    bool share_complementors = false;
    TokenizeMode mode = TokenizeMode::kPatch;
    double dropout = 0.0;

    PatchConfig patch() const { return PatchConfig{patch_len, stride, t_in}; }
    int d_k() const { return d_model / heads; }
    int n_original() const;  // rows feeding the decoder: L_c or N
    int token_width() const { return mode == TokenizeMode::kPatch ? patch_len : t_in; }
    int n_banks() const;
    void validate() const;
};

// Per-head projections plus the shared output projection.
struct AttentionParams {
    std::vector<Tensor> w_q, w_k, w_v;  // each d_model x d_k
    Tensor w_o;                         // (heads * d_k) x d_model
    int heads = 0;
    int d_k = 0;
};

// Pre-norm residual block: z + attn(ln1(z)), then + ffn(ln2(.)).
struct EncoderBlock {
    AttentionParams attn;
    Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    Tensor w1, b1;  // d_model x d_ff
    Tensor w2, b2;  // d_ff x d_model
};

// Flatten-then-project head consuming exactly the original token rows.
struct DecoderHead {
    Tensor w;  // (n_original * d_model) x t_out
    Tensor b;  // t_out
    int n_original = 0;
};

struct ModelParams {
    ModelConfig cfg;
    Tensor w_embed, b_embed;
    Tensor positional;  // L_c x d_model; unused in invert mode
    std::vector<EncoderBlock> blocks;
    DecoderHead head;       // patch mode
    Tensor w_dec_token;     // invert mode: d_model x t_out shared per token
    Tensor b_dec_token;
    ComplementorBank banks;

    static ModelParams init(const ModelConfig& cfg, uint64_t seed);

    // Fixed declaration order: embedding, positional, blocks (per head
    // q/k/v, then o, norms, feed-forward), decoder, banks.
    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<Tensor*> all();
    long long parameter_count();
};

// ---- value-level operation surface ----
// query_count: number of leading rows used as queries (-1 = all rows).
// key_count: number of leading rows visible as keys/values (-1 = all); used
// to demonstrate that masking complementor keys reproduces the K=0 pass.
Tensor multi_head_attention(const Tensor& z, const AttentionParams& p, int query_count = -1,
                            int key_count = -1);
// query_count >= 0 restricts the block to the leading output rows (keys and
// values still cover every token); row-wise identical to slicing afterwards.
Tensor encoder_block(const Tensor& z, const EncoderBlock& blk, int key_count = -1,
                     int query_count = -1);
// final_query_count, when >= 0, applies the query restriction to the last
// block only, an inference shortcut that drops complementor output rows the
// decoder would discard anyway.
Tensor encode(const Tensor& z_embed, const std::vector<EncoderBlock>& blocks, int key_count = -1,
              int final_query_count = -1);
Tensor decode(const Tensor& z_enc, const DecoderHead& head, int n_original);  // 1-D t_out

struct ChannelForward {
    Tensor forecast;  // 1-D t_out
    Tensor z_enc;     // (n_original + k) x d_model
};
ChannelForward forward_channel(const ModelParams& params, const std::vector<double>& x_channel,
                               int channel_index);

struct ForwardResult {
    Tensor forecast;              // t_out x n
    std::vector<Tensor> z_enc;    // per channel (single entry in invert mode)
};
ForwardResult forward(const ModelParams& params, const Tensor& x_window);

// ---- graph mirror ----
struct ParamVars {
    Var w_embed, b_embed, positional;
    struct BlockVars {
        std::vector<Var> w_q, w_k, w_v;
        Var w_o, ln1_gamma, ln1_beta, ln2_gamma, ln2_beta, w1, b1, w2, b2;
    };
    std::vector<BlockVars> blocks;
    Var w_dec, b_dec;
    std::vector<Var> banks;
};
ParamVars bind_params(Graph& g, const ModelParams& params, bool trainable);

Var attention_var(Graph& g, Var z, const ParamVars::BlockVars& p, int heads, int d_k,
                  int query_count = -1);
Var encoder_block_var(Graph& g, Var z, const ParamVars::BlockVars& p, int heads, int d_k,
                      double dropout, CounterRng* rng);
Var encode_var(Graph& g, Var z, const ParamVars& pv, const ModelConfig& cfg, CounterRng* rng);
Var decode_var(Graph& g, Var z_enc, const ParamVars& pv, const ModelConfig& cfg);

struct ChannelForwardVars {
    Var forecast;  // {t_out}
    Var z_enc;
};
ChannelForwardVars forward_channel_var(Graph& g, const ModelParams& params, const ParamVars& pv,
                                       Var x_channel, int channel_index,
                                       CounterRng* dropout_rng = nullptr);

struct WindowForwardVars {
    Var forecast;  // {t_out, n}
    Var z_enc;
};
WindowForwardVars forward_window_invert_var(Graph& g, const ModelParams& params,
                                            const ParamVars& pv, Var x_window,
                                            CounterRng* dropout_rng = nullptr);

}  // namespace seqcomp::enc
