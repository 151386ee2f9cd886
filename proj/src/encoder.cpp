#include "seqcomp/encoder.hpp"

#include <cmath>

#include "seqcomp/error.hpp"

namespace seqcomp::enc {

int ModelConfig::n_original() const {
    return mode == TokenizeMode::kPatch ? patch().token_count() : n_channels;
}

int ModelConfig::n_banks() const {
    if (k_complementors == 0) return 0;
    if (mode == TokenizeMode::kInvert || share_complementors) return 1;
    return n_channels;
}

void ModelConfig::validate() const {
    if (t_in <= 0 || t_out <= 0 || d_model <= 0 || heads <= 0 || blocks <= 0 || n_channels <= 0)
        throw ConfigError("model config: all counts must be positive");
    if (d_model % heads != 0)
        throw ConfigError("model config: d_model " + std::to_string(d_model) +
                          " not divisible by heads " + std::to_string(heads));
    if (d_ff < d_model)
        throw ConfigError("model config: d_ff " + std::to_string(d_ff) + " below d_model " +
                          std::to_string(d_model));
    if (k_complementors < 0) throw ConfigError("model config: negative complementor count");
    if (k_complementors > token_width())
        throw ConfigError("model config: k " + std::to_string(k_complementors) +
                          " exceeds token width " + std::to_string(token_width()));
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout must be in [0, 1)");
    if (mode == TokenizeMode::kPatch) patch().validate();
}

namespace {

Tensor uniform_init(std::vector<int> shape, double bound, CounterRng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.values) v = (rng.uniform() * 2.0 - 1.0) * bound;
    return t;
}

Tensor normal_init(std::vector<int> shape, double sd, CounterRng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.values) v = rng.normal() * sd;
    return t;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    CounterRng rng(seed);
    ModelParams p;
    p.cfg = cfg;

    const int width = cfg.token_width();
    const int d = cfg.d_model;
    p.w_embed = uniform_init({width, d}, 1.0 / std::sqrt(static_cast<double>(width)), rng);
    p.b_embed = Tensor::zeros({d});
    if (cfg.mode == TokenizeMode::kPatch)
        p.positional = normal_init({cfg.patch().token_count(), d}, 0.02, rng);

    for (int b = 0; b < cfg.blocks; ++b) {
        EncoderBlock blk;
        blk.attn.heads = cfg.heads;
        blk.attn.d_k = cfg.d_k();
        const double attn_bound = 1.0 / std::sqrt(static_cast<double>(d));
        for (int h = 0; h < cfg.heads; ++h) {
            blk.attn.w_q.push_back(uniform_init({d, cfg.d_k()}, attn_bound, rng));
            blk.attn.w_k.push_back(uniform_init({d, cfg.d_k()}, attn_bound, rng));
            blk.attn.w_v.push_back(uniform_init({d, cfg.d_k()}, attn_bound, rng));
        }
        blk.attn.w_o = uniform_init({cfg.heads * cfg.d_k(), d}, attn_bound, rng);
        blk.ln1_gamma = Tensor::full({d}, 1.0);
        blk.ln1_beta = Tensor::zeros({d});
        blk.ln2_gamma = Tensor::full({d}, 1.0);
        blk.ln2_beta = Tensor::zeros({d});
        blk.w1 = uniform_init({d, cfg.d_ff}, attn_bound, rng);
        blk.b1 = Tensor::zeros({cfg.d_ff});
        blk.w2 = uniform_init({cfg.d_ff, d}, 1.0 / std::sqrt(static_cast<double>(cfg.d_ff)), rng);
        blk.b2 = Tensor::zeros({d});
        p.blocks.push_back(std::move(blk));
    }

    if (cfg.mode == TokenizeMode::kPatch) {
        const int flat = cfg.n_original() * d;
        p.head.w = uniform_init({flat, cfg.t_out}, 1.0 / std::sqrt(static_cast<double>(flat)), rng);
        p.head.b = Tensor::zeros({cfg.t_out});
        p.head.n_original = cfg.n_original();
    } else {
        p.w_dec_token = uniform_init({d, cfg.t_out}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
        p.b_dec_token = Tensor::zeros({cfg.t_out});
    }

    if (cfg.k_complementors > 0)
        p.banks = ComplementorBank::init(cfg.n_banks(), cfg.k_complementors, width, rng);
    else
        p.banks.k = 0;
    return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("embed.w", &w_embed);
    out.emplace_back("embed.b", &b_embed);
    if (cfg.mode == TokenizeMode::kPatch) out.emplace_back("pos", &positional);
    for (size_t b = 0; b < blocks.size(); ++b) {
        const std::string base = "block" + std::to_string(b) + ".";
        for (int h = 0; h < blocks[b].attn.heads; ++h) {
            const std::string hb = base + "head" + std::to_string(h) + ".";
            out.emplace_back(hb + "wq", &blocks[b].attn.w_q[h]);
            out.emplace_back(hb + "wk", &blocks[b].attn.w_k[h]);
            out.emplace_back(hb + "wv", &blocks[b].attn.w_v[h]);
        }
        out.emplace_back(base + "wo", &blocks[b].attn.w_o);
        out.emplace_back(base + "ln1.gamma", &blocks[b].ln1_gamma);
        out.emplace_back(base + "ln1.beta", &blocks[b].ln1_beta);
        out.emplace_back(base + "ln2.gamma", &blocks[b].ln2_gamma);
        out.emplace_back(base + "ln2.beta", &blocks[b].ln2_beta);
        out.emplace_back(base + "ffn.w1", &blocks[b].w1);
        out.emplace_back(base + "ffn.b1", &blocks[b].b1);
        out.emplace_back(base + "ffn.w2", &blocks[b].w2);
        out.emplace_back(base + "ffn.b2", &blocks[b].b2);
    }
    if (cfg.mode == TokenizeMode::kPatch) {
        out.emplace_back("dec.w", &head.w);
        out.emplace_back("dec.b", &head.b);
    } else {
        out.emplace_back("dec.w", &w_dec_token);
        out.emplace_back("dec.b", &b_dec_token);
    }
    for (size_t b = 0; b < banks.raw.size(); ++b)
        out.emplace_back("bank" + std::to_string(b), &banks.raw[b]);
    return out;
}

std::vector<Tensor*> ModelParams::all() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

long long ModelParams::parameter_count() {
    long long n = 0;
    for (Tensor* t : all()) n += t->size();
    return n;
}

Tensor multi_head_attention(const Tensor& z, const AttentionParams& p, int query_count,
                            int key_count) {
    if (query_count == 0) throw ShapeError("multi_head_attention: empty query selection");
    const Tensor zq = (query_count < 0 || query_count == z.rows())
                          ? z
                          : num::slice_rows(z, 0, query_count);
    const Tensor zk = (key_count < 0 || key_count == z.rows()) ? z : num::slice_rows(z, 0, key_count);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(p.d_k));
    Tensor cat;
    for (int h = 0; h < p.heads; ++h) {
        Tensor q = num::matmul(zq, p.w_q[h]);
        Tensor k = num::matmul(zk, p.w_k[h]);
        Tensor v = num::matmul(zk, p.w_v[h]);
        Tensor scores = num::scale(num::matmul(q, num::transpose(k)), inv_sqrt_dk);
        Tensor attn = num::softmax_rows(scores);
        Tensor head = num::matmul(attn, v);
        cat = (h == 0) ? std::move(head) : num::concat_cols(cat, head);
    }
    return num::matmul(cat, p.w_o);
}

Tensor encoder_block(const Tensor& z, const EncoderBlock& blk, int key_count, int query_count) {
    Tensor a = multi_head_attention(num::layer_norm(z, blk.ln1_gamma, blk.ln1_beta), blk.attn,
                                    query_count, key_count);
    const Tensor base = (query_count < 0 || query_count == z.rows())
                            ? z
                            : num::slice_rows(z, 0, query_count);
    Tensor z1 = num::add(base, a);
    Tensor h = num::layer_norm(z1, blk.ln2_gamma, blk.ln2_beta);
    Tensor f = num::add_row_broadcast(num::matmul(h, blk.w1), blk.b1);
    f = num::matmul(num::gelu(f), blk.w2);
    f = num::add_row_broadcast(f, blk.b2);
    return num::add(z1, f);
}

Tensor encode(const Tensor& z_embed, const std::vector<EncoderBlock>& blocks, int key_count,
              int final_query_count) {
    if (blocks.empty()) throw ConfigError("encode: at least one encoder block required");
    Tensor z = z_embed;
    for (size_t b = 0; b < blocks.size(); ++b) {
        const bool last = b + 1 == blocks.size();
        z = encoder_block(z, blocks[b], key_count, last ? final_query_count : -1);
    }
    return z;
}

Tensor decode(const Tensor& z_enc, const DecoderHead& head, int n_original) {
    if (z_enc.rows() < n_original)
        throw ShapeError("decode: " + std::to_string(z_enc.rows()) + " rows, need " +
                         std::to_string(n_original));
    Tensor orig = (z_enc.rows() == n_original) ? z_enc : num::slice_rows(z_enc, 0, n_original);
    Tensor flat = num::reshape(orig, {1, n_original * z_enc.cols()});
    Tensor out = num::add_row_broadcast(num::matmul(flat, head.w), head.b);
    return num::reshape(out, {head.b.cols()});
}

ChannelForward forward_channel(const ModelParams& params, const std::vector<double>& x_channel,
                               int channel_index) {
    const ModelConfig& cfg = params.cfg;
    if (cfg.mode != TokenizeMode::kPatch)
        throw ConfigError("forward_channel: requires patch tokenization");
    Tensor col({cfg.t_in, 1}, std::vector<double>(x_channel));
    auto [norm, state] = tok::revin_normalize(col);

    Tensor patches = tok::patchify(norm.values, cfg.patch());
    const int bank_idx = params.banks.raw.empty()
                             ? -1
                             : (cfg.share_complementors
                                    ? 0
                                    : channel_index % static_cast<int>(params.banks.raw.size()));
    tok::TokenSequence tokens =
        (bank_idx >= 0) ? tok::attach_complementors(patches, params.banks.normalized(bank_idx))
                        : tok::TokenSequence(patches, patches.rows(), 0);
    tok::TokenSequence zemb = tok::embed(tokens, params.w_embed, params.b_embed);
    tok::TokenSequence ze = tok::add_positional(zemb, params.positional);
    Tensor z_enc = encode(ze.tokens, params.blocks);
    Tensor dec = decode(z_enc, params.head, cfg.n_original());

    Tensor fc({cfg.t_out, 1}, dec.values);
    Tensor y = tok::revin_denormalize(fc, state);
    return ChannelForward{num::reshape(y, {cfg.t_out}), std::move(z_enc)};
}

ForwardResult forward(const ModelParams& params, const Tensor& x_window) {
    const ModelConfig& cfg = params.cfg;
    if (x_window.rows() != cfg.t_in || x_window.cols() != cfg.n_channels)
        throw ShapeError("forward: window " + x_window.shape_str() + " does not match config");

    ForwardResult res;
    res.forecast = Tensor::zeros({cfg.t_out, cfg.n_channels});

    if (cfg.mode == TokenizeMode::kPatch) {
        for (int c = 0; c < cfg.n_channels; ++c) {
            std::vector<double> col(cfg.t_in);
            for (int i = 0; i < cfg.t_in; ++i) col[i] = x_window.at(i, c);
            ChannelForward fc = forward_channel(params, col, c);
            for (int i = 0; i < cfg.t_out; ++i) res.forecast.at(i, c) = fc.forecast.values[i];
            res.z_enc.push_back(std::move(fc.z_enc));
        }
        return res;
    }

    // Inverted tokenization: each variate is one token, no positional step.
    auto [norm, state] = tok::revin_normalize(x_window);
    tok::TokenSequence tokens = params.banks.raw.empty()
                                    ? tok::invert_tokenize(norm, Tensor())
                                    : tok::invert_tokenize(norm, params.banks.normalized(0));
    tok::TokenSequence zemb = tok::embed(tokens, params.w_embed, params.b_embed);
    Tensor z_enc = encode(zemb.tokens, params.blocks);
    Tensor orig = (tokens.n_complementors > 0) ? num::slice_rows(z_enc, 0, cfg.n_channels) : z_enc;
    Tensor proj = num::add_row_broadcast(num::matmul(orig, params.w_dec_token), params.b_dec_token);
    Tensor y_norm = num::transpose(proj);  // t_out x n
    res.forecast = tok::revin_denormalize(y_norm, state);
    res.z_enc.push_back(std::move(z_enc));
    return res;
}

ParamVars bind_params(Graph& g, const ModelParams& params, bool trainable) {
    ParamVars pv;
    pv.w_embed = g.leaf(params.w_embed, trainable);
    pv.b_embed = g.leaf(params.b_embed, trainable);
    if (params.cfg.mode == TokenizeMode::kPatch)
        pv.positional = g.leaf(params.positional, trainable);
    for (const EncoderBlock& blk : params.blocks) {
        ParamVars::BlockVars bv;
        for (int h = 0; h < blk.attn.heads; ++h) {
            bv.w_q.push_back(g.leaf(blk.attn.w_q[h], trainable));
            bv.w_k.push_back(g.leaf(blk.attn.w_k[h], trainable));
            bv.w_v.push_back(g.leaf(blk.attn.w_v[h], trainable));
        }
        bv.w_o = g.leaf(blk.attn.w_o, trainable);
        bv.ln1_gamma = g.leaf(blk.ln1_gamma, trainable);
        bv.ln1_beta = g.leaf(blk.ln1_beta, trainable);
        bv.ln2_gamma = g.leaf(blk.ln2_gamma, trainable);
        bv.ln2_beta = g.leaf(blk.ln2_beta, trainable);
        bv.w1 = g.leaf(blk.w1, trainable);
        bv.b1 = g.leaf(blk.b1, trainable);
        bv.w2 = g.leaf(blk.w2, trainable);
        bv.b2 = g.leaf(blk.b2, trainable);
        pv.blocks.push_back(std::move(bv));
    }
    if (params.cfg.mode == TokenizeMode::kPatch) {
        pv.w_dec = g.leaf(params.head.w, trainable);
        pv.b_dec = g.leaf(params.head.b, trainable);
    } else {
        pv.w_dec = g.leaf(params.w_dec_token, trainable);
        pv.b_dec = g.leaf(params.b_dec_token, trainable);
    }
    for (const Tensor& bank : params.banks.raw) pv.banks.push_back(g.leaf(bank, trainable));
    return pv;
}

Var attention_var(Graph& g, Var z, const ParamVars::BlockVars& p, int heads, int d_k,
                  int query_count) {
    if (query_count == 0) throw ShapeError("multi_head_attention: empty query selection");
    Var zq = (query_count < 0 || query_count == g.value(z).rows())
                 ? z
                 : g.slice_rows(z, 0, query_count);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
    Var cat;
    for (int h = 0; h < heads; ++h) {
        Var q = g.matmul(zq, p.w_q[h]);
        Var k = g.matmul(z, p.w_k[h]);
        Var v = g.matmul(z, p.w_v[h]);
        Var scores = g.scale(g.matmul(q, g.transpose(k)), inv_sqrt_dk);
        Var attn = g.softmax_rows(scores);
        Var head = g.matmul(attn, v);
        cat = (h == 0) ? head : g.concat_cols(cat, head);
    }
    return g.matmul(cat, p.w_o);
}

Var encoder_block_var(Graph& g, Var z, const ParamVars::BlockVars& p, int heads, int d_k,
                      double dropout, CounterRng* rng) {
    Var a = attention_var(g, g.layer_norm(z, p.ln1_gamma, p.ln1_beta), p, heads, d_k);
    if (dropout > 0.0 && rng) a = g.dropout(a, dropout, *rng);
    Var z1 = g.add(z, a);
    Var h = g.layer_norm(z1, p.ln2_gamma, p.ln2_beta);
    Var f = g.add_row_broadcast(g.matmul(h, p.w1), p.b1);
    f = g.add_row_broadcast(g.matmul(g.gelu(f), p.w2), p.b2);
    if (dropout > 0.0 && rng) f = g.dropout(f, dropout, *rng);
    return g.add(z1, f);
}

Var encode_var(Graph& g, Var z, const ParamVars& pv, const ModelConfig& cfg, CounterRng* rng) {
    for (const auto& bv : pv.blocks)
        z = encoder_block_var(g, z, bv, cfg.heads, cfg.d_k(), cfg.dropout, rng);
    return z;
}

Var decode_var(Graph& g, Var z_enc, const ParamVars& pv, const ModelConfig& cfg) {
    const int n_orig = cfg.n_original();
    Var orig = (g.value(z_enc).rows() == n_orig) ? z_enc : g.slice_rows(z_enc, 0, n_orig);
    Var flat = g.reshape(orig, {1, n_orig * cfg.d_model});
    Var out = g.add_row_broadcast(g.matmul(flat, pv.w_dec), pv.b_dec);
    return g.reshape(out, {cfg.t_out});
}

ChannelForwardVars forward_channel_var(Graph& g, const ModelParams& params, const ParamVars& pv,
                                       Var x_channel, int channel_index, CounterRng* dropout_rng) {
    const ModelConfig& cfg = params.cfg;
    tok::RevinVars rv = tok::revin_normalize_var(g, x_channel);
    Var patches = tok::patchify_var(g, rv.normalized, cfg.patch());
    const int l_c = cfg.n_original();

    Var tokens = patches;
    if (!pv.banks.empty()) {
        const int bank_idx =
            cfg.share_complementors ? 0 : channel_index % static_cast<int>(pv.banks.size());
        Var s_norm = g.normalize_rows(pv.banks[bank_idx]);
        tokens = g.concat_rows(patches, s_norm);
    }
    Var zemb = g.add_row_broadcast(g.matmul(tokens, pv.w_embed), pv.b_embed);
    Var ze;
    if (!pv.banks.empty()) {
        Var orig = g.add(g.slice_rows(zemb, 0, l_c), pv.positional);
        Var comp = g.slice_rows(zemb, l_c, l_c + cfg.k_complementors);
        ze = g.concat_rows(orig, comp);
    } else {
        ze = g.add(zemb, pv.positional);
    }
    Var z_enc = encode_var(g, ze, pv, cfg, dropout_rng);
    Var dec = decode_var(g, z_enc, pv, cfg);
    Var fc = g.reshape(dec, {cfg.t_out, 1});
    Var y = tok::revin_denormalize_var(g, fc, rv);
    return ChannelForwardVars{g.reshape(y, {cfg.t_out}), z_enc};
}

WindowForwardVars forward_window_invert_var(Graph& g, const ModelParams& params,
                                            const ParamVars& pv, Var x_window,
                                            CounterRng* dropout_rng) {
    const ModelConfig& cfg = params.cfg;
    Var xt = g.transpose(x_window);  // n x t_in
    std::vector<tok::RevinVars> states;
    Var tokens;
    for (int c = 0; c < cfg.n_channels; ++c) {
        Var row = g.slice_rows(xt, c, c + 1);
        tok::RevinVars rv = tok::revin_normalize_var(g, row);
        states.push_back(rv);
        tokens = (c == 0) ? rv.normalized : g.concat_rows(tokens, rv.normalized);
    }
    if (!pv.banks.empty()) tokens = g.concat_rows(tokens, g.normalize_rows(pv.banks[0]));
    Var zemb = g.add_row_broadcast(g.matmul(tokens, pv.w_embed), pv.b_embed);
    Var z_enc = encode_var(g, zemb, pv, cfg, dropout_rng);
    Var orig = pv.banks.empty() ? z_enc : g.slice_rows(z_enc, 0, cfg.n_channels);
    Var proj = g.add_row_broadcast(g.matmul(orig, pv.w_dec), pv.b_dec);  // n x t_out
    Var denorm;
    for (int c = 0; c < cfg.n_channels; ++c) {
        Var row = g.slice_rows(proj, c, c + 1);
        Var y = tok::revin_denormalize_var(g, row, states[c]);
        denorm = (c == 0) ? y : g.concat_rows(denorm, y);
    }
    return WindowForwardVars{g.transpose(denorm), z_enc};
}

}  // namespace seqcomp::enc
