#include "seqcomp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "seqcomp/divloss.hpp"
#include "seqcomp/error.hpp"

namespace seqcomp::train {

using data::Dataset;
using data::MetricsReport;
using data::Split;
using data::WindowSampler;
using data::WindowSet;
using enc::ModelParams;
using enc::ParamVars;
using num::CounterRng;
using num::Graph;
using num::Tensor;
using num::Var;

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
    if (t_in <= 0 || t_out <= 0 || patch_len <= 0 || stride <= 0 || batch_size <= 0 ||
        heads <= 0 || blocks <= 0 || embed_dim <= 0 || epochs <= 0 || runs <= 0 ||
        train_window_stride <= 0 || eval_window_stride <= 0)
        throw ConfigError("train config: all counts must be positive");
    if (patience < 0) throw ConfigError("train config: patience must be non-negative");
    if (k_complementors < 0) throw ConfigError("train config: negative complementor count");
    if (tokenize_mode != "patch" && tokenize_mode != "invert")
        throw ConfigError("train config: tokenize_mode must be 'patch' or 'invert'");
    const int width = tokenize_mode == "patch" ? patch_len : t_in;
    if (k_complementors > width)
        throw ConfigError("train config: k_complementors " + std::to_string(k_complementors) +
                          " exceeds " + (tokenize_mode == "patch" ? "patch_len" : "t_in"));
    if (diversification && lambda_dcs <= 0.0)
        throw ConfigError("train config: lambda_dcs must be positive when diversification is on");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("train config: dropout must be in [0, 1)");
}

enc::ModelConfig TrainConfig::model_config(int n_channels) const {
    enc::ModelConfig m;
    m.t_in = t_in;
    m.t_out = t_out;
    m.patch_len = patch_len;
    m.stride = stride;
    m.k_complementors = k_complementors;
    m.d_model = embed_dim;
    m.heads = heads;
    m.blocks = blocks;
    m.d_ff = resolved_d_ff();
    m.n_channels = n_channels;
    m.share_complementors = share_complementors;
    m.mode = tokenize_mode == "patch" ? enc::TokenizeMode::kPatch : enc::TokenizeMode::kInvert;
    m.dropout = dropout;
    m.validate();
    return m;
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "t_in", "t_out", "patch_len", "stride", "k_complementors", "lambda_dcs", "lr",
        "batch_size", "heads", "blocks", "embed_dim", "d_ff", "dropout", "epochs", "patience",
        "seed", "runs", "tokenize_mode", "share_complementors", "diversification", "dataset",
        "split_preset", "season_m", "train_window_stride", "eval_window_stride", "out_dir"};
    return keys;
}

}  // namespace

void TrainConfig::apply_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    const auto& keys = known_keys();
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
            throw ConfigError("config: unknown key '" + it.key() + "'");
    }
    read_key(j, "t_in", t_in);
    read_key(j, "t_out", t_out);
    read_key(j, "patch_len", patch_len);
    read_key(j, "stride", stride);
    read_key(j, "k_complementors", k_complementors);
    read_key(j, "lambda_dcs", lambda_dcs);
    read_key(j, "lr", lr);
    read_key(j, "batch_size", batch_size);
    read_key(j, "heads", heads);
    read_key(j, "blocks", blocks);
    read_key(j, "embed_dim", embed_dim);
    read_key(j, "d_ff", d_ff);
    read_key(j, "dropout", dropout);
    read_key(j, "epochs", epochs);
    read_key(j, "patience", patience);
    read_key(j, "seed", seed);
    read_key(j, "runs", runs);
    read_key(j, "tokenize_mode", tokenize_mode);
    read_key(j, "share_complementors", share_complementors);
    read_key(j, "diversification", diversification);
    read_key(j, "dataset", dataset);
    read_key(j, "split_preset", split_preset);
    read_key(j, "season_m", season_m);
    read_key(j, "train_window_stride", train_window_stride);
    read_key(j, "eval_window_stride", eval_window_stride);
    read_key(j, "out_dir", out_dir);
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig cfg;
    cfg.apply_json(j);
    cfg.validate();
    return cfg;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    return from_json(j);
}

json TrainConfig::to_json() const {
    return json{{"t_in", t_in},
                {"t_out", t_out},
                {"patch_len", patch_len},
                {"stride", stride},
                {"k_complementors", k_complementors},
                {"lambda_dcs", lambda_dcs},
                {"lr", lr},
                {"batch_size", batch_size},
                {"heads", heads},
                {"blocks", blocks},
                {"embed_dim", embed_dim},
                {"d_ff", d_ff},
                {"dropout", dropout},
                {"epochs", epochs},
                {"patience", patience},
                {"seed", seed},
                {"runs", runs},
                {"tokenize_mode", tokenize_mode},
                {"share_complementors", share_complementors},
                {"diversification", diversification},
                {"dataset", dataset},
                {"split_preset", split_preset},
                {"season_m", season_m},
                {"train_window_stride", train_window_stride},
                {"eval_window_stride", eval_window_stride},
                {"out_dir", out_dir}};
}

uint64_t TrainConfig::config_hash() const {
    const std::string dump = to_json().dump();
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

void write_array(std::ostream& os, const std::string& name, const Tensor& t) {
    os << name << " " << t.rank();
    for (int d : t.shape) os << " " << d;
    os << "\n";
    char buf[40];
    for (size_t i = 0; i < t.values.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", t.values[i]);
        os << (i ? " " : "") << buf;
    }
    os << "\n";
}

Tensor read_array(std::istream& is, std::string& name) {
    int rank = 0;
    if (!(is >> name >> rank) || rank < 0 || rank > 4)
        throw ParseError("checkpoint: malformed array header");
    std::vector<int> shape(rank);
    for (int& d : shape)
        if (!(is >> d)) throw ParseError("checkpoint: malformed array shape");
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.values)
        if (!(is >> v)) throw ParseError("checkpoint: truncated array " + name);
    return t;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ParseError("checkpoint: cannot open for writing: " + path);
    os << "seqcompckpt " << version << "\n";
    os << "epoch " << epoch << "\n";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", best_val_mse);
    os << "best_val_mse " << buf << "\n";
    os << "rng_counter " << rng_counter << "\n";
    os << "n_channels " << params.cfg.n_channels << "\n";
    os << "config " << config.to_json().dump() << "\n";

    ModelParams& p = const_cast<ModelParams&>(params);
    auto named = p.named();
    os << "params " << named.size() << "\n";
    for (auto& [name, t] : named) write_array(os, name, *t);

    os << "adam " << adam.step << " ";
    std::snprintf(buf, sizeof(buf), "%.17g", adam.lr);
    os << buf << " " << adam.beta1 << " " << adam.beta2 << " " << adam.eps << "\n";
    os << "moments " << adam.m.size() << "\n";
    for (size_t i = 0; i < adam.m.size(); ++i) {
        write_array(os, "m" + std::to_string(i), adam.m[i]);
        write_array(os, "v" + std::to_string(i), adam.v[i]);
    }
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("checkpoint: cannot open " + path);
    std::string tag;
    Checkpoint ck;
    is >> tag >> ck.version;
    if (tag != "seqcompckpt" || ck.version != 1)
        throw ParseError("checkpoint: unsupported container '" + tag + "'");
    int n_channels = 0;
    is >> tag >> ck.epoch;           // epoch
    is >> tag >> ck.best_val_mse;    // best_val_mse
    is >> tag >> ck.rng_counter;     // rng_counter
    is >> tag >> n_channels;         // n_channels
    is >> tag;                       // config
    std::string cfg_line;
    std::getline(is, cfg_line);
    ck.config = TrainConfig::from_json(json::parse(cfg_line));

    ck.params = ModelParams::init(ck.config.model_config(n_channels), ck.config.seed);
    size_t n_arrays = 0;
    is >> tag >> n_arrays;
    if (tag != "params") throw ParseError("checkpoint: missing params section");
    auto named = ck.params.named();
    if (named.size() != n_arrays)
        throw ParseError("checkpoint: expected " + std::to_string(named.size()) + " arrays, found " +
                         std::to_string(n_arrays));
    for (size_t i = 0; i < n_arrays; ++i) {
        std::string name;
        Tensor t = read_array(is, name);
        if (name != named[i].first || !t.same_shape(*named[i].second))
            throw ParseError("checkpoint: array mismatch at '" + name + "'");
        *named[i].second = std::move(t);
    }

    is >> tag >> ck.adam.step >> ck.adam.lr >> ck.adam.beta1 >> ck.adam.beta2 >> ck.adam.eps;
    if (tag != "adam") throw ParseError("checkpoint: missing adam section");
    size_t n_moments = 0;
    is >> tag >> n_moments;
    if (tag != "moments" || n_moments != named.size())
        throw ParseError("checkpoint: malformed moments section");
    for (size_t i = 0; i < n_moments; ++i) {
        std::string name;
        ck.adam.m.push_back(read_array(is, name));
        ck.adam.v.push_back(read_array(is, name));
    }
    return ck;
}

// ---------------------------------------------------------------------------
// Evaluation

MetricsReport evaluate(const ModelParams& params, const Dataset& ds, Split split,
                       int window_stride, int season_m) {
    const enc::ModelConfig& cfg = params.cfg;
    WindowSet ws(ds, WindowSampler{cfg.t_in, cfg.t_out, window_stride, split});
    const int n = ds.channels();

    MetricsReport rep;
    rep.windows = ws.size();
    std::vector<double> sq_per_step(cfg.t_out, 0.0);
    double abs_sum = 0.0, smape_sum = 0.0, mape_sum = 0.0;
    double mase_sum = 0.0, naive_mase_sum = 0.0;
    long long mase_count = 0;
    double naive_sq = 0.0, naive_smape_sum = 0.0;
    long long entries = 0;

    for (int w = 0; w < ws.size(); ++w) {
        tok::SeriesWindow win = ws.get(w);
        enc::ForwardResult fr = enc::forward(params, win.x);
        for (int c = 0; c < n; ++c) {
            std::vector<double> history(cfg.t_in);
            for (int i = 0; i < cfg.t_in; ++i) history[i] = win.x.at(i, c);
            std::vector<double> naive = data::naive2_forecast(history, season_m, cfg.t_out);
            Tensor y = Tensor::zeros({cfg.t_out});
            Tensor y_hat = Tensor::zeros({cfg.t_out});
            Tensor y_naive({cfg.t_out}, std::move(naive));
            for (int s = 0; s < cfg.t_out; ++s) {
                y.values[s] = win.y.at(s, c);
                y_hat.values[s] = fr.forecast.at(s, c);
                const double d = y.values[s] - y_hat.values[s];
                sq_per_step[s] += d * d;
                abs_sum += std::abs(d);
                const double denom = std::abs(y.values[s]) + std::abs(y_hat.values[s]);
                if (denom > 0.0) smape_sum += std::abs(d) / denom;
                if (std::abs(y.values[s]) > 0.0) mape_sum += std::abs(d) / std::abs(y.values[s]);
                const double dn = y.values[s] - y_naive.values[s];
                naive_sq += dn * dn;
                const double denom_n = std::abs(y.values[s]) + std::abs(y_naive.values[s]);
                if (denom_n > 0.0) naive_smape_sum += std::abs(dn) / denom_n;
                ++entries;
            }
            try {
                mase_sum += data::mase(y, y_hat, history, season_m);
                naive_mase_sum += data::mase(y, y_naive, history, season_m);
                ++mase_count;
            } catch (const DegenerateInputError&) {
                // constant window: the naive scale is undefined, skip the pair
            }
        }
    }
    if (entries == 0) throw ConfigError("evaluate: no forecast entries");

    const double per_step_count = static_cast<double>(ws.size()) * n;
    rep.mse_per_step.resize(cfg.t_out);
    double mse_acc = 0.0;
    for (int s = 0; s < cfg.t_out; ++s) {
        rep.mse_per_step[s] = sq_per_step[s] / per_step_count;
        mse_acc += rep.mse_per_step[s];
    }
    rep.mse = mse_acc / cfg.t_out;  // headline = mean of per-step rows
    rep.mae = abs_sum / static_cast<double>(entries);
    rep.smape = 200.0 * smape_sum / static_cast<double>(entries);
    rep.mape = 100.0 * mape_sum / static_cast<double>(entries);
    rep.naive2_mse = naive_sq / static_cast<double>(entries);
    const double naive_smape = 200.0 * naive_smape_sum / static_cast<double>(entries);
    if (mase_count > 0) {
        rep.mase = mase_sum / static_cast<double>(mase_count);
        const double naive_mase = naive_mase_sum / static_cast<double>(mase_count);
        if (naive_smape > 0.0 && naive_mase > 0.0)
            rep.owa = data::owa(rep.smape, rep.mase, naive_smape, naive_mase);
    }
    return rep;
}

MetricsReport evaluate(const Checkpoint& ckpt, const Dataset& ds, Split split) {
    const int season = ckpt.config.season_m > 0 ? ckpt.config.season_m
                                                : data::default_season_m(ds.frequency);
    return evaluate(ckpt.params, ds, split, ckpt.config.eval_window_stride, season);
}

ProbeRichness probe_richness(const ModelParams& params, const Dataset& ds, int max_windows,
                             int eval_stride) {
    WindowSet ws(ds, WindowSampler{params.cfg.t_in, params.cfg.t_out, eval_stride, Split::kVal});
    const int take = std::min(max_windows, ws.size());
    if (take == 0) throw ConfigError("probe_richness: validation split has no windows");

    std::vector<double> full_rows, orig_rows;
    int d = params.cfg.d_model, n_full = 0, n_orig = 0;
    for (int w = 0; w < take; ++w) {
        enc::ForwardResult fr = enc::forward(params, ws.get(w).x);
        for (const Tensor& z : fr.z_enc) {
            const int rows = z.rows();
            const int orig = params.cfg.n_original();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < d; ++j) full_rows.push_back(z.at(i, j));
            n_full += rows;
            for (int i = 0; i < orig; ++i)
                for (int j = 0; j < d; ++j) orig_rows.push_back(z.at(i, j));
            n_orig += orig;
        }
    }
    Tensor full({n_full, d}, std::move(full_rows));
    Tensor orig({n_orig, d}, std::move(orig_rows));
    ProbeRichness pr;
    pr.entropy = richness::gaussian_entropy(full);
    pr.entropy_orig = richness::gaussian_entropy(orig);
    pr.dominant_ratio = richness::dominant_sv_ratio(full);
    return pr;
}

// ---------------------------------------------------------------------------
// Training

namespace {

Dataset prepare_dataset(const TrainConfig& cfg) {
    Dataset ds = data::load_csv(cfg.dataset);
    data::apply_split_preset(ds, cfg.split_preset);
    return data::standardize(ds);
}

struct BestState {
    ModelParams params;
    num::AdamState adam;
    int epoch = -1;
    double val_mse = 0.0;
};

std::pair<RunRecord, Checkpoint> run_one(const TrainConfig& cfg, const Dataset& ds,
                                         uint64_t seed) {
    const int season = cfg.season_m > 0 ? cfg.season_m : data::default_season_m(ds.frequency);
    enc::ModelConfig mcfg = cfg.model_config(ds.channels());
    ModelParams params = ModelParams::init(mcfg, seed);
    std::vector<Tensor*> plist = params.all();
    num::AdamState adam = num::AdamState::make(plist, cfg.lr);

    WindowSet train_ws(ds, WindowSampler{cfg.t_in, cfg.t_out, cfg.train_window_stride,
                                         Split::kTrain});
    CounterRng shuffle_rng(seed, 1001);
    CounterRng dropout_rng(seed, 1002);

    RunRecord rec;
    rec.seed = seed;
    BestState best;
    int stale_epochs = 0;
    const bool use_dcs = cfg.diversification && cfg.k_complementors >= 2;
    const bool patch_mode = mcfg.mode == enc::TokenizeMode::kPatch;

    std::vector<int> order(train_ws.size());
    for (int i = 0; i < train_ws.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates over window order.
        for (int i = train_ws.size() - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.next_u64() % (i + 1));
            std::swap(order[i], order[j]);
        }

        double ep_mse = 0.0, ep_dcs = 0.0, ep_obj = 0.0;
        int ep_steps = 0;
        bool aborted = false;
        for (int start = 0; start < train_ws.size(); start += cfg.batch_size) {
            const int stop = std::min(start + cfg.batch_size, train_ws.size());
            Graph g;
            ParamVars pv = enc::bind_params(g, params, true);
            std::vector<Var> losses;
            for (int b = start; b < stop; ++b) {
                tok::SeriesWindow win = train_ws.get(order[b]);
                if (patch_mode) {
                    for (int c = 0; c < mcfg.n_channels; ++c) {
                        std::vector<double> col(cfg.t_in), target(cfg.t_out);
                        for (int i = 0; i < cfg.t_in; ++i) col[i] = win.x.at(i, c);
                        for (int i = 0; i < cfg.t_out; ++i) target[i] = win.y.at(i, c);
                        Var x = g.constant(Tensor({cfg.t_in}, std::move(col)));
                        auto fv = enc::forward_channel_var(g, params, pv, x, c,
                                                           cfg.dropout > 0 ? &dropout_rng : nullptr);
                        losses.push_back(
                            g.mse_against(fv.forecast, Tensor({cfg.t_out}, std::move(target))));
                    }
                } else {
                    Var x = g.constant(win.x);
                    auto fv = enc::forward_window_invert_var(g, params, pv, x,
                                                             cfg.dropout > 0 ? &dropout_rng : nullptr);
                    losses.push_back(g.mse_against(fv.forecast, win.y));
                }
            }
            Var l_mse = losses.size() == 1 ? losses[0]
                                           : g.scale(g.add_n(losses), 1.0 / losses.size());
            Var l_obj = l_mse;
            double dcs_value = 0.0;
            if (use_dcs && !pv.banks.empty()) {
                std::vector<Var> bank_losses;
                for (Var bank : pv.banks)
                    bank_losses.push_back(diversity::dcs_loss_var(g, g.normalize_rows(bank)));
                Var l_dcs = bank_losses.size() == 1
                                ? bank_losses[0]
                                : g.scale(g.add_n(bank_losses), 1.0 / bank_losses.size());
                dcs_value = g.value(l_dcs).values[0];
                l_obj = g.add(l_mse, g.scale(l_dcs, cfg.lambda_dcs));
            }

            StepLog step;
            step.l_mse = g.value(l_mse).values[0];
            step.l_dcs = dcs_value;
            step.l_obj = g.value(l_obj).values[0];
            rec.steps.push_back(step);
            ep_mse += step.l_mse;
            ep_dcs += step.l_dcs;
            ep_obj += step.l_obj;
            ++ep_steps;

            if (!std::isfinite(step.l_obj)) {
                rec.diverged = true;
                aborted = true;
                break;
            }

            g.backward(l_obj);
            std::vector<Tensor> grads;
            grads.reserve(plist.size());
            {
                // Leaf order mirrors ModelParams::named(); adam buffers align.
                std::vector<Var> leaves;
                leaves.push_back(pv.w_embed);
                leaves.push_back(pv.b_embed);
                if (patch_mode) leaves.push_back(pv.positional);
                for (const auto& bv : pv.blocks) {
                    for (size_t h = 0; h < bv.w_q.size(); ++h) {
                        leaves.push_back(bv.w_q[h]);
                        leaves.push_back(bv.w_k[h]);
                        leaves.push_back(bv.w_v[h]);
                    }
                    leaves.push_back(bv.w_o);
                    leaves.push_back(bv.ln1_gamma);
                    leaves.push_back(bv.ln1_beta);
                    leaves.push_back(bv.ln2_gamma);
                    leaves.push_back(bv.ln2_beta);
                    leaves.push_back(bv.w1);
                    leaves.push_back(bv.b1);
                    leaves.push_back(bv.w2);
                    leaves.push_back(bv.b2);
                }
                leaves.push_back(pv.w_dec);
                leaves.push_back(pv.b_dec);
                for (Var bank : pv.banks) leaves.push_back(bank);
                if (leaves.size() != plist.size())
                    throw NumericalError("trainer: parameter binding misaligned");
                for (Var v : leaves) grads.push_back(g.grad_of(v));
            }
            std::vector<const Tensor*> gptrs;
            for (const Tensor& t : grads) gptrs.push_back(&t);
            num::adam_step(plist, gptrs, adam);
        }

        if (aborted) break;

        EpochLog el;
        el.epoch = epoch;
        el.train_mse = ep_mse / std::max(1, ep_steps);
        el.train_dcs = ep_dcs / std::max(1, ep_steps);
        el.train_obj = ep_obj / std::max(1, ep_steps);
        el.val_mse = evaluate(params, ds, Split::kVal, cfg.eval_window_stride, season).mse;
        ProbeRichness pr = probe_richness(params, ds, cfg.batch_size, cfg.eval_window_stride);
        el.entropy = pr.entropy;
        el.entropy_orig = pr.entropy_orig;
        el.dominant_ratio = pr.dominant_ratio;
        el.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.epochs.push_back(el);

        if (best.epoch < 0 || el.val_mse < best.val_mse) {
            best.params = params;
            best.adam = adam;
            best.epoch = epoch;
            best.val_mse = el.val_mse;
            stale_epochs = 0;
        } else if (++stale_epochs > cfg.patience) {
            break;
        }
    }

    if (best.epoch >= 0) {
        params = best.params;
        adam = best.adam;
    }
    rec.best_epoch = best.epoch;
    rec.test = evaluate(params, ds, Split::kTest, cfg.eval_window_stride, season);

    Checkpoint ck;
    ck.config = cfg;
    ck.config.seed = seed;
    ck.params = std::move(params);
    ck.adam = std::move(adam);
    ck.epoch = best.epoch;
    ck.best_val_mse = best.val_mse;
    ck.rng_counter = shuffle_rng.counter();
    return {std::move(rec), std::move(ck)};
}

MetricsReport mean_metrics(const std::vector<RunRecord>& runs) {
    MetricsReport mean;
    if (runs.empty()) return mean;
    for (const RunRecord& r : runs) {
        mean.mse += r.test.mse;
        mean.mae += r.test.mae;
        mean.smape += r.test.smape;
        mean.mape += r.test.mape;
        mean.mase += r.test.mase;
        mean.owa += r.test.owa;
        mean.naive2_mse += r.test.naive2_mse;
        mean.windows = r.test.windows;
        if (mean.mse_per_step.empty()) mean.mse_per_step.assign(r.test.mse_per_step.size(), 0.0);
        for (size_t i = 0; i < r.test.mse_per_step.size(); ++i)
            mean.mse_per_step[i] += r.test.mse_per_step[i];
    }
    const double n = static_cast<double>(runs.size());
    mean.mse /= n;
    mean.mae /= n;
    mean.smape /= n;
    mean.mape /= n;
    mean.mase /= n;
    mean.owa /= n;
    mean.naive2_mse /= n;
    for (double& v : mean.mse_per_step) v /= n;
    return mean;
}

}  // namespace

TrainOutput train(const TrainConfig& cfg, const Dataset* preloaded) {
    cfg.validate();
    Dataset local;
    const Dataset* ds = preloaded;
    if (!ds) {
        local = prepare_dataset(cfg);
        ds = &local;
    }
    TrainOutput out;
    out.record.config = cfg;
    out.record.config_hash = cfg.config_hash();
    for (int r = 0; r < cfg.runs; ++r) {
        auto [rec, ck] = run_one(cfg, *ds, cfg.seed + static_cast<uint64_t>(r));
        out.record.runs.push_back(std::move(rec));
        out.checkpoints.push_back(std::move(ck));
    }
    out.record.mean_test = mean_metrics(out.record.runs);
    return out;
}

// ---------------------------------------------------------------------------
// Records

namespace {

json metrics_json(const MetricsReport& m) {
    return json{{"mse", m.mse},       {"mae", m.mae},
                {"smape", m.smape},   {"mape", m.mape},
                {"mase", m.mase},     {"owa", m.owa},
                {"naive2_mse", m.naive2_mse}, {"windows", m.windows},
                {"mse_per_step", m.mse_per_step}};
}

}  // namespace

json ExperimentRecord::to_json(bool include_timing) const {
    json j;
    char hash_buf[24];
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                  static_cast<unsigned long long>(config_hash));
    j["config_hash"] = hash_buf;
    j["config"] = config.to_json();
    j["mean_test"] = metrics_json(mean_test);
    j["runs"] = json::array();
    for (const RunRecord& r : runs) {
        json jr;
        jr["seed"] = r.seed;
        jr["best_epoch"] = r.best_epoch;
        jr["diverged"] = r.diverged;
        jr["test"] = metrics_json(r.test);
        jr["epochs"] = json::array();
        for (const EpochLog& e : r.epochs) {
            json je{{"epoch", e.epoch},
                    {"train_mse", e.train_mse},
                    {"train_dcs", e.train_dcs},
                    {"train_obj", e.train_obj},
                    {"val_mse", e.val_mse},
                    {"entropy", e.entropy},
                    {"entropy_orig", e.entropy_orig},
                    {"dominant_ratio", e.dominant_ratio}};
            if (include_timing) je["wall_seconds"] = e.wall_seconds;
            jr["epochs"].push_back(je);
        }
        jr["steps"] = json::array();
        for (const StepLog& s : r.steps) jr["steps"].push_back({s.l_mse, s.l_dcs, s.l_obj});
        j["runs"].push_back(jr);
    }
    return j;
}

std::string ExperimentRecord::deterministic_json() const { return to_json(false).dump(); }

// ---------------------------------------------------------------------------
// Ablation, analysis, comparison

std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<int>& k_grid,
                                bool with_div, bool without_div, const Dataset* preloaded) {
    if (k_grid.empty()) throw ConfigError("ablate: empty k grid");
    Dataset local;
    const Dataset* ds = preloaded;
    if (!ds) {
        local = prepare_dataset(base);
        ds = &local;
    }
    std::vector<AblationRow> rows;
    for (int k : k_grid) {
        for (int div = 0; div < 2; ++div) {
            const bool diversified = div == 1;
            if (diversified && !with_div) continue;
            if (!diversified && !without_div) continue;
            if (diversified && k < 2) continue;  // nothing to diversify
            TrainConfig cfg = base;
            cfg.k_complementors = k;
            cfg.diversification = diversified;
            cfg.validate();
            TrainOutput out = train(cfg, ds);
            rows.push_back(AblationRow{k, diversified, out.record.mean_test.mse,
                                       out.record.mean_test.mae});
        }
    }
    return rows;
}

AnalyzeReport analyze_pairs(const std::vector<std::pair<double, double>>& richness_and_mse) {
    if (richness_and_mse.size() < 3)
        throw ConfigError("analyze: need at least 3 (richness, mse) pairs, got " +
                          std::to_string(richness_and_mse.size()));
    AnalyzeReport rep;
    std::vector<double> xs, ys;
    for (const auto& [richness_value, mse_value] : richness_and_mse) {
        xs.push_back(richness_value);
        ys.push_back(mse_value);
        rep.rows.push_back(AnalyzeRow{"pair" + std::to_string(rep.rows.size()), richness_value,
                                      0.0, mse_value});
    }
    rep.entropy_vs_mse = richness::pearson(xs, ys);
    return rep;
}

AnalyzeReport analyze_checkpoints(const std::vector<std::string>& paths, const Dataset& ds) {
    if (paths.size() < 3)
        throw ConfigError("analyze: need at least 3 checkpoints, got " +
                          std::to_string(paths.size()));
    AnalyzeReport rep;
    std::vector<double> entropies, ratios, mses;
    for (const std::string& path : paths) {
        Checkpoint ck = Checkpoint::load(path);
        const double mse_value = evaluate(ck, ds, Split::kTest).mse;
        ProbeRichness pr = probe_richness(ck.params, ds, ck.config.batch_size,
                                          ck.config.eval_window_stride);
        rep.rows.push_back(AnalyzeRow{path, pr.entropy, pr.dominant_ratio, mse_value});
        entropies.push_back(pr.entropy);
        ratios.push_back(pr.dominant_ratio);
        mses.push_back(mse_value);
    }
    rep.entropy_vs_mse = richness::pearson(entropies, mses);
    try {
        rep.ratio_vs_mse = richness::pearson(ratios, mses);
        rep.has_ratio = true;
    } catch (const DegenerateInputError&) {
        rep.has_ratio = false;  // ratios saturate easily at desk scale
    }
    return rep;
}

richness::StatReport compare(const std::vector<double>& a, const std::vector<double>& b) {
    return richness::wilcoxon_signed_rank(a, b);
}

// ---------------------------------------------------------------------------
// Gradient-check command

namespace {

using BuildFn = std::function<Var(Graph&, Var)>;

num::GradCheckReport check_component(const BuildFn& build, const Tensor& x0, bool corrupted) {
    auto f = [&build](const Tensor& x) {
        Graph g;
        Var vx = g.leaf(x, false);
        return g.value(build(g, vx)).values[0];
    };
    auto grad = [&build, corrupted](const Tensor& x) {
        Graph g;
        Var vx = g.leaf(x, true);
        g.backward(build(g, vx));
        Tensor t = g.grad_of(vx);
        if (corrupted)
            for (double& v : t.values) v *= 1.01;
        return t;
    };
    return num::grad_check(f, grad, x0, 1e-5, 1e-4);
}

Tensor random_t(std::vector<int> shape, CounterRng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.values) v = rng.normal() * scale;
    return t;
}

}  // namespace

GradcheckAllReport gradcheck_all(uint64_t seed, const std::string& corrupt) {
    CounterRng rng(seed, 77);

    // Tiny end-to-end model: t_in 16, patches of 4 at stride 2, two
    // complementors, one block.
    TrainConfig tiny;
    tiny.t_in = 16;
    tiny.t_out = 4;
    tiny.patch_len = 4;
    tiny.stride = 2;
    tiny.k_complementors = 2;
    tiny.embed_dim = 8;
    tiny.heads = 2;
    tiny.blocks = 1;
    tiny.d_ff = 12;
    enc::ModelConfig mcfg = tiny.model_config(1);
    ModelParams params = ModelParams::init(mcfg, seed);

    GradcheckAllReport rep;
    auto run = [&](const std::string& name, const BuildFn& build, const Tensor& x0) {
        GradcheckComponent comp;
        comp.name = name;
        comp.report = check_component(build, x0, corrupt == name);
        if (!comp.report.pass) rep.all_pass = false;
        rep.components.push_back(std::move(comp));
    };

    const Tensor c34 = random_t({3, 4}, rng);
    const Tensor c45 = random_t({4, 5}, rng);
    run("matmul", [&](Graph& g, Var x) {
        Var out = g.matmul(x, g.constant(c45));
        return g.reduce_mean(g.mul(out, out));
    }, random_t({3, 4}, rng));

    run("softmax_rows", [&](Graph& g, Var x) {
        Var y = g.softmax_rows(x);
        return g.reduce_mean(g.mul(y, g.constant(c34)));
    }, random_t({3, 4}, rng));

    const Tensor gamma = random_t({4}, rng, 0.3);
    const Tensor beta = random_t({4}, rng, 0.3);
    run("layer_norm", [&](Graph& g, Var x) {
        Var y = g.layer_norm(x, g.constant(gamma), g.constant(beta));
        return g.reduce_mean(g.mul(y, y));
    }, random_t({3, 4}, rng));

    run("gelu", [&](Graph& g, Var x) {
        Var y = g.gelu(x);
        return g.reduce_mean(g.mul(y, y));
    }, random_t({3, 4}, rng));

    Tensor nz = random_t({2, 5}, rng);
    for (double& v : nz.values) v += (v >= 0 ? 0.5 : -0.5);
    const Tensor c25 = random_t({2, 5}, rng);
    run("normalize_rows", [&](Graph& g, Var x) {
        return g.reduce_mean(g.mul(g.normalize_rows(x), g.constant(c25)));
    }, nz);

    const tok::PatchConfig pc{4, 2, 16};
    const Tensor cpatch = random_t({pc.token_count(), 4}, rng);
    run("patchify", [&](Graph& g, Var x) {
        return g.reduce_mean(g.mul(tok::patchify_var(g, x, pc), g.constant(cpatch)));
    }, random_t({16}, rng));

    const Tensor target16 = random_t({16}, rng);
    run("revin", [&](Graph& g, Var x) {
        tok::RevinVars rv = tok::revin_normalize_var(g, x);
        Var back = tok::revin_denormalize_var(g, g.scale(rv.normalized, 0.7), rv);
        return g.mse_against(back, target16);
    }, random_t({16}, rng, 2.0));

    const Tensor tokens_c = random_t({5, 4}, rng);
    const Tensor cemb = random_t({5, 8}, rng);
    run("embed", [&](Graph& g, Var w) {
        Var y = g.add_row_broadcast(g.matmul(g.constant(tokens_c), w), g.constant(params.b_embed));
        return g.reduce_mean(g.mul(y, g.constant(cemb)));
    }, random_t({4, 8}, rng, 0.4));

    auto bind_block = [&](Graph& g) {
        ParamVars pv = enc::bind_params(g, params, false);
        return pv;
    };
    const Tensor zc = random_t({6, 8}, rng, 0.7);
    run("attention", [&](Graph& g, Var x) {
        ParamVars pv = bind_block(g);
        Var y = enc::attention_var(g, x, pv.blocks[0], mcfg.heads, mcfg.d_k());
        return g.reduce_mean(g.mul(y, y));
    }, zc);

    run("encoder_block", [&](Graph& g, Var x) {
        ParamVars pv = bind_block(g);
        Var y = enc::encoder_block_var(g, x, pv.blocks[0], mcfg.heads, mcfg.d_k(), 0.0, nullptr);
        return g.reduce_mean(g.mul(y, y));
    }, zc);

    const Tensor zenc = random_t({mcfg.n_original() + 2, 8}, rng, 0.7);
    const Tensor target4 = random_t({4}, rng);
    run("decode", [&](Graph& g, Var x) {
        ParamVars pv = bind_block(g);
        return g.mse_against(enc::decode_var(g, x, pv, mcfg), target4);
    }, zenc);

    run("e2e_input_to_mse", [&](Graph& g, Var x) {
        ParamVars pv = enc::bind_params(g, params, false);
        auto fv = enc::forward_channel_var(g, params, pv, x, 0, nullptr);
        return g.mse_against(fv.forecast, target4);
    }, random_t({16}, rng, 1.5));

    const Tensor x16 = random_t({16}, rng, 1.5);
    run("e2e_embed_to_mse", [&](Graph& g, Var w) {
        ParamVars pv = enc::bind_params(g, params, false);
        pv.w_embed = w;
        auto fv = enc::forward_channel_var(g, params, pv, g.constant(x16), 0, nullptr);
        return g.mse_against(fv.forecast, target4);
    }, params.w_embed);

    run("e2e_bank_to_mse", [&](Graph& g, Var bank) {
        ParamVars pv = enc::bind_params(g, params, false);
        pv.banks[0] = bank;
        auto fv = enc::forward_channel_var(g, params, pv, g.constant(x16), 0, nullptr);
        return g.mse_against(fv.forecast, target4);
    }, params.banks.raw[0]);

    run("bank_to_dcs", [&](Graph& g, Var bank) {
        return diversity::dcs_loss_var(g, g.normalize_rows(bank));
    }, random_t({2, 4}, rng));

    return rep;
}

}  // namespace seqcomp::train
