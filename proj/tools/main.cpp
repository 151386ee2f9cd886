#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include "seqcomp/error.hpp"
#include "seqcomp/matrixio.hpp"
#include "seqcomp/trainer.hpp"

using namespace seqcomp;
using train::json;
using train::TrainConfig;

namespace {

// Every TrainConfig field is exposed as a --key value flag; provided flags
// are collected into a JSON patch applied over the (optional) config file.
void add_config_flags(CLI::App* cmd, const std::shared_ptr<json>& patch) {
    auto add_int = [cmd, patch](const std::string& name) {
        cmd->add_option_function<long long>(
            "--" + name, [patch, name](const long long& v) { (*patch)[name] = v; });
    };
    auto add_double = [cmd, patch](const std::string& name) {
        cmd->add_option_function<double>(
            "--" + name, [patch, name](const double& v) { (*patch)[name] = v; });
    };
    auto add_string = [cmd, patch](const std::string& name) {
        cmd->add_option_function<std::string>(
            "--" + name, [patch, name](const std::string& v) { (*patch)[name] = v; });
    };
    auto add_bool = [cmd, patch](const std::string& name) {
        cmd->add_option_function<bool>(
            "--" + name, [patch, name](const bool& v) { (*patch)[name] = v; });
    };
    for (const char* k : {"t_in", "t_out", "patch_len", "stride", "k_complementors",
                          "batch_size", "heads", "blocks", "embed_dim", "d_ff", "epochs",
                          "patience", "runs", "season_m", "train_window_stride",
                          "eval_window_stride", "seed"})
        add_int(k);
    for (const char* k : {"lambda_dcs", "lr", "dropout"}) add_double(k);
    for (const char* k : {"tokenize_mode", "dataset", "split_preset", "out_dir"}) add_string(k);
    for (const char* k : {"share_complementors", "diversification"}) add_bool(k);
}

TrainConfig resolve_config(const std::string& config_path, const json& patch) {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = TrainConfig::from_json_file(config_path);
    cfg.apply_json(patch);
    cfg.validate();
    return cfg;
}

data::Dataset prepare(const TrainConfig& cfg) {
    data::Dataset ds = data::load_csv(cfg.dataset);
    data::apply_split_preset(ds, cfg.split_preset);
    return data::standardize(ds);
}

std::vector<double> read_numbers(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open " + path);
    std::vector<double> out;
    double v;
    while (is >> v) out.push_back(v);
    if (out.empty()) throw ParseError(path + ": no numeric values");
    return out;
}

data::Split parse_split(const std::string& s) {
    if (s == "train") return data::Split::kTrain;
    if (s == "val") return data::Split::kVal;
    if (s == "test") return data::Split::kTest;
    throw ConfigError("unknown split '" + s + "'");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw ParseError("cannot open for writing: " + path);
    os << text;
}

void print_metrics(const data::MetricsReport& m) {
    json j{{"mse", m.mse},   {"mae", m.mae},   {"smape", m.smape}, {"mape", m.mape},
           {"mase", m.mase}, {"owa", m.owa},   {"naive2_mse", m.naive2_mse},
           {"windows", m.windows}};
    std::cout << j.dump(2) << "\n";
}

int cmd_train(const std::string& config_path, const json& patch, const std::string& record_path,
              const std::string& ckpt_prefix, const std::string& dynamics_path) {
    TrainConfig cfg = resolve_config(config_path, patch);
    if (cfg.dataset.empty()) throw ConfigError("train: a dataset CSV is required");
    train::TrainOutput out = train::train(cfg);

    const std::string rec_path =
        record_path.empty() ? cfg.out_dir + "/record.json" : record_path;
    write_text(rec_path, out.record.to_json().dump(2) + "\n");
    for (size_t i = 0; i < out.checkpoints.size(); ++i) {
        const std::string path = (ckpt_prefix.empty() ? cfg.out_dir + "/ckpt" : ckpt_prefix) +
                                 "_run" + std::to_string(i) + ".txt";
        out.checkpoints[i].save(path);
    }
    if (!dynamics_path.empty()) {
        for (size_t r = 0; r < out.record.runs.size(); ++r) {
            std::vector<int> epochs;
            std::vector<double> entropies, val_mses;
            for (const auto& e : out.record.runs[r].epochs) {
                epochs.push_back(e.epoch);
                entropies.push_back(e.entropy);
                val_mses.push_back(e.val_mse);
            }
            auto rows = richness::track_dynamics(epochs, entropies, val_mses);
            std::ostringstream os;
            os << "epoch,entropy,entropy_smoothed,val_mse\n";
            for (const auto& row : rows)
                os << row.epoch << "," << row.entropy << "," << row.entropy_smoothed << ","
                   << row.val_mse << "\n";
            const std::string path = out.record.runs.size() == 1
                                         ? dynamics_path
                                         : dynamics_path + ".run" + std::to_string(r);
            write_text(path, os.str());
            std::cout << "dynamics: " << path << "\n";
        }
    }

    bool diverged = false;
    for (const auto& r : out.record.runs) diverged = diverged || r.diverged;
    std::cout << "runs " << out.record.runs.size() << "  mean test mse "
              << out.record.mean_test.mse << "  mae " << out.record.mean_test.mae
              << (diverged ? "  [diverged]" : "") << "\n";
    std::cout << "record: " << rec_path << "\n";
    return diverged ? 2 : 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& split, bool per_step, const std::string& dump_repr) {
    train::Checkpoint ck = train::Checkpoint::load(ckpt_path);
    TrainConfig cfg = ck.config;
    if (!data_path.empty()) cfg.dataset = data_path;
    if (cfg.dataset.empty()) throw ConfigError("eval: no dataset in checkpoint; pass --data");
    data::Dataset ds = prepare(cfg);
    data::MetricsReport m = train::evaluate(ck, ds, parse_split(split));
    print_metrics(m);
    if (per_step) {
        std::cout << "step,mse\n";
        for (size_t s = 0; s < m.mse_per_step.size(); ++s)
            std::cout << s << "," << m.mse_per_step[s] << "\n";
    }
    if (!dump_repr.empty()) {
        data::WindowSet ws(ds, data::WindowSampler{cfg.t_in, cfg.t_out, 1, parse_split(split)});
        enc::ForwardResult fr = enc::forward(ck.params, ws.get(0).x);
        richness::write_matrix_file(dump_repr, fr.z_enc[0]);
        std::cout << "z_enc dump: " << dump_repr << "\n";
    }
    return 0;
}

int cmd_ablate(const std::string& config_path, const json& patch, const std::string& k_grid_csv,
               const std::string& div_mode, const std::string& out_path) {
    TrainConfig cfg = resolve_config(config_path, patch);
    std::vector<int> k_grid;
    std::stringstream ss(k_grid_csv);
    std::string tokn;
    while (std::getline(ss, tokn, ',')) k_grid.push_back(std::stoi(tokn));
    const bool with_div = div_mode == "both" || div_mode == "on";
    const bool without_div = div_mode == "both" || div_mode == "off";
    if (!with_div && !without_div) throw ConfigError("ablate: --div must be both|on|off");
    auto rows = train::ablate(cfg, k_grid, with_div, without_div);
    std::ostringstream os;
    os << "k,diversified,mse,mae\n";
    for (const auto& r : rows)
        os << r.k << "," << (r.diversified ? 1 : 0) << "," << r.mse << "," << r.mae << "\n";
    std::cout << os.str();
    if (!out_path.empty()) write_text(out_path, os.str());
    return 0;
}

int cmd_analyze(const std::string& pairs_path, const std::vector<std::string>& ckpts,
                const std::string& data_path, const std::string& out_path) {
    train::AnalyzeReport rep;
    if (!pairs_path.empty()) {
        std::ifstream is(pairs_path);
        if (!is) throw ParseError("cannot open " + pairs_path);
        std::vector<std::pair<double, double>> pairs;
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            for (char& c : line)
                if (c == ',') c = ' ';
            std::stringstream ls(line);
            double a, b;
            if (ls >> a >> b) pairs.emplace_back(a, b);
        }
        rep = train::analyze_pairs(pairs);
    } else {
        if (ckpts.empty()) throw ConfigError("analyze: pass --pairs or --checkpoints");
        if (data_path.empty()) throw ConfigError("analyze: --data is required with checkpoints");
        train::Checkpoint first = train::Checkpoint::load(ckpts[0]);
        TrainConfig cfg = first.config;
        cfg.dataset = data_path;
        data::Dataset ds = prepare(cfg);
        rep = train::analyze_checkpoints(ckpts, ds);
    }
    std::ostringstream os;
    os << "label,entropy,dominant_ratio,mse\n";
    for (const auto& row : rep.rows)
        os << row.label << "," << row.entropy << "," << row.dominant_ratio << "," << row.mse
           << "\n";
    std::cout << os.str();
    std::cout << "pearson entropy~mse: r=" << rep.entropy_vs_mse.statistic
              << " p=" << rep.entropy_vs_mse.p_value << " n=" << rep.entropy_vs_mse.n << "\n";
    if (rep.has_ratio)
        std::cout << "pearson ratio~mse:   r=" << rep.ratio_vs_mse.statistic
                  << " p=" << rep.ratio_vs_mse.p_value << "\n";
    if (!out_path.empty()) write_text(out_path, os.str());
    return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path) {
    auto a = read_numbers(a_path);
    auto b = read_numbers(b_path);
    richness::StatReport rep = train::compare(a, b);
    std::cout << "wilcoxon " << richness::to_json(rep).dump() << "\n";
    return 0;
}

int cmd_gradcheck(uint64_t seed) {
    train::GradcheckAllReport rep = train::gradcheck_all(seed);
    for (const auto& c : rep.components)
        std::cout << (c.report.pass ? "pass " : "FAIL ") << c.name
                  << "  max_rel_err=" << c.report.max_rel_err << "\n";
    std::cout << (rep.all_pass ? "all components pass" : "GRADIENT CHECK FAILED") << "\n";
    return rep.all_pass ? 0 : 2;
}

int cmd_synth(const std::string& out, uint64_t seed, int t, int n,
              const std::string& periods_csv, double noise, double trend) {
    std::vector<double> periods;
    std::stringstream ss(periods_csv);
    std::string tokn;
    while (std::getline(ss, tokn, ',')) periods.push_back(std::stod(tokn));
    data::Dataset ds = data::synth_multisine(seed, t, n, periods, noise, trend);
    data::write_csv(out, ds);
    std::cout << "wrote " << out << " (" << t << " rows, " << n << " channels)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patch-transformer forecasting with learnable sequence complementors"};
    app.require_subcommand(1);

    auto patch = std::make_shared<json>(json::object());
    std::string config_path, record_path, ckpt_prefix, dynamics_path;

    CLI::App* t = app.add_subcommand("train", "Train models and emit records + checkpoints");
    t->add_option("--config", config_path, "JSON config file");
    add_config_flags(t, patch);
    t->add_option("--record", record_path, "experiment record output path");
    t->add_option("--checkpoint-prefix", ckpt_prefix, "checkpoint path prefix");
    t->add_option("--dynamics", dynamics_path, "per-epoch dynamics CSV path");

    std::string eval_ckpt, eval_data, eval_split = "test", dump_repr;
    bool per_step = false;
    CLI::App* e = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    e->add_option("--checkpoint", eval_ckpt)->required();
    e->add_option("--data", eval_data);
    e->add_option("--split", eval_split);
    e->add_flag("--per-step", per_step, "print per-horizon-step mse");
    e->add_option("--dump-repr", dump_repr, "write a z_enc matrix dump");

    std::string ab_config, k_grid = "0,1,3,5", div_mode = "both", ab_out;
    auto ab_patch = std::make_shared<json>(json::object());
    CLI::App* a = app.add_subcommand("ablate", "Complementor-count / diversification grid");
    a->add_option("--config", ab_config);
    add_config_flags(a, ab_patch);
    a->add_option("--k-grid", k_grid, "comma-separated complementor counts");
    a->add_option("--div", div_mode, "both|on|off");
    a->add_option("--out", ab_out, "CSV output path");

    std::string pairs_path, an_data, an_out;
    std::vector<std::string> an_ckpts;
    CLI::App* an = app.add_subcommand("analyze", "Richness-vs-mse correlation report");
    an->add_option("--pairs", pairs_path, "CSV of richness,mse pairs");
    an->add_option("--checkpoints", an_ckpts)->delimiter(',');
    an->add_option("--data", an_data);
    an->add_option("--out", an_out);

    std::string cmp_a, cmp_b;
    CLI::App* c = app.add_subcommand("compare", "Wilcoxon signed-rank over paired metrics");
    c->add_option("--a", cmp_a)->required();
    c->add_option("--b", cmp_b)->required();

    uint64_t gc_seed = 0;
    CLI::App* g = app.add_subcommand("gradcheck", "Finite-difference validation of gradients");
    g->add_option("--seed", gc_seed);

    std::string sy_out;
    uint64_t sy_seed = 0;
    int sy_t = 4096, sy_n = 3;
    std::string sy_periods = "24,96";
    double sy_noise = 0.1, sy_trend = 0.0;
    CLI::App* s = app.add_subcommand("synth", "Emit a synthetic multi-sine dataset CSV");
    s->add_option("--out", sy_out)->required();
    s->add_option("--seed", sy_seed);
    s->add_option("--t", sy_t);
    s->add_option("--n", sy_n);
    s->add_option("--periods", sy_periods);
    s->add_option("--noise", sy_noise);
    s->add_option("--trend", sy_trend);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& help) {
        return app.exit(help);
    } catch (const CLI::ParseError& pe) {
        app.exit(pe);
        return 1;
    }

    try {
        if (t->parsed()) return cmd_train(config_path, *patch, record_path, ckpt_prefix,
                                          dynamics_path);
        if (e->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_split, per_step, dump_repr);
        if (a->parsed()) return cmd_ablate(ab_config, *ab_patch, k_grid, div_mode, ab_out);
        if (an->parsed()) return cmd_analyze(pairs_path, an_ckpts, an_data, an_out);
        if (c->parsed()) return cmd_compare(cmp_a, cmp_b);
        if (g->parsed()) return cmd_gradcheck(gc_seed);
        if (s->parsed()) return cmd_synth(sy_out, sy_seed, sy_t, sy_n, sy_periods, sy_noise,
                                          sy_trend);
    } catch (const ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 1;
    } catch (const ParseError& ex) {
        std::cerr << "parse error: " << ex.what() << "\n";
        return 1;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
    return 0;
}
