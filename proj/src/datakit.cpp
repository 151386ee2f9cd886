#include "seqcomp/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "seqcomp/error.hpp"
#include "seqcomp/rng.hpp"

namespace seqcomp::data {

std::pair<int, int> Dataset::split_range(Split s) const {
    switch (s) {
        case Split::kTrain: return {0, train_end};
        case Split::kVal: return {train_end, val_end};
        case Split::kTest: return {val_end, length()};
    }
    throw ConfigError("unknown split");
}

void Dataset::validate_splits() const {
    if (!(0 < train_end && train_end < val_end && val_end <= length()))
        throw ConfigError("dataset splits invalid: train_end=" + std::to_string(train_end) +
                          " val_end=" + std::to_string(val_end) + " length=" +
                          std::to_string(length()));
}

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("missing file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw ParseError(path + ": empty file");
    auto header = split_line(line, ',');
    if (header.size() < 2) throw ParseError(path + ": header must have a date column plus channels");

    Dataset ds;
    ds.name = path;
    ds.channel_names.assign(header.begin() + 1, header.end());
    const int n = static_cast<int>(ds.channel_names.size());

    std::vector<double> flat;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split_line(line, ',');
        if (static_cast<int>(cells.size()) != n + 1)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(n + 1) + " cells, got " + std::to_string(cells.size()));
        ds.timestamps.push_back(cells[0]);
        for (int c = 1; c <= n; ++c) {
            try {
                size_t pos = 0;
                const double v = std::stod(cells[c], &pos);
                if (pos != cells[c].size()) throw std::invalid_argument("trailing characters");
                flat.push_back(v);
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                                 cells[c] + "'");
            }
        }
    }
    if (flat.empty()) throw ParseError(path + ": no data rows");
    const int rows = static_cast<int>(flat.size()) / n;
    ds.values = Tensor({rows, n}, std::move(flat));
    return ds;  // split boundaries stay unset until configured
}

void write_csv(const std::string& path, const Dataset& ds) {
    std::ofstream os(path);
    if (!os) throw ParseError("cannot open for writing: " + path);
    os << "date";
    for (const auto& name : ds.channel_names) os << "," << name;
    os << "\n";
    char buf[40];
    for (int i = 0; i < ds.length(); ++i) {
        os << (i < static_cast<int>(ds.timestamps.size()) ? ds.timestamps[i]
                                                          : "t" + std::to_string(i));
        for (int c = 0; c < ds.channels(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.values.at(i, c));
            os << "," << buf;
        }
        os << "\n";
    }
}

void apply_split_preset(Dataset& ds, const std::string& preset) {
    struct Preset {
        const char* name;
        int train, val, test;
        const char* freq;
        int season;
    };
    static const Preset kPresets[] = {
        {"etth", 8545, 2881, 2881, "h", 24},      {"etth1", 8545, 2881, 2881, "h", 24},
        {"etth2", 8545, 2881, 2881, "h", 24},     {"ettm", 34465, 11521, 11521, "t", 96},
        {"ettm1", 34465, 11521, 11521, "t", 96},  {"ettm2", 34465, 11521, 11521, "t", 96},
        {"ecl", 18317, 2633, 5261, "h", 24},      {"traffic", 12185, 1757, 3509, "h", 24},
        {"weather", 36792, 5271, 10540, "t", 144}, {"exchange", 5120, 665, 1422, "d", 7},
        {"ili", 617, 74, 170, "w", 52},
    };
    if (preset.rfind("frac:", 0) == 0) {
        auto parts = split_line(preset, ':');
        if (parts.size() != 3) throw ConfigError("split preset: expected frac:<train>:<val>");
        const double ft = std::stod(parts[1]), fv = std::stod(parts[2]);
        if (ft <= 0 || fv < 0 || ft + fv >= 1.0)
            throw ConfigError("split preset: fractions must satisfy 0 < train, train+val < 1");
        ds.train_end = static_cast<int>(ft * ds.length());
        ds.val_end = ds.train_end + static_cast<int>(fv * ds.length());
        ds.validate_splits();
        return;
    }
    for (const Preset& p : kPresets) {
        if (preset == p.name) {
            if (ds.length() < p.train + p.val + p.test)
                throw ConfigError("split preset '" + preset + "' needs " +
                                  std::to_string(p.train + p.val + p.test) + " rows, dataset has " +
                                  std::to_string(ds.length()));
            ds.train_end = p.train;
            ds.val_end = p.train + p.val;
            ds.frequency = p.freq;
            ds.season_m = p.season;
            ds.validate_splits();
            return;
        }
    }
    throw ConfigError("unknown split preset: " + preset);
}

Dataset standardize(const Dataset& ds) {
    if (ds.train_end <= 0) throw ConfigError("standardize: empty training split");
    Dataset out = ds;
    const int n = ds.channels();
    out.norm_mean.assign(n, 0.0);
    out.norm_std.assign(n, 1.0);
    for (int c = 0; c < n; ++c) {
        double mean = 0.0;
        for (int i = 0; i < ds.train_end; ++i) mean += ds.values.at(i, c);
        mean /= ds.train_end;
        double var = 0.0;
        for (int i = 0; i < ds.train_end; ++i) {
            const double d = ds.values.at(i, c) - mean;
            var += d * d;
        }
        var /= ds.train_end;
        const double sd = std::max(std::sqrt(var), 1e-5);
        out.norm_mean[c] = mean;
        out.norm_std[c] = sd;
        for (int i = 0; i < ds.length(); ++i)
            out.values.at(i, c) = (ds.values.at(i, c) - mean) / sd;
    }
    out.standardized = true;
    return out;
}

Tensor destandardize(const Dataset& ds, const Tensor& values) {
    if (!ds.standardized) throw ConfigError("destandardize: dataset was not standardized");
    if (values.cols() != ds.channels())
        throw ShapeError("destandardize: channel count mismatch");
    Tensor out = values;
    for (int c = 0; c < out.cols(); ++c)
        for (int i = 0; i < out.rows(); ++i)
            out.at(i, c) = out.at(i, c) * ds.norm_std[c] + ds.norm_mean[c];
    return out;
}

WindowSet::WindowSet(const Dataset& ds, const WindowSampler& sampler)
    : ds_(&ds), sampler_(sampler) {
    ds.validate_splits();
    if (sampler.t_in <= 0 || sampler.t_out <= 0 || sampler.stride <= 0)
        throw ConfigError("window sampler: sizes must be positive");
    auto [lo, hi] = ds.split_range(sampler.split);
    // Look-back may reach into the preceding split rows.
    const int first_start = std::max(0, lo - sampler.t_in);
    const int last_start = hi - sampler.t_in - sampler.t_out;
    if (last_start < first_start)
        throw ConfigError("window sampler: split too short for t_in=" +
                          std::to_string(sampler.t_in) + " t_out=" + std::to_string(sampler.t_out));
    for (int s = first_start; s <= last_start; s += sampler.stride) starts_.push_back(s);
}

SeriesWindow WindowSet::get(int i) const {
    const int s = starts_[i];
    SeriesWindow w;
    const int n = ds_->channels();
    w.x = Tensor::zeros({sampler_.t_in, n});
    w.y = Tensor::zeros({sampler_.t_out, n});
    for (int r = 0; r < sampler_.t_in; ++r)
        for (int c = 0; c < n; ++c) w.x.at(r, c) = ds_->values.at(s + r, c);
    for (int r = 0; r < sampler_.t_out; ++r)
        for (int c = 0; c < n; ++c) w.y.at(r, c) = ds_->values.at(s + sampler_.t_in + r, c);
    w.channel_names = ds_->channel_names;
    return w;
}

namespace {

void require_same(const Tensor& y, const Tensor& y_hat, const char* who) {
    if (!y.same_shape(y_hat))
        throw ShapeError(std::string(who) + ": shape mismatch, " + y.shape_str() + " vs " +
                         y_hat.shape_str());
}

}  // namespace

double mse(const Tensor& y, const Tensor& y_hat) {
    require_same(y, y_hat, "mse");
    double acc = 0.0;
    for (size_t i = 0; i < y.values.size(); ++i) {
        const double d = y.values[i] - y_hat.values[i];
        acc += d * d;
    }
    return acc / static_cast<double>(y.size());
}

double mae(const Tensor& y, const Tensor& y_hat) {
    require_same(y, y_hat, "mae");
    double acc = 0.0;
    for (size_t i = 0; i < y.values.size(); ++i) acc += std::abs(y.values[i] - y_hat.values[i]);
    return acc / static_cast<double>(y.size());
}

double smape(const Tensor& y, const Tensor& y_hat) {
    require_same(y, y_hat, "smape");
    double acc = 0.0;
    for (size_t i = 0; i < y.values.size(); ++i) {
        const double denom = std::abs(y.values[i]) + std::abs(y_hat.values[i]);
        if (denom > 0.0) acc += std::abs(y.values[i] - y_hat.values[i]) / denom;
    }
    return 200.0 * acc / static_cast<double>(y.size());
}

double mape(const Tensor& y, const Tensor& y_hat) {
    require_same(y, y_hat, "mape");
    double acc = 0.0;
    for (size_t i = 0; i < y.values.size(); ++i) {
        const double denom = std::abs(y.values[i]);
        if (denom > 0.0) acc += std::abs(y.values[i] - y_hat.values[i]) / denom;
    }
    return 100.0 * acc / static_cast<double>(y.size());
}

double mase(const Tensor& y, const Tensor& y_hat, const std::vector<double>& history, int m) {
    require_same(y, y_hat, "mase");
    if (m <= 0) throw ConfigError("mase: period m must be positive");
    std::vector<double> series(history);
    for (double v : y.values) series.push_back(v);
    if (static_cast<int>(series.size()) <= m)
        throw ConfigError("mase: concatenated series must be longer than m");
    double scale = 0.0;
    for (size_t j = m; j < series.size(); ++j) scale += std::abs(series[j] - series[j - m]);
    scale /= static_cast<double>(series.size() - m);
    if (scale <= 0.0)
        throw DegenerateInputError("mase: naive in-sample error is zero, scale undefined");
    double acc = 0.0;
    for (size_t i = 0; i < y.values.size(); ++i) acc += std::abs(y.values[i] - y_hat.values[i]);
    return acc / static_cast<double>(y.size()) / scale;
}

double owa(double smape_value, double mase_value, double smape_naive2, double mase_naive2) {
    if (smape_naive2 <= 0.0 || mase_naive2 <= 0.0)
        throw DegenerateInputError("owa: naive2 baseline terms must be positive");
    return 0.5 * (smape_value / smape_naive2 + mase_value / mase_naive2);
}

std::vector<double> naive2_forecast(const std::vector<double>& history, int m, int horizon) {
    if (m <= 0) throw ConfigError("naive2_forecast: period m must be positive");
    if (static_cast<int>(history.size()) < m)
        throw ConfigError("naive2_forecast: history shorter than one season");
    std::vector<double> out(horizon);
    const size_t base = history.size() - static_cast<size_t>(m);
    for (int t = 0; t < horizon; ++t) out[t] = history[base + static_cast<size_t>(t % m)];
    return out;
}

Dataset synth_multisine(uint64_t seed, int t, int n, const std::vector<double>& periods,
                        double noise_std, double trend) {
    if (periods.empty()) throw ConfigError("synth_multisine: need at least one period");
    if (t <= 0 || n <= 0) throw ConfigError("synth_multisine: sizes must be positive");
    Dataset ds;
    ds.name = "synth";
    ds.values = Tensor::zeros({t, n});
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (int c = 0; c < n; ++c) {
        ds.channel_names.push_back("ch" + std::to_string(c));
        num::CounterRng phase_rng(seed, 2 * static_cast<uint64_t>(c));
        num::CounterRng noise_rng(seed, 2 * static_cast<uint64_t>(c) + 1);
        std::vector<double> phases;
        for (size_t p = 0; p < periods.size(); ++p) phases.push_back(phase_rng.uniform() * two_pi);
        for (int i = 0; i < t; ++i) {
            double v = trend * i;
            for (size_t p = 0; p < periods.size(); ++p)
                v += std::sin(two_pi * i / periods[p] + phases[p]);
            if (noise_std > 0.0) v += noise_rng.normal() * noise_std;
            ds.values.at(i, c) = v;
        }
    }
    for (int i = 0; i < t; ++i) ds.timestamps.push_back("t" + std::to_string(i));
    return ds;  // split boundaries stay unset until configured
}

int default_season_m(const std::string& frequency) {
    if (frequency == "h") return 24;   // hourly
    if (frequency == "d") return 7;    // daily
    if (frequency == "m") return 12;   // monthly
    if (frequency == "q") return 4;    // quarterly
    if (frequency == "y") return 1;    // yearly
    return 1;
}

}  // namespace seqcomp::data
