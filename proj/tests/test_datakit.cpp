#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "seqcomp/datakit.hpp"
#include "seqcomp/error.hpp"
#include "test_util.hpp"

using namespace seqcomp;
using namespace seqcomp::data;
using testutil::random_tensor;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/seqcomp_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_csv parses header, names, and values") {
    TempFile f("basic.csv");
    {
        std::ofstream os(f.path);
        os << "date,alpha,beta\n2020-01-01,1.5,2.5\n2020-01-02,3.5,4.5\n2020-01-03,5.5,6.5\n";
    }
    Dataset ds = load_csv(f.path);
    CHECK(ds.length() == 3);
    CHECK(ds.channels() == 2);
    CHECK(ds.channel_names == std::vector<std::string>{"alpha", "beta"});
    CHECK(ds.values.at(1, 1) == doctest::Approx(4.5));
    CHECK(ds.timestamps[2] == "2020-01-03");
}

TEST_CASE("load_csv reports the offending line for malformed content") {
    TempFile f("bad.csv");
    {
        std::ofstream os(f.path);
        os << "date,a\nrow1,1.0\nrow2,oops\n";
    }
    try {
        load_csv(f.path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
        CHECK(std::string(e.what()).find("oops") != std::string::npos);
    }

    TempFile g("ragged.csv");
    {
        std::ofstream os(g.path);
        os << "date,a,b\nrow1,1.0\n";
    }
    CHECK_THROWS_AS(load_csv(g.path), ParseError);
    CHECK_THROWS_AS(load_csv("/tmp/seqcomp_missing_file.csv"), ParseError);
}

TEST_CASE("etth split preset reproduces the benchmark boundaries") {
    Dataset ds = synth_multisine(1, 8545 + 2881 + 2881, 2, {24.0}, 0.0, 0.0);
    apply_split_preset(ds, "etth");
    CHECK(ds.train_end == 8545);
    CHECK(ds.val_end == 8545 + 2881);
    CHECK(ds.length() - ds.val_end == 2881);
    CHECK(ds.season_m == 24);

    Dataset tiny = synth_multisine(1, 100, 1, {10.0}, 0.0, 0.0);
    CHECK_THROWS_AS(apply_split_preset(tiny, "etth"), ConfigError);
    CHECK_THROWS_AS(apply_split_preset(tiny, "nonsense"), ConfigError);

    apply_split_preset(tiny, "frac:0.7:0.1");
    CHECK(tiny.train_end == 70);
    CHECK(tiny.val_end == 80);
}

TEST_CASE("standardize uses training rows only and inverts exactly") {
    Dataset ds = synth_multisine(7, 200, 2, {20.0}, 0.3, 0.01);
    apply_split_preset(ds, "frac:0.6:0.2");

    // poison validation/test rows; training statistics must not move
    Dataset poisoned = ds;
    for (int i = poisoned.train_end; i < poisoned.length(); ++i)
        for (int c = 0; c < poisoned.channels(); ++c) poisoned.values.at(i, c) += 1e9;
    Dataset std_a = standardize(ds);
    Dataset std_b = standardize(poisoned);
    for (int c = 0; c < ds.channels(); ++c) {
        CHECK(std_a.norm_mean[c] == std_b.norm_mean[c]);
        CHECK(std_a.norm_std[c] == std_b.norm_std[c]);
    }

    Tensor back = destandardize(std_a, std_a.values);
    for (size_t i = 0; i < back.values.size(); ++i)
        CHECK(std::abs(back.values[i] - ds.values.values[i]) < 1e-9);

    // constant channel floors the std and maps to zeros
    Dataset flat = ds;
    for (int i = 0; i < flat.length(); ++i) flat.values.at(i, 0) = 42.0;
    Dataset std_flat = standardize(flat);
    for (int i = 0; i < std_flat.train_end; ++i)
        CHECK(std_flat.values.at(i, 0) == doctest::Approx(0.0));
}

TEST_CASE("window enumeration counts, overlap, and split confinement") {
    // a training split of exactly 10 rows: starts 0..4 by hand enumeration
    Dataset ds = synth_multisine(3, 16, 1, {5.0}, 0.0, 0.0);
    ds.train_end = 10;
    ds.val_end = 13;
    WindowSet ws(ds, WindowSampler{4, 2, 1, Split::kTrain});
    CHECK(ws.size() == 5);
    for (int i = 0; i + 1 < ws.size(); ++i) CHECK(ws.start(i + 1) - ws.start(i) == 1);

    WindowSet wide(ds, WindowSampler{4, 2, 10, Split::kTrain});
    CHECK(wide.size() == 1);

    // consecutive windows overlap by t_in + t_out - stride rows
    WindowSet lap(ds, WindowSampler{4, 2, 2, Split::kTrain});
    for (int i = 0; i + 1 < lap.size(); ++i) {
        const int overlap = (lap.start(i) + 4 + 2) - lap.start(i + 1);
        CHECK(overlap == 4 + 2 - 2);
    }
}

TEST_CASE("validation windows reach back for look-back but targets stay in split") {
    Dataset ds = synth_multisine(5, 100, 1, {10.0}, 0.0, 0.0);
    apply_split_preset(ds, "frac:0.6:0.2");  // train 60, val 60..80
    WindowSet ws(ds, WindowSampler{16, 4, 1, Split::kVal});
    REQUIRE(ws.size() > 0);
    CHECK(ws.start(0) == 60 - 16);  // look-back reaches into train rows
    for (int i = 0; i < ws.size(); ++i) {
        const int target_begin = ws.start(i) + 16;
        CHECK(target_begin >= 60);
        CHECK(target_begin + 4 <= 80);
    }

    Dataset tiny = synth_multisine(5, 30, 1, {10.0}, 0.0, 0.0);
    apply_split_preset(tiny, "frac:0.5:0.2");
    CHECK_THROWS_AS(WindowSet(tiny, WindowSampler{16, 40, 1, Split::kVal}), ConfigError);
}

TEST_CASE("window union covers the usable split rows") {
    Dataset ds = synth_multisine(9, 70, 1, {7.0}, 0.0, 0.0);
    ds.train_end = 60;
    ds.val_end = 65;
    WindowSet ws(ds, WindowSampler{8, 4, 1, Split::kTrain});
    std::vector<bool> covered(60, false);
    for (int i = 0; i < ws.size(); ++i)
        for (int r = 0; r < 8; ++r) covered[ws.start(i) + r] = true;
    // every training row that can appear in a look-back does
    for (int r = 0; r + 4 < 60; ++r) CHECK(covered[r]);
}

TEST_CASE("mse and mae hand values") {
    Tensor y0 = Tensor::vec({0, 0});
    Tensor y1 = Tensor::vec({1, 1});
    CHECK(mse(y0, y0) == 0.0);
    CHECK(mae(y0, y0) == 0.0);
    CHECK(mse(y0, y1) == doctest::Approx(1.0));
    CHECK(mae(y0, y1) == doctest::Approx(1.0));

    Tensor a = Tensor::vec({1, 2});
    Tensor b = Tensor::vec({2, 4});
    CHECK(mse(a, b) == doctest::Approx(2.5));
    CHECK(mae(a, b) == doctest::Approx(1.5));
    CHECK_THROWS_AS(mse(a, Tensor::vec({1})), ShapeError);
}

TEST_CASE("smape hand values and bounds") {
    CHECK(smape(Tensor::vec({3, 4}), Tensor::vec({3, 4})) == doctest::Approx(0.0));
    CHECK(smape(Tensor::vec({1}), Tensor::vec({3})) == doctest::Approx(100.0));
    CHECK(smape(Tensor::vec({1}), Tensor::vec({-1})) == doctest::Approx(200.0));
    CHECK(smape(Tensor::vec({0}), Tensor::vec({0})) == doctest::Approx(0.0));  // guarded term

    testutil::CounterRng rng(1);
    Tensor y = random_tensor({20}, rng);
    Tensor yh = random_tensor({20}, rng);
    const double s = smape(y, yh);
    CHECK(s >= 0.0);
    CHECK(s <= 200.0);
}

TEST_CASE("mase hand case, scale invariance, and degenerate scale") {
    Tensor y = Tensor::vec({1, 2, 3});
    Tensor yh = Tensor::vec({2, 3, 4});
    // scale over the series itself: (|2-1| + |3-2|)/2 = 1, mean abs err = 1
    CHECK(mase(y, yh, {}, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mase(y, y, {}, 1) == doctest::Approx(0.0));

    Tensor y2 = num::scale(y, 2.0);
    Tensor yh2 = num::scale(yh, 2.0);
    CHECK(mase(y2, yh2, {2, 4}, 1) == doctest::Approx(mase(y, yh, {1, 2}, 1)).epsilon(1e-12));

    Tensor flat = Tensor::vec({5, 5, 5});
    CHECK_THROWS_AS(mase(flat, yh, {5, 5}, 1), DegenerateInputError);
}

TEST_CASE("owa hand values and guard") {
    CHECK(owa(10, 2, 10, 2) == doctest::Approx(1.0));
    CHECK(owa(5, 1, 10, 2) == doctest::Approx(0.5));
    CHECK(owa(10, 2, 20, 2) == doctest::Approx(0.75));
    CHECK_THROWS_AS(owa(10, 2, 0, 2), DegenerateInputError);
}

TEST_CASE("naive2 persistence, cycle repeat, and wrap") {
    CHECK(naive2_forecast({1, 4, 7}, 1, 3) == std::vector<double>{7, 7, 7});
    CHECK(naive2_forecast({9, 9, 1, 2, 3, 4}, 4, 4) == std::vector<double>{1, 2, 3, 4});
    CHECK(naive2_forecast({1, 2, 3, 4}, 4, 6) == std::vector<double>{1, 2, 3, 4, 1, 2});
    CHECK_THROWS_AS(naive2_forecast({1, 2}, 4, 3), ConfigError);
}

TEST_CASE("synthetic multisine is periodic, seeded, and has calibrated noise") {
    Dataset clean = synth_multisine(11, 200, 2, {20.0}, 0.0, 0.0);
    for (int i = 0; i + 20 < 200; ++i)
        for (int c = 0; c < 2; ++c)
            CHECK(clean.values.at(i, c) ==
                  doctest::Approx(clean.values.at(i + 20, c)).epsilon(1e-9));

    Dataset again = synth_multisine(11, 200, 2, {20.0}, 0.0, 0.0);
    CHECK(clean.values.values == again.values.values);

    Dataset noisy = synth_multisine(11, 4096, 1, {20.0}, 0.1, 0.0);
    Dataset base = synth_multisine(11, 4096, 1, {20.0}, 0.0, 0.0);
    double var = 0.0;
    for (int i = 0; i < 4096; ++i) {
        const double d = noisy.values.at(i, 0) - base.values.at(i, 0);
        var += d * d;
    }
    const double sd = std::sqrt(var / 4096);
    CHECK(sd == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("csv round trip preserves values") {
    TempFile f("roundtrip.csv");
    Dataset ds = synth_multisine(13, 50, 3, {10.0, 25.0}, 0.05, 0.002);
    write_csv(f.path, ds);
    Dataset back = load_csv(f.path);
    CHECK(back.length() == 50);
    CHECK(back.channels() == 3);
    CHECK(back.values.values == ds.values.values);
}

TEST_CASE("seasonal period defaults follow the frequency tag") {
    CHECK(default_season_m("h") == 24);
    CHECK(default_season_m("d") == 7);
    CHECK(default_season_m("m") == 12);
    CHECK(default_season_m("q") == 4);
    CHECK(default_season_m("y") == 1);
    CHECK(default_season_m("unknown") == 1);
}
