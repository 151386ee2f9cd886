#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "seqcomp/error.hpp"
#include "seqcomp/matrixio.hpp"
#include "seqcomp/richness.hpp"
#include "test_util.hpp"

using namespace seqcomp;
using namespace seqcomp::richness;
using testutil::random_tensor;

TEST_CASE("gaussian entropy of near-identity covariance samples") {
    testutil::CounterRng rng(1);
    const int n = 10000, d = 2;
    Tensor z = Tensor::zeros({n, d});
    for (auto& v : z.values) v = rng.normal();
    const double expect = std::log(2.0 * 3.14159265358979323846 * std::exp(1.0));
    CHECK(std::abs(gaussian_entropy(z) - expect) < 0.05);
}

TEST_CASE("gaussian entropy of the zero matrix is the pure ridge floor") {
    Tensor z = Tensor::zeros({4, 2});
    const double two_pi_e = 2.0 * 3.14159265358979323846 * std::exp(1.0);
    const double expect = 0.5 * std::log(two_pi_e * two_pi_e * 1e-6 * 1e-6);
    CHECK(gaussian_entropy(z, 1e-6) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("scaling samples by c raises entropy by d log c when the ridge is tiny") {
    testutil::CounterRng rng(2);
    Tensor z = random_tensor({50, 3}, rng);
    const double c = 2.5;
    Tensor scaled = num::scale(z, c);
    const double delta = gaussian_entropy(scaled, 1e-12) - gaussian_entropy(z, 1e-12);
    CHECK(delta == doctest::Approx(3.0 * std::log(c)).epsilon(1e-6));
}

TEST_CASE("gaussian entropy is invariant under right-orthogonal rotation") {
    testutil::CounterRng rng(3);
    Tensor z = random_tensor({20, 4}, rng);
    // orthogonal 4x4 from Gram-Schmidt
    Tensor q = random_tensor({4, 4}, rng);
    for (int i = 0; i < 4; ++i) {
        for (int p = 0; p < i; ++p) {
            double dot = 0.0;
            for (int j = 0; j < 4; ++j) dot += q.at(i, j) * q.at(p, j);
            for (int j = 0; j < 4; ++j) q.at(i, j) -= dot * q.at(p, j);
        }
        double nrm = 0.0;
        for (int j = 0; j < 4; ++j) nrm += q.at(i, j) * q.at(i, j);
        nrm = std::sqrt(nrm);
        for (int j = 0; j < 4; ++j) q.at(i, j) /= nrm;
    }
    Tensor rotated = num::matmul(z, q);
    CHECK(gaussian_entropy(rotated) == doctest::Approx(gaussian_entropy(z)).epsilon(1e-9));
}

TEST_CASE("dominant ratio counts singular values above the threshold") {
    CHECK(dominant_sv_ratio_spectrum({5, 0.5, 0.05, 0.01}, 0.1) == doctest::Approx(0.5));
    CHECK(dominant_sv_ratio(Tensor::zeros({3, 3})) == doctest::Approx(0.0));
    CHECK(dominant_sv_ratio(Tensor::identity(4)) == doctest::Approx(1.0));
    CHECK_THROWS_AS(dominant_sv_ratio_spectrum({1.0}, 0.0), ConfigError);
}

TEST_CASE("dominant ratio is monotone non-increasing in the threshold") {
    testutil::CounterRng rng(4);
    Tensor z = random_tensor({8, 8}, rng);
    double prev = 2.0;
    for (double thr = 0.05; thr < 3.0; thr *= 1.7) {
        const double r = dominant_sv_ratio(z, thr);
        CHECK(r <= prev + 1e-15);
        prev = r;
    }
}

TEST_CASE("similarity map unit cases and bounds") {
    Tensor same = Tensor::matrix(3, 2, {1, 2, 1, 2, 1, 2});
    Tensor map1 = similarity_map(same);
    for (double v : map1.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    Tensor ortho = Tensor::identity(3);
    Tensor map2 = similarity_map(ortho);
    CHECK(map2.values == Tensor::identity(3).values);

    Tensor pair = Tensor::matrix(2, 2, {1, 0, 1 / std::sqrt(2.0), 1 / std::sqrt(2.0)});
    Tensor map3 = similarity_map(pair);
    CHECK(map3.at(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(map3.at(1, 0) == map3.at(0, 1));

    Tensor with_zero = Tensor::matrix(2, 2, {0, 0, 3, 4});
    Tensor map4 = similarity_map(with_zero);
    CHECK(map4.at(0, 0) == 0.0);  // zero-row convention
    CHECK(map4.at(0, 1) == 0.0);
    CHECK(map4.at(1, 1) == doctest::Approx(1.0));

    testutil::CounterRng rng(5);
    Tensor z = random_tensor({6, 5}, rng);
    Tensor m = similarity_map(z);
    for (double v : m.values) {
        CHECK(v <= 1.0);
        CHECK(v >= -1.0);
    }
    for (int i = 0; i < 6; ++i) CHECK(m.at(i, i) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pearson perfect correlations and affine invariance") {
    std::vector<double> xs{1, 2, 3, 4, 5};
    std::vector<double> neg, aff;
    for (double x : xs) {
        neg.push_back(-x);
        aff.push_back(2 * x + 3);
    }
    StatReport rn = pearson(xs, neg);
    CHECK(rn.statistic == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(rn.p_value == doctest::Approx(0.0));
    StatReport rp = pearson(xs, aff);
    CHECK(rp.statistic == doctest::Approx(1.0).epsilon(1e-12));

    // sign(a) for arbitrary slopes
    std::vector<double> down;
    for (double x : xs) down.push_back(-0.3 * x + 7);
    CHECK(pearson(xs, down).statistic == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("pearson hand case agrees with an independent least-squares oracle") {
    std::vector<double> xs{1, 2, 3, 4};
    std::vector<double> ys{1.1, 1.9, 3.2, 3.8};
    // independent route: r^2 = slope(y on x) * slope(x on y), sign from slope
    auto slope = [](const std::vector<double>& a, const std::vector<double>& b) {
        double ma = 0, mb = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            ma += a[i];
            mb += b[i];
        }
        ma /= a.size();
        mb /= b.size();
        double num = 0, den = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            num += (a[i] - ma) * (b[i] - mb);
            den += (a[i] - ma) * (a[i] - ma);
        }
        return num / den;
    };
    const double syx = slope(xs, ys), sxy = slope(ys, xs);
    const double oracle = (syx >= 0 ? 1.0 : -1.0) * std::sqrt(syx * sxy);
    StatReport rep = pearson(xs, ys);
    CHECK(rep.statistic == doctest::Approx(oracle).epsilon(1e-10));
    CHECK(rep.p_value > 0.0);
    CHECK(rep.p_value < 0.1);
}

TEST_CASE("pearson rejects short and constant inputs") {
    CHECK_THROWS_AS(pearson({1, 2}, {3, 4}), ConfigError);
    CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), DegenerateInputError);
}

TEST_CASE("wilcoxon total dominance on eight pairs is extreme and significant") {
    std::vector<double> a{5, 6, 7, 8, 9, 10, 11, 12};
    std::vector<double> b{1, 2, 3, 4, 5, 6, 7, 8};
    StatReport rep = wilcoxon_signed_rank(a, b);
    CHECK(rep.n == 8);
    CHECK(rep.statistic == doctest::Approx(36.0));  // maximal rank sum
    // exact two-sided tail: the two all-positive / all-negative assignments
    CHECK(rep.p_value == doctest::Approx(2.0 / 256.0).epsilon(1e-12));
    CHECK(rep.p_value < 0.01);
}

TEST_CASE("wilcoxon symmetric differences sit at the null center") {
    std::vector<double> a{1, 2};
    std::vector<double> b{0, 3};  // differences +1 and -1
    StatReport rep = wilcoxon_signed_rank(a, b);
    CHECK(rep.statistic == doctest::Approx(1.5));  // mid-ranked tie
    CHECK(rep.p_value == doctest::Approx(1.0));
}

TEST_CASE("wilcoxon normal approximation flags one-sided dominance at n=64") {
    std::vector<double> a(64), b(64);
    testutil::CounterRng rng(6);
    for (int i = 0; i < 64; ++i) {
        b[i] = rng.normal();
        a[i] = b[i] + 0.5 + rng.uniform();
    }
    StatReport rep = wilcoxon_signed_rank(a, b);
    CHECK(rep.p_value < 0.05);
    CHECK(rep.p_value < 1e-6);  // every pair won
}

TEST_CASE("wilcoxon drops zero differences and rejects all-zero input") {
    std::vector<double> a{1, 2, 3, 4};
    std::vector<double> same{1, 2, 3, 4};
    CHECK_THROWS_AS(wilcoxon_signed_rank(a, same), DegenerateInputError);

    std::vector<double> b{1, 2, 2, 6};  // two zero differences drop out
    StatReport rep = wilcoxon_signed_rank(a, b);
    CHECK(rep.n == 2);
}

TEST_CASE("exact wilcoxon null distribution masses sum to one for n up to 12") {
    for (int n = 1; n <= 12; ++n) {
        // distinct ranks 1..n; enumerate the null distribution of W+
        std::vector<double> mass;
        const uint64_t total = 1ULL << n;
        std::vector<uint64_t> counts(n * (n + 1) / 2 + 1, 0);
        for (uint64_t m = 0; m < total; ++m) {
            int w = 0;
            for (int i = 0; i < n; ++i)
                if (m & (1ULL << i)) w += i + 1;
            ++counts[w];
        }
        double sum = 0.0;
        for (uint64_t c : counts) sum += static_cast<double>(c) / static_cast<double>(total);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("incomplete beta matches symmetry and midpoint identities") {
    CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
    CHECK(incomplete_beta(2.5, 2.5, 0.5) == doctest::Approx(0.5).epsilon(1e-10));
    const double x = 0.37;
    CHECK(incomplete_beta(1.5, 2.5, x) ==
          doctest::Approx(1.0 - incomplete_beta(2.5, 1.5, 1.0 - x)).epsilon(1e-10));
    // I_x(1, b) = 1 - (1-x)^b in closed form
    CHECK(incomplete_beta(1.0, 4.0, 0.2) ==
          doctest::Approx(1.0 - std::pow(0.8, 4.0)).epsilon(1e-12));
}

TEST_CASE("track_dynamics aligns epochs and smooths entropy with a window of 3") {
    CHECK(track_dynamics({}, {}, {}).empty());

    auto single = track_dynamics({1}, {2.0}, {0.5});
    REQUIRE(single.size() == 1);
    CHECK(single[0].entropy_smoothed == doctest::Approx(2.0));

    auto rows = track_dynamics({0, 1, 2, 3, 4}, {1, 2, 3, 4, 5}, {9, 8, 7, 6, 5});
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].entropy_smoothed == doctest::Approx(1.0));
    CHECK(rows[1].entropy_smoothed == doctest::Approx(1.5));
    CHECK(rows[2].entropy_smoothed == doctest::Approx(2.0));
    CHECK(rows[3].entropy_smoothed == doctest::Approx(3.0));
    CHECK(rows[4].entropy_smoothed == doctest::Approx(4.0));
    CHECK(rows[4].val_mse == doctest::Approx(5.0));
}

TEST_CASE("matrix container round trip is exact") {
    testutil::CounterRng rng(7);
    Tensor m = random_tensor({5, 3}, rng);
    std::stringstream ss;
    write_matrix(ss, m);
    Tensor back = read_matrix(ss);
    CHECK(back.shape == m.shape);
    CHECK(back.values == m.values);

    std::stringstream bad("2 2\n1.0 2.0 3.0");
    CHECK_THROWS_AS(read_matrix(bad), ParseError);
}

TEST_CASE("reports serialize to json records") {
    testutil::CounterRng rng(9);
    Tensor z = random_tensor({10, 4}, rng);
    auto jr = to_json(richness_report(z));
    CHECK(jr["n_samples"] == 10);
    CHECK(jr["dim"] == 4);
    CHECK(jr["sv_spectrum"].size() == 4);
    CHECK(jr.contains("entropy"));

    auto js = to_json(pearson({1, 2, 3, 4}, {2, 4, 6.1, 7.9}));
    CHECK(js.contains("statistic"));
    CHECK(js["n"] == 4);
    CHECK(js["p_value"].get<double>() <= 1.0);
}
