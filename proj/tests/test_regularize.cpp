#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "adgan/regularize.hpp"
#include "oracles.hpp"

using namespace adgan;

TEST_CASE("compute_gamma") {
    REQUIRE(compute_gamma(1.0, 7, 27) == 0.0);
    // b_size == feat_size: valid region collapses to one cell
    REQUIRE(compute_gamma(0.8, 9, 9) ==
            Catch::Approx((1.0 - 0.8) / 81.0 * 81.0));
    REQUIRE(compute_gamma(0.9, 7, 27) == Catch::Approx((0.1 / 49.0) * (729.0 / 441.0)));
    REQUIRE(compute_gamma(0.9, 7, 27) == Catch::Approx(3.373e-3).epsilon(1e-3));
    REQUIRE_THROWS_AS(compute_gamma(0.9, 9, 7), std::invalid_argument);
}

TEST_CASE("normalize_plane") {
    std::vector<double> a(25);
    std::iota(a.begin(), a.end(), 1.0);
    std::vector<double> out;
    normalize_plane(a, out);
    for (std::size_t i = 0; i < a.size(); ++i)
        REQUIRE(out[i] == Catch::Approx((a[i] - 1.0) / 24.0));

    std::vector<double> c(9, 3.3);
    normalize_plane(c, out);
    for (double v : out) REQUIRE(v == 0.0);

    Rng rng(4);
    std::vector<double> r(64);
    for (auto& v : r) v = rng.gaussian();
    normalize_plane(r, out);
    REQUIRE(*std::min_element(out.begin(), out.end()) == 0.0);
    REQUIRE(*std::max_element(out.begin(), out.end()) == 1.0);
}

TEST_CASE("adapdrop hand case: 5x5 plane, forced center, b_size=3, k=40") {
    std::vector<double> a(25);
    std::iota(a.begin(), a.end(), 1.0);
    std::vector<double> norm;
    normalize_plane(a, norm);
    DropMask m = adapdrop_mask(norm, 5, 5, {{2, 2}}, 3, 40.0);
    // block values {7,8,9,12,13,14,17,18,19}; n_drop = ceil(0.4*9) = 4;
    // dropped: 19, 18, 17, 14
    REQUIRE(m.count_ones() == 21);
    REQUIRE(m.scale() == Catch::Approx(25.0 / 21.0));
    for (int v : {19, 18, 17, 14}) REQUIRE(m.on[static_cast<std::size_t>(v - 1)] == 0);
    for (int v : {7, 8, 9, 12, 13}) REQUIRE(m.on[static_cast<std::size_t>(v - 1)] == 1);
}

TEST_CASE("adapdrop: gamma=0 and k=0 are the normalization map") {
    std::vector<double> a(49);
    std::iota(a.begin(), a.end(), 0.0);
    RegularizerConfig cfg;
    cfg.b_size = 3;
    cfg.keep_prob = 1.0;  // gamma = 0, no centers
    auto out = adapdrop_plane(a, 7, 7, cfg, 5);
    std::vector<double> norm;
    normalize_plane(a, norm);
    REQUIRE(out == norm);

    cfg.keep_prob = 0.0;  // many centers
    cfg.k = 0.0;          // but nothing dropped per block
    out = adapdrop_plane(a, 7, 7, cfg, 5);
    REQUIRE(out == norm);
}

TEST_CASE("adapdrop: total drop yields all zeros without division") {
    std::vector<double> a(9);
    std::iota(a.begin(), a.end(), 1.0);
    RegularizerConfig cfg;
    cfg.b_size = 3;
    cfg.k = 100.0;
    cfg.keep_prob = 0.0;  // center always sampled on the 3x3 plane
    auto out = adapdrop_plane(a, 3, 3, cfg, 1);
    for (double v : out) REQUIRE(v == 0.0);
}

TEST_CASE("dropblock: single center and union of overlapping blocks") {
    std::vector<double> a(25, 1.0);
    DropMask m = dropblock_mask(5, 5, {{2, 2}}, 3);
    REQUIRE(m.count() - m.count_ones() == 9);
    REQUIRE(m.scale() == Catch::Approx(25.0 / 16.0));

    // overlapping blocks zero the union, not the sum
    DropMask m2 = dropblock_mask(5, 5, {{2, 1}, {2, 2}}, 3);
    std::int64_t zeros = m2.count() - m2.count_ones();
    REQUIRE(zeros == 12);  // 3x4 union
}

TEST_CASE("dropblock: gamma=0 is the identity") {
    std::vector<double> a(36);
    std::iota(a.begin(), a.end(), 0.0);
    RegularizerConfig cfg;
    cfg.kind = RegKind::kDropBlock;
    cfg.b_size = 3;
    cfg.keep_prob = 1.0;
    REQUIRE(dropblock_plane(a, 6, 6, cfg, 3) == a);
}

TEST_CASE("dropout: identity at p=0, rejection at p=1") {
    std::vector<double> a(100);
    std::iota(a.begin(), a.end(), 0.0);
    REQUIRE(dropout_plane(a, 0.0, 9) == a);
    REQUIRE_THROWS_AS(dropout_plane(a, 1.0, 9), std::invalid_argument);
}

TEST_CASE("dropout: kept fraction and mean are unbiased over trials") {
    std::vector<double> a(100, 1.0);
    double p = 0.3;
    std::int64_t kept = 0;
    double mean_sum = 0.0;
    int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        auto out = dropout_plane(a, p, static_cast<std::uint64_t>(t));
        for (double v : out) {
            if (v != 0.0) ++kept;
            mean_sum += v;
        }
    }
    double kept_frac = static_cast<double>(kept) / (100.0 * trials);
    REQUIRE(std::abs(kept_frac - (1.0 - p)) < 0.02);
    double mean = mean_sum / (100.0 * trials);
    REQUIRE(std::abs(mean - 1.0) < 0.02);
}

TEST_CASE("adapdrop matches the brute-force oracle on seeded random planes") {
    int cases = 0;
    for (std::uint64_t seed = 0; seed < 250; ++seed) {
        Rng meta(derive_seed(77, seed));
        int side = 8 + static_cast<int>(meta.below(25));
        int b_size = 3 + 2 * static_cast<int>(meta.below(3));
        double ks[] = {0.0, 30.0, 40.0, 45.0, 100.0};
        double k = ks[meta.below(5)];
        std::vector<double> plane(static_cast<std::size_t>(side) * side);
        for (auto& v : plane) v = meta.gaussian();
        RegularizerConfig cfg;
        cfg.b_size = b_size;
        cfg.k = k;
        cfg.keep_prob = 0.8;  // higher drop rate exercises overlap cases
        DropMask m;
        auto out = adapdrop_plane(plane, side, side, cfg, seed, &m);
        double gamma = compute_gamma(cfg.keep_prob, b_size, side);
        auto ref = oracle::adapdrop_bruteforce(plane, side, side, b_size, k, gamma, seed);
        REQUIRE(ref.centers == m.centers);
        for (std::size_t i = 0; i < out.size(); ++i) {
            REQUIRE(static_cast<int>(m.on[i]) == ref.mask[i]);
            REQUIRE(std::abs(out[i] - ref.output[i]) < 1e-12);
        }
        ++cases;
    }
    REQUIRE(cases == 250);
}

TEST_CASE("adapdrop: per-block drop count is exact for non-overlapping blocks") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        int side = 16;
        int b_size = 3 + 2 * static_cast<int>(rng.below(3));
        double k = 10.0 + 10.0 * static_cast<double>(rng.below(9));
        std::vector<double> plane(256);
        for (auto& v : plane) v = rng.gaussian();
        std::vector<double> norm;
        normalize_plane(plane, norm);
        // two non-overlapping forced centers
        int half = b_size / 2;
        std::vector<std::pair<int, int>> centers{{half, half}, {side - 1 - half, side - 1 - half}};
        DropMask m = adapdrop_mask(norm, side, side, centers, b_size, k);
        std::int64_t expect = static_cast<std::int64_t>(std::ceil(k / 100.0 * b_size * b_size));
        REQUIRE(m.count() - m.count_ones() == 2 * expect);
    }
}

TEST_CASE("determinism: same seed gives the identical mask") {
    std::vector<double> plane(144);
    std::iota(plane.begin(), plane.end(), 0.0);
    RegularizerConfig cfg;
    cfg.b_size = 5;
    cfg.keep_prob = 0.7;
    DropMask m1, m2;
    adapdrop_plane(plane, 12, 12, cfg, 1234, &m1);
    adapdrop_plane(plane, 12, 12, cfg, 1234, &m2);
    REQUIRE(m1.on == m2.on);
    REQUIRE(m1.centers == m2.centers);
}

TEST_CASE("regularize wrapper: eval mode is the identity for all kinds") {
    Rng rng(3);
    Tensor<float> x({2, 3, 9, 9});
    for (auto& v : x.data()) v = static_cast<float>(rng.gaussian());
    for (auto kind : {RegKind::kDropout, RegKind::kDropBlock, RegKind::kAdapDrop}) {
        RegularizerConfig cfg;
        cfg.kind = kind;
        cfg.b_size = 3;
        auto y = regularize(x, cfg, 55, /*train=*/false);
        REQUIRE(y.data() == x.data());
    }
}

TEST_CASE("regularize wrapper: masks differ across planes and gradient is masked") {
    Tensor<double> x({1, 2, 12, 12}, true);
    Rng rng(8);
    for (auto& v : x.data()) v = rng.gaussian();
    RegularizerConfig cfg;
    cfg.kind = RegKind::kDropBlock;
    cfg.b_size = 3;
    cfg.keep_prob = 0.5;
    auto y = regularize(x, cfg, 77, true);
    sum(y).backward();
    // gradient zero exactly where the output was dropped
    for (std::size_t i = 0; i < y.data().size(); ++i) {
        if (y.data()[i] == 0.0 && x.data()[i] != 0.0)
            REQUIRE(x.grad()[i] == 0.0);
    }
    // per-plane independent streams: channel masks should not be identical
    std::vector<bool> z0, z1;
    for (std::size_t i = 0; i < 144; ++i) {
        z0.push_back(y.data()[i] == 0.0);
        z1.push_back(y.data()[144 + i] == 0.0);
    }
    REQUIRE(z0 != z1);
}
