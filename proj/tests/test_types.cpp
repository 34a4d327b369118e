#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dsnot/types.hpp"
#include "test_util.hpp"

using namespace dsnot;

TEST_CASE("channel stats of hand-sized inputs") {
    SUBCASE("constant channel") {
        auto s = compute_channel_stats(ActivationMatrix(1, 3, {3, 3, 3}));
        CHECK(s.mean[0] == 3.0);
        CHECK(s.variance[0] == 0.0);
        CHECK(s.l2norm[0] == doctest::Approx(3.0 * std::sqrt(3.0)).epsilon(1e-15));
    }
    SUBCASE("single token") {
        auto s = compute_channel_stats(ActivationMatrix(1, 1, {5}));
        CHECK(s.mean[0] == 5.0);
        CHECK(s.variance[0] == 0.0);
        CHECK(s.l2norm[0] == 5.0);
    }
    SUBCASE("two-pass oracle") {
        // mean 4; centered squares 4 + 0 + 4 over 3 tokens; sum of squares 56
        auto s = compute_channel_stats(ActivationMatrix(1, 3, {2, 4, 6}));
        CHECK(s.mean[0] == doctest::Approx(4.0).epsilon(1e-15));
        CHECK(s.variance[0] == doctest::Approx(8.0 / 3.0).epsilon(1e-15));
        CHECK(s.l2norm[0] == doctest::Approx(std::sqrt(56.0)).epsilon(1e-15));
    }
}

TEST_CASE("non-finite activations are rejected") {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    const float inf = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(compute_channel_stats(ActivationMatrix(1, 2, {1.0f, nan})), InputError);
    CHECK_THROWS_AS(ActivationMatrix(2, 1, {inf, 0.0f}), InputError);
    CHECK_THROWS_AS(WeightMatrix(1, 1, {nan}), InputError);
}

TEST_CASE("shape invariants") {
    CHECK_THROWS_AS(WeightMatrix(0, 3, {}), InputError);
    CHECK_THROWS_AS(WeightMatrix(2, 2, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(SparsityMask(1, 2, {1, 2}), InputError);
    CHECK_THROWS_AS(SparsityMask(1, 6, {1, 1, 0, 0, 1, 1}, MaskPattern::n_of_m(2, 4)), PatternError);
    CHECK_THROWS_AS(SparsityMask(1, 4, {1, 1, 1, 0}, MaskPattern::n_of_m(2, 4)), PatternError);
    CHECK_NOTHROW(SparsityMask(1, 4, {1, 0, 1, 0}, MaskPattern::n_of_m(2, 4)));
}

TEST_CASE("pattern text") {
    CHECK(parse_pattern("2:4") == MaskPattern::n_of_m(2, 4));
    CHECK(parse_pattern("unstructured") == MaskPattern::unstructured());
    CHECK(to_string(MaskPattern::n_of_m(4, 8)) == "4:8");
    CHECK_THROWS_AS(parse_pattern("5:4"), PatternError);
    CHECK_THROWS_AS(parse_pattern("2:"), PatternError);
    CHECK_THROWS_AS(parse_pattern("x"), PatternError);
}

TEST_CASE("reconstruction error examples") {
    const WeightMatrix w(1, 2, {1, 2});
    const ActivationMatrix a(2, 2, {1, 1, 3, -1});

    SUBCASE("hand multiply") {
        // column 1 pruned: 2 * [3, -1]
        auto rows = reconstruction_error(w, SparsityMask(1, 2, {1, 0}), a);
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].delta == std::vector<float>{6, -2});
        CHECK(rows[0].delta_mean == 2.0);
        CHECK(rows[0].delta_l2 == doctest::Approx(std::sqrt(40.0)).epsilon(1e-15));
    }
    SUBCASE("identity mask") {
        auto rows = reconstruction_error(w, SparsityMask::ones(1, 2), a);
        CHECK(rows[0].delta == std::vector<float>{0, 0});
        CHECK(rows[0].delta_mean == 0.0);
        CHECK(rows[0].delta_l2 == 0.0);
    }
    SUBCASE("fully pruned row equals W_r A") {
        auto rows = reconstruction_error(w, SparsityMask::zeros(1, 2), a);
        CHECK(rows[0].delta == std::vector<float>{7, -1});
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(reconstruction_error(WeightMatrix(1, 3, {1, 2, 3}), SparsityMask::ones(1, 3), a),
                        DimensionError);
        CHECK_THROWS_AS(reconstruction_error(w, SparsityMask::ones(2, 2), a), DimensionError);
    }
}

TEST_CASE("property: all-ones mask has zero error") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 1 + rng() % 6, cols = 1 + rng() % 9, tokens = 1 + rng() % 17;
        WeightMatrix w(rows, cols, test::random_floats(rng, rows * cols));
        ActivationMatrix a(cols, tokens, test::random_floats(rng, cols * tokens, 3.0f));
        for (const auto& s : reconstruction_error(w, SparsityMask::ones(rows, cols), a)) {
            CHECK(s.delta_l2 == 0.0);
        }
    }
}

TEST_CASE("property: flipping a bit 0->1 shifts delta by -W[r,k] A[k,:]") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t rows = 1 + rng() % 4, cols = 2 + rng() % 10, tokens = 1 + rng() % 32;
        WeightMatrix w(rows, cols, test::random_floats(rng, rows * cols));
        ActivationMatrix a(cols, tokens, test::random_floats(rng, cols * tokens));
        auto bits = test::random_bits(rng, rows * cols);
        const std::size_t r = rng() % rows, k = rng() % cols;
        bits[r * cols + k] = 0;
        auto before = reconstruction_error(w, SparsityMask(rows, cols, bits), a);
        bits[r * cols + k] = 1;
        auto after = reconstruction_error(w, SparsityMask(rows, cols, bits), a);
        for (std::size_t t = 0; t < tokens; ++t) {
            const double expected = static_cast<double>(before[r].delta[t]) - static_cast<double>(w.at(r, k)) * a.at(k, t);
            const double got = after[r].delta[t];
            const double scale = std::max({std::fabs(expected), std::fabs(got),
                                           static_cast<double>(std::fabs(before[r].delta[t]))});
            CHECK(std::fabs(got - expected) <= 1e-5 * scale + 1e-30);
        }
    }
}

TEST_CASE("property: row state is self-consistent") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t cols = 1 + rng() % 12, tokens = 1 + rng() % 64;
        WeightMatrix w(1, cols, test::random_floats(rng, cols));
        ActivationMatrix a(cols, tokens, test::random_floats(rng, cols * tokens));
        auto s = reconstruction_error(w, SparsityMask(1, cols, test::random_bits(rng, cols)), a)[0];
        double sum = 0.0, sq = 0.0;
        for (float x : s.delta) {
            sum += x;
            sq += static_cast<double>(x) * x;
        }
        const double rms = std::sqrt(sq / static_cast<double>(tokens));
        // relative to the row's own magnitude; delta_mean may sit near zero
        CHECK(std::fabs(s.delta_mean - sum / static_cast<double>(tokens)) <= 1e-6 * std::max(rms, 1e-30));
        CHECK(test::rel_diff(s.delta_l2, std::sqrt(sq)) <= 1e-6);
    }
}

TEST_CASE("property: channel stats are permutation invariant") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t channels = 1 + rng() % 5, tokens = 1 + rng() % 50;
        auto values = test::random_floats(rng, channels * tokens, 4.0f);
        auto permuted = values;
        for (std::size_t k = 0; k < channels; ++k) {
            std::shuffle(permuted.begin() + static_cast<std::ptrdiff_t>(k * tokens),
                         permuted.begin() + static_cast<std::ptrdiff_t>((k + 1) * tokens), rng);
        }
        auto s1 = compute_channel_stats(ActivationMatrix(channels, tokens, values));
        auto s2 = compute_channel_stats(ActivationMatrix(channels, tokens, permuted));
        for (std::size_t k = 0; k < channels; ++k) {
            // summation order changes; bound by the channel's magnitude
            CHECK(std::fabs(s1.mean[k] - s2.mean[k]) <= 1e-12 * s1.l2norm[k]);
            CHECK(s1.variance[k] == doctest::Approx(s2.variance[k]).epsilon(1e-12));
            CHECK(s1.l2norm[k] == doctest::Approx(s2.l2norm[k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("property: variance is zero exactly for constant channels") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t tokens = 1 + rng() % 100;
        const float c = test::random_floats(rng, 1, 100.0f)[0];
        std::vector<float> constant(tokens, c);
        auto s = compute_channel_stats(ActivationMatrix(1, tokens, constant));
        CHECK(s.variance[0] == 0.0);
        CHECK(s.mean[0] == static_cast<double>(c));

        if (tokens > 1) {
            auto varied = constant;
            varied[rng() % tokens] = std::nextafter(c, 1e9f);
            CHECK(compute_channel_stats(ActivationMatrix(1, tokens, varied)).variance[0] > 0.0);
        }
    }
}
