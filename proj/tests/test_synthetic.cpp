#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dsnot/synthetic.hpp"

using namespace dsnot;

TEST_CASE("generator is a pure function of its parameters") {
    SyntheticSpec spec{16, 12, 64, 0.25, 10.0, 1234};
    auto a = generate_synthetic(spec);
    auto b = generate_synthetic(spec);
    CHECK(a.weights == b.weights);
    CHECK(a.activations == b.activations);
    spec.seed = 1235;
    CHECK_FALSE(generate_synthetic(spec).weights == a.weights);
}

TEST_CASE("unit outlier scale matches the no-outlier case") {
    auto plain = generate_synthetic({8, 16, 32, 0.0, 1.0, 9});
    auto unit = generate_synthetic({8, 16, 32, 0.5, 1.0, 9});
    CHECK(plain.weights == unit.weights);
    CHECK(plain.activations == unit.activations);
}

TEST_CASE("no outliers: every channel's sample std is within 5 sigma of 1") {
    constexpr std::size_t tokens = 4096;
    auto layer = generate_synthetic({1, 64, tokens, 0.0, 1.0, 77});
    // sample std of n normals has standard error ~ 1/sqrt(2n)
    const double sigma = 1.0 / std::sqrt(2.0 * tokens);
    for (std::size_t k = 0; k < 64; ++k) {
        double sum = 0.0, sq = 0.0;
        for (float x : layer.activations.channel(k)) {
            sum += x;
            sq += static_cast<double>(x) * x;
        }
        const double mean = sum / tokens;
        const double sd = std::sqrt(sq / tokens - mean * mean);
        CHECK(std::fabs(sd - 1.0) < 5.0 * sigma);
        CHECK(std::fabs(mean) < 5.0 / std::sqrt(static_cast<double>(tokens)));
    }
}

TEST_CASE("outlier channels are scaled") {
    constexpr std::size_t c_in = 40;
    auto base = generate_synthetic({2, c_in, 16, 0.0, 1.0, 5});
    auto out = generate_synthetic({2, c_in, 16, 0.1, 10.0, 5});
    std::size_t scaled = 0;
    for (std::size_t k = 0; k < c_in; ++k) {
        const float ratio = out.activations.at(k, 0) / base.activations.at(k, 0);
        if (std::fabs(ratio - 10.0f) < 1e-4f) {
            ++scaled;
        } else {
            CHECK(ratio == 1.0f);
        }
    }
    CHECK(scaled == 4); // ceil(0.1 * 40)
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(generate_synthetic({0, 4, 4, 0.0, 1.0, 0}), InputError);
    CHECK_THROWS_AS(generate_synthetic({4, 4, 4, 1.5, 1.0, 0}), InputError);
    CHECK_THROWS_AS(generate_synthetic({4, 4, 4, 0.5, 0.5, 0}), InputError);
}

TEST_CASE("normal stream pins the Box-Muller pairing") {
    NormalStream s(42);
    std::mt19937_64 engine(42);
    const double u1 = static_cast<double>(engine() >> 11) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    CHECK(s.next() == r * std::cos(2.0 * std::numbers::pi * u2));
    CHECK(s.next() == r * std::sin(2.0 * std::numbers::pi * u2));
}
