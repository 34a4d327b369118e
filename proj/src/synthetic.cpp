#include "dsnot/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace dsnot {

void SyntheticSpec::validate() const {
    if (c_out == 0 || c_in == 0 || tokens == 0) {
        throw InputError("SyntheticSpec: dimensions must be >= 1");
    }
    if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
        throw InputError("SyntheticSpec: outlier_fraction must lie in [0, 1]");
    }
    if (!(outlier_scale >= 1.0) || !std::isfinite(outlier_scale)) {
        throw InputError("SyntheticSpec: outlier_scale must be finite and >= 1");
    }
    if (!(channel_mean >= 0.0) || !std::isfinite(channel_mean)) {
        throw InputError("SyntheticSpec: channel_mean must be finite and >= 0");
    }
}

double NormalStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double NormalStream::next() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = radius * std::sin(theta);
    has_cached_ = true;
    return radius * std::cos(theta);
}

std::uint64_t NormalStream::uniform_index(std::uint64_t bound) {
    // Smallest all-ones mask covering bound - 1.
    std::uint64_t mask = bound - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
        const std::uint64_t v = engine_() & mask;
        if (v < bound) {
            return v;
        }
    }
}

SyntheticLayer generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    NormalStream rng(spec.seed);

    std::vector<float> w(spec.c_out * spec.c_in);
    for (auto& v : w) {
        v = static_cast<float>(rng.next());
    }
    std::vector<double> act(spec.c_in * spec.tokens);
    for (auto& v : act) {
        v = rng.next();
    }

    const auto outliers = static_cast<std::size_t>(std::ceil(spec.outlier_fraction * static_cast<double>(spec.c_in)));
    std::vector<std::size_t> channels(spec.c_in);
    std::iota(channels.begin(), channels.end(), std::size_t{0});
    for (std::size_t i = 0; i < outliers && i < spec.c_in; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(spec.c_in - i));
        std::swap(channels[i], channels[j]);
    }

    if (spec.channel_mean > 0.0) {
        for (std::size_t k = 0; k < spec.c_in; ++k) {
            const double offset = spec.channel_mean * rng.next();
            for (std::size_t t = 0; t < spec.tokens; ++t) {
                act[k * spec.tokens + t] += offset;
            }
        }
    }
    for (std::size_t i = 0; i < outliers && i < spec.c_in; ++i) {
        const std::size_t k = channels[i];
        for (std::size_t t = 0; t < spec.tokens; ++t) {
            act[k * spec.tokens + t] *= spec.outlier_scale;
        }
    }

    std::vector<float> a(act.size());
    for (std::size_t i = 0; i < act.size(); ++i) {
        a[i] = static_cast<float>(act[i]);
    }
    return {WeightMatrix(spec.c_out, spec.c_in, std::move(w)), ActivationMatrix(spec.c_in, spec.tokens, std::move(a))};
}

} // namespace dsnot
