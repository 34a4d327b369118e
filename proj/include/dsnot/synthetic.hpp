#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "dsnot/types.hpp"

namespace dsnot {

/// Parameters of a synthetic layer with a heavy-magnitude channel subset.
struct SyntheticSpec {
    std::size_t c_out = 64;
    std::size_t c_in = 64;
    std::size_t tokens = 1024;
    double outlier_fraction = 0.0;
    double outlier_scale = 1.0;
    std::uint64_t seed = 0;
    // Std-dev of a per-channel offset added to the activations; 0 keeps every channel zero-mean.
    double channel_mean = 0.0;

    void validate() const;
};

struct SyntheticLayer {
    WeightMatrix weights;
    ActivationMatrix activations;
};

/// Portable normal-variate source: std::mt19937_64 (whose output sequence the C++
/// standard fixes) feeding the Box-Muller transform. Each pair of 64-bit draws
/// u1, u2 becomes two variates:
///
///   u  = (draw >> 11) * 2^-53          uniform in [0, 1)
///   r  = sqrt(-2 ln(1 - u1)),  theta = 2 pi u2
///   z0 = r cos(theta),  z1 = r sin(theta)
///
/// z0 is returned first, z1 on the next call.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

    double next();
    // Unbiased integer in [0, bound) by rejection on the top bits.
    std::uint64_t uniform_index(std::uint64_t bound);

private:
    double uniform();

    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Draw order: weights (row-major), activations (channel-major), outlier channel
/// selection (partial Fisher-Yates over ceil(fraction * c_in) slots), then the
/// optional channel offsets. Outlier channels are multiplied by outlier_scale.
SyntheticLayer generate_synthetic(const SyntheticSpec& spec);

} // namespace dsnot
