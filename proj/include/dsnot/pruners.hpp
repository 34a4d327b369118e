#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "dsnot/types.hpp"

namespace dsnot {

enum class PruneMethod { magnitude, wanda };
enum class Granularity { per_row, per_layer };

struct RatioTarget {
    double p = 0.0;
};

struct NofMTarget {
    std::size_t n = 0;
    std::size_t m = 1;
};

struct PruneSpec {
    PruneMethod method = PruneMethod::wanda;
    std::variant<RatioTarget, NofMTarget> target = RatioTarget{};
    Granularity granularity = Granularity::per_row;

    void validate() const;
};

/// Row-major importance scores, same shape as the weights.
struct ScoreMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// magnitude: |W|; wanda: |W| * ||A_k||_2.
ScoreMatrix score_weights(const WeightMatrix& w, const ChannelStats& stats, PruneMethod method);

// round-half-away-from-zero of p * count
std::size_t pruned_count(double p, std::size_t count);

/// Zeroes the lowest-scoring round(p * n) entries per row (or per layer).
/// Ties prune the lower (row, column) first.
SparsityMask prune_to_ratio(const WeightMatrix& w, const ChannelStats& stats, const PruneSpec& spec);

/// Keeps the n highest-scoring entries in each aligned block of m columns.
SparsityMask prune_to_nm(const WeightMatrix& w, const ChannelStats& stats, const PruneSpec& spec);

// Dispatches on spec.target.
SparsityMask prune(const WeightMatrix& w, const ChannelStats& stats, const PruneSpec& spec);

} // namespace dsnot
