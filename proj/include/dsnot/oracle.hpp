#pragma once

// Brute-force reference implementations. Nothing here calls into the refine engine
// or the row-error kernel in types.cpp; agreement between the two paths is what the
// tests measure.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dsnot/refine.hpp"
#include "dsnot/types.hpp"

namespace dsnot::oracle {

/// Full-scan evaluation of the grow criterion; same contract as dsnot::grow_index.
std::optional<std::size_t> oracle_grow(std::span<const float> w_row, std::span<const std::uint8_t> mask_row,
                                       const ChannelStats& stats, double delta_mean, const RefineConfig& config,
                                       std::optional<ColumnRange> block = std::nullopt);

/// Full-scan evaluation of the prune criterion; same contract as dsnot::prune_index.
std::optional<std::size_t> oracle_prune(std::span<const float> w_row, std::span<const std::uint8_t> mask_row,
                                        const ChannelStats& stats, double delta_mean, const RefineConfig& config,
                                        std::size_t exclude, std::optional<ColumnRange> block = std::nullopt);

/// delta = W A - (M . W) A, evaluated as two separate products.
std::vector<RowReconState> oracle_recompute(const WeightMatrix& w, const SparsityMask& mask,
                                            const ActivationMatrix& a);

// Layer Frobenius norm of oracle_recompute.
double oracle_layer_error(const WeightMatrix& w, const SparsityMask& mask, const ActivationMatrix& a);

struct ExactMask {
    std::vector<std::uint8_t> mask;
    double error = 0.0; // ||delta_r||_2
};

inline constexpr std::size_t kMaxExactCols = 20;

/// Exhaustive minimum of ||delta_r||_2 over every mask with exactly `nnz` ones.
/// Ties go to the lexicographically smallest mask. Throws SizeError past 20 columns.
ExactMask oracle_exact_mask(std::span<const float> w_row, const ActivationMatrix& a, std::size_t nnz);

struct GapReport {
    std::size_t row_index = 0;
    double greedy_error = 0.0;
    double exact_error = 0.0;
    double gap_ratio = 0.0;
};

GapReport make_gap_report(std::size_t row_index, double greedy_error, double exact_error);

} // namespace dsnot::oracle
