#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsnot/types.hpp"

namespace dsnot {

enum class TerminationMetric { abs_mean, l2 };
enum class GrowCriterion { dsnot, wanda_like };
enum class PruneCriterion { dsnot, wanda_unsigned, expected_change };

/// Knobs for the per-row grow/prune loop. Defaults: T = 50, eps = 0.1.
struct RefineConfig {
    std::size_t max_cycles = 50;
    double threshold = 0.1;
    TerminationMetric termination_metric = TerminationMetric::abs_mean;
    GrowCriterion grow_criterion = GrowCriterion::dsnot;
    PruneCriterion prune_criterion = PruneCriterion::dsnot;
    double variance_floor = 1e-8;
    // Set from the mask by refine_layer; under N:M the pruned weight stays in the grown weight's block.
    MaskPattern pattern_constraint;

    void validate() const;
};

/// Half-open column interval [begin, end).
struct ColumnRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    bool contains(std::size_t k) const noexcept { return k >= begin && k < end; }
};

// The aligned m-block holding column k; nullopt for unstructured patterns.
std::optional<ColumnRange> block_of(std::size_t k, const MaskPattern& pattern);

enum class StopReason { threshold_met, max_cycles, no_grow_candidate, no_prune_candidate };

struct SwapRecord {
    std::size_t grow = 0;
    std::size_t prune = 0;
    double delta_mean_before = 0.0;
    double delta_mean_after = 0.0;

    bool operator==(const SwapRecord&) const = default;
};

struct RowRefineReport {
    std::size_t row_index = 0;
    std::size_t cycles_used = 0;
    std::vector<SwapRecord> swaps;
    double initial_metric = 0.0;
    double final_metric = 0.0;
    StopReason stop_reason = StopReason::max_cycles;

    bool operator==(const RowRefineReport&) const = default;
};

const char* to_string(StopReason reason);
StopReason parse_stop_reason(const std::string& text);
const char* to_string(TerminationMetric metric);
const char* to_string(GrowCriterion criterion);
const char* to_string(PruneCriterion criterion);

// Scalar compared against the threshold: |E[delta]| or ||delta||_2 / sqrt(tokens).
double termination_value(const RowReconState& state, TerminationMetric metric);

/// Index of the pruned weight to revive, or nullopt if none is pruned.
///
/// dsnot: score W_k * E[A_k] / max(Var(A_k), floor), argmax when delta_mean > 0 else argmin.
/// wanda_like: argmax of |W_k| * ||A_k||_2.
/// Ties resolve to the lowest index.
std::optional<std::size_t> grow_index(std::span<const float> w_row, std::span<const std::uint8_t> mask_row,
                                      const ChannelStats& stats, double delta_mean, const RefineConfig& config,
                                      std::optional<ColumnRange> block = std::nullopt);

/// Index of the kept weight to remove, never `exclude`.
///
/// dsnot: among kept k whose W_k * E[A_k] has the sign opposite to delta_mean (strictly), argmin
/// of |W_k| * ||A_k||_2. wanda_unsigned drops the sign filter. expected_change uses the grow score
/// with the extremum reversed (argmin when delta_mean > 0).
std::optional<std::size_t> prune_index(std::span<const float> w_row, std::span<const std::uint8_t> mask_row,
                                       const ChannelStats& stats, double delta_mean, const RefineConfig& config,
                                       std::size_t exclude, std::optional<ColumnRange> block = std::nullopt);

/// Revives `grow`, prunes `prune` and patches the row error in place:
/// delta -= W_i A_i; delta += W_j A_j.
/// Throws ContractViolation if grow == prune or the mask bits are not (0, 1).
void apply_swap(RowReconState& state, std::span<const float> w_row, std::span<std::uint8_t> mask_row,
                const ActivationMatrix& a, const ChannelStats& stats, std::size_t grow, std::size_t prune);

struct RowRefineResult {
    RowRefineReport report;
    RowReconState state; // maintained incrementally
};

/// Runs the grow/prune loop on one row, updating `mask_row` in place.
RowRefineResult refine_row(std::size_t row_index, std::span<const float> w_row, std::span<std::uint8_t> mask_row,
                           const ActivationMatrix& a, const ChannelStats& stats, const RefineConfig& config);

struct LayerRefineResult {
    SparsityMask mask;
    std::vector<RowRefineReport> reports;
    std::vector<RowReconState> states;
};

/// Refines every row independently across `threads` workers. Output does not depend on `threads`.
LayerRefineResult refine_layer(const WeightMatrix& w, const SparsityMask& mask, const ActivationMatrix& a,
                               const RefineConfig& config, std::size_t threads = 1);

} // namespace dsnot
