#include "dsnot/refine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace dsnot {

void RefineConfig::validate() const {
    if (!(threshold >= 0.0) || !std::isfinite(threshold)) {
        throw InputError("RefineConfig: threshold must be finite and >= 0");
    }
    if (!(variance_floor > 0.0) || !std::isfinite(variance_floor)) {
        throw InputError("RefineConfig: variance_floor must be finite and > 0");
    }
}

std::optional<ColumnRange> block_of(std::size_t k, const MaskPattern& pattern) {
    if (!pattern.is_n_of_m() || pattern.m == 0) {
        return std::nullopt;
    }
    const std::size_t begin = (k / pattern.m) * pattern.m;
    return ColumnRange{begin, begin + pattern.m};
}

const char* to_string(StopReason reason) {
    switch (reason) {
    case StopReason::threshold_met: return "threshold_met";
    case StopReason::max_cycles: return "max_cycles";
    case StopReason::no_grow_candidate: return "no_grow_candidate";
    case StopReason::no_prune_candidate: return "no_prune_candidate";
    }
    return "unknown";
}

StopReason parse_stop_reason(const std::string& text) {
    for (auto r : {StopReason::threshold_met, StopReason::max_cycles, StopReason::no_grow_candidate,
                   StopReason::no_prune_candidate}) {
        if (text == to_string(r)) {
            return r;
        }
    }
    throw InputError("unknown stop reason '" + text + "'");
}

const char* to_string(TerminationMetric metric) {
    return metric == TerminationMetric::abs_mean ? "abs-mean" : "l2";
}

const char* to_string(GrowCriterion criterion) {
    return criterion == GrowCriterion::dsnot ? "dsnot" : "wanda-like";
}

const char* to_string(PruneCriterion criterion) {
    switch (criterion) {
    case PruneCriterion::dsnot: return "dsnot";
    case PruneCriterion::wanda_unsigned: return "wanda-unsigned";
    case PruneCriterion::expected_change: return "expected-change";
    }
    return "unknown";
}

double termination_value(const RowReconState& state, TerminationMetric metric) {
    if (metric == TerminationMetric::abs_mean) {
        return std::fabs(state.delta_mean);
    }
    const auto tokens = static_cast<double>(state.delta.size());
    return tokens > 0 ? state.delta_l2 / std::sqrt(tokens) : 0.0;
}

namespace {

// Expected change of E[delta] per unit of activation variance.
inline double expected_influence(float w, const ChannelStats& stats, std::size_t k, double floor) {
    return static_cast<double>(w) * stats.mean[k] / std::max(stats.variance[k], floor);
}

inline double wanda_score(float w, const ChannelStats& stats, std::size_t k) {
    return std::fabs(static_cast<double>(w)) * stats.l2norm[k];
}

// Linear scan keeping the first extremal index. `better(a, b)` is a strict preference.
template <class Eligible, class Score, class Better>
std::optional<std::size_t> scan(std::size_t begin, std::size_t end, Eligible eligible, Score score, Better better) {
    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
        if (!eligible(k)) {
            continue;
        }
        const double s = score(k);
        if (!best || better(s, best_score)) {
            best = k;
            best_score = s;
        }
    }
    return best;
}

void check_row(std::span<const float> w_row, std::span<const std::uint8_t> mask_row, const ChannelStats& stats) {
    if (w_row.size() != mask_row.size() || stats.size() != w_row.size()) {
        throw DimensionError("refine: row, mask and channel stats disagree in length");
    }
}

} // namespace

std::optional<std::size_t> grow_index(std::span<const float> w_row, std::span<const std::uint8_t> mask_row,
                                      const ChannelStats& stats, double delta_mean, const RefineConfig& config,
                                      std::optional<ColumnRange> block) {
    check_row(w_row, mask_row, stats);
    const std::size_t begin = block ? block->begin : 0;
    const std::size_t end = block ? std::min(block->end, w_row.size()) : w_row.size();
    auto pruned = [&](std::size_t k) { return mask_row[k] == 0; };
    auto greater = [](double a, double b) { return a > b; };
    auto less = [](double a, double b) { return a < b; };

    if (config.grow_criterion == GrowCriterion::wanda_like) {
        return scan(begin, end, pruned, [&](std::size_t k) { return wanda_score(w_row[k], stats, k); }, greater);
    }
    auto score = [&](std::size_t k) { return expected_influence(w_row[k], stats, k, config.variance_floor); };
    if (delta_mean > 0.0) {
        return scan(begin, end, pruned, score, greater);
    }
    return scan(begin, end, pruned, score, less);
}

std::optional<std::size_t> prune_index(std::span<const float> w_row, std::span<const std::uint8_t> mask_row,
                                       const ChannelStats& stats, double delta_mean, const RefineConfig& config,
                                       std::size_t exclude, std::optional<ColumnRange> block) {
    check_row(w_row, mask_row, stats);
    const std::size_t begin = block ? block->begin : 0;
    const std::size_t end = block ? std::min(block->end, w_row.size()) : w_row.size();
    const bool positive = delta_mean > 0.0;
    auto kept = [&](std::size_t k) { return mask_row[k] == 1 && k != exclude; };
    auto less = [](double a, double b) { return a < b; };
    auto greater = [](double a, double b) { return a > b; };

    switch (config.prune_criterion) {
    case PruneCriterion::dsnot: {
        // Removing k shifts E[delta] by +W_k E[A_k]; it must push against the current sign.
        auto eligible = [&](std::size_t k) {
            if (!kept(k)) {
                return false;
            }
            const double influence = static_cast<double>(w_row[k]) * stats.mean[k];
            return positive ? influence < 0.0 : influence > 0.0;
        };
        return scan(begin, end, eligible, [&](std::size_t k) { return wanda_score(w_row[k], stats, k); }, less);
    }
    case PruneCriterion::wanda_unsigned:
        return scan(begin, end, kept, [&](std::size_t k) { return wanda_score(w_row[k], stats, k); }, less);
    case PruneCriterion::expected_change: {
        auto score = [&](std::size_t k) { return expected_influence(w_row[k], stats, k, config.variance_floor); };
        if (positive) {
            return scan(begin, end, kept, score, less);
        }
        return scan(begin, end, kept, score, greater);
    }
    }
    return std::nullopt;
}

void apply_swap(RowReconState& state, std::span<const float> w_row, std::span<std::uint8_t> mask_row,
                const ActivationMatrix& a, const ChannelStats& stats, std::size_t grow, std::size_t prune) {
    if (grow == prune) {
        throw ContractViolation("apply_swap: grow and prune index are both " + std::to_string(grow));
    }
    if (grow >= mask_row.size() || prune >= mask_row.size() || w_row.size() != mask_row.size() ||
        a.channels() != w_row.size() || state.delta.size() != a.tokens()) {
        throw ContractViolation("apply_swap: index or shape out of range");
    }
    if (mask_row[grow] != 0 || mask_row[prune] != 1) {
        throw ContractViolation("apply_swap: expected mask[" + std::to_string(grow) + "] = 0 and mask[" +
                                std::to_string(prune) + "] = 1");
    }

    const double wi = w_row[grow];
    const double wj = w_row[prune];
    if (wi != 0.0 || wj != 0.0) {
        auto xi = a.channel(grow);
        auto xj = a.channel(prune);
        for (std::size_t t = 0; t < state.delta.size(); ++t) {
            state.delta[t] = static_cast<float>(static_cast<double>(state.delta[t]) - wi * xi[t] + wj * xj[t]);
        }
        state.delta_mean += wj * stats.mean[prune] - wi * stats.mean[grow];
        state.delta_l2 = l2_norm(state.delta);
    }
    mask_row[grow] = 1;
    mask_row[prune] = 0;
}

RowRefineResult refine_row(std::size_t row_index, std::span<const float> w_row, std::span<std::uint8_t> mask_row,
                           const ActivationMatrix& a, const ChannelStats& stats, const RefineConfig& config) {
    config.validate();
    if (!row_satisfies(mask_row, config.pattern_constraint)) {
        throw PatternError("refine_row: initial mask of row " + std::to_string(row_index) + " breaks " +
                           to_string(config.pattern_constraint));
    }
    RowRefineResult out;
    out.state = row_reconstruction_error(row_index, w_row, mask_row, a);
    RowRefineReport& report = out.report;
    RowReconState& state = out.state;
    report.row_index = row_index;
    report.initial_metric = termination_value(state, config.termination_metric);

    for (;;) {
        if (termination_value(state, config.termination_metric) < config.threshold) {
            report.stop_reason = StopReason::threshold_met;
            break;
        }
        if (report.cycles_used >= config.max_cycles) {
            report.stop_reason = StopReason::max_cycles;
            break;
        }
        const auto grow = grow_index(w_row, mask_row, stats, state.delta_mean, config);
        if (!grow) {
            report.stop_reason = StopReason::no_grow_candidate;
            break;
        }
        const auto prune = prune_index(w_row, mask_row, stats, state.delta_mean, config, *grow,
                                       block_of(*grow, config.pattern_constraint));
        if (!prune) {
            report.stop_reason = StopReason::no_prune_candidate;
            break;
        }
        const double before = state.delta_mean;
        apply_swap(state, w_row, mask_row, a, stats, *grow, *prune);
        report.swaps.push_back({*grow, *prune, before, state.delta_mean});
        ++report.cycles_used;
    }
    report.final_metric = termination_value(state, config.termination_metric);
    return out;
}

LayerRefineResult refine_layer(const WeightMatrix& w, const SparsityMask& mask, const ActivationMatrix& a,
                               const RefineConfig& config, std::size_t threads) {
    if (w.cols() != a.channels()) {
        throw DimensionError("refine_layer: W has " + std::to_string(w.cols()) + " columns but A has " +
                             std::to_string(a.channels()) + " channels");
    }
    if (mask.rows() != w.rows() || mask.cols() != w.cols()) {
        throw DimensionError("refine_layer: mask shape does not match W");
    }
    RefineConfig cfg = config;
    cfg.pattern_constraint = mask.pattern();
    cfg.validate();

    const ChannelStats stats = compute_channel_stats(a);
    const std::size_t rows = w.rows();

    std::vector<std::uint8_t> bits(mask.bits().begin(), mask.bits().end());
    std::vector<RowRefineReport> reports(rows);
    std::vector<RowReconState> states(rows);

    // Each row writes only its own slots.
    auto work = [&](std::size_t r) {
        std::span<std::uint8_t> row_bits(bits.data() + r * w.cols(), w.cols());
        auto result = refine_row(r, w.row(r), row_bits, a, stats, cfg);
        reports[r] = std::move(result.report);
        states[r] = std::move(result.state);
    };

    const std::size_t workers = std::clamp<std::size_t>(threads, 1, rows);
    if (workers == 1) {
        for (std::size_t r = 0; r < rows; ++r) {
            work(r);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        {
            std::vector<std::jthread> pool;
            pool.reserve(workers);
            for (std::size_t t = 0; t < workers; ++t) {
                pool.emplace_back([&] {
                    for (std::size_t r = next.fetch_add(1); r < rows; r = next.fetch_add(1)) {
                        try {
                            work(r);
                        } catch (...) {
                            std::lock_guard lock(failure_mutex);
                            if (!failure) {
                                failure = std::current_exception();
                            }
                        }
                    }
                });
            }
        }
        if (failure) {
            std::rethrow_exception(failure);
        }
    }

    return {SparsityMask(rows, w.cols(), std::move(bits), mask.pattern()), std::move(reports), std::move(states)};
}

} // namespace dsnot
