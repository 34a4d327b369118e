#include "dsnot/pruners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dsnot {

namespace {

void check_shapes(const WeightMatrix& w, const ChannelStats& stats, const char* what) {
    if (stats.size() != w.cols() || stats.l2norm.size() != w.cols()) {
        throw DimensionError(std::string(what) + ": W has " + std::to_string(w.cols()) + " columns but stats cover " +
                             std::to_string(stats.size()) + " channels");
    }
}

// Stable ascending order of `count` scores starting at `offset`; equal scores keep index order.
std::vector<std::size_t> ascending_order(const std::vector<double>& scores, std::size_t offset, std::size_t count) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[offset + a] < scores[offset + b]; });
    return order;
}

} // namespace

void PruneSpec::validate() const {
    if (const auto* ratio = std::get_if<RatioTarget>(&target)) {
        if (!(ratio->p >= 0.0 && ratio->p <= 1.0)) {
            throw InputError("PruneSpec: ratio must lie in [0, 1], got " + std::to_string(ratio->p));
        }
    } else {
        const auto& nm = std::get<NofMTarget>(target);
        if (nm.m == 0 || nm.n > nm.m) {
            throw PatternError("PruneSpec: N:M requires 0 <= N <= M and M >= 1, got " + std::to_string(nm.n) + ":" +
                               std::to_string(nm.m));
        }
    }
}

ScoreMatrix score_weights(const WeightMatrix& w, const ChannelStats& stats, PruneMethod method) {
    if (method == PruneMethod::wanda) {
        check_shapes(w, stats, "score_weights");
    }
    ScoreMatrix scores{w.rows(), w.cols(), std::vector<double>(w.rows() * w.cols())};
    for (std::size_t r = 0; r < w.rows(); ++r) {
        auto row = w.row(r);
        for (std::size_t k = 0; k < w.cols(); ++k) {
            const double mag = std::fabs(static_cast<double>(row[k]));
            scores.values[r * w.cols() + k] = method == PruneMethod::wanda ? mag * stats.l2norm[k] : mag;
        }
    }
    return scores;
}

std::size_t pruned_count(double p, std::size_t count) {
    return static_cast<std::size_t>(std::round(p * static_cast<double>(count)));
}

SparsityMask prune_to_ratio(const WeightMatrix& w, const ChannelStats& stats, const PruneSpec& spec) {
    spec.validate();
    const auto* ratio = std::get_if<RatioTarget>(&spec.target);
    if (ratio == nullptr) {
        throw InputError("prune_to_ratio: target is not a ratio");
    }
    const ScoreMatrix scores = score_weights(w, stats, spec.method);
    const std::size_t rows = w.rows();
    const std::size_t cols = w.cols();
    std::vector<std::uint8_t> bits(rows * cols, 1);

    if (spec.granularity == Granularity::per_row) {
        const std::size_t k = pruned_count(ratio->p, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            auto order = ascending_order(scores.values, r * cols, cols);
            for (std::size_t i = 0; i < k; ++i) {
                bits[r * cols + order[i]] = 0;
            }
        }
    } else {
        // Flat row-major index order doubles as (row, column) tie order.
        const std::size_t k = pruned_count(ratio->p, rows * cols);
        auto order = ascending_order(scores.values, 0, rows * cols);
        for (std::size_t i = 0; i < k; ++i) {
            bits[order[i]] = 0;
        }
    }
    return SparsityMask(rows, cols, std::move(bits));
}

SparsityMask prune_to_nm(const WeightMatrix& w, const ChannelStats& stats, const PruneSpec& spec) {
    spec.validate();
    const auto* nm = std::get_if<NofMTarget>(&spec.target);
    if (nm == nullptr) {
        throw InputError("prune_to_nm: target is not N:M");
    }
    const std::size_t rows = w.rows();
    const std::size_t cols = w.cols();
    if (cols % nm->m != 0) {
        throw PatternError("prune_to_nm: cols " + std::to_string(cols) + " not divisible by m=" +
                           std::to_string(nm->m));
    }
    const ScoreMatrix scores = score_weights(w, stats, spec.method);
    const std::size_t drop = nm->m - nm->n;
    std::vector<std::uint8_t> bits(rows * cols, 1);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t b = 0; b < cols; b += nm->m) {
            auto order = ascending_order(scores.values, r * cols + b, nm->m);
            for (std::size_t i = 0; i < drop; ++i) {
                bits[r * cols + b + order[i]] = 0;
            }
        }
    }
    return SparsityMask(rows, cols, std::move(bits), MaskPattern::n_of_m(nm->n, nm->m));
}

SparsityMask prune(const WeightMatrix& w, const ChannelStats& stats, const PruneSpec& spec) {
    if (std::holds_alternative<NofMTarget>(spec.target)) {
        return prune_to_nm(w, stats, spec);
    }
    return prune_to_ratio(w, stats, spec);
}

} // namespace dsnot
