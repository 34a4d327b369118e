#include "dsnot/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <tuple>

namespace dsnot::oracle {

namespace {

struct Candidate {
    double score;
    std::size_t index;
};

bool in_range(std::size_t k, const std::optional<ColumnRange>& block) {
    return !block || (k >= block->begin && k < block->end);
}

// Smallest score, lowest index among equals.
std::optional<std::size_t> pick_min(std::vector<Candidate> c) {
    if (c.empty()) {
        return std::nullopt;
    }
    std::sort(c.begin(), c.end(),
              [](const Candidate& a, const Candidate& b) { return std::tie(a.score, a.index) < std::tie(b.score, b.index); });
    return c.front().index;
}

// Largest score, lowest index among equals.
std::optional<std::size_t> pick_max(std::vector<Candidate> c) {
    if (c.empty()) {
        return std::nullopt;
    }
    std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.index < b.index;
    });
    return c.front().index;
}

double ratio_score(std::span<const float> w_row, const ChannelStats& stats, std::size_t k, double floor) {
    const double var = stats.variance[k] < floor ? floor : stats.variance[k];
    return static_cast<double>(w_row[k]) * stats.mean[k] / var;
}

double norm_score(std::span<const float> w_row, const ChannelStats& stats, std::size_t k) {
    return std::fabs(static_cast<double>(w_row[k])) * stats.l2norm[k];
}

} // namespace

std::optional<std::size_t> oracle_grow(std::span<const float> w_row, std::span<const std::uint8_t> mask_row,
                                       const ChannelStats& stats, double delta_mean, const RefineConfig& config,
                                       std::optional<ColumnRange> block) {
    std::vector<Candidate> candidates;
    for (std::size_t k = 0; k < w_row.size(); ++k) {
        if (mask_row[k] != 0 || !in_range(k, block)) {
            continue;
        }
        if (config.grow_criterion == GrowCriterion::wanda_like) {
            candidates.push_back({norm_score(w_row, stats, k), k});
        } else {
            candidates.push_back({ratio_score(w_row, stats, k, config.variance_floor), k});
        }
    }
    if (config.grow_criterion == GrowCriterion::wanda_like || delta_mean > 0.0) {
        return pick_max(std::move(candidates));
    }
    return pick_min(std::move(candidates));
}

std::optional<std::size_t> oracle_prune(std::span<const float> w_row, std::span<const std::uint8_t> mask_row,
                                        const ChannelStats& stats, double delta_mean, const RefineConfig& config,
                                        std::size_t exclude, std::optional<ColumnRange> block) {
    std::vector<Candidate> candidates;
    for (std::size_t k = 0; k < w_row.size(); ++k) {
        if (mask_row[k] != 1 || k == exclude || !in_range(k, block)) {
            continue;
        }
        switch (config.prune_criterion) {
        case PruneCriterion::dsnot: {
            const double product = static_cast<double>(w_row[k]) * stats.mean[k];
            const bool passes = delta_mean > 0.0 ? (product < 0.0) : (product > 0.0);
            if (passes) {
                candidates.push_back({norm_score(w_row, stats, k), k});
            }
            break;
        }
        case PruneCriterion::wanda_unsigned:
            candidates.push_back({norm_score(w_row, stats, k), k});
            break;
        case PruneCriterion::expected_change:
            candidates.push_back({ratio_score(w_row, stats, k, config.variance_floor), k});
            break;
        }
    }
    if (config.prune_criterion == PruneCriterion::expected_change && !(delta_mean > 0.0)) {
        return pick_max(std::move(candidates));
    }
    return pick_min(std::move(candidates));
}

std::vector<RowReconState> oracle_recompute(const WeightMatrix& w, const SparsityMask& mask,
                                            const ActivationMatrix& a) {
    if (w.cols() != a.channels() || mask.rows() != w.rows() || mask.cols() != w.cols()) {
        throw DimensionError("oracle_recompute: shape mismatch");
    }
    const std::size_t tokens = a.tokens();
    std::vector<RowReconState> out(w.rows());
    std::vector<double> dense(tokens);
    std::vector<double> sparse(tokens);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        std::fill(dense.begin(), dense.end(), 0.0);
        std::fill(sparse.begin(), sparse.end(), 0.0);
        for (std::size_t k = 0; k < w.cols(); ++k) {
            const double wk = w.at(r, k);
            const double mwk = mask.at(r, k) * wk;
            for (std::size_t t = 0; t < tokens; ++t) {
                const double x = a.at(k, t);
                dense[t] += wk * x;
                sparse[t] += mwk * x;
            }
        }
        RowReconState& s = out[r];
        s.row_index = r;
        s.delta.resize(tokens);
        double sum = 0.0;
        double sq = 0.0;
        for (std::size_t t = 0; t < tokens; ++t) {
            const double d = dense[t] - sparse[t];
            s.delta[t] = static_cast<float>(d);
            sum += d;
            sq += static_cast<double>(s.delta[t]) * s.delta[t];
        }
        s.delta_mean = sum / static_cast<double>(tokens);
        s.delta_l2 = std::sqrt(sq);
    }
    return out;
}

double oracle_layer_error(const WeightMatrix& w, const SparsityMask& mask, const ActivationMatrix& a) {
    double sq = 0.0;
    for (const auto& row : oracle_recompute(w, mask, a)) {
        sq += row.delta_l2 * row.delta_l2;
    }
    return std::sqrt(sq);
}

ExactMask oracle_exact_mask(std::span<const float> w_row, const ActivationMatrix& a, std::size_t nnz) {
    const std::size_t cols = w_row.size();
    if (cols > kMaxExactCols) {
        throw SizeError("oracle_exact_mask: " + std::to_string(cols) + " columns exceeds the limit of " +
                        std::to_string(kMaxExactCols));
    }
    if (cols != a.channels()) {
        throw DimensionError("oracle_exact_mask: row length does not match activation channels");
    }
    if (nnz > cols) {
        throw InputError("oracle_exact_mask: nnz exceeds row length");
    }
    const std::size_t tokens = a.tokens();

    // Gram matrix of the per-column contributions W_k A_k.
    std::vector<double> gram(cols * cols, 0.0);
    for (std::size_t i = 0; i < cols; ++i) {
        for (std::size_t j = i; j < cols; ++j) {
            double dot = 0.0;
            for (std::size_t t = 0; t < tokens; ++t) {
                dot += static_cast<double>(a.at(i, t)) * a.at(j, t);
            }
            const double g = static_cast<double>(w_row[i]) * w_row[j] * dot;
            gram[i * cols + j] = g;
            gram[j * cols + i] = g;
        }
    }

    // Bit (cols-1-k) of `code` holds mask[k], so ascending codes are lexicographic masks.
    auto kept = [&](std::uint32_t code, std::size_t k) { return ((code >> (cols - 1 - k)) & 1u) != 0; };

    std::uint32_t best_code = 0;
    double best_sq = 0.0;
    bool found = false;
    const std::uint32_t limit = cols == 0 ? 1u : (1u << cols);
    for (std::uint32_t code = 0; code < limit; ++code) {
        if (static_cast<std::size_t>(std::popcount(code)) != nnz) {
            continue;
        }
        double sq = 0.0;
        for (std::size_t i = 0; i < cols; ++i) {
            if (kept(code, i)) {
                continue;
            }
            for (std::size_t j = 0; j < cols; ++j) {
                if (!kept(code, j)) {
                    sq += gram[i * cols + j];
                }
            }
        }
        if (!found || sq < best_sq) {
            found = true;
            best_sq = sq;
            best_code = code;
        }
    }

    ExactMask result;
    result.mask.resize(cols);
    for (std::size_t k = 0; k < cols; ++k) {
        result.mask[k] = kept(best_code, k) ? 1 : 0;
    }
    // Direct evaluation of the winner.
    double sq = 0.0;
    for (std::size_t t = 0; t < tokens; ++t) {
        double d = 0.0;
        for (std::size_t k = 0; k < cols; ++k) {
            if (result.mask[k] == 0) {
                d += static_cast<double>(w_row[k]) * a.at(k, t);
            }
        }
        sq += d * d;
    }
    result.error = std::sqrt(sq);
    return result;
}

GapReport make_gap_report(std::size_t row_index, double greedy_error, double exact_error) {
    return {row_index, greedy_error, exact_error, greedy_error / std::max(exact_error, 1e-12)};
}

} // namespace dsnot::oracle
