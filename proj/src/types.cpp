#include "dsnot/types.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace dsnot {

const char* to_string(LoadErrorKind kind) {
    switch (kind) {
    case LoadErrorKind::missing_file: return "missing file";
    case LoadErrorKind::size_mismatch: return "size mismatch";
    case LoadErrorKind::mask_domain: return "mask byte outside {0,1}";
    case LoadErrorKind::unknown_version: return "unknown format_version";
    case LoadErrorKind::malformed_manifest: return "malformed manifest";
    case LoadErrorKind::io_failure: return "I/O failure";
    }
    return "load error";
}

namespace {

void check_extent(std::size_t a, std::size_t b, std::size_t n, const char* what) {
    if (a == 0 || b == 0) {
        throw InputError(std::string(what) + ": extents must be >= 1");
    }
    if (n != a * b) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(a * b) + " values, got " +
                             std::to_string(n));
    }
}

void check_finite(std::span<const float> v, const char* what) {
    auto bad = std::find_if(v.begin(), v.end(), [](float x) { return !std::isfinite(x); });
    if (bad != v.end()) {
        throw InputError(std::string(what) + ": non-finite entry at flat index " +
                         std::to_string(std::distance(v.begin(), bad)));
    }
}

} // namespace

WeightMatrix::WeightMatrix(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    check_extent(rows_, cols_, values_.size(), "WeightMatrix");
    check_finite(values_, "WeightMatrix");
}

WeightMatrix::WeightMatrix(std::size_t rows, std::size_t cols)
    : WeightMatrix(rows, cols, std::vector<float>(rows * cols, 0.0f)) {}

ActivationMatrix::ActivationMatrix(std::size_t channels, std::size_t tokens, std::vector<float> values)
    : channels_(channels), tokens_(tokens), values_(std::move(values)) {
    check_extent(channels_, tokens_, values_.size(), "ActivationMatrix");
    check_finite(values_, "ActivationMatrix");
}

std::string to_string(const MaskPattern& pattern) {
    if (!pattern.is_n_of_m()) {
        return "unstructured";
    }
    return std::to_string(pattern.n) + ":" + std::to_string(pattern.m);
}

MaskPattern parse_pattern(const std::string& text) {
    if (text == "unstructured") {
        return MaskPattern::unstructured();
    }
    auto colon = text.find(':');
    if (colon == std::string::npos) {
        throw PatternError("pattern must be 'unstructured' or 'N:M', got '" + text + "'");
    }
    auto parse = [&](std::size_t first, std::size_t last) {
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(text.data() + first, text.data() + last, v);
        if (ec != std::errc() || ptr != text.data() + last || first == last) {
            throw PatternError("malformed N:M pattern '" + text + "'");
        }
        return v;
    };
    std::size_t n = parse(0, colon);
    std::size_t m = parse(colon + 1, text.size());
    if (m == 0 || n > m) {
        throw PatternError("N:M pattern requires 0 <= N <= M and M >= 1, got '" + text + "'");
    }
    return MaskPattern::n_of_m(n, m);
}

SparsityMask::SparsityMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits, MaskPattern pattern)
    : rows_(rows), cols_(cols), bits_(std::move(bits)), pattern_(pattern) {
    check_extent(rows_, cols_, bits_.size(), "SparsityMask");
    validate();
}

SparsityMask SparsityMask::ones(std::size_t rows, std::size_t cols) {
    return SparsityMask(rows, cols, std::vector<std::uint8_t>(rows * cols, 1));
}

SparsityMask SparsityMask::zeros(std::size_t rows, std::size_t cols) {
    return SparsityMask(rows, cols, std::vector<std::uint8_t>(rows * cols, 0));
}

std::size_t SparsityMask::nnz() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t SparsityMask::row_nnz(std::size_t r) const {
    auto bits = row(r);
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

bool row_satisfies(std::span<const std::uint8_t> row, const MaskPattern& pattern) {
    if (!pattern.is_n_of_m()) {
        return true;
    }
    if (pattern.m == 0 || row.size() % pattern.m != 0) {
        return false;
    }
    for (std::size_t b = 0; b < row.size(); b += pattern.m) {
        auto block = row.subspan(b, pattern.m);
        if (static_cast<std::size_t>(std::count(block.begin(), block.end(), std::uint8_t{1})) > pattern.n) {
            return false;
        }
    }
    return true;
}

void SparsityMask::validate() const {
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i] > 1) {
            throw InputError("SparsityMask: entry " + std::to_string(i) + " is " + std::to_string(bits_[i]) +
                             ", expected 0 or 1");
        }
    }
    if (!pattern_.is_n_of_m()) {
        return;
    }
    if (pattern_.m == 0 || pattern_.n > pattern_.m) {
        throw PatternError("SparsityMask: invalid pattern " + to_string(pattern_));
    }
    if (cols_ % pattern_.m != 0) {
        throw PatternError("SparsityMask: cols " + std::to_string(cols_) + " not divisible by m=" +
                           std::to_string(pattern_.m));
    }
    for (std::size_t r = 0; r < rows_; ++r) {
        if (!row_satisfies(row(r), pattern_)) {
            throw PatternError("SparsityMask: row " + std::to_string(r) + " breaks " + to_string(pattern_));
        }
    }
}

ChannelStats compute_channel_stats(const ActivationMatrix& a) {
    check_finite(a.values(), "compute_channel_stats");
    const std::size_t channels = a.channels();
    const double tokens = static_cast<double>(a.tokens());

    ChannelStats stats;
    stats.mean.resize(channels);
    stats.variance.resize(channels);
    stats.l2norm.resize(channels);

    for (std::size_t k = 0; k < channels; ++k) {
        auto x = a.channel(k);
        double sum = 0.0;
        double sq = 0.0;
        for (float v : x) {
            sum += v;
            sq += static_cast<double>(v) * v;
        }
        const double mean = sum / tokens;
        // second pass over centered values
        double centered = 0.0;
        for (float v : x) {
            const double d = v - mean;
            centered += d * d;
        }
        stats.mean[k] = mean;
        stats.variance[k] = centered / tokens;
        stats.l2norm[k] = std::sqrt(sq);
    }
    return stats;
}

double l2_norm(std::span<const float> v) {
    double sq = 0.0;
    for (float x : v) {
        sq += static_cast<double>(x) * x;
    }
    return std::sqrt(sq);
}

RowReconState row_reconstruction_error(std::size_t row_index, std::span<const float> w_row,
                                       std::span<const std::uint8_t> mask_row, const ActivationMatrix& a) {
    if (w_row.size() != a.channels() || mask_row.size() != w_row.size()) {
        throw DimensionError("row_reconstruction_error: row has " + std::to_string(w_row.size()) +
                             " weights, mask " + std::to_string(mask_row.size()) + ", activations " +
                             std::to_string(a.channels()) + " channels");
    }
    const std::size_t tokens = a.tokens();
    // Only pruned weights contribute: W_r A - (M_r . W_r) A = ((1 - M_r) . W_r) A.
    std::vector<double> acc(tokens, 0.0);
    for (std::size_t k = 0; k < w_row.size(); ++k) {
        if (mask_row[k] != 0 || w_row[k] == 0.0f) {
            continue;
        }
        const double w = w_row[k];
        auto x = a.channel(k);
        for (std::size_t t = 0; t < tokens; ++t) {
            acc[t] += w * x[t];
        }
    }

    RowReconState state;
    state.row_index = row_index;
    state.delta.resize(tokens);
    double sum = 0.0;
    for (std::size_t t = 0; t < tokens; ++t) {
        sum += acc[t];
        state.delta[t] = static_cast<float>(acc[t]);
    }
    state.delta_mean = sum / static_cast<double>(tokens);
    state.delta_l2 = l2_norm(state.delta);
    return state;
}

std::vector<RowReconState> reconstruction_error(const WeightMatrix& w, const SparsityMask& m,
                                                const ActivationMatrix& a) {
    if (w.cols() != a.channels()) {
        throw DimensionError("reconstruction_error: W has " + std::to_string(w.cols()) +
                             " columns but A has " + std::to_string(a.channels()) + " channels");
    }
    if (m.rows() != w.rows() || m.cols() != w.cols()) {
        throw DimensionError("reconstruction_error: mask shape does not match W");
    }
    std::vector<RowReconState> out;
    out.reserve(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
        out.push_back(row_reconstruction_error(r, w.row(r), m.row(r), a));
    }
    return out;
}

double frobenius_norm(const std::vector<RowReconState>& rows) {
    double sq = 0.0;
    for (const auto& s : rows) {
        for (float x : s.delta) {
            sq += static_cast<double>(x) * x;
        }
    }
    return std::sqrt(sq);
}

} // namespace dsnot
