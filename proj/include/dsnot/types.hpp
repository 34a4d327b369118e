#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsnot/errors.hpp"

namespace dsnot {

/// Dense layer weights, C_out x C_in, row-major f32.
class WeightMatrix {
public:
    WeightMatrix() = default;
    WeightMatrix(std::size_t rows, std::size_t cols, std::vector<float> values);
    WeightMatrix(std::size_t rows, std::size_t cols);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    float at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
    std::span<const float> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
    std::span<const float> values() const noexcept { return values_; }

    bool operator==(const WeightMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> values_;
};

/// Calibration activations, C_in x tokens, channel-major f32.
class ActivationMatrix {
public:
    ActivationMatrix() = default;
    ActivationMatrix(std::size_t channels, std::size_t tokens, std::vector<float> values);

    std::size_t channels() const noexcept { return channels_; }
    std::size_t tokens() const noexcept { return tokens_; }

    float at(std::size_t k, std::size_t t) const { return values_[k * tokens_ + t]; }
    std::span<const float> channel(std::size_t k) const { return {values_.data() + k * tokens_, tokens_}; }
    std::span<const float> values() const noexcept { return values_; }

    bool operator==(const ActivationMatrix&) const = default;

private:
    std::size_t channels_ = 0;
    std::size_t tokens_ = 0;
    std::vector<float> values_;
};

struct MaskPattern {
    enum class Kind { unstructured, n_of_m };

    Kind kind = Kind::unstructured;
    std::size_t n = 0;
    std::size_t m = 0;

    static MaskPattern unstructured() { return {}; }
    static MaskPattern n_of_m(std::size_t n, std::size_t m) { return {Kind::n_of_m, n, m}; }

    bool is_n_of_m() const noexcept { return kind == Kind::n_of_m; }

    bool operator==(const MaskPattern&) const = default;
};

// "unstructured" or "N:M".
std::string to_string(const MaskPattern& pattern);
MaskPattern parse_pattern(const std::string& text);

/// Binary keep-mask over a WeightMatrix. 1 = kept, 0 = pruned.
class SparsityMask {
public:
    SparsityMask() = default;
    SparsityMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits,
                 MaskPattern pattern = MaskPattern::unstructured());

    static SparsityMask ones(std::size_t rows, std::size_t cols);
    static SparsityMask zeros(std::size_t rows, std::size_t cols);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    const MaskPattern& pattern() const noexcept { return pattern_; }

    std::uint8_t at(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c]; }
    std::span<const std::uint8_t> row(std::size_t r) const { return {bits_.data() + r * cols_, cols_}; }
    std::span<std::uint8_t> row(std::size_t r) { return {bits_.data() + r * cols_, cols_}; }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }

    std::size_t nnz() const;
    std::size_t row_nnz(std::size_t r) const;

    // Throws InputError / PatternError if the bits break the declared pattern.
    void validate() const;

    bool operator==(const SparsityMask&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> bits_;
    MaskPattern pattern_;
};

// True if every aligned m-block of `row` has at most n ones.
bool row_satisfies(std::span<const std::uint8_t> row, const MaskPattern& pattern);

/// Per-input-channel moments over the token axis.
struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> variance; // population divisor
    std::vector<double> l2norm;

    std::size_t size() const noexcept { return mean.size(); }
};

/// Reconstruction error of one output row: delta = W_r A - (M_r . W_r) A.
struct RowReconState {
    std::size_t row_index = 0;
    std::vector<float> delta;
    double delta_mean = 0.0;
    double delta_l2 = 0.0;
};

ChannelStats compute_channel_stats(const ActivationMatrix& a);

// Row-level kernel shared by the refine engine.
RowReconState row_reconstruction_error(std::size_t row_index, std::span<const float> w_row,
                                       std::span<const std::uint8_t> mask_row, const ActivationMatrix& a);

std::vector<RowReconState> reconstruction_error(const WeightMatrix& w, const SparsityMask& m,
                                                const ActivationMatrix& a);

// sqrt(sum of squares) of a float vector, accumulated in double.
double l2_norm(std::span<const float> v);

// Frobenius norm of the stacked row deltas.
double frobenius_norm(const std::vector<RowReconState>& rows);

} // namespace dsnot
