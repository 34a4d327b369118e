#pragma once

// Layer bundle on disk:
//
//   <dir>/manifest.json        format_version, per-layer shapes and file names
//   <dir>/<name>.weight.f32    c_out * c_in little-endian f32, row-major
//   <dir>/<name>.act.f32       c_in * tokens little-endian f32, channel-major
//   <dir>/<name>.mask.u8       optional, c_out * c_in bytes in {0,1}
//   <dir>/reports.json         optional, per-layer per-row refinement reports

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dsnot/refine.hpp"
#include "dsnot/types.hpp"

namespace dsnot {

inline constexpr int kBundleFormatVersion = 1;

struct Layer {
    std::string name;
    WeightMatrix weights;
    ActivationMatrix activations;
    std::optional<SparsityMask> mask;
};

struct LayerReport {
    std::string name;
    std::vector<RowRefineReport> rows;

    bool operator==(const LayerReport&) const = default;
};

struct LayerBundle {
    std::vector<Layer> layers;
    std::vector<LayerReport> reports; // empty when no refinement has run
};

LayerBundle load_bundle(const std::filesystem::path& dir);

// Creates `dir` if needed. Output bytes depend only on the arguments.
void save_bundle(const std::filesystem::path& dir, const LayerBundle& bundle);

// Raw f32 blob helpers, exposed for tests and export scripts.
std::vector<float> read_f32le(const std::filesystem::path& file, std::size_t count);
void write_f32le(const std::filesystem::path& file, std::span<const float> values);

} // namespace dsnot
