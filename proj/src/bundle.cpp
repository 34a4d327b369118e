#include "dsnot/bundle.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

namespace dsnot {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<char> read_file(const fs::path& file) {
    std::error_code ec;
    if (!fs::is_regular_file(file, ec)) {
        throw LoadError(LoadErrorKind::missing_file, file.string(), "");
    }
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw LoadError(LoadErrorKind::io_failure, file.string(), "cannot open for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& file, const void* data, std::size_t size) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw LoadError(LoadErrorKind::io_failure, file.string(), "cannot open for writing");
    }
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) {
        throw LoadError(LoadErrorKind::io_failure, file.string(), "write failed");
    }
}

void write_text(const fs::path& file, const std::string& text) {
    write_file(file, text.data(), text.size());
}

std::vector<std::uint8_t> read_mask_bytes(const fs::path& file, std::size_t count) {
    auto raw = read_file(file);
    if (raw.size() != count) {
        throw LoadError(LoadErrorKind::size_mismatch, file.string(),
                        "expected " + std::to_string(count) + " bytes, found " + std::to_string(raw.size()));
    }
    std::vector<std::uint8_t> bits(count);
    for (std::size_t i = 0; i < count; ++i) {
        bits[i] = static_cast<std::uint8_t>(raw[i]);
        if (bits[i] > 1) {
            throw LoadError(LoadErrorKind::mask_domain, file.string(),
                            "byte " + std::to_string(i) + " is " + std::to_string(bits[i]));
        }
    }
    return bits;
}

json report_to_json(const RowRefineReport& r) {
    json swaps = json::array();
    for (const auto& s : r.swaps) {
        swaps.push_back({{"grow", s.grow},
                         {"prune", s.prune},
                         {"delta_mean_before", s.delta_mean_before},
                         {"delta_mean_after", s.delta_mean_after}});
    }
    return {{"row", r.row_index},
            {"cycles_used", r.cycles_used},
            {"initial_metric", r.initial_metric},
            {"final_metric", r.final_metric},
            {"stop_reason", to_string(r.stop_reason)},
            {"swaps", std::move(swaps)}};
}

RowRefineReport report_from_json(const json& j) {
    RowRefineReport r;
    r.row_index = j.at("row").get<std::size_t>();
    r.cycles_used = j.at("cycles_used").get<std::size_t>();
    r.initial_metric = j.at("initial_metric").get<double>();
    r.final_metric = j.at("final_metric").get<double>();
    r.stop_reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
    for (const auto& s : j.at("swaps")) {
        r.swaps.push_back({s.at("grow").get<std::size_t>(), s.at("prune").get<std::size_t>(),
                           s.at("delta_mean_before").get<double>(), s.at("delta_mean_after").get<double>()});
    }
    return r;
}

std::vector<LayerReport> load_reports(const fs::path& file) {
    auto raw = read_file(file);
    std::vector<LayerReport> reports;
    try {
        auto doc = json::parse(raw.begin(), raw.end());
        for (const auto& layer : doc.at("layers")) {
            LayerReport lr;
            lr.name = layer.at("name").get<std::string>();
            for (const auto& row : layer.at("rows")) {
                lr.rows.push_back(report_from_json(row));
            }
            reports.push_back(std::move(lr));
        }
    } catch (const json::exception& e) {
        throw LoadError(LoadErrorKind::malformed_manifest, file.string(), e.what());
    } catch (const InputError& e) {
        throw LoadError(LoadErrorKind::malformed_manifest, file.string(), e.what());
    }
    return reports;
}

} // namespace

std::vector<float> read_f32le(const fs::path& file, std::size_t count) {
    auto raw = read_file(file);
    if (raw.size() != count * sizeof(float)) {
        throw LoadError(LoadErrorKind::size_mismatch, file.string(),
                        "expected " + std::to_string(count * sizeof(float)) + " bytes, found " +
                            std::to_string(raw.size()));
    }
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t u = 0;
        for (int b = 3; b >= 0; --b) {
            u = (u << 8) | static_cast<std::uint8_t>(raw[i * 4 + static_cast<std::size_t>(b)]);
        }
        values[i] = std::bit_cast<float>(u);
    }
    return values;
}

void write_f32le(const fs::path& file, std::span<const float> values) {
    std::vector<unsigned char> raw(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(values[i]);
        for (std::size_t b = 0; b < 4; ++b) {
            raw[i * 4 + b] = static_cast<unsigned char>((u >> (8 * b)) & 0xffu);
        }
    }
    write_file(file, raw.data(), raw.size());
}

LayerBundle load_bundle(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    auto raw = read_file(manifest_path);
    json manifest;
    try {
        manifest = json::parse(raw.begin(), raw.end());
    } catch (const json::exception& e) {
        throw LoadError(LoadErrorKind::malformed_manifest, manifest_path.string(), e.what());
    }

    LayerBundle bundle;
    try {
        const int version = manifest.at("format_version").get<int>();
        if (version != kBundleFormatVersion) {
            throw LoadError(LoadErrorKind::unknown_version, manifest_path.string(),
                            "format_version " + std::to_string(version));
        }
        std::set<std::string> names;
        for (const auto& entry : manifest.at("layers")) {
            Layer layer;
            layer.name = entry.at("name").get<std::string>();
            if (!names.insert(layer.name).second) {
                throw LoadError(LoadErrorKind::malformed_manifest, manifest_path.string(),
                                "duplicate layer name '" + layer.name + "'");
            }
            if (entry.at("dtype").get<std::string>() != "f32le") {
                throw LoadError(LoadErrorKind::malformed_manifest, manifest_path.string(),
                                "unsupported dtype for layer '" + layer.name + "'");
            }
            const auto c_out = entry.at("c_out").get<std::size_t>();
            const auto c_in = entry.at("c_in").get<std::size_t>();
            const auto tokens = entry.at("tokens").get<std::size_t>();
            const fs::path weight_file = dir / entry.at("weight_file").get<std::string>();
            const fs::path act_file = dir / entry.at("activation_file").get<std::string>();

            try {
                layer.weights = WeightMatrix(c_out, c_in, read_f32le(weight_file, c_out * c_in));
                layer.activations = ActivationMatrix(c_in, tokens, read_f32le(act_file, c_in * tokens));
            } catch (const InputError& e) {
                throw LoadError(LoadErrorKind::malformed_manifest, weight_file.string(), e.what());
            }

            if (entry.contains("mask_file") && !entry.at("mask_file").is_null()) {
                const fs::path mask_file = dir / entry.at("mask_file").get<std::string>();
                MaskPattern pattern = MaskPattern::unstructured();
                if (entry.contains("mask_pattern")) {
                    pattern = parse_pattern(entry.at("mask_pattern").get<std::string>());
                }
                auto bits = read_mask_bytes(mask_file, c_out * c_in);
                try {
                    layer.mask = SparsityMask(c_out, c_in, std::move(bits), pattern);
                } catch (const PatternError& e) {
                    throw LoadError(LoadErrorKind::malformed_manifest, mask_file.string(), e.what());
                }
            }
            bundle.layers.push_back(std::move(layer));
        }
    } catch (const json::exception& e) {
        throw LoadError(LoadErrorKind::malformed_manifest, manifest_path.string(), e.what());
    } catch (const PatternError& e) {
        throw LoadError(LoadErrorKind::malformed_manifest, manifest_path.string(), e.what());
    }

    const fs::path reports_path = dir / "reports.json";
    if (fs::exists(reports_path)) {
        bundle.reports = load_reports(reports_path);
    }
    return bundle;
}

void save_bundle(const fs::path& dir, const LayerBundle& bundle) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw LoadError(LoadErrorKind::io_failure, dir.string(), ec.message());
    }

    json layers = json::array();
    std::set<std::string> names;
    for (const auto& layer : bundle.layers) {
        if (!names.insert(layer.name).second) {
            throw InputError("save_bundle: duplicate layer name '" + layer.name + "'");
        }
        const std::string weight_file = layer.name + ".weight.f32";
        const std::string act_file = layer.name + ".act.f32";
        write_f32le(dir / weight_file, layer.weights.values());
        write_f32le(dir / act_file, layer.activations.values());

        json entry = {{"name", layer.name},
                      {"c_out", layer.weights.rows()},
                      {"c_in", layer.weights.cols()},
                      {"tokens", layer.activations.tokens()},
                      {"weight_file", weight_file},
                      {"activation_file", act_file},
                      {"dtype", "f32le"}};
        const fs::path stale_mask = dir / (layer.name + ".mask.u8");
        if (layer.mask) {
            const std::string mask_file = layer.name + ".mask.u8";
            auto bits = layer.mask->bits();
            write_file(dir / mask_file, bits.data(), bits.size());
            entry["mask_file"] = mask_file;
            entry["mask_pattern"] = to_string(layer.mask->pattern());
        } else if (fs::exists(stale_mask)) {
            fs::remove(stale_mask);
        }
        layers.push_back(std::move(entry));
    }
    json manifest = {{"format_version", kBundleFormatVersion}, {"layers", std::move(layers)}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    const fs::path reports_path = dir / "reports.json";
    if (!bundle.reports.empty()) {
        json doc_layers = json::array();
        for (const auto& lr : bundle.reports) {
            json rows = json::array();
            for (const auto& r : lr.rows) {
                rows.push_back(report_to_json(r));
            }
            doc_layers.push_back({{"name", lr.name}, {"rows", std::move(rows)}});
        }
        write_text(reports_path, json{{"layers", std::move(doc_layers)}}.dump(2) + "\n");
    } else if (fs::exists(reports_path)) {
        fs::remove(reports_path);
    }
}

} // namespace dsnot
