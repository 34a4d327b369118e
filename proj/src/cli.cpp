#include "dsnot/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsnot/bundle.hpp"
#include "dsnot/oracle.hpp"
#include "dsnot/pruners.hpp"
#include "dsnot/refine.hpp"
#include "dsnot/synthetic.hpp"

namespace dsnot::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Raised for flag combinations CLI11 cannot express.
class UsageError : public Error {
public:
    using Error::Error;
};

// Raised when an input bundle lacks something a command needs.
class PreconditionError : public Error {
public:
    using Error::Error;
};

struct LayerSummary {
    std::string name;
    double initial_error_l2 = 0.0;
    double pruned_error_l2 = 0.0;
    double refined_error_l2 = 0.0;
    double sparsity_achieved = 0.0;
    std::size_t total_swaps = 0;
    double wall_time_ms = 0.0;
};

double sparsity_of(const SparsityMask& m) {
    return 1.0 - static_cast<double>(m.nnz()) / static_cast<double>(m.rows() * m.cols());
}

SparsityMask incoming_mask(const Layer& layer) {
    return layer.mask ? *layer.mask : SparsityMask::ones(layer.weights.rows(), layer.weights.cols());
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

// summary.json carries only deterministic fields; timings go to timing.json.
void write_summary(const fs::path& dir, const std::vector<LayerSummary>& rows) {
    json layers = json::array();
    json timing = json::array();
    for (const auto& s : rows) {
        layers.push_back({{"name", s.name},
                          {"initial_error_l2", s.initial_error_l2},
                          {"pruned_error_l2", s.pruned_error_l2},
                          {"refined_error_l2", s.refined_error_l2},
                          {"sparsity_achieved", s.sparsity_achieved},
                          {"total_swaps", s.total_swaps}});
        timing.push_back({{"name", s.name}, {"wall_time_ms", s.wall_time_ms}});
    }
    auto write = [&](const fs::path& file, const json& doc) {
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        out << doc.dump(2) << "\n";
        if (!out) {
            throw LoadError(LoadErrorKind::io_failure, file.string(), "write failed");
        }
    };
    write(dir / "summary.json", json{{"layers", std::move(layers)}});
    write(dir / "timing.json", json{{"layers", std::move(timing)}});
}

void print_summary(std::ostream& out, const std::vector<LayerSummary>& rows) {
    out << std::left << std::setw(14) << "layer" << std::right << std::setw(16) << "initial_l2" << std::setw(16)
        << "pruned_l2" << std::setw(16) << "refined_l2" << std::setw(10) << "sparsity" << std::setw(8) << "swaps"
        << std::setw(12) << "ms" << "\n";
    for (const auto& s : rows) {
        out << std::left << std::setw(14) << s.name << std::right << std::setprecision(6) << std::setw(16)
            << s.initial_error_l2 << std::setw(16) << s.pruned_error_l2 << std::setw(16) << s.refined_error_l2
            << std::setw(10) << s.sparsity_achieved << std::setw(8) << s.total_swaps << std::setw(12)
            << std::setprecision(4) << s.wall_time_ms << "\n";
    }
}

struct GenOptions {
    std::string out;
    std::size_t layers = 1;
    SyntheticSpec spec;
};

int cmd_gen(const GenOptions& opt, std::ostream& out) {
    LayerBundle bundle;
    for (std::size_t l = 0; l < opt.layers; ++l) {
        SyntheticSpec spec = opt.spec;
        spec.seed = opt.spec.seed + l;
        auto layer = generate_synthetic(spec);
        char name[32];
        std::snprintf(name, sizeof(name), "layer_%03zu", l);
        bundle.layers.push_back({name, std::move(layer.weights), std::move(layer.activations), std::nullopt});
    }
    save_bundle(opt.out, bundle);
    out << "wrote " << opt.layers << " layer(s) to " << opt.out << "\n";
    return kOk;
}

struct PruneOptions {
    std::string bundle;
    std::string out;
    std::string method = "wanda";
    std::optional<double> sparsity;
    std::optional<std::string> pattern;
    std::string granularity = "per-row";
};

int cmd_prune(const PruneOptions& opt, std::ostream& out) {
    if (opt.sparsity && opt.pattern) {
        throw UsageError("--sparsity and --pattern are mutually exclusive");
    }
    if (!opt.sparsity && !opt.pattern) {
        throw UsageError("one of --sparsity or --pattern is required");
    }
    PruneSpec spec;
    spec.method = opt.method == "magnitude" ? PruneMethod::magnitude : PruneMethod::wanda;
    spec.granularity = opt.granularity == "per-layer" ? Granularity::per_layer : Granularity::per_row;
    if (opt.pattern) {
        MaskPattern p;
        try {
            p = parse_pattern(*opt.pattern);
        } catch (const PatternError& e) {
            throw UsageError(e.what());
        }
        if (!p.is_n_of_m()) {
            throw UsageError("--pattern expects N:M");
        }
        spec.target = NofMTarget{p.n, p.m};
    } else {
        spec.target = RatioTarget{*opt.sparsity};
    }

    LayerBundle bundle = load_bundle(opt.bundle);
    std::vector<LayerSummary> summary;
    for (auto& layer : bundle.layers) {
        const auto start = std::chrono::steady_clock::now();
        LayerSummary s;
        s.name = layer.name;
        s.initial_error_l2 = oracle::oracle_layer_error(layer.weights, incoming_mask(layer), layer.activations);
        const ChannelStats stats = compute_channel_stats(layer.activations);
        layer.mask = prune(layer.weights, stats, spec);
        s.pruned_error_l2 = oracle::oracle_layer_error(layer.weights, *layer.mask, layer.activations);
        s.refined_error_l2 = s.pruned_error_l2;
        s.sparsity_achieved = sparsity_of(*layer.mask);
        s.wall_time_ms = elapsed_ms(start);
        summary.push_back(std::move(s));
    }
    bundle.reports.clear();
    save_bundle(opt.out, bundle);
    write_summary(opt.out, summary);
    print_summary(out, summary);
    return kOk;
}

struct RefineOptions {
    std::string bundle;
    std::string out;
    RefineConfig config;
    std::size_t threads = 1;
};

int cmd_refine(const RefineOptions& opt, std::ostream& out) {
    LayerBundle bundle = load_bundle(opt.bundle);
    for (const auto& layer : bundle.layers) {
        if (!layer.mask) {
            throw PreconditionError("layer '" + layer.name + "' has no mask; run `dsnot prune` first");
        }
    }
    std::vector<LayerSummary> summary;
    std::vector<LayerReport> reports;
    for (auto& layer : bundle.layers) {
        const auto start = std::chrono::steady_clock::now();
        LayerSummary s;
        s.name = layer.name;
        s.initial_error_l2 = oracle::oracle_layer_error(layer.weights, *layer.mask, layer.activations);
        s.pruned_error_l2 = s.initial_error_l2;
        auto result = refine_layer(layer.weights, *layer.mask, layer.activations, opt.config, opt.threads);
        layer.mask = std::move(result.mask);
        s.refined_error_l2 = oracle::oracle_layer_error(layer.weights, *layer.mask, layer.activations);
        s.sparsity_achieved = sparsity_of(*layer.mask);
        for (const auto& r : result.reports) {
            s.total_swaps += r.swaps.size();
        }
        s.wall_time_ms = elapsed_ms(start);
        reports.push_back({layer.name, std::move(result.reports)});
        summary.push_back(std::move(s));
    }
    bundle.reports = std::move(reports);
    save_bundle(opt.out, bundle);
    write_summary(opt.out, summary);
    print_summary(out, summary);
    return kOk;
}

int cmd_eval(const std::string& path, bool as_json, std::ostream& out) {
    const LayerBundle bundle = load_bundle(path);
    json layers = json::array();
    for (const auto& layer : bundle.layers) {
        if (!layer.mask) {
            throw PreconditionError("layer '" + layer.name + "' has no mask");
        }
        const double error = oracle::oracle_layer_error(layer.weights, *layer.mask, layer.activations);
        layers.push_back({{"name", layer.name},
                          {"c_out", layer.weights.rows()},
                          {"c_in", layer.weights.cols()},
                          {"tokens", layer.activations.tokens()},
                          {"pattern", to_string(layer.mask->pattern())},
                          {"sparsity", sparsity_of(*layer.mask)},
                          {"error_l2", error}});
    }
    if (as_json) {
        out << json{{"layers", layers}}.dump(2) << "\n";
        return kOk;
    }
    out << std::left << std::setw(14) << "layer" << std::right << std::setw(8) << "c_out" << std::setw(8) << "c_in"
        << std::setw(8) << "tokens" << std::setw(14) << "pattern" << std::setw(10) << "sparsity" << std::setw(18)
        << "error_l2" << "\n";
    for (const auto& l : layers) {
        out << std::left << std::setw(14) << l["name"].get<std::string>() << std::right << std::setw(8)
            << l["c_out"].get<std::size_t>() << std::setw(8) << l["c_in"].get<std::size_t>() << std::setw(8)
            << l["tokens"].get<std::size_t>() << std::setw(14) << l["pattern"].get<std::string>() << std::setw(10)
            << std::setprecision(6) << l["sparsity"].get<double>() << std::setw(18) << std::setprecision(10)
            << l["error_l2"].get<double>() << "\n";
    }
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Training-free sparse mask refinement for linear layers", "dsnot"};
    app.require_subcommand(1);

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic layer bundle");
    gen_cmd->add_option("--out", gen.out, "Output bundle directory")->required();
    gen_cmd->add_option("--layers", gen.layers, "Number of layers")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--cout", gen.spec.c_out, "Output channels")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--cin", gen.spec.c_in, "Input channels")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--tokens", gen.spec.tokens, "Calibration tokens")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--outlier-frac", gen.spec.outlier_fraction, "Fraction of outlier channels")
        ->check(CLI::Range(0.0, 1.0));
    gen_cmd->add_option("--outlier-scale", gen.spec.outlier_scale, "Outlier channel scale")
        ->check(CLI::Range(1.0, std::numeric_limits<double>::max()));
    gen_cmd->add_option("--seed", gen.spec.seed, "Seed; layer l uses seed + l");
    gen_cmd->add_option("--channel-mean", gen.spec.channel_mean, "Std-dev of per-channel activation offsets")
        ->check(CLI::NonNegativeNumber);

    PruneOptions prune_opt;
    auto* prune_cmd = app.add_subcommand("prune", "One-shot pruning of every layer");
    prune_cmd->add_option("--bundle", prune_opt.bundle, "Input bundle")->required();
    prune_cmd->add_option("--out", prune_opt.out, "Output bundle")->required();
    prune_cmd->add_option("--method", prune_opt.method)->check(CLI::IsMember({"magnitude", "wanda"}));
    auto* sparsity_opt = prune_cmd->add_option("--sparsity", prune_opt.sparsity, "Pruning ratio")
                             ->check(CLI::Range(0.0, 1.0));
    auto* pattern_opt = prune_cmd->add_option("--pattern", prune_opt.pattern, "N:M pattern, e.g. 2:4");
    sparsity_opt->excludes(pattern_opt);
    prune_cmd->add_option("--granularity", prune_opt.granularity)->check(CLI::IsMember({"per-row", "per-layer"}));

    RefineOptions refine_opt;
    std::string metric = "abs-mean";
    std::string grow = "dsnot";
    std::string prune_crit = "dsnot";
    auto* refine_cmd = app.add_subcommand("refine", "Grow/prune mask refinement");
    refine_cmd->add_option("--bundle", refine_opt.bundle, "Input bundle with masks")->required();
    refine_cmd->add_option("--out", refine_opt.out, "Output bundle")->required();
    refine_cmd->add_option("--max-cycles", refine_opt.config.max_cycles, "Cycle budget per row");
    refine_cmd->add_option("--threshold", refine_opt.config.threshold, "Stop threshold")
        ->check(CLI::NonNegativeNumber);
    refine_cmd->add_option("--metric", metric)->check(CLI::IsMember({"abs-mean", "l2"}));
    refine_cmd->add_option("--grow", grow)->check(CLI::IsMember({"dsnot", "wanda-like"}));
    refine_cmd->add_option("--prune", prune_crit)->check(CLI::IsMember({"dsnot", "wanda-unsigned", "expected-change"}));
    refine_cmd->add_option("--threads", refine_opt.threads, "Row workers")->check(CLI::PositiveNumber);

    std::string eval_bundle;
    bool eval_json = false;
    auto* eval_cmd = app.add_subcommand("eval", "Recompute per-layer reconstruction error");
    eval_cmd->add_option("--bundle", eval_bundle)->required();
    eval_cmd->add_flag("--json", eval_json, "Emit JSON");

    std::vector<std::string> argv_tail(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(argv_tail.begin(), argv_tail.end());
    try {
        app.parse(argv_tail);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsageError;
    }

    try {
        if (*gen_cmd) {
            return cmd_gen(gen, out);
        }
        if (*prune_cmd) {
            return cmd_prune(prune_opt, out);
        }
        if (*refine_cmd) {
            refine_opt.config.termination_metric = metric == "l2" ? TerminationMetric::l2 : TerminationMetric::abs_mean;
            refine_opt.config.grow_criterion = grow == "wanda-like" ? GrowCriterion::wanda_like : GrowCriterion::dsnot;
            refine_opt.config.prune_criterion = prune_crit == "wanda-unsigned"    ? PruneCriterion::wanda_unsigned
                                                : prune_crit == "expected-change" ? PruneCriterion::expected_change
                                                                                  : PruneCriterion::dsnot;
            return cmd_refine(refine_opt, out);
        }
        if (*eval_cmd) {
            return cmd_eval(eval_bundle, eval_json, out);
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsageError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternalError;
    }
    return kUsageError;
}

} // namespace dsnot::cli
