#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crtlab/experiment.hpp"
#include "crtlab/plot.hpp"
#include "crtlab/theory_report.hpp"

namespace fs = std::filesystem;
using namespace crtlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitCellFailure = 2;

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::size_t> replicates;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "YAML or JSON experiment configuration")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Output directory (overrides output_dir)");
    cmd->add_option("--replicates", o.replicates, "Replicates per cell (override)")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "Base seed (override)");
    cmd->add_option("--workers", o.workers, "Worker threads; 0 uses all cores");
    cmd->add_flag("--quiet", o.quiet, "No progress output");
}

ExperimentConfig load(const CommonOptions& o, ExperimentKind default_kind) {
    auto cfg = o.config.empty() ? parse_config_text("", default_kind) : parse_config_file(o.config, default_kind);
    if (o.replicates) cfg.replicates = *o.replicates;
    if (o.seed) cfg.base_seed = *o.seed;
    if (o.workers) cfg.workers = *o.workers;
    if (!o.out.empty()) cfg.output_dir = o.out;
    return cfg;
}

void print_summary(const fs::path& dir) {
    std::ifstream f(dir / "summary.json");
    if (!f) return;
    const auto s = nlohmann::ordered_json::parse(f);
    std::printf("%-22s %8s %16s %16s\n", "cell", "theory", "W1 rate", "MMD rate");
    for (const auto& [id, c] : s.items()) {
        std::printf("%-22s %8.3f %8.3f +/- %4.3f %8.3f +/- %4.3f%s\n", id.c_str(), c["theory_rate"].get<double>(),
                    c["mean_rate_w1"].get<double>(), c["sd_rate_w1"].get<double>(), c["mean_rate_mmd"].get<double>(),
                    c["sd_rate_mmd"].get<double>(), c["log_flag"].get<bool>() ? "  (log)" : "");
    }
}

int run(const CommonOptions& o, ExperimentKind default_kind, std::initializer_list<ExperimentKind> accepted,
        const char* command) {
    ExperimentConfig cfg;
    try {
        cfg = load(o, default_kind);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return kExitConfig;
    }
    bool ok_kind = false;
    for (auto k : accepted) ok_kind = ok_kind || k == cfg.kind;
    if (!ok_kind) {
        std::cerr << "config: kind: " << to_string(cfg.kind) << " cannot be run by '" << command << "'\n";
        return kExitConfig;
    }

    RunOptions opts;
    if (!o.quiet) {
        opts.progress = [](std::size_t done, std::size_t total) {
            const std::size_t step = std::max<std::size_t>(1, total / 20);
            if (done % step == 0 || done == total) std::fprintf(stderr, "[%zu/%zu] tasks done\n", done, total);
        };
    }
    std::fprintf(stderr, "%s: %zu cells x %zu replicates -> %s\n", to_string(cfg.kind), cfg.cells().size(),
                 cfg.replicates, cfg.output_dir.c_str());
    RunManifest manifest;
    try {
        manifest = run_experiment(cfg, opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCellFailure;
    }
    print_summary(cfg.output_dir);
    for (const auto& f : manifest.failures)
        std::cerr << "failed: " << f.cell << (f.replicate ? " replicate " + std::to_string(*f.replicate) : "")
                  << ": " << f.error << '\n';
    std::fprintf(stderr, "manifest: %s\n", (fs::path(cfg.output_dir) / "manifest.json").string().c_str());
    return manifest.ok() ? kExitOk : kExitCellFailure;
}

std::vector<double> tenths() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}; }

int theory_check(const CommonOptions& o) {
    if (!o.config.empty()) {
        try {
            const auto cfg = parse_config_file(o.config, ExperimentKind::theory_check);
            if (cfg.kind != ExperimentKind::theory_check) {
                std::cerr << "config: kind: " << to_string(cfg.kind) << " cannot be run by 'theory-check'\n";
                return kExitConfig;
            }
        } catch (const ConfigError& e) {
            std::cerr << e.what() << '\n';
            return kExitConfig;
        }
    }
    TheoryCheckSettings settings;
    if (o.seed) settings.seed = *o.seed;
    const auto result = run_theory_checks(settings);
    const std::string text = result.report.dump(2) + "\n";
    std::cout << text;
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        svg::write_file(fs::path(o.out) / "theory_report.json", text);
        emit_phase_diagram(tenths(), tenths(), fs::path(o.out) / "phase_diagram.svg");
    }
    return result.all_ok() ? kExitOk : kExitCellFailure;
}

int plot(const std::string& from, const std::string& out_dir) {
    const fs::path src(from);
    const fs::path out = out_dir.empty() ? src / "plots" : fs::path(out_dir);
    std::ifstream f(src / "summary.json");
    if (!f) {
        std::cerr << "plot: cannot read " << (src / "summary.json").string() << '\n';
        return kExitConfig;
    }
    nlohmann::ordered_json summary;
    try {
        summary = nlohmann::ordered_json::parse(f);
    } catch (const std::exception& e) {
        std::cerr << "plot: " << e.what() << '\n';
        return kExitConfig;
    }
    std::map<std::optional<double>, std::pair<std::vector<RatePlotPoint>, std::vector<RatePlotPoint>>> groups;
    for (const auto& [id, c] : summary.items()) {
        std::optional<double> q;
        if (!c["q"].is_null()) q = c["q"].get<double>();
        const double a = c["alpha"].get<double>(), th = c["theory_rate"].get<double>();
        groups[q].first.push_back({a, c["mean_rate_w1"].get<double>(), c["sd_rate_w1"].get<double>(), th});
        groups[q].second.push_back({a, c["mean_rate_mmd"].get<double>(), c["sd_rate_mmd"].get<double>(), th});
    }
    try {
        for (const auto& [q, pts] : groups) {
            if (pts.first.size() < 2) continue;
            const std::string suffix = q ? "_q=" + svg::num(*q) : "";
            emit_rate_plot(pts.first, out / ("rate_w1" + suffix + ".svg"), "Convergence rate" + suffix, "W1");
            emit_rate_plot(pts.second, out / ("rate_mmd" + suffix + ".svg"), "Convergence rate" + suffix, "MMD");
        }
        emit_phase_diagram(tenths(), tenths(), out / "phase_diagram.svg");
    } catch (const std::exception& e) {
        std::cerr << "plot: " << e.what() << '\n';
        return kExitCellFailure;
    }
    std::fprintf(stderr, "plots written to %s\n", out.string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contaminated recursive training experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    CommonOptions crt_o, bcrt_o, wgan_o, theory_o, plot_o;
    auto* crt = app.add_subcommand("crt", "CRT with ECDF or KDE estimators (kind crt_ecdf / crt_kde)");
    add_common(crt, crt_o);
    auto* bcrt = app.add_subcommand("bcrt", "Biased CRT (kind bcrt_ecdf / bcrt_kde)");
    add_common(bcrt, bcrt_o);
    auto* wgan = app.add_subcommand("wgan", "CRT with a neural generator (kind crt_neural)");
    add_common(wgan, wgan_o);
    auto* theory = app.add_subcommand("theory-check", "Numerical checks of the rate theory; JSON on stdout");
    add_common(theory, theory_o);
    auto* plt = app.add_subcommand("plot", "Rate plots and phase diagram from a finished run");
    add_common(plt, plot_o);
    std::string plot_from;
    plt->add_option("--from", plot_from, "Run directory containing summary.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (*crt) return run(crt_o, ExperimentKind::crt_ecdf, {ExperimentKind::crt_ecdf, ExperimentKind::crt_kde}, "crt");
    if (*bcrt)
        return run(bcrt_o, ExperimentKind::bcrt_ecdf, {ExperimentKind::bcrt_ecdf, ExperimentKind::bcrt_kde}, "bcrt");
    if (*wgan) return run(wgan_o, ExperimentKind::crt_neural, {ExperimentKind::crt_neural}, "wgan");
    if (*theory) return theory_check(theory_o);
    if (*plt) return plot(plot_from, plot_o.out);
    return kExitConfig;
}
