// Acceptance gate. Each criterion prints indented diagnostics followed by one
// "CRITERION <n>: PASS|FAIL" line. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crtlab/experiment.hpp"
#include "crtlab/theory_report.hpp"
#include "oracles.hpp"

using namespace crtlab;
namespace fs = std::filesystem;

namespace {

// Criterion 1: CRT with the ECDF estimator.
constexpr double kC1W1Tol = 0.10;
constexpr double kC1MmdTol = 0.12;
constexpr std::size_t kC1Replicates = 20;
constexpr double kC1BudgetMin = 20.0;
// Criterion 2: CRT with KDE, h0 = 0.5.
constexpr double kC2W1Tol = 0.12;
constexpr std::size_t kC2Replicates = 20;
// Criterion 3: BCRT table.
constexpr double kC3TheoryTol = 0.10;
constexpr double kC3PublishedTol = 0.08;
constexpr std::size_t kC3Replicates = 50;
constexpr double kC3BudgetMin = 30.0;
// Criterion 4: frozen bias.
constexpr double kC4FrozenLevel = 0.2;
constexpr double kC4GapFraction = 0.5;
constexpr double kC4BiasedTol = 0.05;
constexpr std::size_t kC4Replicates = 5;
// Criterion 5: neural generator.
constexpr double kC5FdRelTol = 1e-4;
constexpr double kC5FdFloor = 1e-3;
constexpr double kC5TerminalW1 = 0.15;
constexpr double kC5RateTol = 0.2;
constexpr std::size_t kC5Replicates = 3;
constexpr int kC5CellsRequired = 2;
constexpr double kC5BudgetMin = 60.0;
// Criterion 6
constexpr double kC6BudgetSec = 120.0;
// Criterion 7: metric oracles.
constexpr double kC7ShiftTol = 2e-3;
constexpr double kC7MmdTol = 1e-12;
constexpr double kC7QuantileTol = 1e-3;
constexpr double kC7ConvexSlack = 1e-10;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::size_t g_workers = 0;
fs::path g_root;

void note(const char* fmt, auto... args) {
    std::printf("  ");
    std::printf(fmt, args...);
    std::printf("\n");
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream f(p);
    return nlohmann::json::parse(f);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ExperimentConfig prepared(const std::string& yaml, const std::string& dir) {
    auto c = parse_config_text(yaml);
    c.output_dir = (g_root / dir).string();
    c.workers = g_workers;
    fs::remove_all(c.output_dir);
    return c;
}

double minutes_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
}

nlohmann::json run_and_summarize(const ExperimentConfig& c) {
    const auto m = run_experiment(c);
    for (const auto& f : m.failures) note("cell failure %s: %s", f.cell.c_str(), f.error.c_str());
    if (!m.ok()) throw std::runtime_error("experiment had failed cells");
    return read_json(fs::path(c.output_dir) / "summary.json");
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    const auto cfg = prepared(fmt("kind: crt_ecdf\nreplicates: %zu\nbase_seed: 1001\n", kC1Replicates), "c1");
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = run_and_summarize(cfg);
    const double minutes = minutes_since(t0);
    bool ok = true;
    double worst_w1 = 0.0, worst_mmd = 0.0;
    for (const auto& [id, c] : s.items()) {
        const double th = std::min(c["alpha"].get<double>(), 0.5), w1 = c["mean_rate_w1"], mmd = c["mean_rate_mmd"];
        const bool cell_ok = std::abs(w1 - th) <= kC1W1Tol && std::abs(mmd - th) <= kC1MmdTol;
        ok = ok && cell_ok;
        worst_w1 = std::max(worst_w1, std::abs(w1 - th));
        worst_mmd = std::max(worst_mmd, std::abs(mmd - th));
        note("%-10s theory %.3f  W1 %.3f (sd %.3f)  MMD %.3f (sd %.3f)%s", id.c_str(), th, w1,
             c["sd_rate_w1"].get<double>(), mmd, c["sd_rate_mmd"].get<double>(), cell_ok ? "" : "  <-- out of band");
    }
    return {ok && s.size() == 10 && minutes <= kC1BudgetMin,
            fmt("max |W1 - theory| %.3f (tol %.2f), max |MMD - theory| %.3f (tol %.2f), %.1f min", worst_w1, kC1W1Tol,
                worst_mmd, kC1MmdTol, minutes)};
}

Outcome criterion2() {
    const auto cfg = prepared(fmt("kind: crt_kde\nreplicates: %zu\nbase_seed: 1002\nestimator: {h0: 0.5}\n", kC2Replicates), "c2");
    const auto s = run_and_summarize(cfg);
    bool ok = true;
    double worst = 0.0;
    for (const auto& [id, c] : s.items()) {
        const double th = std::min(c["alpha"].get<double>(), 0.5), w1 = c["mean_rate_w1"];
        const bool cell_ok = std::abs(w1 - th) <= kC2W1Tol;
        ok = ok && cell_ok;
        worst = std::max(worst, std::abs(w1 - th));
        note("%-10s theory %.3f  W1 %.3f (sd %.3f)  MMD %.3f%s", id.c_str(), th, w1, c["sd_rate_w1"].get<double>(),
             c["mean_rate_mmd"].get<double>(), cell_ok ? "" : "  <-- out of band");
    }
    return {ok && s.size() == 10, fmt("max |W1 - theory| %.3f (tol %.2f)", worst, kC2W1Tol)};
}

Outcome criterion3() {
    const auto cfg = prepared(fmt("kind: bcrt_ecdf\nreplicates: %zu\nbase_seed: 1003\n", kC3Replicates), "c3");
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = run_and_summarize(cfg);
    const double minutes = minutes_since(t0);
    bool ok = s.size() == 9 && minutes <= kC3BudgetMin;
    double worst = 0.0;
    for (const auto& [id, c] : s.items()) {
        const double th = c["theory_rate"], w1 = c["mean_rate_w1"];
        const bool cell_ok = std::abs(w1 - th) <= kC3TheoryTol;
        ok = ok && cell_ok;
        worst = std::max(worst, std::abs(w1 - th));
        note("%-18s theory %.3f  W1 %.3f (sd %.3f)  MMD %.3f%s", id.c_str(), th, w1, c["sd_rate_w1"].get<double>(),
             c["mean_rate_mmd"].get<double>(), cell_ok ? "" : "  <-- out of band");
    }
    struct Published {
        const char* cell;
        double value;
    };
    std::string extra;
    for (const auto& p : {Published{"alpha=0.5_q=0.5", 0.506}, Published{"alpha=0.25_q=0.75", 0.247}}) {
        if (!s.contains(p.cell)) {
            ok = false;
            continue;
        }
        const double w1 = s[p.cell]["mean_rate_w1"];
        const bool cell_ok = std::abs(w1 - p.value) <= kC3PublishedTol;
        ok = ok && cell_ok;
        note("%-18s W1 %.3f vs published %.3f (tol %.2f)%s", p.cell, w1, p.value, kC3PublishedTol,
             cell_ok ? "" : "  <-- out of band");
        extra += fmt(", %s %.3f", p.cell, w1);
    }
    return {ok, fmt("max |W1 - theory| %.3f (tol %.2f), %.1f min", worst, kC3TheoryTol, minutes) + extra};
}

Outcome criterion4() {
    const auto target = default_target();
    BiasSchedule frozen;
    frozen.frozen = true;
    frozen.amplitude = kC4FrozenLevel;
    const auto grid = build_grid(target, 200, 6.0, frozen.bias_component);
    const auto biased = biased_spec_at(target, frozen, 1);
    const auto target_cdf = mixture_cdf_on_grid(target, grid);
    const auto biased_cdf = mixture_cdf_on_grid(biased, grid);
    const double gap = w1_grid(target_cdf, biased_cdf, grid);
    note("W1(frozen-bias mixture, P0) on the grid = %.4f", gap);

    bool ok = true;
    double min_to_target = 1e9, max_to_biased = 0.0;
    for (std::size_t r = 0; r < kC4Replicates; ++r) {
        RecursionConfig c;
        c.m1 = 50;
        c.alpha = 0.5;
        c.T = 2000;
        c.bias = frozen;
        c.seed = task_seed(1004, ExperimentKind::bcrt_ecdf, Cell{0.5, std::nullopt}, r);
        const auto run = run_recursion(c, target, grid);
        const auto cdf = cdf_on_grid(run.final_state, grid);
        const double to_target = run.trajectory.points.back().w1;
        const double to_biased = w1_grid(biased_cdf, cdf, grid);
        const bool rep_ok = to_target > kC4GapFraction * gap && to_biased < kC4BiasedTol;
        ok = ok && rep_ok;
        min_to_target = std::min(min_to_target, to_target);
        max_to_biased = std::max(max_to_biased, to_biased);
        note("replicate %zu: W1 to P0 %.4f, W1 to biased mixture %.4f%s", r, to_target, to_biased,
             rep_ok ? "" : "  <-- fails");
    }
    return {ok, fmt("min W1 to P0 %.4f > %.4f, max W1 to biased %.4f < %.2f", min_to_target, kC4GapFraction * gap,
                    max_to_biased, kC4BiasedTol)};
}

Outcome criterion5() {
    // (a) backpropagation against central differences in double precision
    bool fd_ok = true;
    double worst_fd = 0.0;
    {
        using Net = Mlp<double>;
        Rng rng(1005);
        auto net = init_mlp<double>(MlpSpec{}, rng);
        const std::size_t n = 64;
        Net::Matrix z(1, static_cast<Eigen::Index>(n));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (Eigen::Index i = 0; i < z.cols(); ++i) z(0, i) = u(rng);
        const auto real = sample_mixture(default_target(), n, rng);
        const auto grads = net.gradient(z, real);
        auto loss = [&] {
            const auto out = net.forward(z);
            return quantile_w1_loss_and_grad<double>(std::span<const double>(out.data(), out.size()), real).first;
        };
        const double h = 1e-6;
        int checked = 0;
        for (std::size_t li = 0; li < net.layers().size(); ++li) {
            auto& layer = net.layers()[li];
            std::uniform_int_distribution<Eigen::Index> pick_w(0, layer.weight.size() - 1);
            std::uniform_int_distribution<Eigen::Index> pick_b(0, layer.bias.size() - 1);
            for (int k = 0; k < 25; ++k) {
                const bool use_bias = k % 2 == 1;
                const Eigen::Index idx = use_bias ? pick_b(rng) : pick_w(rng);
                double& p = use_bias ? layer.bias.data()[idx] : layer.weight.data()[idx];
                const double analytic = use_bias ? grads.bias[li].data()[idx] : grads.weight[li].data()[idx];
                const double saved = p;
                p = saved + h;
                const double up = loss();
                p = saved - h;
                const double dn = loss();
                p = saved;
                const double fd = (up - dn) / (2 * h);
                const double rel = std::abs(fd - analytic) / std::max(std::abs(analytic), kC5FdFloor);
                worst_fd = std::max(worst_fd, rel);
                fd_ok = fd_ok && rel <= kC5FdRelTol;
                ++checked;
            }
        }
        note("(a) %d coordinates, max relative FD error %.2e (tol %.0e)", checked, worst_fd, kC5FdRelTol);
    }

    // (b) and (c) from one sweep
    const auto cfg = prepared(fmt("kind: crt_neural\nreplicates: %zu\nbase_seed: 1005\nrecursion: {T: 150}\n"
                                  "sweep: {alpha: [0.25, 0.5, 0.75, 1.0]}\nneural: {total_per_iteration: 500}\n",
                                  kC5Replicates),
                              "c5");
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = run_and_summarize(cfg);
    const double minutes = minutes_since(t0);

    bool terminal_ok = true;
    double worst_terminal = 0.0;
    {
        std::istringstream csv(slurp(fs::path(cfg.output_dir) / "cells" / "alpha=1.csv"));
        const auto rows = read_trajectory_csv(csv);
        for (const auto& row : rows) {
            if (row.point.t != 150) continue;
            worst_terminal = std::max(worst_terminal, row.point.w1);
            terminal_ok = terminal_ok && row.point.w1 < kC5TerminalW1;
            note("(b) alpha=1 replicate %zu terminal W1 %.4f", row.replicate, row.point.w1);
        }
    }

    int cells_ok = 0;
    for (const char* id : {"alpha=0.25", "alpha=0.5", "alpha=0.75"}) {
        const auto& c = s[id];
        const double th = std::min(c["alpha"].get<double>(), 0.5), w1 = c["mean_rate_w1"];
        const bool cell_ok = std::abs(w1 - th) <= kC5RateTol;
        cells_ok += cell_ok;
        note("(c) %-10s theory %.3f  W1 %.3f (sd %.3f)  MMD %.3f%s", id, th, w1, c["sd_rate_w1"].get<double>(),
             c["mean_rate_mmd"].get<double>(), cell_ok ? "" : "  <-- out of band");
    }
    note("alpha=1 fitted W1 rate %.3f (not part of the gate)", s["alpha=1"]["mean_rate_w1"].get<double>());
    note("sweep runtime %.1f min", minutes);

    const bool ok = fd_ok && terminal_ok && cells_ok >= kC5CellsRequired && minutes <= kC5BudgetMin;
    return {ok, fmt("(a) FD %.1e, (b) max terminal W1 %.4f < %.2f, (c) %d/3 cells within %.1f, %.1f min", worst_fd,
                    worst_terminal, kC5TerminalW1, cells_ok, kC5RateTol, minutes)};
}

Outcome criterion6() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = run_theory_checks();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& r = res.report;
    note("product identity: max rel error %.2e over %d triples", r["product_gamma_identity"]["max_rel_error"].get<double>(),
         r["product_gamma_identity"]["triples"].get<int>());
    for (const auto& row : r["gamma_ratio"]["rows"])
        note("gamma ratio alpha=%.1f: upper [%.4f, %.4f] lower [%.4f, %.4f]", row["alpha"].get<double>(),
             row["upper_min"].get<double>(), row["upper_max"].get<double>(), row["lower_min"].get<double>(),
             row["lower_max"].get<double>());
    for (const auto& row : r["cesaro"]["rows"])
        note("cesaro q=%.2f: ratio in [%.4f, %.4f]", row["q"].get<double>(), row["min_ratio"].get<double>(),
             row["max_ratio"].get<double>());
    double worst = 0.0;
    for (const auto& row : r["recursion_envelope"]["cells"]) {
        const double d = std::abs(row["fitted"].get<double>() - row["predicted"].get<double>());
        worst = std::max(worst, d);
        if (!row["passed"].get<bool>())
            note("envelope p=%.2f alpha=%.2f off by %.3f", row["p"].get<double>(), row["alpha"].get<double>(), d);
    }
    note("envelope: %zu cells, max |fitted - predicted| %.4f", r["recursion_envelope"]["cells"].size(), worst);
    return {res.all_ok() && secs <= kC6BudgetSec,
            fmt("identity %s, gamma ratio %s, cesaro %s, envelope %s (max dev %.4f), %.1f s",
                res.identity_ok ? "ok" : "FAIL", res.gamma_ok ? "ok" : "FAIL", res.cesaro_ok ? "ok" : "FAIL",
                res.envelope_ok ? "ok" : "FAIL", worst, secs)};
}

std::vector<double> step_cdf(std::vector<double> xs, const EvalGrid& g) {
    std::sort(xs.begin(), xs.end());
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        out[i] = static_cast<double>(std::upper_bound(xs.begin(), xs.end(), g.points[i]) - xs.begin()) /
                 static_cast<double>(xs.size());
    return out;
}

std::vector<double> random_density(const EvalGrid& g, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> out(g.size());
    for (double& v : out) v = u(rng);
    normalize_density(out, g);
    return out;
}

std::vector<double> cumulative(const std::vector<double>& pdf, const EvalGrid& g) {
    std::vector<double> out(pdf.size(), 0.0);
    for (std::size_t i = 1; i < pdf.size(); ++i)
        out[i] = out[i - 1] + 0.5 * (pdf[i - 1] + pdf[i]) * (g.points[i] - g.points[i - 1]);
    return out;
}

std::vector<double> mix(const std::vector<double>& a, const std::vector<double>& b, double l) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = l * a[i] + (1.0 - l) * b[i];
    return out;
}

Outcome criterion7() {
    // location shift
    const auto g = make_uniform_grid(-8.0, 9.0, 2000);
    std::vector<double> F0(g.size()), F1(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        F0[i] = oracle::normal_cdf(g.points[i]);
        F1[i] = oracle::normal_cdf(g.points[i] - 1.0);
    }
    const double shift = w1_grid(F0, F1, g);
    const bool shift_ok = std::abs(shift - 1.0) <= kC7ShiftTol;
    note("grid W1 of a unit shift: %.6f", shift);

    // brute-force MMD on non-uniform length-50 grids
    Rng rng(1007);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_mmd = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        EvalGrid ng;
        double x = -3.0;
        for (int i = 0; i < 50; ++i) {
            ng.points.push_back(x);
            x += 0.05 + 0.2 * u(rng);
        }
        ng.lo = ng.points.front();
        ng.hi = ng.points.back();
        MetricSettings s;
        s.mmd_kernel_bandwidth = 0.5 + u(rng);
        s.report_squared_mmd = true;
        std::vector<double> a(50), b(50);
        for (double& v : a) v = u(rng);
        for (double& v : b) v = u(rng);
        const double ref = oracle::mmd2_double_loop(a, b, ng.points, s.mmd_kernel_bandwidth);
        worst_mmd = std::max(worst_mmd, std::abs(GridMmd(ng, s).squared(a, b) - ref));
    }
    const bool mmd_ok = worst_mmd <= kC7MmdTol;
    note("MMD^2 vs double loop on 20 length-50 grids: max abs diff %.2e", worst_mmd);

    // quantile W1 vs grid W1 of step CDFs
    std::normal_distribution<double> z(0.0, 1.0);
    double worst_q = 0.0;
    const auto fine = make_uniform_grid(-8.0, 8.0, 200001);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> a(40 + rep * 7), b(100 - rep * 3);
        for (double& v : a) v = z(rng);
        for (double& v : b) v = 0.4 + 1.3 * z(rng);
        worst_q = std::max(worst_q, std::abs(w1_quantile(a, b) - w1_grid(step_cdf(a, fine), step_cdf(b, fine), fine)));
    }
    const bool q_ok = worst_q <= kC7QuantileTol;
    note("quantile W1 vs step-CDF grid W1 (10 pairs): max abs diff %.2e", worst_q);

    // convexity in the second argument
    const auto cg = make_uniform_grid(-4.0, 4.0, 80);
    const GridMmd mmd(cg, MetricSettings{});
    std::size_t violations = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const auto p = random_density(cg, rng), q1 = random_density(cg, rng), q2 = random_density(cg, rng);
        const double l = u(rng);
        if (mmd(p, mix(q1, q2, l)) > l * mmd(p, q1) + (1 - l) * mmd(p, q2) + kC7ConvexSlack) ++violations;
        const auto P = cumulative(p, cg), Q1 = cumulative(q1, cg), Q2 = cumulative(q2, cg);
        if (w1_grid(P, mix(Q1, Q2, l), cg) > l * w1_grid(P, Q1, cg) + (1 - l) * w1_grid(P, Q2, cg) + kC7ConvexSlack)
            ++violations;
    }
    note("convexity: %zu violations over 100 triples x 2 metrics", violations);

    return {shift_ok && mmd_ok && q_ok && violations == 0,
            fmt("shift %.6f, MMD diff %.1e, quantile diff %.1e, convexity violations %zu", shift, worst_mmd, worst_q,
                violations)};
}

Outcome criterion8() {
    struct Case {
        const char* name;
        const char* yaml;
    };
    const Case cases[] = {
        {"crt_ecdf", "kind: crt_ecdf\nreplicates: 4\nbase_seed: 1008\nrecursion: {T: 300}\nsweep: {alpha: [0.2, 0.5, 1.0]}\n"},
        {"crt_kde", "kind: crt_kde\nreplicates: 3\nbase_seed: 1008\nrecursion: {T: 200}\nsweep: {alpha: [0.3, 0.7]}\n"},
        {"bcrt_kde", "kind: bcrt_kde\nreplicates: 3\nbase_seed: 1008\nrecursion: {T: 200}\n"
                     "sweep: {alpha: [0.25, 0.75], q: [0.25, 0.5]}\n"},
        {"crt_neural", "kind: crt_neural\nreplicates: 2\nbase_seed: 1008\nrecursion: {T: 6}\nsweep: {alpha: [0.5, 1.0]}\n"
                       "neural: {total_per_iteration: 200, eval_samples: 2000, train: {epochs_per_iteration: 3}}\n"},
    };
    bool ok = true;
    std::size_t compared = 0;
    for (const auto& c : cases) {
        auto a = prepared(c.yaml, std::string("c8_") + c.name + "_w1");
        auto b = prepared(c.yaml, std::string("c8_") + c.name + "_w8");
        auto again = prepared(c.yaml, std::string("c8_") + c.name + "_w1_again");
        a.workers = 1;
        b.workers = 8;
        again.workers = 1;
        const auto ma = run_experiment(a), mb = run_experiment(b), mc = run_experiment(again);
        bool same = ma.ok() && mb.ok() && mc.ok() && ma.files == mb.files && ma.files == mc.files;
        std::size_t n_files = 0;
        for (const auto& f : ma.files) {
            if (!same) break;
            const auto ta = slurp(fs::path(a.output_dir) / f);
            same = ta == slurp(fs::path(b.output_dir) / f) && ta == slurp(fs::path(again.output_dir) / f);
            ++n_files;
        }
        auto ja = read_json(fs::path(a.output_dir) / "manifest.json");
        auto jb = read_json(fs::path(b.output_dir) / "manifest.json");
        ja.erase("timestamp");
        jb.erase("timestamp");
        same = same && ja == jb;
        compared += n_files;
        ok = ok && same;
        note("%-10s %zu files byte-identical across 1, 8 and 1 workers: %s", c.name, n_files, same ? "yes" : "NO");
    }
    return {ok, fmt("%zu output files compared (manifest timestamp excluded)", compared)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance gate"};
    std::vector<int> which;
    std::string root = (fs::temp_directory_path() / "crtlab_acceptance").string();
    app.add_option("--criterion", which, "Criterion number(s); all when omitted")->check(CLI::Range(1, 8));
    app.add_option("--workers", g_workers, "Worker threads (0 = all cores)");
    app.add_option("--out", root, "Scratch directory for experiment outputs");
    CLI11_PARSE(app, argc, argv);
    if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8};
    g_root = root;
    fs::create_directories(g_root);

    const std::function<Outcome()> criteria[] = {criterion1, criterion2, criterion3, criterion4,
                                                 criterion5, criterion6, criterion7, criterion8};
    bool all = true;
    for (int n : which) {
        std::printf("criterion %d\n", n);
        std::fflush(stdout);
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = criteria[n - 1]();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("CRITERION %d: %s  %s [%.0f s]\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
        std::fflush(stdout);
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
