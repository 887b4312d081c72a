#pragma once

// Batch of numerical checks on the rate theory, reported as JSON.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "crtlab/random.hpp"
#include "crtlab/theory.hpp"

namespace crtlab {

struct TheoryCheckSettings {
    std::uint64_t seed = 2024;
    std::size_t identity_triples = 1000;
    std::size_t identity_t_max = 2000;
    double identity_rel_tol = 1e-10;
    std::vector<double> gamma_alphas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::size_t gamma_t_min = 50;
    std::size_t gamma_t_max = 10000;
    double gamma_lo = 0.9;
    double gamma_hi = 1.1;
    std::vector<double> cesaro_qs{0.25, 0.5, 1.0, 2.0};
    std::size_t cesaro_t_max = 10000;
    double cesaro_lo = 0.5;
    double cesaro_hi = 2.0;
    std::vector<double> envelope_ps{0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<double> envelope_alphas{0.2, 0.4, 0.6, 0.8, 1.0};
    /// (p, alpha, q) cells with a decaying bias term
    std::vector<std::array<double, 3>> envelope_bias_cells{
        {0.9, 0.9, 0.25}, {0.9, 0.6, 0.4}, {0.7, 0.8, 0.55}, {0.5, 0.3, 0.75}, {0.9, 0.5, 0.5}};
    std::size_t envelope_t_max = 200000;
    double envelope_tol = 0.05;
};

struct TheoryCheckResult {
    nlohmann::ordered_json report;
    bool identity_ok = false;
    bool gamma_ok = false;
    bool cesaro_ok = false;
    bool envelope_ok = false;

    bool all_ok() const noexcept { return identity_ok && gamma_ok && cesaro_ok && envelope_ok; }
};

inline TheoryCheckResult run_theory_checks(const TheoryCheckSettings& s = {}) {
    using nlohmann::ordered_json;
    TheoryCheckResult out;
    auto& rep = out.report;

    {
        Rng rng(s.seed);
        std::uniform_int_distribution<std::size_t> pick_t(3, s.identity_t_max);
        std::uniform_real_distribution<double> pick_a(0.0, 1.0);
        double worst = 0.0;
        ordered_json worst_case;
        for (std::size_t i = 0; i < s.identity_triples; ++i) {
            const std::size_t t = pick_t(rng);
            const std::size_t j = std::uniform_int_distribution<std::size_t>(1, t - 2)(rng);
            const double a = pick_a(rng);
            const auto c = check_product_gamma_identity(j, t, a);
            const double rel = c.abs_diff / std::max(std::abs(c.lhs), std::numeric_limits<double>::min());
            if (rel > worst || worst_case.is_null()) {
                worst = rel;
                worst_case = {{"j", j}, {"t", t}, {"alpha", a}, {"lhs", c.lhs}, {"rhs", c.rhs}};
            }
        }
        out.identity_ok = worst <= s.identity_rel_tol;
        rep["product_gamma_identity"] = {{"triples", s.identity_triples},
                                         {"max_rel_error", worst},
                                         {"tolerance", s.identity_rel_tol},
                                         {"worst_case", worst_case},
                                         {"passed", out.identity_ok}};
    }

    {
        std::vector<std::size_t> ts;
        for (std::size_t t = s.gamma_t_min; t <= s.gamma_t_max; ++t) ts.push_back(t);
        ordered_json rows = ordered_json::array();
        out.gamma_ok = true;
        for (double a : s.gamma_alphas) {
            const auto g = check_gamma_ratio_bounds(a, ts);
            const bool ok = g.upper.min_ratio >= s.gamma_lo && g.upper.max_ratio <= s.gamma_hi &&
                            g.lower.min_ratio >= s.gamma_lo && g.lower.max_ratio <= s.gamma_hi;
            out.gamma_ok = out.gamma_ok && ok;
            rows.push_back({{"alpha", a},
                            {"upper_min", g.upper.min_ratio},
                            {"upper_max", g.upper.max_ratio},
                            {"lower_min", g.lower.min_ratio},
                            {"lower_max", g.lower.max_ratio},
                            {"passed", ok}});
        }
        rep["gamma_ratio"] = {{"t_min", s.gamma_t_min},
                              {"t_max", s.gamma_t_max},
                              {"band", {s.gamma_lo, s.gamma_hi}},
                              {"rows", rows},
                              {"passed", out.gamma_ok}};
    }

    {
        ordered_json rows = ordered_json::array();
        out.cesaro_ok = true;
        for (double q : s.cesaro_qs) {
            const auto r = check_cesaro_bound(q, s.cesaro_t_max);
            const bool ok = std::isfinite(r.max_ratio) && r.min_ratio >= s.cesaro_lo && r.max_ratio <= s.cesaro_hi;
            out.cesaro_ok = out.cesaro_ok && ok;
            rows.push_back({{"q", q},
                            {"min_ratio", r.min_ratio},
                            {"max_ratio", r.max_ratio},
                            {"last_ratio", r.last_ratio},
                            {"eventually_monotone", r.eventually_monotone},
                            {"passed", ok}});
        }
        rep["cesaro"] = {{"t_max", s.cesaro_t_max}, {"band", {s.cesaro_lo, s.cesaro_hi}}, {"rows", rows},
                         {"passed", out.cesaro_ok}};
    }

    {
        ordered_json rows = ordered_json::array();
        out.envelope_ok = true;
        auto check = [&](double p, double a, std::optional<double> q) {
            const auto res = simulate_recursion_envelope(p, a, 1.0, s.envelope_t_max, q);
            const auto pred = predicted_rate(p, a, q);
            const bool ok = std::abs(res.fitted_exponent - pred.exponent) <= s.envelope_tol &&
                            res.log_normalized == pred.log_factor;
            out.envelope_ok = out.envelope_ok && ok;
            ordered_json row{{"p", p}, {"alpha", a}};
            row["q"] = q ? ordered_json(*q) : ordered_json(nullptr);
            row["predicted"] = pred.exponent;
            row["regime"] = to_string(pred.regime);
            row["fitted"] = res.fitted_exponent;
            row["log_normalized"] = res.log_normalized;
            row["passed"] = ok;
            rows.push_back(std::move(row));
        };
        for (double p : s.envelope_ps)
            for (double a : s.envelope_alphas) check(p, a, std::nullopt);
        for (const auto& c : s.envelope_bias_cells) check(c[0], c[1], c[2]);
        rep["recursion_envelope"] = {{"t_max", s.envelope_t_max}, {"tolerance", s.envelope_tol}, {"cells", rows},
                                     {"passed", out.envelope_ok}};
    }

    rep["passed"] = out.all_ok();
    return out;
}

}  // namespace crtlab
