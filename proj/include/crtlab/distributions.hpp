#pragma once

// Closed-form 1-D Gaussian mixtures: the ground-truth target, the time-varying
// contamination used for biased streams, and the fixed evaluation grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crtlab/random.hpp"

namespace crtlab {

inline double normal_pdf(double z) noexcept {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Standard normal CDF via the libm complementary error function, which keeps
/// relative accuracy in both tails.
inline double normal_cdf(double z) noexcept {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

struct GaussianComponent {
    double mu = 0.0;
    double sigma = 1.0;

    double pdf(double x) const noexcept { return normal_pdf((x - mu) / sigma) / sigma; }
    double cdf(double x) const noexcept { return normal_cdf((x - mu) / sigma); }
};

/// Finite Gaussian mixture. Weights are nonnegative and sum to one.
struct TargetSpec {
    std::vector<double> weights;
    std::vector<GaussianComponent> components;

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const {
        if (weights.empty() || weights.size() != components.size())
            throw std::invalid_argument("target: weights and components must be nonempty and of equal length");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw std::invalid_argument("target: weights must be nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("target: weights must sum to 1 (got " + std::to_string(total) + ")");
        for (const auto& c : components)
            if (!(c.sigma > 0.0) || !std::isfinite(c.mu))
                throw std::invalid_argument("target: component sigma must be > 0 and mu finite");
    }

    double mean() const noexcept {
        double m = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) m += weights[i] * components[i].mu;
        return m;
    }

    friend bool operator==(const TargetSpec& a, const TargetSpec& b) noexcept {
        if (a.weights != b.weights || a.components.size() != b.components.size()) return false;
        for (std::size_t i = 0; i < a.components.size(); ++i)
            if (a.components[i].mu != b.components[i].mu || a.components[i].sigma != b.components[i].sigma)
                return false;
        return true;
    }
};

/// The two-component mixture used throughout the simulations.
inline TargetSpec default_target() {
    return TargetSpec{{0.35, 0.65}, {{-2.0, 0.8}, {1.0, 1.3}}};
}

inline double mixture_pdf(const TargetSpec& spec, double x) noexcept {
    double p = 0.0;
    for (std::size_t i = 0; i < spec.weights.size(); ++i) p += spec.weights[i] * spec.components[i].pdf(x);
    return p;
}

inline double mixture_cdf(const TargetSpec& spec, double x) noexcept {
    double c = 0.0;
    for (std::size_t i = 0; i < spec.weights.size(); ++i) c += spec.weights[i] * spec.components[i].cdf(x);
    return std::clamp(c, 0.0, 1.0);
}

/// Inverse of mixture_cdf by bracketed bisection; u must lie in (0, 1).
inline double mixture_quantile(const TargetSpec& spec, double u) {
    if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("mixture_quantile: u must lie in (0,1)");
    double lo = spec.components.front().mu, hi = lo;
    for (const auto& c : spec.components) {
        lo = std::min(lo, c.mu - 40.0 * c.sigma);
        hi = std::max(hi, c.mu + 40.0 * c.sigma);
    }
    for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mixture_cdf(spec, mid) < u) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// Categorical component draw followed by a normal draw, n times.
inline std::vector<double> sample_mixture(const TargetSpec& spec, std::size_t n, Rng& rng) {
    std::vector<double> out;
    out.reserve(n);
    if (n == 0) return out;
    std::vector<double> cumulative(spec.weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < spec.weights.size(); ++i) cumulative[i] = (acc += spec.weights[i]);
    std::uniform_real_distribution<double> unif(0.0, acc);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double u = unif(rng);
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                               spec.components.size() - 1);
        const auto& c = spec.components[idx];
        out.push_back(c.mu + c.sigma * normal(rng));
    }
    return out;
}

/// Polynomially decaying contamination level amplitude * (t + offset)^(-q),
/// or a constant amplitude when frozen.
struct BiasSchedule {
    GaussianComponent bias_component{3.0, 1.0};
    double amplitude = 0.2;
    double offset = 5.0;
    double q = 0.5;
    bool frozen = false;

    void validate() const {
        if (!(amplitude >= 0.0 && amplitude <= 1.0)) throw std::invalid_argument("bias: amplitude must lie in [0,1]");
        if (!(offset >= 0.0)) throw std::invalid_argument("bias: offset must be nonnegative");
        if (!(q > 0.0)) throw std::invalid_argument("bias: q must be positive");
        if (!(bias_component.sigma > 0.0)) throw std::invalid_argument("bias: component sigma must be positive");
    }

    double level_at(std::size_t t) const {
        if (frozen || amplitude == 0.0) return amplitude;
        const double base = static_cast<double>(t) + offset;
        if (!(base > 0.0)) throw std::invalid_argument("bias: t + offset must be positive");
        return amplitude * std::pow(base, -q);
    }
};

/// (1 - b_t) * spec + b_t * bias_component. Returns spec unchanged when b_t == 0.
inline TargetSpec biased_spec_at(const TargetSpec& spec, const BiasSchedule& sched, std::size_t t) {
    const double level = sched.level_at(t);
    if (!(level >= 0.0 && level <= 1.0))
        throw std::domain_error("bias level " + std::to_string(level) + " outside [0,1]");
    if (level == 0.0) return spec;
    TargetSpec out;
    out.weights.reserve(spec.weights.size() + 1);
    for (double w : spec.weights) out.weights.push_back((1.0 - level) * w);
    out.weights.push_back(level);
    out.components = spec.components;
    out.components.push_back(sched.bias_component);
    return out;
}

/// Uniform evaluation grid shared by every grid metric.
struct EvalGrid {
    std::vector<double> points;
    double lo = 0.0;
    double hi = 0.0;

    std::size_t size() const noexcept { return points.size(); }
    double spacing() const noexcept { return (hi - lo) / static_cast<double>(points.size() - 1); }
};

inline EvalGrid make_uniform_grid(double lo, double hi, std::size_t m_grid) {
    if (m_grid < 2) throw std::invalid_argument("grid: m_grid must be at least 2");
    if (!(hi > lo)) throw std::invalid_argument("grid: hi must exceed lo");
    EvalGrid g{std::vector<double>(m_grid), lo, hi};
    const double step = (hi - lo) / static_cast<double>(m_grid - 1);
    for (std::size_t i = 0; i < m_grid; ++i) g.points[i] = lo + step * static_cast<double>(i);
    g.points.back() = hi;
    return g;
}

/// Grid over [min(mu - k sigma), max(mu + k sigma)] across all target
/// components, plus the bias component when one is active.
inline EvalGrid build_grid(const TargetSpec& spec, std::size_t m_grid, double tail_sds,
                           const std::optional<GaussianComponent>& extra = std::nullopt) {
    if (!(tail_sds > 0.0)) throw std::invalid_argument("grid: tail_sds must be positive");
    double lo = spec.components.front().mu, hi = lo;
    auto cover = [&](const GaussianComponent& c) {
        lo = std::min(lo, c.mu - tail_sds * c.sigma);
        hi = std::max(hi, c.mu + tail_sds * c.sigma);
    };
    for (const auto& c : spec.components) cover(c);
    if (extra) cover(*extra);
    return make_uniform_grid(lo, hi, m_grid);
}

inline std::vector<double> mixture_cdf_on_grid(const TargetSpec& spec, const EvalGrid& grid) {
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = mixture_cdf(spec, grid.points[i]);
    return out;
}

inline std::vector<double> mixture_pdf_on_grid(const TargetSpec& spec, const EvalGrid& grid) {
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = mixture_pdf(spec, grid.points[i]);
    return out;
}

}  // namespace crtlab
