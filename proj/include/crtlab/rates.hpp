#pragma once

// Empirical convergence rates: least-squares slope of log d_t against log M_t
// after a burn-in, optionally after dividing out the log t factor that appears
// on the phase boundary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "crtlab/recursion.hpp"
#include "crtlab/theory.hpp"

namespace crtlab {

enum class Metric { w1, mmd };

inline const char* to_string(Metric m) noexcept { return m == Metric::w1 ? "w1" : "mmd"; }

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double rate = 0.0;  ///< -slope
    double r_squared = 0.0;
    double burn_in_fraction = 0.0;
    bool log_normalized = false;
    std::size_t n_points = 0;
};

/// Ordinary least squares on the points t > burn_in_fraction * T. Points with
/// nonpositive loss are dropped; fewer than three survivors is an error.
inline RateFit fit_rate(const Trajectory& traj, double burn_in_fraction, bool normalize_log,
                        Metric metric = Metric::w1) {
    if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0))
        throw std::invalid_argument("fit_rate: burn_in_fraction must lie in [0,1)");
    const std::size_t T = traj.points.empty() ? 0 : traj.points.back().t;
    const double cutoff = burn_in_fraction * static_cast<double>(T);

    std::vector<double> xs, ys;
    for (const auto& p : traj.points) {
        if (!(static_cast<double>(p.t) > cutoff)) continue;
        double d = metric == Metric::w1 ? p.w1 : p.mmd;
        if (normalize_log) d /= std::log(static_cast<double>(p.t) + 1.0);
        if (!(d > 0.0) || !std::isfinite(d) || p.M_t == 0) continue;
        xs.push_back(std::log(static_cast<double>(p.M_t)));
        ys.push_back(std::log(d));
    }
    if (xs.size() < 3) throw std::runtime_error("degenerate trajectory");

    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw std::runtime_error("degenerate trajectory");

    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.rate = -fit.slope;
    fit.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
    fit.burn_in_fraction = burn_in_fraction;
    fit.log_normalized = normalize_log;
    fit.n_points = xs.size();
    return fit;
}

/// True on the phase boundary |min(p, q) - alpha| <= eps.
inline bool should_normalize(double alpha_effective, double p, std::optional<double> q, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("should_normalize: eps must be positive");
    const double model = q ? std::min(p, *q) : p;
    return std::abs(model - alpha_effective) <= eps;
}

struct RateSummary {
    std::vector<RateFit> per_replicate;
    double mean_rate = 0.0;
    double sd_rate = 0.0;  ///< sample (n-1) standard deviation; 0 for a single fit
    double theory_rate = 0.0;
    bool theory_log_flag = false;
};

inline RateSummary summarize(std::vector<RateFit> fits, double p, std::optional<double> q, double alpha) {
    if (fits.empty()) throw std::invalid_argument("summarize: no fits");
    RateSummary s;
    const double n = static_cast<double>(fits.size());
    for (const auto& f : fits) s.mean_rate += f.rate;
    s.mean_rate /= n;
    if (fits.size() > 1) {
        double ss = 0.0;
        for (const auto& f : fits) ss += (f.rate - s.mean_rate) * (f.rate - s.mean_rate);
        s.sd_rate = std::sqrt(ss / (n - 1.0));
    }
    const auto pred = predicted_rate(p, alpha, q);
    s.theory_rate = pred.exponent;
    s.theory_log_flag = pred.log_factor;
    s.per_replicate = std::move(fits);
    return s;
}

}  // namespace crtlab
