#pragma once

// Predicted convergence rates under contaminated recursive training, and
// numeric checks of the identities and bounds behind them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crtlab {

enum class Regime { real_data_limited, baseline_limited, bias_limited, boundary };

inline const char* to_string(Regime r) noexcept {
    switch (r) {
        case Regime::real_data_limited: return "real_data_limited";
        case Regime::baseline_limited: return "baseline_limited";
        case Regime::bias_limited: return "bias_limited";
        case Regime::boundary: return "boundary";
    }
    return "?";
}

struct RatePrediction {
    double exponent = 0.0;
    bool log_factor = false;
    Regime regime = Regime::boundary;
};

/// Ties closer than this are treated as exact phase boundaries.
inline constexpr double kRateTieTolerance = 1e-12;

/// Rate exponent min(p, q, alpha) of d(P_t, P0); a log t factor appears when
/// min(p, q) == alpha.
inline RatePrediction predicted_rate(double p, double alpha, std::optional<double> q = std::nullopt) {
    if (!(p > 0.0)) throw std::invalid_argument("predicted_rate: p must be positive");
    if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("predicted_rate: alpha must lie in (0,1]");
    if (q && !(*q > 0.0)) throw std::invalid_argument("predicted_rate: q must be positive");
    const double model = q ? std::min(p, *q) : p;
    RatePrediction out;
    out.exponent = std::min(model, alpha);
    if (std::abs(model - alpha) <= kRateTieTolerance) {
        out.log_factor = true;
        out.regime = Regime::boundary;
    } else if (alpha < model) {
        out.regime = Regime::real_data_limited;
    } else if (q && *q < p) {
        out.regime = Regime::bias_limited;
    } else {
        out.regime = Regime::baseline_limited;
    }
    return out;
}

enum class BaselineMethod { kde, wgan };
enum class BaselineMetric { w1, mmd };

/// Uncontaminated minimax rates (as positive exponents of n) for density
/// smoothness s in dimension d.
inline double baseline_rate_table(BaselineMethod method, BaselineMetric metric, double s, std::size_t d) {
    if (!(s > 0.0) || d < 1) throw std::invalid_argument("baseline_rate_table: need s > 0 and d >= 1");
    if (metric == BaselineMetric::mmd) return 0.5;
    const double dd = static_cast<double>(d);
    return method == BaselineMethod::kde ? s / (2.0 * s + dd) : (s + 1.0) / (2.0 * s + 2.0 + dd);
}

/// (1/t) sum_{j=1}^t j^(-q), by direct summation.
inline double cesaro_average(double q, std::size_t t) {
    if (!(q > 0.0) || t < 1) throw std::invalid_argument("cesaro_average: need q > 0 and t >= 1");
    double acc = 0.0;
    for (std::size_t j = t; j >= 1; --j) acc += std::pow(static_cast<double>(j), -q);  // small terms first
    return acc / static_cast<double>(t);
}

/// Range of a ratio sequence over t, with the last value and whether the
/// sequence is monotone over its second half.
struct RatioReport {
    double min_ratio = std::numeric_limits<double>::infinity();
    double max_ratio = -std::numeric_limits<double>::infinity();
    double last_ratio = 0.0;
    bool eventually_monotone = true;
};

/// cesaro_average(q, t) / (t^-min(q,1) * (q == 1 ? log t : 1)) for t in [10, t_max].
inline RatioReport check_cesaro_bound(double q, std::size_t t_max) {
    if (t_max < 100) throw std::invalid_argument("check_cesaro_bound: t_max must be >= 100");
    RatioReport rep;
    double partial = 0.0;
    std::vector<double> ratios;
    ratios.reserve(t_max);
    for (std::size_t t = 1; t <= t_max; ++t) {
        const double td = static_cast<double>(t);
        partial += std::pow(td, -q);
        if (t < 10) continue;
        double envelope = std::pow(td, -std::min(q, 1.0));
        if (q == 1.0) envelope *= std::log(td);
        ratios.push_back(partial / td / envelope);
    }
    for (double r : ratios) {
        rep.min_ratio = std::min(rep.min_ratio, r);
        rep.max_ratio = std::max(rep.max_ratio, r);
    }
    rep.last_ratio = ratios.back();
    const std::size_t half = ratios.size() / 2;
    bool up = true, down = true;
    for (std::size_t i = half + 1; i < ratios.size(); ++i) {
        up = up && ratios[i] >= ratios[i - 1];
        down = down && ratios[i] <= ratios[i - 1];
    }
    rep.eventually_monotone = up || down;
    return rep;
}

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("log_gamma: x must be positive");
    return std::lgamma(x);
}

struct IdentityCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double abs_diff = 0.0;
};

/// prod_{k=j}^{t-2} (k+1-alpha)/(k+1) by direct product, against
/// Gamma(t-alpha) Gamma(j+1) / (Gamma(j+1-alpha) Gamma(t)).
inline IdentityCheck check_product_gamma_identity(std::size_t j, std::size_t t, double alpha) {
    if (j < 1 || t < j + 2) throw std::invalid_argument("product identity: need 1 <= j <= t-2");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("product identity: alpha must lie in [0,1)");
    double lhs = 1.0;
    for (std::size_t k = j; k <= t - 2; ++k) {
        const double kd = static_cast<double>(k);
        lhs *= (kd + 1.0 - alpha) / (kd + 1.0);
    }
    const double td = static_cast<double>(t), jd = static_cast<double>(j);
    const double log_rhs = (log_gamma(td - alpha) - log_gamma(td)) + (log_gamma(jd + 1.0) - log_gamma(jd + 1.0 - alpha));
    const double rhs = std::exp(log_rhs);
    return {lhs, rhs, std::abs(lhs - rhs)};
}

struct GammaRatioReport {
    RatioReport upper;  ///< Gamma(t - alpha)/Gamma(t) * t^alpha
    RatioReport lower;  ///< Gamma(j + 1)/Gamma(j + 1 - alpha) * j^(-alpha)
};

/// Gamma(t-alpha)/Gamma(t) * t^alpha and Gamma(j+1)/Gamma(j+1-alpha) * j^-alpha
/// over the given indices (each >= 2).
inline GammaRatioReport check_gamma_ratio_bounds(double alpha, const std::vector<std::size_t>& t_range) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("gamma ratios: alpha must lie in (0,1)");
    if (t_range.empty()) throw std::invalid_argument("gamma ratios: empty range");
    GammaRatioReport rep;
    auto record = [](RatioReport& r, double v) {
        r.min_ratio = std::min(r.min_ratio, v);
        r.max_ratio = std::max(r.max_ratio, v);
        r.last_ratio = v;
    };
    for (std::size_t t : t_range) {
        if (t < 2) throw std::invalid_argument("gamma ratios: t must be >= 2");
        const double td = static_cast<double>(t);
        record(rep.upper, std::exp(log_gamma(td - alpha) - log_gamma(td) + alpha * std::log(td)));
        record(rep.lower, std::exp(log_gamma(td + 1.0) - log_gamma(td + 1.0 - alpha) - alpha * std::log(td)));
    }
    return rep;
}

struct EnvelopeResult {
    std::vector<double> d;      ///< d_0 .. d_{t_max}
    double fitted_exponent = 0.0;
    bool log_normalized = false;
};

/// Iterates the deterministic scalar envelope
///   d_t = C (t^-p + [t^-min(q,1)]) + ((1 - alpha)/t) sum_{j<t} d_j,  d_0 = C.
/// The mixing coefficient (1 - alpha)/t is exact, so C only scales the driving
/// terms. Fits the decay exponent by least squares of log d_t on log t over the
/// last decade [t_max/10, t_max]. At ties min(p,q) == alpha the sequence is
/// divided by log(t+1) before fitting.
inline EnvelopeResult simulate_recursion_envelope(double p, double alpha, double C, std::size_t t_max,
                                                  std::optional<double> q = std::nullopt) {
    if (!(p > 0.0) || !(alpha > 0.0) || alpha > 1.0 || !(C > 0.0) || t_max < 100)
        throw std::invalid_argument("recursion envelope: invalid parameters");
    EnvelopeResult out;
    out.d.resize(t_max + 1);
    out.d[0] = C;
    double partial = C;  // S_{t-1} = sum_{j<t} d_j
    for (std::size_t t = 1; t <= t_max; ++t) {
        const double td = static_cast<double>(t);
        double drive = std::pow(td, -p);
        if (q) drive += std::pow(td, -std::min(*q, 1.0));
        out.d[t] = C * drive + (1.0 - alpha) / td * partial;
        partial += out.d[t];
    }
    out.log_normalized = predicted_rate(p, alpha, q).log_factor;

    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (std::size_t t = std::max<std::size_t>(t_max / 10, 2); t <= t_max; ++t) {
        const double td = static_cast<double>(t);
        double y = out.d[t];
        if (out.log_normalized) y /= std::log(td + 1.0);
        const double lx = std::log(td), ly = std::log(y);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly; n += 1;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    out.fitted_exponent = -slope;
    return out;
}

}  // namespace crtlab
