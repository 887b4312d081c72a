#pragma once

// Distributional discrepancies used to track convergence: W1 from grid CDFs,
// exact W1 between two sample sets, and a plug-in MMD between grid densities.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "crtlab/distributions.hpp"
#include "crtlab/estimators.hpp"

namespace crtlab {

struct MetricSettings {
    double mmd_kernel_bandwidth = 1.0;  ///< gamma in k(x,y) = exp(-(x-y)^2 / (2 gamma^2))
    bool report_squared_mmd = false;

    void validate() const {
        if (!(mmd_kernel_bandwidth > 0.0)) throw std::invalid_argument("metrics: mmd kernel bandwidth must be positive");
    }
};

struct Distances {
    double w1 = 0.0;
    double mmd = 0.0;
};

/// Trapezoid integral of |F_a - F_b| over the grid.
inline double w1_grid(std::span<const double> cdf_a, std::span<const double> cdf_b, const EvalGrid& grid) {
    if (cdf_a.size() != cdf_b.size() || cdf_a.size() != grid.size())
        throw std::invalid_argument("w1_grid: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 1; i < cdf_a.size(); ++i) {
        const double left = std::abs(cdf_a[i - 1] - cdf_b[i - 1]);
        const double right = std::abs(cdf_a[i] - cdf_b[i]);
        acc += 0.5 * (left + right) * (grid.points[i] - grid.points[i - 1]);
    }
    return acc;
}

/// Exact 1-D W1 between the empirical measures of xs and ys:
/// integral over u in (0,1) of |F_x^{-1}(u) - F_y^{-1}(u)|.
inline double w1_quantile(std::vector<double> xs, std::vector<double> ys) {
    if (xs.empty() || ys.empty()) throw std::invalid_argument("w1_quantile: empty input");
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    const std::size_t n = xs.size(), m = ys.size();
    if (n == m) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += std::abs(xs[i] - ys[i]);
        return acc / static_cast<double>(n);
    }
    // Walk the merged breakpoints i/n and j/m; both quantile functions are
    // constant between consecutive breakpoints. Compare i*m with j*n in
    // integers to avoid drift.
    double acc = 0.0;
    std::size_t i = 0, j = 0;
    double u_prev = 0.0;
    while (i < n && j < m) {
        const auto next_x = static_cast<unsigned long long>(i + 1) * m;
        const auto next_y = static_cast<unsigned long long>(j + 1) * n;
        const double u_next = static_cast<double>(std::min(next_x, next_y)) / (static_cast<double>(n) * m);
        acc += (u_next - u_prev) * std::abs(xs[i] - ys[j]);
        u_prev = u_next;
        if (next_x <= next_y) ++i;
        if (next_y <= next_x) ++j;
    }
    return acc;
}

/// Gaussian-kernel Gram matrix on a grid, weighted by trapezoid weights. Build
/// once per (grid, gamma) and reuse for every MMD evaluation.
class GridMmd {
public:
    GridMmd(const EvalGrid& grid, const MetricSettings& settings) : n_(grid.size()), settings_(settings) {
        settings_.validate();
        std::vector<double> w(n_, 0.0);
        for (std::size_t i = 1; i < n_; ++i) {
            const double half = 0.5 * (grid.points[i] - grid.points[i - 1]);
            w[i - 1] += half;
            w[i] += half;
        }
        const double g2 = settings_.mmd_kernel_bandwidth * settings_.mmd_kernel_bandwidth;
        gram_.resize(n_ * n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) {
                const double d = grid.points[i] - grid.points[j];
                gram_[i * n_ + j] = w[i] * w[j] * std::exp(-d * d / (2.0 * g2));
            }
    }

    double squared(std::span<const double> pdf_a, std::span<const double> pdf_b) const {
        if (pdf_a.size() != n_ || pdf_b.size() != n_) throw std::invalid_argument("mmd_grid: length mismatch");
        std::vector<double> delta(n_);
        for (std::size_t i = 0; i < n_; ++i) delta[i] = pdf_a[i] - pdf_b[i];
        double acc = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double* row = gram_.data() + i * n_;
            double inner = 0.0;
            for (std::size_t j = 0; j < n_; ++j) inner += row[j] * delta[j];
            acc += delta[i] * inner;
        }
        if (acc < 0.0) {
            if (acc < -1e-14) std::fprintf(stderr, "crtlab: mmd^2 round-off %.3e clamped to 0\n", acc);
            acc = 0.0;
        }
        return acc;
    }

    /// MMD or MMD^2 according to the settings.
    double operator()(std::span<const double> pdf_a, std::span<const double> pdf_b) const {
        const double sq = squared(pdf_a, pdf_b);
        return settings_.report_squared_mmd ? sq : std::sqrt(sq);
    }

private:
    std::size_t n_;
    MetricSettings settings_;
    std::vector<double> gram_;
};

inline double mmd_grid(std::span<const double> pdf_a, std::span<const double> pdf_b, const EvalGrid& grid,
                       const MetricSettings& settings) {
    if (pdf_a.size() != pdf_b.size() || pdf_a.size() != grid.size())
        throw std::invalid_argument("mmd_grid: length mismatch");
    return GridMmd(grid, settings)(pdf_a, pdf_b);
}

/// Per-iteration measurement of an estimator against a fixed target. Caches the
/// target's grid CDF/density and the MMD Gram matrix.
///
/// ECDF states have no density; for MMD they are smoothed with a Gaussian
/// kernel of one grid spacing.
class StateEvaluator {
public:
    StateEvaluator(const TargetSpec& target, const EvalGrid& grid, const MetricSettings& settings)
        : grid_(grid),
          target_cdf_(mixture_cdf_on_grid(target, grid)),
          target_pdf_(mixture_pdf_on_grid(target, grid)),
          mmd_(grid, settings) {
        normalize_density(target_pdf_, grid_);
    }

    Distances operator()(const EstimatorState& state) const {
        const auto cdf = cdf_on_grid(state, grid_);
        const auto pdf = state.bandwidth() > 0.0 ? pdf_on_grid(state, grid_)
                                                 : kernel_density_on_grid(state.store(), grid_, grid_.spacing());
        return {w1_grid(target_cdf_, cdf, grid_), mmd_(target_pdf_, pdf)};
    }

    /// Distances for a raw sample set (e.g. generator output): W1 from its
    /// empirical CDF, MMD from its one-grid-spacing smoothed density.
    Distances of_store(const SampleStore& store) const {
        const auto cdf = empirical_cdf_on_grid(store, grid_);
        const auto pdf = kernel_density_on_grid(store, grid_, grid_.spacing());
        return {w1_grid(target_cdf_, cdf, grid_), mmd_(target_pdf_, pdf)};
    }

    const std::vector<double>& target_cdf() const noexcept { return target_cdf_; }
    const std::vector<double>& target_pdf() const noexcept { return target_pdf_; }
    const EvalGrid& grid() const noexcept { return grid_; }

private:
    EvalGrid grid_;
    std::vector<double> target_cdf_;
    std::vector<double> target_pdf_;
    GridMmd mmd_;
};

inline Distances eval_state(const EstimatorState& state, const TargetSpec& target, const EvalGrid& grid,
                            const MetricSettings& settings) {
    return StateEvaluator(target, grid, settings)(state);
}

}  // namespace crtlab
