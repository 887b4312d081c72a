#pragma once

// Plug-in generative estimators over an append-only sample store: the
// empirical CDF (bandwidth zero) and a Gaussian KDE whose bandwidth follows a
// deterministic schedule in the iteration index.
//
// Grid evaluation is binned. The store keeps a histogram whose bin edges
// include every grid point (an integer number of bins per grid cell), so the
// ECDF at grid points is exact. For kernel sums each sample is also split
// linearly between the two bin edges around it; grid points sit on those
// edges, so a KDE evaluation is a discrete correlation of the edge weights
// against a kernel table indexed by integer edge offsets. Stores with no more
// samples than bin edges are summed exactly instead.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crtlab/distributions.hpp"
#include "crtlab/random.hpp"

namespace crtlab {

enum class EstimatorKind { ecdf, kde };

inline const char* to_string(EstimatorKind k) noexcept { return k == EstimatorKind::ecdf ? "ecdf" : "kde"; }

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::ecdf;
    double h0 = 0.5;  ///< base bandwidth (KDE only)
    double p = 0.5;   ///< baseline rate; the schedule decays as t^(-p/2)
    std::size_t bin_count = 800;  ///< minimum number of histogram bins

    void validate(std::size_t m_grid) const {
        if (kind == EstimatorKind::kde && !(h0 > 0.0)) throw std::invalid_argument("estimator: KDE requires h0 > 0");
        if (!(p > 0.0)) throw std::invalid_argument("estimator: p must be positive");
        if (bin_count < 4 * m_grid)
            throw std::invalid_argument("estimator: bin_count must be at least 4 * m_grid (" +
                                        std::to_string(4 * m_grid) + ")");
    }
};

inline double bandwidth_at(const EstimatorSpec& spec, std::size_t t) {
    if (t < 1) throw std::invalid_argument("bandwidth_at: t must be >= 1");
    if (spec.kind == EstimatorKind::ecdf) return 0.0;
    return spec.h0 * std::pow(static_cast<double>(t), -spec.p / 2.0);
}

enum class Origin { real, synthetic };

struct Batch {
    std::size_t iteration = 0;
    std::size_t count = 0;
    Origin origin = Origin::real;
};

/// Append-only accumulation of every sample the estimator has been trained on.
class SampleStore {
public:
    SampleStore(const EvalGrid& grid, std::size_t min_bins)
        : lo_(grid.lo), hi_(grid.hi), m_grid_(grid.size()), points_(grid.points) {
        if (m_grid_ < 2) throw std::invalid_argument("store: grid needs at least two points");
        bins_per_cell_ = (min_bins + (m_grid_ - 2)) / (m_grid_ - 1);
        if (bins_per_cell_ == 0) bins_per_cell_ = 1;
        n_bins_ = bins_per_cell_ * (m_grid_ - 1);
        width_ = (hi_ - lo_) / static_cast<double>(n_bins_);
        bin_counts_.assign(n_bins_, 0);
        edge_weights_.assign(n_bins_ + 1, 0.0);
    }

    void append(std::span<const double> batch, Origin origin, std::size_t iteration) {
        for (double v : batch)
            if (!std::isfinite(v)) throw std::invalid_argument("store: batch contains non-finite values");
        values_.insert(values_.end(), batch.begin(), batch.end());
        batches_.push_back({iteration, batch.size(), origin});
        for (double v : batch) {
            if (v <= lo_) {
                ++underflow_;
                edge_weights_.front() += 1.0;
            } else if (v > hi_) {
                ++overflow_;
                edge_weights_.back() += 1.0;
            } else {
                const std::size_t bin = bin_of(v);
                ++bin_counts_[bin];
                const double frac = std::clamp((v - lo_) / width_ - static_cast<double>(bin), 0.0, 1.0);
                edge_weights_[bin] += 1.0 - frac;
                edge_weights_[bin + 1] += frac;
            }
        }
    }

    const std::vector<double>& values() const noexcept { return values_; }
    const std::vector<Batch>& batches() const noexcept { return batches_; }
    const std::vector<std::uint64_t>& bin_counts() const noexcept { return bin_counts_; }
    /// Linear-binning mass at the n_bins + 1 bin edges; out-of-range samples
    /// sit on the end edges. Values at or below lo count as underflow.
    const std::vector<double>& edge_weights() const noexcept { return edge_weights_; }
    std::uint64_t underflow() const noexcept { return underflow_; }
    std::uint64_t overflow() const noexcept { return overflow_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    std::size_t bin_count() const noexcept { return n_bins_; }
    std::size_t bins_per_cell() const noexcept { return bins_per_cell_; }
    double bin_width() const noexcept { return width_; }

    bool matches(const EvalGrid& grid) const noexcept {
        return grid.size() == m_grid_ && grid.lo == lo_ && grid.hi == hi_ && grid.points == points_;
    }

private:
    // Cell c is (x_c, x_{c+1}], decided by exact comparison with the grid
    // points so that "v <= x_g" and "bin < g * bins_per_cell" agree.
    std::size_t bin_of(double v) const {
        const double pos = (v - lo_) / width_;
        std::size_t c = std::min(static_cast<std::size_t>(pos) / bins_per_cell_, m_grid_ - 2);
        while (c > 0 && v <= points_[c]) --c;
        while (c + 2 < m_grid_ && v > points_[c + 1]) ++c;
        const double inner = (v - points_[c]) / width_;
        const auto sub = std::min(static_cast<std::size_t>(std::max(inner, 0.0)), bins_per_cell_ - 1);
        return c * bins_per_cell_ + sub;
    }

    double lo_, hi_;
    std::size_t m_grid_;
    std::vector<double> points_;
    std::size_t bins_per_cell_ = 1;
    std::size_t n_bins_ = 0;
    double width_ = 0.0;
    std::vector<double> values_;
    std::vector<Batch> batches_;
    std::vector<std::uint64_t> bin_counts_;
    std::vector<double> edge_weights_;
    std::uint64_t underflow_ = 0;
    std::uint64_t overflow_ = 0;
};

/// The current estimator: its spec, the accumulated data, and the bandwidth
/// for the iteration it was last trained at.
class EstimatorState {
public:
    EstimatorState(EstimatorSpec spec, const EvalGrid& grid) : spec_(spec), store_(grid, spec.bin_count) {
        spec_.validate(grid.size());
        bandwidth_ = bandwidth_at(spec_, 1);
    }

    /// Appends a batch and retrains for iteration t. The initial estimator
    /// (t = 0) uses the t = 1 bandwidth.
    void ingest(std::span<const double> batch, Origin origin, std::size_t t) {
        store_.append(batch, origin, t);
        t_ = t;
        bandwidth_ = bandwidth_at(spec_, t < 1 ? 1 : t);
    }

    const EstimatorSpec& spec() const noexcept { return spec_; }
    const SampleStore& store() const noexcept { return store_; }
    std::size_t iteration() const noexcept { return t_; }
    double bandwidth() const noexcept { return bandwidth_; }
    std::size_t sample_count() const noexcept { return store_.size(); }

private:
    EstimatorSpec spec_;
    SampleStore store_;
    std::size_t t_ = 0;
    double bandwidth_ = 0.0;
};

namespace detail {

inline void require_compatible(const SampleStore& store, const EvalGrid& grid) {
    if (store.empty()) throw std::runtime_error("no data");
    if (!store.matches(grid)) throw std::invalid_argument("estimator store was built for a different grid");
}

/// sum_i weight_i * kernel((grid_g - edge_i) / h) for every grid point g.
template <class Kernel>
std::vector<double> binned_kernel_sum_impl(const SampleStore& store, const EvalGrid& grid, double h, Kernel kernel) {
    const std::size_t nb = store.bin_count();
    const std::size_t r = store.bins_per_cell();
    const double w = store.bin_width();
    // Grid point g is edge g*r, so the offset k = g*r - i lies in [-nb, nb].
    // Stored reversed so the inner loop runs forward in i:
    // table[nb - g*r + i] holds kernel(k * w / h) for k = g*r - i.
    std::vector<double> table(2 * nb + 1);
    for (std::size_t j = 0; j < table.size(); ++j) {
        const double k = static_cast<double>(nb) - static_cast<double>(j);
        table[j] = kernel(k * w / h);
    }
    const std::vector<double>& weights = store.edge_weights();
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double* row = table.data() + (nb - g * r);
        double acc = 0.0;
        for (std::size_t i = 0; i <= nb; ++i) acc += weights[i] * row[i];
        out[g] = acc;
    }
    return out;
}

/// sum_j kernel((grid_g - v_j) / h) over the stored values, by direct
/// summation when that is no more work than the binned correlation.
template <class Kernel>
std::vector<double> kernel_sum(const SampleStore& store, const EvalGrid& grid, double h, Kernel kernel) {
    if (store.size() > store.bin_count() + 1) return binned_kernel_sum_impl(store, grid, h, kernel);
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double acc = 0.0;
        for (double v : store.values()) acc += kernel((grid.points[g] - v) / h);
        out[g] = acc;
    }
    return out;
}

}  // namespace detail

/// Trapezoid integral of values sampled on the grid.
inline double trapezoid(std::span<const double> values, const EvalGrid& grid) {
    double acc = 0.0;
    for (std::size_t i = 1; i < values.size(); ++i)
        acc += 0.5 * (values[i] + values[i - 1]) * (grid.points[i] - grid.points[i - 1]);
    return acc;
}

inline void normalize_density(std::vector<double>& pdf, const EvalGrid& grid) {
    const double mass = trapezoid(pdf, grid);
    if (!(mass > 0.0)) throw std::runtime_error("density has no mass on the grid");
    for (double& v : pdf) v /= mass;
}

/// Gaussian-kernel density of the store at the given bandwidth,
/// renormalized to unit trapezoid mass on the grid.
inline std::vector<double> kernel_density_on_grid(const SampleStore& store, const EvalGrid& grid, double h) {
    detail::require_compatible(store, grid);
    if (!(h > 0.0)) throw std::invalid_argument("no density for bandwidth 0");
    auto pdf = detail::kernel_sum(store, grid, h, [](double z) { return normal_pdf(z); });
    normalize_density(pdf, grid);
    return pdf;
}

/// Exact empirical CDF of the store at the grid points (grid points are bin
/// edges, so cumulative bin counts suffice).
inline std::vector<double> empirical_cdf_on_grid(const SampleStore& store, const EvalGrid& grid) {
    detail::require_compatible(store, grid);
    const double n = static_cast<double>(store.size());
    const std::size_t r = store.bins_per_cell();
    std::vector<double> out(grid.size());
    std::uint64_t cum = store.underflow();
    std::size_t next_bin = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (; next_bin < g * r; ++next_bin) cum += store.bin_counts()[next_bin];
        out[g] = static_cast<double>(cum) / n;
    }
    return out;
}

inline std::vector<double> cdf_on_grid(const EstimatorState& state, const EvalGrid& grid) {
    const SampleStore& store = state.store();
    if (state.bandwidth() == 0.0) return empirical_cdf_on_grid(store, grid);
    detail::require_compatible(store, grid);
    const double n = static_cast<double>(store.size());
    auto out = detail::kernel_sum(store, grid, state.bandwidth(), [](double z) { return normal_cdf(z); });
    double running = 0.0;
    for (double& v : out) {
        v = std::min(v / n, 1.0);
        running = std::max(running, v);  // round-off can break monotonicity in the far tail
        v = running;
    }
    return out;
}

inline std::vector<double> pdf_on_grid(const EstimatorState& state, const EvalGrid& grid) {
    if (state.bandwidth() == 0.0) throw std::invalid_argument("no density for bandwidth 0");
    return kernel_density_on_grid(state.store(), grid, state.bandwidth());
}

/// Smoothed bootstrap: a uniformly chosen stored value plus h_t * N(0,1).
/// With h_t = 0 this is plain bootstrap resampling.
inline std::vector<double> sample_synthetic(const EstimatorState& state, std::size_t n, Rng& rng) {
    std::vector<double> out;
    if (n == 0) return out;
    const auto& values = state.store().values();
    if (values.empty()) throw std::runtime_error("no data");
    out.reserve(n);
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    const double h = state.bandwidth();
    if (h == 0.0) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(values[pick(rng)]);
    } else {
        std::normal_distribution<double> noise(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double base = values[pick(rng)];
            out.push_back(base + h * noise(rng));
        }
    }
    return out;
}

}  // namespace crtlab
