#pragma once

// Contaminated recursive training. Each iteration adds m1 fresh real samples
// and m2 synthetic samples from the previous estimator to one growing dataset,
// retrains on all of it, and records the distance to the true target.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crtlab/distributions.hpp"
#include "crtlab/estimators.hpp"
#include "crtlab/metrics.hpp"
#include "crtlab/random.hpp"

namespace crtlab {

/// Synthetic samples per iteration: round(m1 (1 - alpha) / alpha).
inline std::size_t m2_of(std::size_t m1, double alpha) {
    if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("alpha must lie in (0, 1]");
    if (alpha == 1.0) return 0;
    return static_cast<std::size_t>(std::llround(static_cast<double>(m1) * (1.0 - alpha) / alpha));
}

struct RecursionConfig {
    std::size_t m1 = 50;
    double alpha = 1.0;
    std::size_t T = 2000;
    EstimatorSpec estimator{};
    std::optional<BiasSchedule> bias{};
    std::uint64_t seed = 0;
    MetricSettings metric_settings{};

    std::size_t m2() const { return m2_of(m1, alpha); }

    /// m1 / (m1 + m2) after rounding m2; theory comparisons use this value.
    double effective_alpha() const {
        return static_cast<double>(m1) / static_cast<double>(m1 + m2());
    }

    void validate() const {
        if (m1 == 0) throw std::invalid_argument("recursion: m1 must be positive");
        if (T < 1) throw std::invalid_argument("recursion: T must be >= 1");
        (void)m2();
        metric_settings.validate();
        if (bias) bias->validate();
    }
};

struct TrajectoryPoint {
    std::size_t t = 0;
    std::size_t M_t = 0;
    double w1 = 0.0;
    double mmd = 0.0;
    double bias_level = 0.0;

    friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

struct Trajectory {
    RecursionConfig config;
    std::vector<TrajectoryPoint> points;
};

/// Observation hook fired right before each batch is ingested. `store_size` is
/// the number of samples in the estimator the batch was drawn against.
struct StepEvent {
    std::size_t t = 0;
    Origin origin = Origin::real;
    std::size_t count = 0;
    std::size_t store_size = 0;
};
using StepObserver = std::function<void(const StepEvent&)>;

struct RecursionRun {
    Trajectory trajectory;
    EstimatorState final_state;
};

/// Shared CRT/BCRT driver. With config.bias set, real batches at step t are
/// drawn from the contaminated mixture; distances are always measured against
/// the uncontaminated target.
inline RecursionRun run_recursion(const RecursionConfig& config, const TargetSpec& target, const EvalGrid& grid,
                                  const StepObserver& observer = {}) {
    config.validate();
    target.validate();
    const std::size_t m1 = config.m1;
    const std::size_t m2 = config.m2();

    Rng rng(config.seed);
    EstimatorState state(config.estimator, grid);
    const StateEvaluator evaluate(target, grid, config.metric_settings);

    auto real_source = [&](std::size_t t) -> std::pair<TargetSpec, double> {
        if (!config.bias) return {target, 0.0};
        return {biased_spec_at(target, *config.bias, t), config.bias->level_at(t)};
    };
    auto notify = [&](std::size_t t, Origin origin, std::size_t count) {
        if (observer) observer({t, origin, count, state.sample_count()});
    };

    Trajectory traj{config, {}};
    traj.points.reserve(config.T + 1);

    {
        auto [source, level] = real_source(0);
        auto x0 = sample_mixture(source, m1, rng);
        notify(0, Origin::real, x0.size());
        state.ingest(x0, Origin::real, 0);
        const auto d = evaluate(state);
        traj.points.push_back({0, state.sample_count(), d.w1, d.mmd, level});
    }

    for (std::size_t t = 1; t <= config.T; ++t) {
        // Synthetic batch comes from the estimator as it stood after step t-1.
        auto synthetic = sample_synthetic(state, m2, rng);
        auto [source, level] = real_source(t);
        auto real = sample_mixture(source, m1, rng);
        if (m2 > 0) {
            notify(t, Origin::synthetic, synthetic.size());
            state.ingest(synthetic, Origin::synthetic, t);
        }
        notify(t, Origin::real, real.size());
        state.ingest(real, Origin::real, t);
        const auto d = evaluate(state);
        traj.points.push_back({t, state.sample_count(), d.w1, d.mmd, level});
    }
    return {std::move(traj), std::move(state)};
}

inline Trajectory run_crt(const RecursionConfig& config, const TargetSpec& target, const EvalGrid& grid) {
    if (config.bias) throw std::invalid_argument("run_crt: config carries a bias schedule; use run_bcrt");
    return run_recursion(config, target, grid).trajectory;
}

inline Trajectory run_bcrt(const RecursionConfig& config, const TargetSpec& target, const EvalGrid& grid) {
    if (!config.bias) throw std::invalid_argument("run_bcrt: config has no bias schedule");
    return run_recursion(config, target, grid).trajectory;
}

// ---------------------------------------------------------------------------
// CSV: replicate,t,M_t,w1,mmd,bias_level

inline constexpr const char* kTrajectoryCsvHeader = "replicate,t,M_t,w1,mmd,bias_level";

inline void write_trajectory_rows(std::ostream& os, std::size_t replicate, const Trajectory& traj) {
    char buf[160];
    for (const auto& p : traj.points) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%.17g,%.17g\n", replicate, p.t, p.M_t, p.w1, p.mmd,
                      p.bias_level);
        os << buf;
    }
}

struct CsvRow {
    std::size_t replicate = 0;
    TrajectoryPoint point;
};

inline std::vector<CsvRow> read_trajectory_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kTrajectoryCsvHeader)
        throw std::runtime_error("trajectory csv: missing or unexpected header");
    std::vector<CsvRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        CsvRow row;
        char extra = 0;
        const int n = std::sscanf(line.c_str(), "%zu,%zu,%zu,%lf,%lf,%lf%c", &row.replicate, &row.point.t,
                                  &row.point.M_t, &row.point.w1, &row.point.mmd, &row.point.bias_level, &extra);
        if (n != 6) throw std::runtime_error("trajectory csv: malformed row at line " + std::to_string(lineno));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace crtlab
