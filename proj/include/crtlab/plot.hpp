#pragma once

// Static SVG figures. Every figure carries its plotted numbers as data-*
// attributes and in a <metadata> block so tests can read values back without
// rasterizing.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "crtlab/distributions.hpp"
#include "crtlab/estimators.hpp"
#include "crtlab/theory.hpp"

namespace crtlab {

namespace svg {

/// Shortest round-trip decimal form.
inline std::string num(double v) {
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Fixed two-decimal coordinate.
inline std::string px(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, std::round(v * 100.0) / 100.0, std::chars_format::fixed, 2);
    return std::string(buf, res.ptr);
}

inline std::string escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

inline void write_file(const std::filesystem::path& out, const std::string& content) {
    if (out.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(out.parent_path(), ec);
    }
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + out.string());
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("write failed: " + out.string());
}

/// Affine map from data to pixel coordinates for one plotting panel.
struct Frame {
    double x0, x1, y0, y1;  // data range
    double left = 70, top = 40, width = 520, height = 320;

    double X(double x) const { return left + (x - x0) / (x1 - x0) * width; }
    double Y(double y) const { return top + height - (y - y0) / (y1 - y0) * height; }
};

inline void open_svg(std::ostringstream& os, double w, double h, std::string_view title) {
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(w) << "\" height=\"" << px(h)
       << "\" viewBox=\"0 0 " << px(w) << ' ' << px(h) << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
       << "<title>" << escape(title) << "</title>\n"
       << "<rect x=\"0\" y=\"0\" width=\"" << px(w) << "\" height=\"" << px(h) << "\" fill=\"white\"/>\n";
}

inline void axes(std::ostringstream& os, const Frame& f, std::string_view xlabel, std::string_view ylabel,
                 int xticks = 5, int yticks = 5) {
    os << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n"
       << "<line x1=\"" << px(f.left) << "\" y1=\"" << px(f.top + f.height) << "\" x2=\"" << px(f.left + f.width)
       << "\" y2=\"" << px(f.top + f.height) << "\"/>\n"
       << "<line x1=\"" << px(f.left) << "\" y1=\"" << px(f.top) << "\" x2=\"" << px(f.left) << "\" y2=\""
       << px(f.top + f.height) << "\"/>\n</g>\n";
    os << "<g class=\"ticks\" fill=\"black\">\n";
    for (int i = 0; i <= xticks; ++i) {
        const double v = f.x0 + (f.x1 - f.x0) * i / xticks;
        os << "<text x=\"" << px(f.X(v)) << "\" y=\"" << px(f.top + f.height + 16) << "\" text-anchor=\"middle\">"
           << escape(num(std::round(v * 1000.0) / 1000.0)) << "</text>\n";
    }
    for (int i = 0; i <= yticks; ++i) {
        const double v = f.y0 + (f.y1 - f.y0) * i / yticks;
        os << "<text x=\"" << px(f.left - 6) << "\" y=\"" << px(f.Y(v) + 4) << "\" text-anchor=\"end\">"
           << escape(num(std::round(v * 1000.0) / 1000.0)) << "</text>\n";
    }
    os << "</g>\n";
    os << "<text class=\"xlabel\" x=\"" << px(f.left + f.width / 2) << "\" y=\"" << px(f.top + f.height + 36)
       << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
    os << "<text class=\"ylabel\" x=\"" << px(18) << "\" y=\"" << px(f.top + f.height / 2)
       << "\" text-anchor=\"middle\" transform=\"rotate(-90 " << px(18) << ' ' << px(f.top + f.height / 2) << ")\">"
       << escape(ylabel) << "</text>\n";
}

inline std::string points_attr(const Frame& f, const std::vector<double>& xs, const std::vector<double>& ys) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) s += ' ';
        s += px(f.X(xs[i]));
        s += ',';
        s += px(f.Y(ys[i]));
    }
    return s;
}

inline void legend(std::ostringstream& os, const Frame& f,
                   const std::vector<std::pair<std::string, std::string>>& entries) {
    double y = f.top + 10;
    const double x = f.left + f.width - 150;
    os << "<g class=\"legend\">\n";
    for (const auto& [label, color] : entries) {
        os << "<line x1=\"" << px(x) << "\" y1=\"" << px(y) << "\" x2=\"" << px(x + 24) << "\" y2=\"" << px(y)
           << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
           << "<text x=\"" << px(x + 30) << "\" y=\"" << px(y + 4) << "\">" << escape(label) << "</text>\n";
        y += 18;
    }
    os << "</g>\n";
}

}  // namespace svg

inline constexpr const char* kEmpiricalColor = "#1f77b4";
inline constexpr const char* kTheoryColor = "#d62728";

/// One alpha column of a rate-vs-alpha figure.
struct RatePlotPoint {
    double alpha = 0.0;
    double mean_rate = 0.0;
    double sd_rate = 0.0;
    double theory_rate = 0.0;
};

/// Empirical mean rate with a +/- one sd band and the theory curve, against alpha.
inline void emit_rate_plot(std::vector<RatePlotPoint> points, const std::filesystem::path& out,
                           std::string_view title = "Convergence rate", std::string_view metric = "W1") {
    if (points.size() < 2) throw std::invalid_argument("rate plot: need at least two alpha values");
    std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.alpha < b.alpha; });

    double ymax = 0.6;
    double ymin = 0.0;
    for (const auto& p : points) {
        ymax = std::max({ymax, p.mean_rate + p.sd_rate, p.theory_rate});
        ymin = std::min(ymin, p.mean_rate - p.sd_rate);
    }
    ymax = std::ceil(ymax * 10.0 + 0.5) / 10.0;
    ymin = std::floor(ymin * 10.0) / 10.0;
    const svg::Frame f{0.0, 1.0, ymin, ymax};

    std::vector<double> xs, mean, lo, hi, theory;
    for (const auto& p : points) {
        xs.push_back(p.alpha);
        mean.push_back(p.mean_rate);
        lo.push_back(p.mean_rate - p.sd_rate);
        hi.push_back(p.mean_rate + p.sd_rate);
        theory.push_back(p.theory_rate);
    }

    std::ostringstream os;
    svg::open_svg(os, 640, 420, title);
    os << "<metadata>{\"figure\":\"rate\",\"metric\":\"" << svg::escape(metric) << "\",\"points\":[";
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        os << (i ? "," : "") << "{\"alpha\":" << svg::num(p.alpha) << ",\"mean_rate\":" << svg::num(p.mean_rate)
           << ",\"sd_rate\":" << svg::num(p.sd_rate) << ",\"theory_rate\":" << svg::num(p.theory_rate) << '}';
    }
    os << "]}</metadata>\n";
    os << "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << svg::escape(title) << "</text>\n";
    svg::axes(os, f, "real-data fraction alpha", std::string("fitted rate (") + std::string(metric) + ")");

    // band: upper edge left to right, lower edge right to left
    std::vector<double> band_x = xs, band_y = hi;
    for (std::size_t i = xs.size(); i-- > 0;) {
        band_x.push_back(xs[i]);
        band_y.push_back(lo[i]);
    }
    os << "<polygon class=\"sd-band\" points=\"" << svg::points_attr(f, band_x, band_y) << "\" fill=\""
       << kEmpiricalColor << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    os << "<polyline class=\"empirical\" points=\"" << svg::points_attr(f, xs, mean) << "\" fill=\"none\" stroke=\""
       << kEmpiricalColor << "\" stroke-width=\"2\"/>\n";
    os << "<polyline class=\"theory\" points=\"" << svg::points_attr(f, xs, theory) << "\" fill=\"none\" stroke=\""
       << kTheoryColor << "\" stroke-width=\"2\" stroke-dasharray=\"6 3\"/>\n";
    os << "<g class=\"markers\">\n";
    for (const auto& p : points) {
        os << "<circle cx=\"" << svg::px(f.X(p.alpha)) << "\" cy=\"" << svg::px(f.Y(p.mean_rate))
           << "\" r=\"3\" fill=\"" << kEmpiricalColor << "\" data-alpha=\"" << svg::num(p.alpha) << "\" data-mean=\""
           << svg::num(p.mean_rate) << "\" data-sd=\"" << svg::num(p.sd_rate) << "\" data-theory=\""
           << svg::num(p.theory_rate) << "\"/>\n";
    }
    os << "</g>\n";
    svg::legend(os, f, {{"empirical mean +/- sd", kEmpiricalColor}, {"theory", kTheoryColor}});
    os << "</svg>\n";
    svg::write_file(out, os.str());
}

inline const char* regime_color(Regime r) noexcept {
    switch (r) {
        case Regime::real_data_limited: return "#d62728";
        case Regime::baseline_limited: return "#1f77b4";
        case Regime::bias_limited: return "#2ca02c";
        case Regime::boundary: return "#7f7f7f";
    }
    return "#000000";
}

/// Heatmap of predicted regimes over (alpha, p); the line p = alpha marks the
/// phase transition.
inline void emit_phase_diagram(std::vector<double> p_grid, std::vector<double> alpha_grid,
                               const std::filesystem::path& out) {
    if (p_grid.empty() || alpha_grid.empty()) throw std::invalid_argument("phase diagram: grids must be nonempty");
    std::sort(p_grid.begin(), p_grid.end());
    std::sort(alpha_grid.begin(), alpha_grid.end());

    auto edges = [](const std::vector<double>& g, double lo_clamp, double hi_clamp) {
        std::vector<double> e(g.size() + 1);
        for (std::size_t i = 1; i < g.size(); ++i) e[i] = 0.5 * (g[i - 1] + g[i]);
        const double half = g.size() > 1 ? 0.5 * (g[1] - g[0]) : 0.05;
        const double half_end = g.size() > 1 ? 0.5 * (g.back() - g[g.size() - 2]) : 0.05;
        e.front() = std::max(lo_clamp, g.front() - half);
        e.back() = std::min(hi_clamp, g.back() + half_end);
        return e;
    };
    const auto ae = edges(alpha_grid, 0.0, 1.0);
    const auto pe = edges(p_grid, 0.0, std::numeric_limits<double>::infinity());
    const svg::Frame f{ae.front(), ae.back(), pe.front(), pe.back()};

    std::ostringstream os;
    svg::open_svg(os, 640, 420, "Phase diagram");
    os << "<metadata>{\"figure\":\"phase\",\"n_p\":" << p_grid.size() << ",\"n_alpha\":" << alpha_grid.size()
       << "}</metadata>\n";
    os << "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">Phase diagram</text>\n";
    os << "<g class=\"cells\">\n";
    for (std::size_t i = 0; i < p_grid.size(); ++i) {
        for (std::size_t j = 0; j < alpha_grid.size(); ++j) {
            const auto pred = predicted_rate(p_grid[i], alpha_grid[j]);
            const double x = f.X(ae[j]), y = f.Y(pe[i + 1]);
            const double w = f.X(ae[j + 1]) - x, h = f.Y(pe[i]) - y;
            os << "<rect x=\"" << svg::px(x) << "\" y=\"" << svg::px(y) << "\" width=\"" << svg::px(w)
               << "\" height=\"" << svg::px(h) << "\" fill=\"" << regime_color(pred.regime)
               << "\" fill-opacity=\"0.75\" stroke=\"white\" data-p=\"" << svg::num(p_grid[i]) << "\" data-alpha=\""
               << svg::num(alpha_grid[j]) << "\" data-regime=\"" << to_string(pred.regime) << "\" data-rate=\""
               << svg::num(pred.exponent) << "\" data-boundary=\"" << (pred.regime == Regime::boundary ? "true" : "false")
               << "\"/>\n";
        }
    }
    os << "</g>\n";
    const double d0 = std::max(f.x0, f.y0), d1 = std::min(f.x1, f.y1);
    if (d1 > d0) {
        os << "<line class=\"boundary\" x1=\"" << svg::px(f.X(d0)) << "\" y1=\"" << svg::px(f.Y(d0)) << "\" x2=\""
           << svg::px(f.X(d1)) << "\" y2=\"" << svg::px(f.Y(d1))
           << "\" stroke=\"black\" stroke-width=\"2\" stroke-dasharray=\"4 2\"/>\n";
    }
    svg::axes(os, f, "real-data fraction alpha", "baseline rate p");
    svg::legend(os, f, {{"real-data limited", regime_color(Regime::real_data_limited)},
                        {"baseline limited", regime_color(Regime::baseline_limited)},
                        {"boundary", regime_color(Regime::boundary)}});
    os << "</svg>\n";
    svg::write_file(out, os.str());
}

struct SnapshotInfo {
    bool is_cdf = false;  ///< ECDF states are drawn as distribution functions
    double max_gap = 0.0;  ///< max_g |estimate(g) - target(g)|
};

/// Overlay of the estimator and the true target on the grid. ECDF states have
/// no density and are drawn as CDFs; KDE states are drawn as densities.
inline SnapshotInfo emit_density_snapshot(const EstimatorState& state, const TargetSpec& target, const EvalGrid& grid,
                                          const std::filesystem::path& out, std::string_view title = "Estimate vs target") {
    if (state.store().empty()) throw std::invalid_argument("density snapshot: empty store");
    SnapshotInfo info;
    info.is_cdf = state.spec().kind == EstimatorKind::ecdf;
    std::vector<double> est, truth;
    if (info.is_cdf) {
        est = cdf_on_grid(state, grid);
        truth = mixture_cdf_on_grid(target, grid);
    } else {
        est = pdf_on_grid(state, grid);
        truth = mixture_pdf_on_grid(target, grid);
    }
    double ymax = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        info.max_gap = std::max(info.max_gap, std::abs(est[i] - truth[i]));
        ymax = std::max({ymax, est[i], truth[i]});
    }
    ymax = info.is_cdf ? 1.0 : std::ceil(ymax * 20.0 + 0.5) / 20.0;
    const svg::Frame f{grid.lo, grid.hi, 0.0, ymax};

    std::ostringstream os;
    svg::open_svg(os, 640, 420, title);
    os << "<metadata>{\"figure\":\"snapshot\",\"curve\":\"" << (info.is_cdf ? "cdf" : "density")
       << "\",\"max_gap\":" << svg::num(info.max_gap) << ",\"samples\":" << state.sample_count()
       << ",\"iteration\":" << state.iteration() << ",\"bandwidth\":" << svg::num(state.bandwidth())
       << "}</metadata>\n";
    os << "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << svg::escape(title) << "</text>\n";
    svg::axes(os, f, "x", info.is_cdf ? "F(x)" : "f(x)");
    os << "<g class=\"curves\" data-curve=\"" << (info.is_cdf ? "cdf" : "density") << "\" data-max-gap=\""
       << svg::num(info.max_gap) << "\">\n";
    os << "<polyline class=\"target\" points=\"" << svg::points_attr(f, grid.points, truth)
       << "\" fill=\"none\" stroke=\"" << kTheoryColor << "\" stroke-width=\"2\"/>\n";
    os << "<polyline class=\"estimate\" points=\"" << svg::points_attr(f, grid.points, est)
       << "\" fill=\"none\" stroke=\"" << kEmpiricalColor << "\" stroke-width=\"1.5\"/>\n";
    os << "</g>\n";
    svg::legend(os, f, {{"estimate", kEmpiricalColor}, {"target", kTheoryColor}});
    os << "</svg>\n";
    svg::write_file(out, os.str());
    return info;
}

}  // namespace crtlab
