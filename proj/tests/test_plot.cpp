#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "crtlab/plot.hpp"
#include "crtlab/recursion.hpp"
#include "xml_lite.hpp"

using namespace crtlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "crtlab_test_plot";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<xml_lite::Element> parse_file(const fs::path& p) { return xml_lite::parse(slurp(p)); }

std::vector<const xml_lite::Element*> with_class(const std::vector<xml_lite::Element>& els, const std::string& name,
                                                 const std::string& cls) {
    std::vector<const xml_lite::Element*> out;
    for (const auto& e : els)
        if (e.name == name && e.attrs.count("class") && e.attrs.at("class") == cls) out.push_back(&e);
    return out;
}

std::vector<std::pair<double, double>> parse_points(const std::string& s) {
    std::vector<std::pair<double, double>> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) {
        const auto comma = tok.find(',');
        out.emplace_back(std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1)));
    }
    return out;
}

EvalGrid grid() { return build_grid(default_target(), 200, 6.0); }

}  // namespace

TEST(XmlLite, RejectsMalformedInput) {
    EXPECT_NO_THROW(xml_lite::parse("<a x=\"1\"><b/>t&amp;u</a>"));
    EXPECT_THROW(xml_lite::parse("<a><b></a>"), std::runtime_error);
    EXPECT_THROW(xml_lite::parse("<a x=1/>"), std::runtime_error);
    EXPECT_THROW(xml_lite::parse("<a>&nbsp;</a>"), std::runtime_error);
    EXPECT_THROW(xml_lite::parse("<a/><b/>"), std::runtime_error);
    EXPECT_THROW(xml_lite::parse("<a x=\"1\" x=\"2\"/>"), std::runtime_error);
}

TEST(RatePlot, WellFormedWithTheoryCurve) {
    std::vector<RatePlotPoint> pts;
    for (double a : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0})
        pts.push_back({a, std::min(a, 0.5) + 0.02, 0.05, std::min(a, 0.5)});
    const auto path = scratch("rate.svg");
    emit_rate_plot(pts, path, "ECDF <W1> & friends");
    const auto els = parse_file(path);
    EXPECT_EQ(els.front().name, "svg");

    const auto markers = with_class(els, "g", "markers");
    ASSERT_EQ(markers.size(), 1u);
    int n = 0;
    for (const auto& e : els) {
        if (e.name != "circle") continue;
        const double a = std::stod(e.attrs.at("data-alpha"));
        EXPECT_DOUBLE_EQ(std::stod(e.attrs.at("data-theory")), std::min(a, 0.5));
        ++n;
    }
    EXPECT_EQ(n, 10);

    // theory polyline is flat for alpha >= 0.5
    const auto theory = with_class(els, "polyline", "theory");
    ASSERT_EQ(theory.size(), 1u);
    const auto tp = parse_points(theory[0]->attrs.at("points"));
    ASSERT_EQ(tp.size(), 10u);
    for (std::size_t i = 5; i < tp.size(); ++i) EXPECT_DOUBLE_EQ(tp[i].second, tp[4].second);
    for (std::size_t i = 1; i < 5; ++i) EXPECT_LT(tp[i].second, tp[i - 1].second);  // rising in data = lower y

    bool has_title = false, has_xlabel = false, has_legend = false;
    for (const auto& e : els) {
        has_title = has_title || (e.name == "title" && e.text == "ECDF <W1> & friends");
        has_xlabel = has_xlabel || (e.name == "text" && e.attrs.count("class") && e.attrs.at("class") == "xlabel");
        has_legend = has_legend || (e.name == "g" && e.attrs.count("class") && e.attrs.at("class") == "legend");
    }
    EXPECT_TRUE(has_title);
    EXPECT_TRUE(has_xlabel);
    EXPECT_TRUE(has_legend);
}

TEST(RatePlot, ZeroSdGivesZeroWidthBand) {
    const auto path = scratch("rate_zero.svg");
    emit_rate_plot({{0.2, 0.19, 0.0, 0.2}, {0.6, 0.48, 0.0, 0.5}, {1.0, 0.52, 0.0, 0.5}}, path);
    const auto els = parse_file(path);
    const auto band = with_class(els, "polygon", "sd-band");
    ASSERT_EQ(band.size(), 1u);
    const auto pts = parse_points(band[0]->attrs.at("points"));
    ASSERT_EQ(pts.size(), 6u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(pts[i].first, pts[5 - i].first);
        EXPECT_DOUBLE_EQ(pts[i].second, pts[5 - i].second);
    }
}

TEST(RatePlot, Errors) {
    EXPECT_THROW(emit_rate_plot({{0.5, 0.5, 0.0, 0.5}}, scratch("one.svg")), std::invalid_argument);
    EXPECT_THROW(emit_rate_plot({{0.5, 0.5, 0.0, 0.5}, {1.0, 0.5, 0.0, 0.5}}, "/proc/crtlab/none/x.svg"),
                 std::runtime_error);
}

TEST(PhaseDiagram, RegimeColorsAndBoundary) {
    std::vector<double> g{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    const auto path = scratch("phase.svg");
    emit_phase_diagram(g, g, path);
    const auto els = parse_file(path);
    std::size_t cells = 0, boundary = 0;
    auto find = [&](const char* p, const char* a) -> const xml_lite::Element* {
        for (const auto& e : els)
            if (e.name == "rect" && e.attrs.count("data-p") && e.attrs.at("data-p") == p && e.attrs.at("data-alpha") == a)
                return &e;
        return nullptr;
    };
    for (const auto& e : els) {
        if (e.name != "rect" || !e.attrs.count("data-p")) continue;
        ++cells;
        const bool diag = e.attrs.at("data-p") == e.attrs.at("data-alpha");
        EXPECT_EQ(e.attrs.at("data-boundary") == "true", diag) << e.attrs.at("data-p") << ' ' << e.attrs.at("data-alpha");
        if (diag) {
            ++boundary;
            EXPECT_EQ(e.attrs.at("data-regime"), "boundary");
        }
    }
    EXPECT_EQ(cells, 100u);
    EXPECT_EQ(boundary, 10u);

    const auto* red = find("0.8", "0.2");
    ASSERT_NE(red, nullptr);
    EXPECT_EQ(red->attrs.at("data-regime"), "real_data_limited");
    EXPECT_EQ(red->attrs.at("fill"), regime_color(Regime::real_data_limited));
    EXPECT_EQ(red->attrs.at("fill"), "#d62728");
    const auto* blue = find("0.2", "0.8");
    ASSERT_NE(blue, nullptr);
    EXPECT_EQ(blue->attrs.at("data-regime"), "baseline_limited");
    EXPECT_EQ(blue->attrs.at("fill"), "#1f77b4");
    EXPECT_EQ(with_class(els, "line", "boundary").size(), 1u);

    EXPECT_THROW(emit_phase_diagram({}, g, scratch("bad.svg")), std::invalid_argument);
    EXPECT_THROW(emit_phase_diagram(g, g, "/proc/crtlab/none/x.svg"), std::runtime_error);
}

TEST(DensitySnapshot, EcdfDrawsCdf) {
    const auto g = grid();
    RecursionConfig c;
    c.alpha = 0.5;
    c.T = 50;
    c.seed = 3;
    const auto run = run_recursion(c, default_target(), g);
    const auto path = scratch("snap_ecdf.svg");
    const auto info = emit_density_snapshot(run.final_state, default_target(), g, path);
    EXPECT_TRUE(info.is_cdf);
    const auto els = parse_file(path);
    const auto curves = with_class(els, "g", "curves");
    ASSERT_EQ(curves.size(), 1u);
    EXPECT_EQ(curves[0]->attrs.at("data-curve"), "cdf");
    EXPECT_DOUBLE_EQ(std::stod(curves[0]->attrs.at("data-max-gap")), info.max_gap);
    // Kolmogorov distance from the grid CDFs
    const auto est = cdf_on_grid(run.final_state, g);
    const auto truth = mixture_cdf_on_grid(default_target(), g);
    double gap = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) gap = std::max(gap, std::abs(est[i] - truth[i]));
    EXPECT_DOUBLE_EQ(info.max_gap, gap);
}

TEST(DensitySnapshot, KdeAtAlphaOneMatchesTarget) {
    const auto g = grid();
    RecursionConfig c;
    c.alpha = 1.0;
    c.T = 2000;
    c.seed = 11;
    c.estimator.kind = EstimatorKind::kde;
    const auto run = run_recursion(c, default_target(), g);
    const auto path = scratch("snap_kde.svg");
    const auto info = emit_density_snapshot(run.final_state, default_target(), g, path);
    EXPECT_FALSE(info.is_cdf);
    EXPECT_LT(info.max_gap, 0.05);
    const auto els = parse_file(path);
    const auto curves = with_class(els, "g", "curves");
    ASSERT_EQ(curves.size(), 1u);
    EXPECT_EQ(curves[0]->attrs.at("data-curve"), "density");
    EXPECT_LT(std::stod(curves[0]->attrs.at("data-max-gap")), 0.05);
    EXPECT_EQ(with_class(els, "polyline", "estimate").size(), 1u);
    EXPECT_EQ(with_class(els, "polyline", "target").size(), 1u);
}

TEST(DensitySnapshot, EmptyStoreRejected) {
    const auto g = grid();
    EstimatorState empty(EstimatorSpec{}, g);
    EXPECT_THROW(emit_density_snapshot(empty, default_target(), g, scratch("empty.svg")), std::invalid_argument);
}

TEST(SvgNum, ShortestRoundTrip) {
    EXPECT_EQ(svg::num(0.1), "0.1");
    EXPECT_EQ(svg::num(0.25), "0.25");
    EXPECT_EQ(svg::num(1.0), "1");
    EXPECT_EQ(std::stod(svg::num(0.1 + 0.2)), 0.1 + 0.2);
    EXPECT_EQ(svg::escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
}
