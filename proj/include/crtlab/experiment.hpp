#pragma once

// Experiment orchestration: YAML/JSON configuration, the (cell, replicate)
// task pool, and everything written to the output directory.
//
// Output layout under output_dir:
//   cells/<cell>.csv        trajectories of every replicate
//   cells/<cell>.json       per-cell rate summary (W1 and MMD)
//   plots/*.svg             rate-vs-alpha figures and replicate-0 snapshots
//   config.json             resolved configuration
//   summary.json            empirical vs theory rates for all cells
//   manifest.json           config hash, timestamp, file list, failures

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "crtlab/distributions.hpp"
#include "crtlab/estimators.hpp"
#include "crtlab/metrics.hpp"
#include "crtlab/neuralgen.hpp"
#include "crtlab/plot.hpp"
#include "crtlab/random.hpp"
#include "crtlab/rates.hpp"
#include "crtlab/recursion.hpp"
#include "crtlab/theory.hpp"

namespace crtlab {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind { crt_ecdf, crt_kde, crt_neural, bcrt_ecdf, bcrt_kde, theory_check };

inline const char* to_string(ExperimentKind k) noexcept {
    switch (k) {
        case ExperimentKind::crt_ecdf: return "crt_ecdf";
        case ExperimentKind::crt_kde: return "crt_kde";
        case ExperimentKind::crt_neural: return "crt_neural";
        case ExperimentKind::bcrt_ecdf: return "bcrt_ecdf";
        case ExperimentKind::bcrt_kde: return "bcrt_kde";
        case ExperimentKind::theory_check: return "theory_check";
    }
    return "unknown";
}

inline std::optional<ExperimentKind> kind_from_string(std::string_view s) {
    for (auto k : {ExperimentKind::crt_ecdf, ExperimentKind::crt_kde, ExperimentKind::crt_neural,
                   ExperimentKind::bcrt_ecdf, ExperimentKind::bcrt_kde, ExperimentKind::theory_check})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

inline bool is_bcrt(ExperimentKind k) noexcept { return k == ExperimentKind::bcrt_ecdf || k == ExperimentKind::bcrt_kde; }

/// Configuration problem tied to a key path and a 1-based source line (0 when
/// the key was not present in the file).
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, int line, const std::string& message)
        : std::runtime_error(format(key, line, message)), key_(std::move(key)), line_(line) {}

    const std::string& key() const noexcept { return key_; }
    int line() const noexcept { return line_; }

private:
    static std::string format(const std::string& key, int line, const std::string& message) {
        std::string s = "config: " + key + ": " + message;
        if (line > 0) s += " (line " + std::to_string(line) + ")";
        return s;
    }
    std::string key_;
    int line_;
};

struct NeuralSettings {
    std::size_t total_per_iteration = 500;
    std::size_t eval_samples = 20000;
    std::map<double, std::size_t> T_by_alpha{{0.1, 200}};
    MlpSpec mlp{};
    TrainSpec train{};
};

/// One point of the parameter sweep.
struct Cell {
    double alpha = 1.0;
    std::optional<double> q;

    /// Stable identifier used for file names and summary keys.
    std::string id() const {
        std::string s = "alpha=" + svg::num(alpha);
        if (q) s += "_q=" + svg::num(*q);
        return s;
    }
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::crt_ecdf;
    std::size_t replicates = 50;
    std::uint64_t base_seed = 0;
    std::string output_dir = "crtlab_out";
    std::size_t workers = 0;  ///< 0 selects the hardware concurrency

    TargetSpec target = default_target();
    std::size_t grid_points = 200;
    double tail_sds = 6.0;

    std::size_t m1 = 50;
    std::size_t T = 2000;
    EstimatorSpec estimator{};
    std::vector<double> alphas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<double> qs{};
    BiasSchedule bias{};

    MetricSettings metrics{};
    double burn_in_fraction = 0.1;
    double log_eps = 1e-9;

    NeuralSettings neural{};
    bool density_snapshots = true;

    std::vector<Cell> cells() const {
        std::vector<Cell> out;
        if (kind == ExperimentKind::theory_check) return out;
        for (double a : alphas) {
            if (is_bcrt(kind)) {
                for (double q : qs) out.push_back({a, q});
            } else {
                out.push_back({a, std::nullopt});
            }
        }
        return out;
    }

    std::size_t T_for(double alpha) const {
        if (kind != ExperimentKind::crt_neural) return T;
        for (const auto& [a, t] : neural.T_by_alpha)
            if (std::abs(a - alpha) <= 1e-12) return t;
        return T;
    }

    EvalGrid grid() const {
        if (is_bcrt(kind)) return build_grid(target, grid_points, tail_sds, bias.bias_component);
        return build_grid(target, grid_points, tail_sds);
    }

    /// Resolved configuration, itself a valid config file. Runtime-only options
    /// (output_dir, workers) are excluded so the hash does not depend on them.
    nlohmann::ordered_json to_json() const {
        using nlohmann::ordered_json;
        ordered_json j;
        j["kind"] = to_string(kind);
        j["replicates"] = replicates;
        j["base_seed"] = base_seed;
        ordered_json comps = ordered_json::array();
        for (const auto& c : target.components) comps.push_back({{"mu", c.mu}, {"sigma", c.sigma}});
        j["target"] = {{"weights", target.weights}, {"components", comps}};
        j["grid"] = {{"points", grid_points}, {"tail_sds", tail_sds}};
        j["recursion"] = {{"m1", m1}, {"T", T}};
        j["estimator"] = {{"h0", estimator.h0}, {"p", estimator.p}, {"bin_count", estimator.bin_count}};
        j["sweep"] = {{"alpha", alphas}};
        if (is_bcrt(kind)) j["sweep"]["q"] = qs;
        if (is_bcrt(kind)) {
            j["bias"] = {{"amplitude", bias.amplitude},
                         {"offset", bias.offset},
                         {"frozen", bias.frozen},
                         {"component", {{"mu", bias.bias_component.mu}, {"sigma", bias.bias_component.sigma}}}};
        }
        j["metrics"] = {{"mmd_kernel_bandwidth", metrics.mmd_kernel_bandwidth},
                        {"squared_mmd", metrics.report_squared_mmd}};
        j["rates"] = {{"burn_in_fraction", burn_in_fraction}, {"log_eps", log_eps}};
        if (kind == ExperimentKind::crt_neural) {
            ordered_json tba = ordered_json::object();
            for (const auto& [a, t] : neural.T_by_alpha) tba[svg::num(a)] = t;
            j["neural"] = {{"total_per_iteration", neural.total_per_iteration},
                           {"eval_samples", neural.eval_samples},
                           {"T_by_alpha", tba},
                           {"mlp",
                            {{"latent_dim", neural.mlp.latent_dim},
                             {"hidden_width", neural.mlp.hidden_width},
                             {"hidden_layers", neural.mlp.hidden_layers},
                             {"leaky_slope", neural.mlp.leaky_slope}}},
                           {"train",
                            {{"lr", neural.train.lr},
                             {"weight_decay", neural.train.weight_decay},
                             {"batch_size", neural.train.batch_size},
                             {"epochs_per_iteration", neural.train.epochs_per_iteration},
                             {"adam_beta1", neural.train.adam_beta1},
                             {"adam_beta2", neural.train.adam_beta2},
                             {"adam_eps", neural.train.adam_eps}}}};
        }
        j["density_snapshots"] = density_snapshots;
        return j;
    }

    /// 16 hex digits of FNV-1a over the canonical JSON form.
    std::string hash() const {
        const auto h = detail::fnv1a(to_json().dump());
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

/// Defaults reproducing the published simulation settings for each kind.
inline ExperimentConfig default_config(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    switch (kind) {
        case ExperimentKind::crt_ecdf:
            c.estimator.kind = EstimatorKind::ecdf;
            break;
        case ExperimentKind::crt_kde:
            c.estimator.kind = EstimatorKind::kde;
            c.estimator.h0 = 0.5;
            break;
        case ExperimentKind::bcrt_ecdf:
            c.estimator.kind = EstimatorKind::ecdf;
            c.m1 = 25;
            c.replicates = 100;
            c.alphas = {0.25, 0.5, 0.75};
            c.qs = {0.25, 0.5, 0.75};
            break;
        case ExperimentKind::bcrt_kde:
            c.estimator.kind = EstimatorKind::kde;
            c.estimator.h0 = 2.0;
            c.m1 = 50;
            c.replicates = 20;
            c.alphas = {0.25, 0.5, 0.75};
            c.qs = {0.25, 0.5, 0.75};
            break;
        case ExperimentKind::crt_neural:
            c.T = 150;
            break;
        case ExperimentKind::theory_check:
            c.replicates = 1;
            c.alphas.clear();
            c.density_snapshots = false;
            break;
    }
    return c;
}

namespace detail {

inline int line_of(const YAML::Node& n) {
    const auto m = n.Mark();
    return m.line >= 0 ? m.line + 1 : 0;
}

/// Typed access to one YAML mapping with unknown-key rejection.
class Section {
public:
    Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
        if (node_.IsNull()) return;
        if (!node_.IsMap()) throw ConfigError(display(), line_of(node_), "expected a mapping");
    }

    void allow(std::initializer_list<const char*> keys) const {
        if (!node_.IsMap()) return;
        for (const auto& kv : node_) {
            const auto k = kv.first.as<std::string>();
            if (std::find_if(keys.begin(), keys.end(), [&](const char* a) { return k == a; }) == keys.end())
                throw ConfigError(join(k), line_of(kv.first), "unknown key");
        }
    }

    bool has(const char* key) const { return node_.IsMap() && node_[key].IsDefined() && !node_[key].IsNull(); }
    YAML::Node get(const char* key) const { return node_[key]; }
    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    Section sub(const char* key) const { return has(key) ? Section(node_[key], join(key)) : Section(YAML::Node(), join(key)); }

    template <class Check>
    void read_double(const char* key, double& out, Check valid, const char* requirement) const {
        if (!has(key)) return;
        const auto n = node_[key];
        double v;
        try {
            v = n.as<double>();
        } catch (const YAML::Exception&) {
            throw ConfigError(join(key), line_of(n), "expected a number");
        }
        if (!std::isfinite(v) || !valid(v)) throw ConfigError(join(key), line_of(n), requirement);
        out = v;
    }

    void read_size(const char* key, std::size_t& out, std::size_t min_value) const {
        if (!has(key)) return;
        const auto n = node_[key];
        const auto v = parse_u64(n, join(key));
        if (v < min_value) throw ConfigError(join(key), line_of(n), "must be >= " + std::to_string(min_value));
        out = static_cast<std::size_t>(v);
    }

    void read_u64(const char* key, std::uint64_t& out) const {
        if (has(key)) out = parse_u64(node_[key], join(key));
    }

    void read_bool(const char* key, bool& out) const {
        if (!has(key)) return;
        try {
            out = node_[key].as<bool>();
        } catch (const YAML::Exception&) {
            throw ConfigError(join(key), line_of(node_[key]), "expected true or false");
        }
    }

    void read_string(const char* key, std::string& out) const {
        if (!has(key)) return;
        const auto n = node_[key];
        if (!n.IsScalar()) throw ConfigError(join(key), line_of(n), "expected a string");
        out = n.as<std::string>();
    }

    /// A list of numbers; a lone scalar counts as a one-element list.
    template <class Check>
    void read_list(const char* key, std::vector<double>& out, Check valid, const char* requirement) const {
        if (!node_.IsMap() || !node_[key].IsDefined()) return;
        const auto n = node_[key];
        std::vector<double> vals;
        auto one = [&](const YAML::Node& e) {
            double v;
            try {
                v = e.as<double>();
            } catch (const YAML::Exception&) {
                throw ConfigError(join(key), line_of(e), "expected a number");
            }
            if (!std::isfinite(v) || !valid(v)) throw ConfigError(join(key), line_of(e), requirement);
            vals.push_back(v);
        };
        if (n.IsSequence()) {
            for (const auto& e : n) one(e);
        } else if (n.IsScalar()) {
            one(n);
        } else if (!n.IsNull()) {
            throw ConfigError(join(key), line_of(n), "expected a list of numbers");
        }
        if (vals.empty()) throw ConfigError(join(key), line_of(n), "must be nonempty");
        out = std::move(vals);
    }

    const YAML::Node& node() const noexcept { return node_; }
    const std::string& path() const noexcept { return path_; }

private:
    std::string display() const { return path_.empty() ? "<root>" : path_; }

    static std::uint64_t parse_u64(const YAML::Node& n, const std::string& key) {
        if (!n.IsScalar()) throw ConfigError(key, line_of(n), "expected a nonnegative integer");
        const auto& s = n.Scalar();
        std::uint64_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw ConfigError(key, line_of(n), "expected a nonnegative integer");
        return v;
    }

    YAML::Node node_;
    std::string path_;
};

inline void read_component(const Section& s, GaussianComponent& c) {
    s.allow({"mu", "sigma"});
    s.read_double("mu", c.mu, [](double) { return true; }, "must be finite");
    s.read_double("sigma", c.sigma, [](double v) { return v > 0.0; }, "must be > 0");
}

}  // namespace detail

/// Parses YAML (or JSON) text. `default_kind` applies when the text has no
/// `kind` key; without either, the key is required.
inline ExperimentConfig parse_config_text(const std::string& text,
                                          std::optional<ExperimentKind> default_kind = std::nullopt) {
    using detail::Section;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("<root>", e.mark.line + 1, std::string("parse error: ") + e.msg);
    }
    const Section top(root, "");
    top.allow({"kind", "replicates", "base_seed", "output_dir", "workers", "target", "grid", "recursion",
               "estimator", "sweep", "bias", "metrics", "rates", "neural", "density_snapshots"});

    std::optional<ExperimentKind> kind = default_kind;
    if (top.has("kind")) {
        const auto n = top.get("kind");
        std::string name = n.IsScalar() ? n.Scalar() : "";
        kind = kind_from_string(name);
        if (!kind) throw ConfigError("kind", detail::line_of(n), "unknown experiment kind '" + name + "'");
    }
    if (!kind) throw ConfigError("kind", 0, "missing required key");

    ExperimentConfig c = default_config(*kind);
    top.read_size("replicates", c.replicates, 1);
    top.read_u64("base_seed", c.base_seed);
    top.read_string("output_dir", c.output_dir);
    top.read_size("workers", c.workers, 0);
    top.read_bool("density_snapshots", c.density_snapshots);

    if (top.has("target")) {
        const auto s = top.sub("target");
        s.allow({"weights", "components"});
        TargetSpec t;
        s.read_list("weights", t.weights, [](double v) { return v >= 0.0; }, "weights must be nonnegative");
        if (!s.has("components") || !s.get("components").IsSequence())
            throw ConfigError("target.components", detail::line_of(s.node()), "missing required list");
        std::size_t i = 0;
        for (const auto& e : s.get("components")) {
            GaussianComponent g;
            detail::read_component(Section(e, "target.components[" + std::to_string(i++) + "]"), g);
            t.components.push_back(g);
        }
        try {
            t.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError("target", detail::line_of(s.node()), e.what());
        }
        c.target = t;
    }

    {
        const auto s = top.sub("grid");
        s.allow({"points", "tail_sds"});
        s.read_size("points", c.grid_points, 2);
        s.read_double("tail_sds", c.tail_sds, [](double v) { return v > 0.0; }, "must be > 0");
    }
    {
        const auto s = top.sub("recursion");
        s.allow({"m1", "T"});
        s.read_size("m1", c.m1, 1);
        s.read_size("T", c.T, 1);
    }
    {
        const auto s = top.sub("estimator");
        s.allow({"h0", "p", "bin_count"});
        s.read_double("h0", c.estimator.h0, [](double v) { return v > 0.0; }, "must be > 0");
        s.read_double("p", c.estimator.p, [](double v) { return v > 0.0; }, "must be > 0");
        s.read_size("bin_count", c.estimator.bin_count, 1);
        if (c.estimator.bin_count < 4 * c.grid_points) {
            const int line = s.has("bin_count") ? detail::line_of(s.get("bin_count")) : 0;
            throw ConfigError("estimator.bin_count", line, "must be at least 4 * grid.points");
        }
    }
    {
        const auto s = top.sub("sweep");
        s.allow({"alpha", "q"});
        s.read_list("alpha", c.alphas, [](double v) { return v > 0.0 && v <= 1.0; }, "alpha must lie in (0, 1]");
        if (s.node().IsMap() && s.get("q").IsDefined()) {
            if (!is_bcrt(*kind))
                throw ConfigError("sweep.q", detail::line_of(s.get("q")),
                                  std::string("not used by kind ") + to_string(*kind));
            s.read_list("q", c.qs, [](double v) { return v > 0.0; }, "q must be > 0");
        }
    }
    if (top.has("bias")) {
        const auto s = top.sub("bias");
        if (!is_bcrt(*kind))
            throw ConfigError("bias", detail::line_of(s.node()), std::string("not used by kind ") + to_string(*kind));
        s.allow({"amplitude", "offset", "frozen", "component"});
        s.read_double("amplitude", c.bias.amplitude, [](double v) { return v >= 0.0 && v <= 1.0; },
                      "must lie in [0, 1]");
        s.read_double("offset", c.bias.offset, [](double v) { return v >= 0.0; }, "must be >= 0");
        s.read_bool("frozen", c.bias.frozen);
        if (s.has("component")) detail::read_component(s.sub("component"), c.bias.bias_component);
        if (!c.bias.frozen && c.bias.offset == 0.0)
            throw ConfigError("bias.offset", s.has("offset") ? detail::line_of(s.get("offset")) : 0,
                              "must be > 0 unless the bias is frozen");
    }
    {
        const auto s = top.sub("metrics");
        s.allow({"mmd_kernel_bandwidth", "squared_mmd"});
        s.read_double("mmd_kernel_bandwidth", c.metrics.mmd_kernel_bandwidth, [](double v) { return v > 0.0; },
                      "must be > 0");
        s.read_bool("squared_mmd", c.metrics.report_squared_mmd);
    }
    {
        const auto s = top.sub("rates");
        s.allow({"burn_in_fraction", "log_eps"});
        s.read_double("burn_in_fraction", c.burn_in_fraction, [](double v) { return v >= 0.0 && v < 1.0; },
                      "must lie in [0, 1)");
        s.read_double("log_eps", c.log_eps, [](double v) { return v > 0.0; }, "must be > 0");
    }
    if (top.has("neural")) {
        const auto s = top.sub("neural");
        if (*kind != ExperimentKind::crt_neural)
            throw ConfigError("neural", detail::line_of(s.node()), std::string("not used by kind ") + to_string(*kind));
        s.allow({"total_per_iteration", "eval_samples", "T_by_alpha", "mlp", "train"});
        s.read_size("total_per_iteration", c.neural.total_per_iteration, 1);
        s.read_size("eval_samples", c.neural.eval_samples, 2);
        if (s.node()["T_by_alpha"].IsDefined()) {
            const auto n = s.get("T_by_alpha");
            if (!n.IsMap() && !n.IsNull()) throw ConfigError("neural.T_by_alpha", detail::line_of(n), "expected a mapping");
            c.neural.T_by_alpha.clear();
            if (n.IsMap()) {
                for (const auto& kv : n) {
                    double a = 0.0;
                    try {
                        a = kv.first.as<double>();
                    } catch (const YAML::Exception&) {
                        throw ConfigError("neural.T_by_alpha", detail::line_of(kv.first), "keys must be alpha values");
                    }
                    if (!(a > 0.0 && a <= 1.0))
                        throw ConfigError("neural.T_by_alpha", detail::line_of(kv.first), "alpha must lie in (0, 1]");
                    long long t = 0;
                    try {
                        t = kv.second.as<long long>();
                    } catch (const YAML::Exception&) {
                        throw ConfigError("neural.T_by_alpha", detail::line_of(kv.second), "expected an integer");
                    }
                    if (t < 1) throw ConfigError("neural.T_by_alpha", detail::line_of(kv.second), "T must be >= 1");
                    c.neural.T_by_alpha[a] = static_cast<std::size_t>(t);
                }
            }
        }
        {
            const auto m = s.sub("mlp");
            m.allow({"latent_dim", "hidden_width", "hidden_layers", "leaky_slope"});
            m.read_size("latent_dim", c.neural.mlp.latent_dim, 1);
            m.read_size("hidden_width", c.neural.mlp.hidden_width, 1);
            m.read_size("hidden_layers", c.neural.mlp.hidden_layers, 1);
            m.read_double("leaky_slope", c.neural.mlp.leaky_slope, [](double v) { return v > 0.0 && v < 1.0; },
                          "must lie in (0, 1)");
        }
        {
            const auto t = s.sub("train");
            t.allow({"lr", "weight_decay", "batch_size", "epochs_per_iteration", "adam_beta1", "adam_beta2",
                     "adam_eps"});
            auto nonneg = [](double v) { return v >= 0.0; };
            auto unit = [](double v) { return v >= 0.0 && v < 1.0; };
            t.read_double("lr", c.neural.train.lr, nonneg, "must be >= 0");
            t.read_double("weight_decay", c.neural.train.weight_decay, nonneg, "must be >= 0");
            t.read_size("batch_size", c.neural.train.batch_size, 2);
            t.read_size("epochs_per_iteration", c.neural.train.epochs_per_iteration, 1);
            t.read_double("adam_beta1", c.neural.train.adam_beta1, unit, "must lie in [0, 1)");
            t.read_double("adam_beta2", c.neural.train.adam_beta2, unit, "must lie in [0, 1)");
            t.read_double("adam_eps", c.neural.train.adam_eps, [](double v) { return v > 0.0; }, "must be > 0");
        }
    }

    if (*kind != ExperimentKind::theory_check) {
        if (c.alphas.empty()) throw ConfigError("sweep.alpha", 0, "must be nonempty");
        if (is_bcrt(*kind) && c.qs.empty()) throw ConfigError("sweep.q", 0, "must be nonempty for bcrt kinds");
    }
    return c;
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path,
                                          std::optional<ExperimentKind> default_kind = std::nullopt) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("<file>", 0, "cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), default_kind);
}

/// Seed for one (cell, replicate) task; depends only on its own coordinates.
inline std::uint64_t task_seed(std::uint64_t base_seed, ExperimentKind kind, const Cell& cell, std::size_t replicate) {
    SeedHasher h(base_seed);
    h.mix(std::string_view(to_string(kind))).mix(cell.alpha);
    h.mix(static_cast<std::uint64_t>(cell.q.has_value()));
    if (cell.q) h.mix(*cell.q);
    h.mix(static_cast<std::uint64_t>(replicate));
    return h.value();
}

/// Recursion parameters for one task. Neural kinds split a fixed per-iteration
/// total; estimator kinds use m1 and the rounded m2.
inline RecursionConfig cell_recursion_config(const ExperimentConfig& c, const Cell& cell, std::uint64_t seed) {
    RecursionConfig rc;
    if (c.kind == ExperimentKind::crt_neural) {
        rc = neural_recursion_for(c.neural.total_per_iteration, cell.alpha, c.T_for(cell.alpha), seed);
    } else {
        rc.m1 = c.m1;
        rc.alpha = cell.alpha;
        rc.T = c.T;
        rc.seed = seed;
        rc.estimator = c.estimator;
        if (is_bcrt(c.kind)) {
            BiasSchedule b = c.bias;
            b.q = cell.q.value_or(b.q);
            rc.bias = b;
        }
    }
    rc.metric_settings = c.metrics;
    return rc;
}

struct CellFailure {
    std::string cell;
    std::optional<std::size_t> replicate;  ///< empty when the failure is in aggregation
    std::string error;
};

struct RunManifest {
    std::filesystem::path output_dir;
    std::string config_hash;
    std::string timestamp;
    std::string version = kVersion;
    std::vector<std::string> files;  ///< relative to output_dir, sorted
    std::vector<std::string> failed_cells;
    std::vector<CellFailure> failures;

    bool ok() const noexcept { return failures.empty(); }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["config_hash"] = config_hash;
        j["timestamp"] = timestamp;
        j["version"] = version;
        j["files"] = files;
        j["failed_cells"] = failed_cells;
        auto arr = nlohmann::ordered_json::array();
        for (const auto& f : failures) {
            nlohmann::ordered_json e{{"cell", f.cell}};
            e["replicate"] = f.replicate ? nlohmann::ordered_json(*f.replicate) : nlohmann::ordered_json(nullptr);
            e["error"] = f.error;
            arr.push_back(std::move(e));
        }
        j["failures"] = arr;
        return j;
    }
};

struct RunOptions {
    /// Called at the start of every task; an exception marks that replicate failed.
    std::function<void(const Cell&, std::size_t replicate)> before_task;
    /// Called after each finished task with (done, total); serialized.
    std::function<void(std::size_t, std::size_t)> progress;
};

namespace detail {

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) { svg::write_file(p, s); }

inline nlohmann::ordered_json fits_json(const RateSummary& s) {
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < s.per_replicate.size(); ++r) {
        const auto& f = s.per_replicate[r];
        per.push_back({{"rate", f.rate},
                       {"slope", f.slope},
                       {"intercept", f.intercept},
                       {"r_squared", f.r_squared},
                       {"n_points", f.n_points}});
    }
    return {{"mean_rate", s.mean_rate}, {"sd_rate", s.sd_rate}, {"per_replicate", per}};
}

}  // namespace detail

/// Runs every (cell, replicate) task on a bounded pool and writes all outputs.
/// Results are slotted by task index, so outputs do not depend on the number
/// of workers or on scheduling.
inline RunManifest run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
    namespace fs = std::filesystem;
    if (config.kind == ExperimentKind::theory_check)
        throw std::invalid_argument("run_experiment: theory_check has no cells; use run_theory_checks");

    RunManifest manifest;
    manifest.output_dir = config.output_dir;
    manifest.config_hash = config.hash();
    manifest.timestamp = detail::utc_timestamp();
    const fs::path out(config.output_dir);
    fs::create_directories(out / "cells");
    if (config.density_snapshots) fs::create_directories(out / "plots");

    const auto grid = config.grid();
    const auto cells = config.cells();
    const std::size_t R = config.replicates;
    const std::size_t n_tasks = cells.size() * R;

    struct TaskResult {
        std::optional<Trajectory> trajectory;
        std::string error;
    };
    std::vector<TaskResult> results(n_tasks);

    auto run_task = [&](std::size_t index) {
        const Cell& cell = cells[index / R];
        const std::size_t r = index % R;
        TaskResult res;
        try {
            if (options.before_task) options.before_task(cell, r);
            const auto seed = task_seed(config.base_seed, config.kind, cell, r);
            const auto rc = cell_recursion_config(config, cell, seed);
            if (config.kind == ExperimentKind::crt_neural) {
                NeuralRecursionConfig nc;
                nc.recursion = rc;
                nc.mlp = config.neural.mlp;
                nc.train = config.neural.train;
                nc.eval_samples = config.neural.eval_samples;
                res.trajectory = run_crt_neural(nc, config.target, grid).trajectory;
            } else {
                auto run = run_recursion(rc, config.target, grid);
                if (r == 0 && config.density_snapshots)
                    emit_density_snapshot(run.final_state, config.target, grid,
                                          out / "plots" / ("snapshot_" + cell.id() + ".svg"),
                                          "Replicate 0 at T, " + cell.id());
                res.trajectory = std::move(run.trajectory);
            }
        } catch (const std::exception& e) {
            res.trajectory.reset();
            res.error = e.what();
        }
        return res;
    };

    {
        std::size_t workers = config.workers ? config.workers : std::max(1u, std::thread::hardware_concurrency());
        workers = std::max<std::size_t>(1, std::min(workers, n_tasks));
        std::atomic<std::size_t> next{0};
        std::size_t done = 0;
        std::mutex progress_mutex;
        auto work = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n_tasks) return;
                results[i] = run_task(i);
                if (options.progress) {
                    std::lock_guard lock(progress_mutex);
                    options.progress(++done, n_tasks);
                }
            }
        };
        std::vector<std::jthread> pool;
        for (std::size_t k = 1; k < workers; ++k) pool.emplace_back(work);
        work();
    }

    // Aggregation runs on the calling thread in cell order.
    std::vector<std::string> files;
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    std::map<std::optional<double>, std::vector<std::pair<RatePlotPoint, RatePlotPoint>>> plot_groups;

    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const Cell& cell = cells[ci];
        const std::string id = cell.id();
        bool failed = false;
        for (std::size_t r = 0; r < R; ++r) {
            const auto& res = results[ci * R + r];
            if (!res.trajectory) {
                manifest.failures.push_back({id, r, res.error});
                failed = true;
            }
        }
        if (failed) {
            manifest.failed_cells.push_back(id);
            continue;
        }

        try {
            const auto rc = cell_recursion_config(config, cell, 0);
            const double alpha_eff = rc.effective_alpha();
            const bool frozen = is_bcrt(config.kind) && config.bias.frozen;
            const bool normalize = !frozen && should_normalize(alpha_eff, config.estimator.p, cell.q, config.log_eps);

            std::vector<RateFit> w1_fits, mmd_fits;
            std::ostringstream csv;
            csv << kTrajectoryCsvHeader << '\n';
            for (std::size_t r = 0; r < R; ++r) {
                const auto& traj = *results[ci * R + r].trajectory;
                w1_fits.push_back(fit_rate(traj, config.burn_in_fraction, normalize, Metric::w1));
                mmd_fits.push_back(fit_rate(traj, config.burn_in_fraction, normalize, Metric::mmd));
                write_trajectory_rows(csv, r, traj);
            }
            auto w1 = summarize(std::move(w1_fits), config.estimator.p, cell.q, alpha_eff);
            auto mmd = summarize(std::move(mmd_fits), config.estimator.p, cell.q, alpha_eff);
            double theory = w1.theory_rate;
            bool log_flag = w1.theory_log_flag;
            if (frozen) {
                theory = 0.0;
                log_flag = false;
            }

            nlohmann::ordered_json cj;
            cj["cell"] = id;
            cj["kind"] = to_string(config.kind);
            cj["alpha"] = cell.alpha;
            cj["alpha_effective"] = alpha_eff;
            cj["q"] = cell.q ? nlohmann::ordered_json(*cell.q) : nlohmann::ordered_json(nullptr);
            cj["p"] = config.estimator.p;
            cj["theory_rate"] = theory;
            cj["log_flag"] = log_flag;
            cj["log_normalized_fit"] = normalize;
            cj["burn_in_fraction"] = config.burn_in_fraction;
            cj["n_replicates"] = R;
            cj["T"] = rc.T;
            cj["w1"] = detail::fits_json(w1);
            cj["mmd"] = detail::fits_json(mmd);

            detail::write_text(out / "cells" / (id + ".csv"), csv.str());
            detail::write_text(out / "cells" / (id + ".json"), cj.dump(2) + "\n");
            files.push_back("cells/" + id + ".csv");
            files.push_back("cells/" + id + ".json");
            if (config.kind != ExperimentKind::crt_neural && config.density_snapshots)
                files.push_back("plots/snapshot_" + id + ".svg");

            nlohmann::ordered_json sj;
            sj["alpha"] = cell.alpha;
            sj["q"] = cell.q ? nlohmann::ordered_json(*cell.q) : nlohmann::ordered_json(nullptr);
            sj["theory_rate"] = theory;
            sj["log_flag"] = log_flag;
            sj["mean_rate_w1"] = w1.mean_rate;
            sj["sd_rate_w1"] = w1.sd_rate;
            sj["mean_rate_mmd"] = mmd.mean_rate;
            sj["sd_rate_mmd"] = mmd.sd_rate;
            sj["n_replicates"] = R;
            summary[id] = std::move(sj);

            plot_groups[cell.q].push_back({{cell.alpha, w1.mean_rate, w1.sd_rate, theory},
                                           {cell.alpha, mmd.mean_rate, mmd.sd_rate, theory}});
        } catch (const std::exception& e) {
            manifest.failures.push_back({id, std::nullopt, e.what()});
            manifest.failed_cells.push_back(id);
        }
    }

    for (const auto& [q, pts] : plot_groups) {
        if (pts.size() < 2) continue;
        std::vector<RatePlotPoint> w1, mmd;
        for (const auto& [a, b] : pts) {
            w1.push_back(a);
            mmd.push_back(b);
        }
        const std::string suffix = q ? "_q=" + svg::num(*q) : "";
        const std::string title = std::string(to_string(config.kind)) + (q ? ", q=" + svg::num(*q) : "");
        fs::create_directories(out / "plots");
        emit_rate_plot(w1, out / "plots" / ("rate_w1" + suffix + ".svg"), title, "W1");
        emit_rate_plot(mmd, out / "plots" / ("rate_mmd" + suffix + ".svg"), title, "MMD");
        files.push_back("plots/rate_w1" + suffix + ".svg");
        files.push_back("plots/rate_mmd" + suffix + ".svg");
    }

    detail::write_text(out / "summary.json", summary.dump(2) + "\n");
    detail::write_text(out / "config.json", config.to_json().dump(2) + "\n");

    files.push_back("summary.json");
    files.push_back("config.json");
    std::sort(files.begin(), files.end());
    manifest.files = std::move(files);
    detail::write_text(out / "manifest.json", manifest.to_json().dump(2) + "\n");
    return manifest;
}

}  // namespace crtlab
