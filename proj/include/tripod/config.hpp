#pragma once

// Plain-text run configuration: `key = value` lines, '#' comments.
//
// Units at the boundary: times in us, B in MHz (linear), chi in rad, Rabi
// amplitudes and rates (omega_c_max, omega_pi_max, gamma, gamma_d, e4_detuning)
// in linear MHz and multiplied by 2 pi internally, c_mu_a in us^-2, L in mm.
//
// Value lists (sweep_* keys, candidates) accept comma lists,
// `range(start, stop, step)` (inclusive) and `linspace(start, stop, n)`.
// Any number may be written as a multiple of pi: `pi`, `pi/2`, `2pi/3`, `0.5*pi`.

#include <tripod/errors.hpp>
#include <tripod/sweep.hpp>
#include <tripod/units.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace tripod {

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_plain(std::string_view s, std::string_view key) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || p != end) {
        throw ConfigError("'" + std::string(key) + "': cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

} // namespace detail

/// A number, optionally as a multiple of pi: "1.5", "pi", "-pi/2", "2pi/3", "0.5*pi".
inline double parse_scalar(std::string_view text, std::string_view key = "value") {
    std::string s = detail::trim(text);
    if (s.empty()) throw ConfigError("'" + std::string(key) + "': empty value");
    const auto pi_at = s.find("pi");
    if (pi_at == std::string::npos) return detail::parse_plain(s, key);

    std::string coef = s.substr(0, pi_at);
    std::string rest = s.substr(pi_at + 2);
    if (!coef.empty() && coef.back() == '*') coef.pop_back();
    double k = 1.0;
    if (coef == "-") k = -1.0;
    else if (coef == "+") k = 1.0;
    else if (!coef.empty()) k = detail::parse_plain(coef, key);
    double div = 1.0;
    if (!rest.empty()) {
        if (rest.front() != '/') throw ConfigError("'" + std::string(key) + "': cannot parse '" + s + "'");
        div = detail::parse_plain(rest.substr(1), key);
        if (div == 0.0) throw ConfigError("'" + std::string(key) + "': division by zero");
    }
    return k * 3.14159265358979323846 / div;
}

/// Comma list, range(start, stop, step) or linspace(start, stop, n).
inline std::vector<double> parse_list(std::string_view text, std::string_view key = "value") {
    const std::string s = detail::trim(text);
    std::vector<double> out;
    if (s.empty()) return out;

    auto args = [&](std::size_t open) {
        if (s.back() != ')') throw ConfigError("'" + std::string(key) + "': missing ')' in '" + s + "'");
        std::vector<double> a;
        std::stringstream ss(s.substr(open + 1, s.size() - open - 2));
        std::string item;
        while (std::getline(ss, item, ',')) a.push_back(parse_scalar(item, key));
        if (a.size() != 3) throw ConfigError("'" + std::string(key) + "': expected 3 arguments in '" + s + "'");
        return a;
    };

    if (s.rfind("range(", 0) == 0) {
        const auto a = args(5);
        if (!(a[2] > 0.0) || a[1] < a[0]) {
            throw ConfigError("'" + std::string(key) + "': range needs step > 0 and stop >= start");
        }
        const auto n = static_cast<std::size_t>(std::floor((a[1] - a[0]) / a[2] + 1e-9)) + 1;
        for (std::size_t i = 0; i < n; ++i) out.push_back(a[0] + a[2] * static_cast<double>(i));
        return out;
    }
    if (s.rfind("linspace(", 0) == 0) {
        const auto a = args(8);
        if (!(a[2] >= 1.0) || a[2] != std::floor(a[2])) {
            throw ConfigError("'" + std::string(key) + "': linspace count must be a positive integer");
        }
        const auto n = static_cast<std::size_t>(a[2]);
        if (n == 1) return {a[0]};
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(a[0] + (a[1] - a[0]) * static_cast<double>(i) / static_cast<double>(n - 1));
        }
        return out;
    }
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_scalar(item, key));
    return out;
}

/// Shortest round-trip decimal form.
inline std::string format_number(double v) {
    char buf[32];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline std::string format_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += format_number(v[i]);
    }
    return s;
}

/// Every tunable of a run. Physical fields are stored in internal units.
struct RunConfig {
    PulseParams pulses{};
    SystemParams system{};
    GridSpec grid{};
    SweepAxes axes{};
    PeakOptions peaks{};
    unsigned workers = 1;
    std::size_t max_points = 10000;
    /// Calibration candidates (internal units of the calibrated parameter).
    std::string calibrate_param = "omega_c_max";
    std::vector<double> candidates;

    /// Worker default from TRIPOD_WORKERS, else 1.
    static unsigned default_workers() {
        if (const char* env = std::getenv("TRIPOD_WORKERS")) {
            char* end = nullptr;
            const long v = std::strtol(env, &end, 10);
            if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<unsigned>(v);
        }
        return 1;
    }

    RunConfig() : workers(default_workers()) {}

    SweepSpec sweep_spec() const {
        SweepSpec s;
        s.pulses = pulses;
        s.system = system;
        s.grid = grid;
        s.axes = axes;
        s.peaks = peaks;
        s.workers = workers;
        s.max_points = max_points;
        return s;
    }
};

/// Binding of one config key: setter from text and getter to text (user units).
struct ConfigKey {
    std::string name;
    std::string help;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

namespace detail {

/// Scaled keys accept a trailing "rad/us" to give the value in internal units.
inline bool strip_internal_unit(std::string& v) {
    v = trim(v);
    constexpr std::string_view suffix = "rad/us";
    if (v.size() >= suffix.size() && v.compare(v.size() - suffix.size(), suffix.size(), suffix) == 0) {
        v = trim(std::string_view(v).substr(0, v.size() - suffix.size()));
        return true;
    }
    return false;
}

/// User-unit text for an internal value; falls back to "x rad/us" when the
/// decimal form would not reproduce the value bit for bit.
inline std::string format_scaled(const std::vector<double>& vals, double scale) {
    std::vector<double> user;
    bool exact = true;
    for (double x : vals) {
        user.push_back(x / scale);
        exact = exact && parse_scalar(format_number(user.back())) * scale == x;
    }
    if (scale == 1.0 || exact) return format_list(user);
    return format_list(vals) + " rad/us";
}

template <class Ref>
ConfigKey real_key(std::string name, std::string help, Ref ref, double scale = 1.0) {
    const std::string n = name;
    return {std::move(name), std::move(help),
            [ref, scale, n](RunConfig& c, const std::string& text) {
                std::string v = text;
                const bool internal = scale != 1.0 && strip_internal_unit(v);
                ref(c) = parse_scalar(v, n) * (internal ? 1.0 : scale);
            },
            [ref, scale](const RunConfig& c) {
                return format_scaled({ref(const_cast<RunConfig&>(c))}, scale);
            }};
}

template <class Ref>
ConfigKey list_key(std::string name, std::string help, Ref ref, double scale = 1.0) {
    const std::string n = name;
    return {std::move(name), std::move(help),
            [ref, scale, n](RunConfig& c, const std::string& text) {
                std::string v = text;
                const bool internal = scale != 1.0 && strip_internal_unit(v);
                auto vals = parse_list(v, n);
                for (auto& x : vals) x *= internal ? 1.0 : scale;
                ref(c) = std::move(vals);
            },
            [ref, scale](const RunConfig& c) { return format_scaled(ref(const_cast<RunConfig&>(c)), scale); }};
}

template <class T, class Ref>
ConfigKey count_key(std::string name, std::string help, Ref ref, T lo) {
    const std::string n = name;
    return {std::move(name), std::move(help),
            [ref, lo, n](RunConfig& c, const std::string& v) {
                const double x = parse_scalar(v, n);
                if (x != std::floor(x) || x < static_cast<double>(lo) || x > 1e12) {
                    throw ConfigError("'" + n + "': expected an integer >= " + std::to_string(lo));
                }
                ref(c) = static_cast<T>(x);
            },
            [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

} // namespace detail

/// All recognised keys, in echo order.
inline const std::vector<ConfigKey>& config_keys() {
    using namespace detail;
    using C = RunConfig;
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        // protocol point
        k.push_back(real_key("tau", "storage delay tau (us)", [](C& c) -> double& { return c.pulses.delay_tau; }));
        k.push_back(real_key("B", "linear Zeeman shift (MHz)", [](C& c) -> double& { return c.system.zeeman_B; }));
        k.push_back(real_key("chi", "relative control phase (rad)", [](C& c) -> double& { return c.pulses.chi; }));
        // pulses
        k.push_back(real_key("omega_c_max", "control Rabi amplitude (MHz, x 2pi)",
                             [](C& c) -> double& { return c.pulses.omega_c_max; }, two_pi));
        k.push_back(real_key("omega_pi_max", "probe Rabi amplitude (MHz, x 2pi)",
                             [](C& c) -> double& { return c.pulses.omega_pi_max; }, two_pi));
        for (int i = 0; i < 4; ++i) {
            k.push_back(real_key("t" + std::to_string(i + 1), "control edge centre (us, before the tau shift)",
                                 [i](C& c) -> double& { return c.pulses.tanh_times[static_cast<std::size_t>(i)]; }));
        }
        for (int i = 0; i < 4; ++i) {
            k.push_back(real_key("tau" + std::to_string(i + 1), "control edge width (us)",
                                 [i](C& c) -> double& { return c.pulses.tanh_widths[static_cast<std::size_t>(i)]; }));
        }
        k.push_back(real_key("t_pi", "probe centre (us)", [](C& c) -> double& { return c.pulses.probe_center; }));
        k.push_back(real_key("tau_pi", "probe width (us)", [](C& c) -> double& { return c.pulses.probe_width; }));
        k.push_back(real_key("probe_phase", "constant input-probe phase (rad)",
                             [](C& c) -> double& { return c.pulses.probe_phase; }));
        // system
        k.push_back(real_key("gamma", "excited-state decay Gamma (MHz, x 2pi)",
                             [](C& c) -> double& { return c.system.gamma; }, two_pi));
        k.push_back(real_key("gamma_d", "ground-coherence dephasing (MHz, x 2pi)",
                             [](C& c) -> double& { return c.system.gamma_d; }, two_pi));
        k.push_back(real_key("e4_detuning", "excited-level energy E4 (MHz, x 2pi)",
                             [](C& c) -> double& { return c.system.e4_detuning; }, two_pi));
        k.push_back(real_key("c_mu_a", "coupling c mu_a (us^-2)", [](C& c) -> double& { return c.system.c_mu_a; }));
        k.push_back(real_key("length_L", "medium length (mm)", [](C& c) -> double& { return c.system.length_L; }));
        k.push_back(real_key("t_initial", "window start (us)", [](C& c) -> double& { return c.system.t_initial; }));
        // grid
        k.push_back(real_key("t_final", "window end (us)", [](C& c) -> double& { return c.grid.t_final; }));
        k.push_back(count_key<std::size_t>("n_xi", "slices along xi", [](C& c) -> std::size_t& { return c.grid.n_xi; },
                                           std::size_t{2}));
        k.push_back(count_key<std::size_t>("n_upsilon", "samples along upsilon",
                                           [](C& c) -> std::size_t& { return c.grid.n_upsilon; }, std::size_t{2}));
        k.push_back(real_key("damping_y", "under-relaxation weight in (0, 1]",
                             [](C& c) -> double& { return c.grid.damping_y; }));
        k.push_back({"epsilon", "convergence threshold on sum |d sigma| (auto = scale with grid)",
                     [](C& c, const std::string& v) {
                         if (detail::trim(v) == "auto") c.grid.epsilon.reset();
                         else c.grid.epsilon = parse_scalar(v, "epsilon");
                     },
                     [](const C& c) { return c.grid.epsilon ? format_number(*c.grid.epsilon) : std::string("auto"); }});
        k.push_back(count_key<int>("max_iterations", "self-consistent iteration cap",
                                   [](C& c) -> int& { return c.grid.max_iterations; }, 1));
        k.push_back(real_key("rk_tolerance", "RK4 local error tolerance",
                             [](C& c) -> double& { return c.grid.step.tolerance; }));
        k.push_back(real_key("rk_initial_step", "RK4 first step (us)",
                             [](C& c) -> double& { return c.grid.step.initial_step; }));
        k.push_back(real_key("rk_min_step", "RK4 step floor (us)", [](C& c) -> double& { return c.grid.step.min_step; }));
        k.push_back(count_key<unsigned>("threads", "threads per solve (slice integration)",
                                        [](C& c) -> unsigned& { return c.grid.workers; }, 1u));
        // peaks
        k.push_back(real_key("t_split", "transmitted/retrieved split (us)",
                             [](C& c) -> double& { return c.peaks.t_split; }));
        k.push_back(real_key("peak_guard", "retrieved window starts at tau - guard (us)",
                             [](C& c) -> double& { return c.peaks.guard; }));
        k.push_back(real_key("null_fraction", "null-peak floor relative to transmitted",
                             [](C& c) -> double& { return c.peaks.null_fraction; }));
        // sweep
        k.push_back(count_key<unsigned>("workers", "parallel sweep points (default $TRIPOD_WORKERS or 1)",
                                        [](C& c) -> unsigned& { return c.workers; }, 1u));
        k.push_back(count_key<std::size_t>("max_points", "sweep size cap",
                                           [](C& c) -> std::size_t& { return c.max_points; }, std::size_t{1}));
        k.push_back(list_key("sweep_tau", "tau axis (us)", [](C& c) -> std::vector<double>& { return c.axes.tau; }));
        k.push_back(list_key("sweep_B", "B axis (MHz)", [](C& c) -> std::vector<double>& { return c.axes.B; }));
        k.push_back(list_key("sweep_chi", "chi axis (rad)", [](C& c) -> std::vector<double>& { return c.axes.chi; }));
        k.push_back(list_key("sweep_omega_c_max", "control amplitude axis (MHz, x 2pi)",
                             [](C& c) -> std::vector<double>& { return c.axes.omega_c_max; }, two_pi));
        k.push_back(list_key("sweep_omega_pi_max", "probe amplitude axis (MHz, x 2pi)",
                             [](C& c) -> std::vector<double>& { return c.axes.omega_pi_max; }, two_pi));
        k.push_back(list_key("sweep_c_mu_a", "coupling axis (us^-2)",
                             [](C& c) -> std::vector<double>& { return c.axes.c_mu_a; }));
        // calibration
        k.push_back({"calibrate_param", "omega_c_max | omega_pi_max | c_mu_a",
                     [](C& c, const std::string& v) {
                         const auto s = detail::trim(v);
                         if (s != "omega_c_max" && s != "omega_pi_max" && s != "c_mu_a") {
                             throw ConfigError("'calibrate_param': unknown parameter '" + s + "'");
                         }
                         c.calibrate_param = s;
                     },
                     [](const C& c) { return c.calibrate_param; }});
        k.push_back({"candidates", "calibration values (same units as the parameter's key)",
                     [](C& c, const std::string& v) { c.candidates = parse_list(v, "candidates"); },
                     [](const C& c) { return format_list(c.candidates); }});
        return k;
    }();
    return keys;
}

inline const ConfigKey* find_key(std::string_view name) {
    for (const auto& k : config_keys()) {
        if (k.name == name) return &k;
    }
    return nullptr;
}

/// Sets one key; throws ConfigError for unknown keys or bad values.
inline void apply(RunConfig& cfg, std::string_view key, const std::string& value) {
    const ConfigKey* k = find_key(key);
    if (!k) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
    k->set(cfg, value);
}

/// Reads `key = value` lines into cfg (defaults are kept for absent keys).
inline void load_config(std::istream& in, RunConfig& cfg, const std::string& name = "config") {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(name + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            apply(cfg, detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(name + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline RunConfig load_config_file(const std::string& path, RunConfig cfg = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    load_config(in, cfg, path);
    return cfg;
}

/// The candidate list in internal units.
inline std::vector<double> internal_candidates(const RunConfig& cfg) {
    auto v = cfg.candidates;
    if (cfg.calibrate_param != "c_mu_a") {
        for (auto& x : v) x *= two_pi;
    }
    return v;
}

inline CalibrationParam calibration_param(const RunConfig& cfg) {
    if (cfg.calibrate_param == "omega_pi_max") return CalibrationParam::omega_pi_max;
    if (cfg.calibrate_param == "c_mu_a") return CalibrationParam::c_mu_a;
    return CalibrationParam::omega_c_max;
}

/// Every effective value in loadable form; load_config on it reproduces cfg.
inline std::string resolved_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "# tripod resolved configuration\n";
    for (const auto& k : config_keys()) os << k.name << " = " << k.get(cfg) << "    # " << k.help << '\n';
    return os.str();
}

/// Checks all sections; throws ConfigError with the offending field.
inline void validate(const RunConfig& cfg) {
    try {
        cfg.pulses.validate();
        cfg.system.validate();
        cfg.grid.validate(cfg.system);
    } catch (const ConfigError&) {
        throw;
    } catch (const InputError& e) {
        throw ConfigError(e.what());
    }
}

} // namespace tripod
