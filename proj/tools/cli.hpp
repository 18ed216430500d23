#pragma once

// tripod command-line front end. run() is separate from main() so the test
// suite can drive it in-process.
//
// Exit codes: 0 success, 2 configuration / input error,
//             3 solver or fit non-convergence (or > 10% failed sweep points).

#include <tripod/analysis.hpp>
#include <tripod/config.hpp>
#include <tripod/propagation.hpp>
#include <tripod/pulses.hpp>
#include <tripod/sweep.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tripod::cli {

enum Exit : int { ok = 0, internal = 1, config_error = 2, no_convergence = 3 };

inline std::string kebab(std::string s) {
    for (auto& ch : s) {
        if (ch == '_') ch = '-';
    }
    return s;
}

/// --config plus one --<kebab-key> override per RunConfig key.
struct ConfigOptions {
    std::string config_path;
    std::map<std::string, std::string> values;

    void attach(CLI::App& app, const std::string& config_flag = "--config") {
        app.add_option(config_flag, config_path, "key = value configuration file")->check(CLI::ExistingFile);
        for (const auto& k : config_keys()) {
            app.add_option("--" + kebab(k.name), values[k.name], k.help);
        }
    }

    RunConfig resolve(const CLI::App& app) const {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config_file(config_path);
        for (const auto& k : config_keys()) {
            if (app.count("--" + kebab(k.name)) > 0) {
                try {
                    k.set(cfg, values.at(k.name));
                } catch (const ConfigError& e) {
                    throw ConfigError("--" + kebab(k.name) + ": " + e.what());
                }
            }
        }
        validate(cfg);
        return cfg;
    }
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << text;
}

inline std::string sibling(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

inline const std::vector<std::string>& exit_trace_columns() {
    static const std::vector<std::string> cols{"t_us", "intensity_norm"};
    return cols;
}

inline void write_exit_trace(const std::string& path, const std::vector<double>& t,
                             const std::vector<double>& intensity) {
    std::vector<std::vector<double>> rows;
    rows.reserve(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) rows.push_back({t[i], intensity[i]});
    csv::write_file(path, "tripod exit-trace v1", exit_trace_columns(), rows);
}

/// Reads (t_us, <value column>) where the value column is the first present of `names`.
inline std::pair<std::vector<double>, std::vector<double>> read_trace(const std::string& path,
                                                                      std::initializer_list<const char*> names) {
    const auto table = csv::read(path);
    for (const char* n : names) {
        if (table.has(n)) return {table.column("t_us"), table.column(n)};
    }
    std::string all;
    for (const char* n : names) all += std::string(all.empty() ? "" : " or ") + n;
    throw InputError(path + ": missing column " + all);
}

inline const std::vector<std::string>& field_map_columns() {
    static const std::vector<std::string> cols{"xi_us", "upsilon_us", "abs_omega_sq", "abs_omega_norm_sq"};
    return cols;
}

inline void write_field_map(const std::string& path, const SolveResult& res, std::size_t stride_xi,
                            std::size_t stride_ups) {
    if (stride_xi == 0 || stride_ups == 0) throw InputError("field-map strides must be positive");
    const FieldMap map = field_map(res);
    std::vector<std::vector<double>> rows;
    auto keep = [](std::size_t i, std::size_t n, std::size_t s) { return i % s == 0 || i + 1 == n; };
    for (std::size_t l = 0; l < map.n_xi; ++l) {
        if (!keep(l, map.n_xi, stride_xi)) continue;
        for (std::size_t m = 0; m < map.n_upsilon; ++m) {
            if (!keep(m, map.n_upsilon, stride_ups)) continue;
            const std::size_t k = l * map.n_upsilon + m;
            rows.push_back({map.xi[l], map.upsilon[m], map.abs_sq[k], map.norm_sq[k]});
        }
    }
    csv::write_file(path, "tripod field-map v1", field_map_columns(), rows);
}

inline void print_peaks(std::ostream& out, const PeakPair& pk) {
    out << "transmitted peak: " << pk.transmitted.height << " at t = " << pk.transmitted.t << " us\n";
    out << "retrieved peak: " << pk.retrieved.height << " at t = " << pk.retrieved.t << " us"
        << (pk.retrieved.null ? " (null)" : "") << '\n';
}

/// Decay points from the B = chi = 0 rows of a peak table.
inline std::vector<DecayPoint> decay_points(const std::vector<PeakRecord>& records) {
    std::vector<DecayPoint> pts;
    for (const auto& r : records) {
        if (r.B == 0.0 && r.chi == 0.0) pts.push_back({r.tau, r.height});
    }
    if (pts.empty()) throw InputError("no B = 0, chi = 0 rows to fit the decay on");
    return pts;
}

inline FitResult read_fit_csv(const std::string& path) {
    const auto table = csv::read(path);
    if (table.rows.empty()) throw InputError(path + ": no fit row");
    const auto& r = table.rows.front();
    FitResult f;
    f.amplitude = r[table.index("amplitude")];
    f.amplitude_err = r[table.index("amplitude_err")];
    f.gamma_c = r[table.index("gamma_c_rad_per_us")];
    f.gamma_c_err = r[table.index("gamma_c_err")];
    f.tau_0 = r[table.index("tau_0_us")];
    f.tau_0_err = r[table.index("tau_0_err")];
    return f;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"tripod: storage and retrieval of light in a tripod medium"};
    app.require_subcommand(1);

    // simulate ---------------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "self-consistent solve; writes the exit trace");
    ConfigOptions sim_cfg;
    sim_cfg.attach(*sim);
    std::string sim_out = "trace.csv", sim_map;
    std::size_t sim_sxi = 1, sim_sups = 1;
    sim->add_option("-o,--out", sim_out, "exit trace CSV (t_us, intensity_norm)");
    sim->add_option("--field-map", sim_map, "also write the internal field map here");
    sim->add_option("--stride-xi", sim_sxi, "field-map stride along xi");
    sim->add_option("--stride-upsilon", sim_sups, "field-map stride along upsilon");

    // field-map --------------------------------------------------------------
    auto* fm = app.add_subcommand("field-map", "self-consistent solve; writes |Omega|^2 / Omega_pi^max^2 over (xi, upsilon)");
    ConfigOptions fm_cfg;
    fm_cfg.attach(*fm);
    std::string fm_out = "field_map.csv";
    std::size_t fm_sxi = 1, fm_sups = 10;
    fm->add_option("-o,--out", fm_out, "field map CSV (xi_us, upsilon_us, abs_omega_sq, abs_omega_norm_sq)");
    fm->add_option("--stride-xi", fm_sxi, "keep every n-th slice");
    fm->add_option("--stride-upsilon", fm_sups, "keep every n-th time sample");

    // sweep ------------------------------------------------------------------
    auto* sw = app.add_subcommand("sweep", "parameter scan; writes traces, peaks, points and heatmap CSVs");
    ConfigOptions sw_cfg;
    sw_cfg.attach(*sw, "--spec,--config");
    std::string sw_dir = ".";
    sw->add_option("-o,--out-dir", sw_dir, "output directory");

    // fit-decay --------------------------------------------------------------
    auto* fd = app.add_subcommand("fit-decay", "fit A exp(-2 gamma_c tau) to the B = chi = 0 retrieved peaks");
    std::string fd_peaks, fd_out;
    std::vector<double> fd_exclude{0.2};
    fd->add_option("--peaks", fd_peaks, "peak table CSV")->required()->check(CLI::ExistingFile);
    fd->add_option("--exclude-tau", fd_exclude, "delays to drop (us)")->delimiter(',');
    fd->add_option("-o,--out", fd_out, "fit CSV");

    // fit-tau0 ---------------------------------------------------------------
    auto* ft = app.add_subcommand("fit-tau0", "global fit of the interference offset tau_0");
    std::string ft_peaks, ft_decay, ft_out, ft_summary;
    std::optional<double> ft_amp, ft_gamma;
    std::vector<double> ft_exclude{0.2};
    double ft_lo = -0.5, ft_hi = 0.5;
    ft->add_option("--dataset,--peaks", ft_peaks, "peak table CSV")->required()->check(CLI::ExistingFile);
    ft->add_option("--decay-fit", ft_decay, "fit CSV from fit-decay (else fitted from B = chi = 0 rows)")
        ->check(CLI::ExistingFile);
    ft->add_option("--amplitude", ft_amp, "fixed amplitude A");
    ft->add_option("--gamma-c", ft_gamma, "fixed gamma_c (MHz, x 2pi)");
    ft->add_option("--exclude-tau", ft_exclude, "delays to drop (us)")->delimiter(',');
    ft->add_option("--bracket-lo", ft_lo, "tau_0 search bracket (us)");
    ft->add_option("--bracket-hi", ft_hi, "tau_0 search bracket (us)");
    ft->add_option("-o,--out", ft_out, "fit CSV");
    ft->add_option("--summary", ft_summary, "interference summary CSV");

    // fit-pulses -------------------------------------------------------------
    auto* fp = app.add_subcommand("fit-pulses", "fit control (tanh edges) or probe (Gaussian) shape to a trace");
    std::string fp_trace, fp_model = "control", fp_out;
    double fp_delay = 0.4;
    bool fp_no_bg = false;
    fp->add_option("--trace", fp_trace, "CSV with t_us and intensity (or intensity_norm)")
        ->required()
        ->check(CLI::ExistingFile);
    fp->add_option("--model", fp_model, "control | probe")->check(CLI::IsMember({"control", "probe"}));
    fp->add_option("--delay-tau", fp_delay, "storage delay of the measured sequence (us)");
    fp->add_flag("--no-background", fp_no_bg, "do not subtract the leading-baseline median");
    fp->add_option("-o,--out", fp_out, "parameter CSV");

    // calibrate --------------------------------------------------------------
    auto* cal = app.add_subcommand("calibrate", "scan one parameter against a reference trace");
    ConfigOptions cal_cfg;
    cal_cfg.attach(*cal);
    std::string cal_ref, cal_out;
    cal->add_option("--reference", cal_ref, "reference CSV (t_us, intensity_norm)")->required()->check(CLI::ExistingFile);
    cal->add_option("-o,--out", cal_out, "report CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? Exit::ok : Exit::config_error;
    }

    try {
        if (sim->parsed() || fm->parsed()) {
            const bool is_sim = sim->parsed();
            const RunConfig cfg = is_sim ? sim_cfg.resolve(*sim) : fm_cfg.resolve(*fm);
            const std::string target = is_sim ? sim_out : fm_out;
            write_text(sibling(target, ".resolved.cfg"), resolved_config(cfg));
            const auto start = std::chrono::steady_clock::now();
            const SolveResult res = solve_self_consistent(cfg.pulses, cfg.system, cfg.grid);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            out << "converged in " << res.iterations << " iterations (" << secs << " s)\n";
            if (is_sim) {
                const auto t = res.times();
                const auto I = res.exit_intensity();
                write_exit_trace(sim_out, t, I);
                print_peaks(out, split_peaks(t, I, cfg.pulses.delay_tau, cfg.peaks));
                if (!sim_map.empty()) write_field_map(sim_map, res, sim_sxi, sim_sups);
            } else {
                write_field_map(fm_out, res, fm_sxi, fm_sups);
            }
            return Exit::ok;
        }

        if (sw->parsed()) {
            const RunConfig cfg = sw_cfg.resolve(*sw);
            std::filesystem::create_directories(sw_dir);
            const std::filesystem::path dir(sw_dir);
            write_text((dir / "resolved.cfg").string(), resolved_config(cfg));
            const SweepSpec spec = cfg.sweep_spec();
            const SweepResult res = run_sweep(spec);
            write_dataset((dir / "traces.csv").string(), to_dataset(res));
            csv::write_file((dir / "peaks.csv").string(), "tripod peaks v1", peak_columns(), peak_rows(res));

            std::vector<std::vector<double>> pts;
            for (std::size_t i = 0; i < res.points.size(); ++i) {
                const auto& p = res.points[i];
                pts.push_back({static_cast<double>(i), p.point.tau, p.point.B, p.point.chi,
                               linear(p.point.omega_c_max), linear(p.point.omega_pi_max), p.point.c_mu_a,
                               p.ok ? 1.0 : 0.0, static_cast<double>(p.iterations)});
                if (!p.ok) err << "point " << i << " failed: " << p.error << '\n';
            }
            csv::write_file((dir / "points.csv").string(), "tripod sweep-points v1",
                            {"index", "tau_us", "B_MHz", "chi_rad", "omega_c_max_MHz", "omega_pi_max_MHz",
                             "c_mu_a", "ok", "iterations"},
                            pts);

            // One heatmap per (tau, chi) pair.
            std::set<std::pair<double, double>> pairs;
            for (const auto& p : res.points) pairs.insert({p.point.tau, p.point.chi});
            for (const auto& [tau, chi] : pairs) {
                const std::string name = pairs.size() == 1
                                             ? "heatmap.csv"
                                             : "heatmap_tau" + format_number(tau) + "_chi" + format_number(chi) + ".csv";
                csv::write_file((dir / name).string(), "tripod heatmap v1", {"B_MHz", "t_us", "intensity_norm"},
                                heatmap_rows(res, tau, chi));
            }
            out << res.points.size() << " points, " << res.failures << " failed\n";
            if (res.failed()) {
                err << "more than 10% of the sweep points failed\n";
                return Exit::no_convergence;
            }
            return Exit::ok;
        }

        if (fd->parsed()) {
            const auto records = read_peak_records(fd_peaks);
            ExclusionOptions excl;
            excl.exclude_tau = fd_exclude;
            const auto fit = fit_decay(decay_points(records), excl);
            out << format_fit_report(fit, true, false);
            if (!fd_out.empty()) write_fit_csv(fd_out, fit);
            return Exit::ok;
        }

        if (ft->parsed()) {
            const auto records = read_peak_records(ft_peaks);
            Tau0Options opt;
            opt.exclusion.exclude_tau = ft_exclude;
            opt.bracket_lo = ft_lo;
            opt.bracket_hi = ft_hi;
            FitResult decay;
            if (ft_amp && ft_gamma) {
                decay.amplitude = *ft_amp;
                decay.gamma_c = angular(*ft_gamma);
            } else if (!ft_decay.empty()) {
                decay = read_fit_csv(ft_decay);
            } else {
                decay = fit_decay(decay_points(records), opt.exclusion);
            }
            if (ft_amp) decay.amplitude = *ft_amp;
            if (ft_gamma) decay.gamma_c = angular(*ft_gamma);
            FitResult fit = fit_tau0(records, decay.amplitude, decay.gamma_c, opt);
            fit.amplitude_err = decay.amplitude_err;
            fit.gamma_c_err = decay.gamma_c_err;
            out << format_fit_report(fit, true, true);
            const auto summary = interference_summary(records, fit, opt.exclusion);
            out << "max |peak - envelope| = " << summary.max_abs_residual << '\n';
            if (!ft_out.empty()) write_fit_csv(ft_out, fit);
            if (!ft_summary.empty()) {
                std::vector<std::vector<double>> rows;
                for (const auto& r : summary.rows) {
                    rows.push_back({r.tau, r.B, r.chi, r.measured, r.predicted, r.residual});
                }
                csv::write_file(ft_summary, "tripod interference v1",
                                {"tau_us", "B_MHz", "chi_rad", "retrieved_height", "envelope_model", "residual"},
                                rows);
            }
            return Exit::ok;
        }

        if (fp->parsed()) {
            const auto [t, y] = read_trace(fp_trace, {"intensity", "intensity_norm"});
            PulseFitOptions opt;
            opt.delay_tau = fp_delay;
            opt.subtract_background = !fp_no_bg;
            const auto fit =
                fit_pulse_params(t, y, fp_model == "probe" ? PulseModel::probe : PulseModel::control, {}, opt);
            std::vector<std::vector<double>> rows;
            for (std::size_t i = 0; i < fit.names.size(); ++i) {
                out << fit.names[i] << " = " << format_uncertain(fit.values[i], fit.stddev[i]) << '\n';
                rows.push_back({fit.values[i], fit.stddev[i]});
            }
            out << "background = " << fit.background << ", residual norm = " << fit.residual_norm << '\n';
            if (!fp_out.empty()) {
                std::ofstream f(fp_out);
                if (!f) throw InputError("cannot write '" + fp_out + "'");
                f << "# tripod pulse-fit v1\nname,value,stddev\n";
                for (std::size_t i = 0; i < fit.names.size(); ++i) {
                    f << fit.names[i] << ',' << format_number(fit.values[i]) << ','
                      << format_number(fit.stddev[i]) << '\n';
                }
            }
            return Exit::ok;
        }

        if (cal->parsed()) {
            const RunConfig cfg = cal_cfg.resolve(*cal);
            const auto [t, y] = read_trace(cal_ref, {"intensity_norm"});
            if (!cal_out.empty()) write_text(sibling(cal_out, ".resolved.cfg"), resolved_config(cfg));
            const auto rep = calibrate(calibration_param(cfg), internal_candidates(cfg), t, y, cfg.sweep_spec());
            const double to_user = cfg.calibrate_param == "c_mu_a" ? 1.0 : 1.0 / two_pi;
            std::vector<std::vector<double>> rows;
            for (std::size_t i = 0; i < rep.candidates.size(); ++i) {
                out << cfg.calibrate_param << " = " << rep.candidates[i] * to_user << "  rms = " << rep.discrepancy[i]
                    << (i == rep.argmin_index ? "  <- argmin" : "") << '\n';
                rows.push_back({rep.candidates[i] * to_user, rep.discrepancy[i]});
            }
            if (!cal_out.empty()) {
                csv::write_file(cal_out, "tripod calibration v1", {cfg.calibrate_param, "rms_discrepancy"}, rows);
            }
            return Exit::ok;
        }
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << '\n';
        return Exit::no_convergence;
    } catch (const IntegrationError& e) {
        err << "error: " << e.what() << '\n';
        return Exit::no_convergence;
    } catch (const FitFailure& e) {
        err << "error: " << e.what() << '\n';
        return Exit::no_convergence;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return Exit::config_error;
    } catch (const DegenerateFit& e) {
        err << "error: " << e.what() << '\n';
        return Exit::config_error;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return Exit::internal;
    }
    return Exit::internal;
}

} // namespace tripod::cli
