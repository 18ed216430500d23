#pragma once

// Parameter scans over (tau, B, chi, amplitudes, coupling), calibration
// scans against a reference trace, and the interference summary table.

#include <tripod/analysis.hpp>
#include <tripod/errors.hpp>
#include <tripod/parallel.hpp>
#include <tripod/propagation.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace tripod {

/// Values along each axis; an empty axis keeps the base value. Amplitudes in rad/us.
struct SweepAxes {
    std::vector<double> tau;
    std::vector<double> B;
    std::vector<double> chi;
    std::vector<double> omega_c_max;
    std::vector<double> omega_pi_max;
    std::vector<double> c_mu_a;

    bool empty() const {
        return tau.empty() && B.empty() && chi.empty() && omega_c_max.empty() && omega_pi_max.empty() &&
               c_mu_a.empty();
    }
    std::size_t size() const {
        auto n = [](const std::vector<double>& v) { return std::max<std::size_t>(v.size(), 1); };
        return n(tau) * n(B) * n(chi) * n(omega_c_max) * n(omega_pi_max) * n(c_mu_a);
    }
};

struct SweepSpec {
    PulseParams pulses{};
    SystemParams system{};
    GridSpec grid{};
    SweepAxes axes{};
    PeakOptions peaks{};
    unsigned workers = 1;
    std::size_t max_points = 10000;
};

struct SweepPoint {
    double tau = 0.0;
    double B = 0.0;
    double chi = 0.0;
    double omega_c_max = 0.0;
    double omega_pi_max = 0.0;
    double c_mu_a = 0.0;
};

struct PointResult {
    SweepPoint point;
    bool ok = false;
    std::string error;
    int iterations = 0;
    std::vector<double> intensity;
    PeakPair peaks;
};

struct SweepResult {
    std::vector<double> times;
    std::vector<PointResult> points;
    std::size_t failures = 0;

    /// More than 10% of the points failed.
    bool failed() const { return failures * 10 > points.size(); }
};

/// Cartesian product in nesting order tau, B, chi, omega_c_max, omega_pi_max,
/// c_mu_a (last varies fastest).
inline std::vector<SweepPoint> sweep_points(const SweepSpec& spec) {
    auto axis = [](const std::vector<double>& v, double base) {
        return v.empty() ? std::vector<double>{base} : v;
    };
    const auto taus = axis(spec.axes.tau, spec.pulses.delay_tau);
    const auto bs = axis(spec.axes.B, spec.system.zeeman_B);
    const auto chis = axis(spec.axes.chi, spec.pulses.chi);
    const auto ocs = axis(spec.axes.omega_c_max, spec.pulses.omega_c_max);
    const auto ops = axis(spec.axes.omega_pi_max, spec.pulses.omega_pi_max);
    const auto cms = axis(spec.axes.c_mu_a, spec.system.c_mu_a);
    std::vector<SweepPoint> out;
    for (double tau : taus)
        for (double b : bs)
            for (double chi : chis)
                for (double oc : ocs)
                    for (double op : ops)
                        for (double cm : cms) out.push_back({tau, b, chi, oc, op, cm});
    return out;
}

inline void validate(const SweepSpec& spec) {
    if (spec.axes.empty()) throw InputError("sweep: at least one axis must be non-empty");
    if (spec.axes.size() > spec.max_points) {
        throw InputError("sweep: " + std::to_string(spec.axes.size()) + " points exceed the cap of " +
                         std::to_string(spec.max_points));
    }
}

/// Solve one point of a sweep; exceptions propagate.
inline PointResult solve_point(const SweepSpec& spec, const SweepPoint& pt) {
    PulseParams pulses = spec.pulses;
    SystemParams system = spec.system;
    pulses.delay_tau = pt.tau;
    pulses.chi = pt.chi;
    pulses.omega_c_max = pt.omega_c_max;
    pulses.omega_pi_max = pt.omega_pi_max;
    system.zeeman_B = pt.B;
    system.c_mu_a = pt.c_mu_a;
    const SolveResult res = solve_self_consistent(pulses, system, spec.grid);
    PointResult out;
    out.point = pt;
    out.ok = true;
    out.iterations = res.iterations;
    out.intensity = res.exit_intensity();
    const auto t = res.times();
    out.peaks = split_peaks(t, out.intensity, pt.tau, spec.peaks);
    return out;
}

/// One self-consistent solve per point. Results are stored by point index,
/// so they do not depend on worker count or completion order. A failing
/// point is recorded with its message and the sweep continues.
inline SweepResult run_sweep(const SweepSpec& spec) {
    validate(spec);
    const auto points = sweep_points(spec);
    SweepResult out;
    out.points.resize(points.size());
    const TimeGrid times = spec.grid.upsilon(spec.system);
    out.times.resize(times.count);
    for (std::size_t m = 0; m < times.count; ++m) out.times[m] = times.at(m);

    parallel_for(points.size(), spec.workers, [&](std::size_t i, unsigned) {
        try {
            out.points[i] = solve_point(spec, points[i]);
        } catch (const std::exception& e) {
            out.points[i] = PointResult{};
            out.points[i].point = points[i];
            out.points[i].error = e.what();
        }
    });
    for (const auto& p : out.points) out.failures += p.ok ? 0 : 1;
    return out;
}

inline TraceDataset to_dataset(const SweepResult& sweep) {
    TraceDataset ds;
    for (const auto& p : sweep.points) {
        if (!p.ok) continue;
        ds.records.push_back({p.point.tau, p.point.B, p.point.chi, sweep.times, p.intensity});
    }
    return ds;
}

/// Rows (tau_us, B_MHz, chi_rad, t_star_us, transmitted_height, retrieved_height);
/// failed points carry NaN in the measured columns.
inline std::vector<std::vector<double>> peak_rows(const SweepResult& sweep) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> rows;
    for (const auto& p : sweep.points) {
        if (p.ok) {
            rows.push_back({p.point.tau, p.point.B, p.point.chi, p.peaks.retrieved.t,
                            p.peaks.transmitted.height, p.peaks.retrieved.height});
        } else {
            rows.push_back({p.point.tau, p.point.B, p.point.chi, nan, nan, nan});
        }
    }
    return rows;
}

inline const std::vector<std::string>& peak_columns() {
    static const std::vector<std::string> cols{"tau_us",    "B_MHz", "chi_rad", "t_star_us", "transmitted_height",
                                               "retrieved_height"};
    return cols;
}

/// Peak table as PeakRecords (retrieved heights), skipping NaN rows.
inline std::vector<PeakRecord> read_peak_records(const std::string& path) {
    const auto table = csv::read(path);
    const auto ct = table.index("tau_us"), cb = table.index("B_MHz"), cc = table.index("chi_rad");
    const auto ch = table.index("retrieved_height");
    std::vector<PeakRecord> out;
    for (const auto& r : table.rows) {
        if (std::isnan(r[ch])) continue;
        out.push_back({r[ct], r[cb], r[cc], r[ch]});
    }
    return out;
}

/// (B, t, I) rows for the points matching (tau, chi), in sweep order.
inline std::vector<std::vector<double>> heatmap_rows(const SweepResult& sweep, double tau, double chi) {
    std::vector<std::vector<double>> rows;
    for (const auto& p : sweep.points) {
        if (!p.ok || p.point.tau != tau || p.point.chi != chi) continue;
        for (std::size_t m = 0; m < sweep.times.size(); ++m) {
            rows.push_back({p.point.B, sweep.times[m], p.intensity[m]});
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Calibration

enum class CalibrationParam { omega_c_max, omega_pi_max, c_mu_a };

struct CalibrationReport {
    CalibrationParam param{};
    std::vector<double> candidates;
    /// RMS difference of normalised traces; +inf for candidates whose solve failed.
    std::vector<double> discrepancy;
    double argmin = 0.0;
    std::size_t argmin_index = 0;
};

/// Linear interpolation of (t, y) at x; clamps outside the sampled range.
inline double interpolate(std::span<const double> t, std::span<const double> y, double x) {
    if (x <= t.front()) return y.front();
    if (x >= t.back()) return y.back();
    const auto it = std::upper_bound(t.begin(), t.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - t.begin());
    const double f = (x - t[i - 1]) / (t[i] - t[i - 1]);
    return y[i - 1] + f * (y[i] - y[i - 1]);
}

/// RMS over the reference samples of (simulated - reference).
inline double trace_rms(std::span<const double> sim_t, std::span<const double> sim_y,
                        std::span<const double> ref_t, std::span<const double> ref_y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ref_t.size(); ++i) {
        const double d = interpolate(sim_t, sim_y, ref_t[i]) - ref_y[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(ref_t.size()));
}

/// Scans `param` over `candidates` (internal units) on the base configuration
/// in `spec` and scores each against the reference normalised trace.
inline CalibrationReport calibrate(CalibrationParam param, std::vector<double> candidates,
                                   std::span<const double> ref_t, std::span<const double> ref_y,
                                   SweepSpec spec) {
    if (candidates.empty()) throw InputError("calibrate: empty candidate list");
    if (ref_t.empty() || ref_t.size() != ref_y.size()) {
        throw InputError("calibrate: reference trace is empty or ragged");
    }
    spec.axes = SweepAxes{};
    switch (param) {
    case CalibrationParam::omega_c_max: spec.axes.omega_c_max = candidates; break;
    case CalibrationParam::omega_pi_max: spec.axes.omega_pi_max = candidates; break;
    case CalibrationParam::c_mu_a: spec.axes.c_mu_a = candidates; break;
    }
    const SweepResult sweep = run_sweep(spec);

    CalibrationReport rep;
    rep.param = param;
    rep.candidates = std::move(candidates);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sweep.points.size(); ++i) {
        const auto& p = sweep.points[i];
        const double d = p.ok ? trace_rms(sweep.times, p.intensity, ref_t, ref_y)
                              : std::numeric_limits<double>::infinity();
        rep.discrepancy.push_back(d);
        if (d < best) {
            best = d;
            rep.argmin_index = i;
        }
    }
    if (!std::isfinite(best)) throw InputError("calibrate: every candidate failed to solve");
    rep.argmin = rep.candidates[rep.argmin_index];
    return rep;
}

// ---------------------------------------------------------------------------
// Interference summary

struct InterferenceRow {
    double tau = 0.0;
    double B = 0.0;
    double chi = 0.0;
    double measured = 0.0;
    double predicted = 0.0;
    double residual = 0.0;
};

struct InterferenceSummary {
    std::vector<InterferenceRow> rows;
    double max_abs_residual = 0.0;
};

/// Joins retrieved heights with the envelope prediction. `fit` must carry
/// amplitude and gamma_c from fit_decay and tau_0 from fit_tau0.
inline InterferenceSummary interference_summary(std::span<const PeakRecord> peaks,
                                                const std::optional<FitResult>& fit,
                                                const ExclusionOptions& excl = {}) {
    if (!fit || !(fit->amplitude > 0.0) || !(fit->gamma_c > 0.0)) {
        throw InputError("interference_summary: run fit_decay and fit_tau0 first");
    }
    InterferenceSummary out;
    for (const auto& p : peaks) {
        if (excl.excluded(p.tau)) continue;
        InterferenceRow row{p.tau, p.B, p.chi, p.height,
                            envelope_model(p.tau, p.B, p.chi, fit->amplitude, fit->gamma_c, fit->tau_0), 0.0};
        row.residual = row.measured - row.predicted;
        out.max_abs_residual = std::max(out.max_abs_residual, std::abs(row.residual));
        out.rows.push_back(row);
    }
    return out;
}

} // namespace tripod
