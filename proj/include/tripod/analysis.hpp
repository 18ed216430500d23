#pragma once

// Exit-trace analysis: peak splitting, the exponential decay fit of retrieved
// heights, the two-polariton interference envelope and its global offset fit.

#include <tripod/csv.hpp>
#include <tripod/errors.hpp>
#include <tripod/least_squares.hpp>
#include <tripod/units.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace tripod {

/// A fit whose data cannot determine the parameter (e.g. all heights zero).
class DegenerateFit : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear Zeeman shift (MHz) for a bias field in gauss.
constexpr double zeeman_from_gauss(double b_gauss) noexcept { return b_gauss * zeeman_mhz_per_gauss; }

// ---------------------------------------------------------------------------
// Datasets

/// One normalised exit trace I / I_0^max for a (tau, B, chi) point.
struct TraceRecord {
    double tau = 0.0; ///< us
    double B = 0.0;   ///< MHz
    double chi = 0.0; ///< rad
    std::vector<double> t;
    std::vector<double> intensity;
};

struct TraceDataset {
    std::vector<TraceRecord> records;
};

inline const std::vector<std::string>& trace_columns() {
    static const std::vector<std::string> cols{"tau_us", "B_MHz", "chi_rad", "t_us", "intensity_norm"};
    return cols;
}

inline void write_dataset(const std::string& path, const TraceDataset& ds) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : ds.records) {
        for (std::size_t i = 0; i < r.t.size(); ++i) rows.push_back({r.tau, r.B, r.chi, r.t[i], r.intensity[i]});
    }
    csv::write_file(path, "tripod traces v1", trace_columns(), rows);
}

/// Groups consecutive rows with equal (tau, B, chi) into records.
inline TraceDataset read_dataset(const std::string& path) {
    const auto table = csv::read(path);
    const auto ct = table.index("tau_us"), cb = table.index("B_MHz"), cc = table.index("chi_rad");
    const auto tt = table.index("t_us"), ci = table.index("intensity_norm");
    TraceDataset ds;
    for (const auto& row : table.rows) {
        if (ds.records.empty() || ds.records.back().tau != row[ct] || ds.records.back().B != row[cb] ||
            ds.records.back().chi != row[cc]) {
            ds.records.push_back({row[ct], row[cb], row[cc], {}, {}});
        }
        ds.records.back().t.push_back(row[tt]);
        ds.records.back().intensity.push_back(row[ci]);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Peaks

struct Peak {
    double t = 0.0;
    double height = 0.0;
    /// Retrieved signal below the noise floor; height is reported as 0.
    bool null = false;
};

struct PeakPair {
    Peak transmitted;
    Peak retrieved;
};

struct PeakOptions {
    double t_split = 0.15;
    /// Retrieved window starts no earlier than tau - guard.
    double guard = 0.1;
    /// Null-peak floor as a fraction of the transmitted height.
    double null_fraction = 1e-3;
};

/// Transmitted = max for t < t_split; retrieved = max for
/// t >= max(t_split, tau - guard). Throws InputError if either window is empty.
inline PeakPair split_peaks(std::span<const double> t, std::span<const double> intensity, double tau,
                            const PeakOptions& opt = {}) {
    if (t.size() != intensity.size()) throw InputError("split_peaks: length mismatch");
    const double lower = std::max(opt.t_split, tau - opt.guard);
    PeakPair out;
    bool have_transmitted = false;
    bool have_retrieved = false;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < opt.t_split) {
            if (!have_transmitted || intensity[i] > out.transmitted.height) {
                out.transmitted = {t[i], intensity[i], false};
                have_transmitted = true;
            }
        } else if (t[i] >= lower) {
            if (!have_retrieved || intensity[i] > out.retrieved.height) {
                out.retrieved = {t[i], intensity[i], false};
                have_retrieved = true;
            }
        }
    }
    if (!have_retrieved) throw InputError("split_peaks: retrieved window is empty");
    if (!have_transmitted) throw InputError("split_peaks: transmitted window is empty");
    if (out.retrieved.height < opt.null_fraction * out.transmitted.height) {
        out.retrieved.height = 0.0;
        out.retrieved.null = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fits

/// Parameters of A exp(-2 gamma_c tau) cos^2(...(tau + tau_0)) with 1-sigma errors.
struct FitResult {
    double amplitude = 0.0;
    double gamma_c = 0.0; ///< rad/us
    double tau_0 = 0.0;   ///< us
    double amplitude_err = 0.0;
    double gamma_c_err = 0.0;
    double tau_0_err = 0.0;
    double residual_norm = 0.0;
    std::size_t points_used = 0;
    std::size_t points_excluded = 0;
};

struct DecayPoint {
    double tau = 0.0;
    double height = 0.0;
};

/// Heights at B = chi = 0 together with their (tau, B, chi).
struct PeakRecord {
    double tau = 0.0;
    double B = 0.0;
    double chi = 0.0;
    double height = 0.0;
};

struct ExclusionOptions {
    /// Delays dropped before fitting (transmitted and retrieved overlap there).
    std::vector<double> exclude_tau{0.2};
    double match_tolerance = 1e-9;

    bool excluded(double tau) const {
        return std::any_of(exclude_tau.begin(), exclude_tau.end(),
                           [&](double x) { return std::abs(x - tau) <= match_tolerance; });
    }
};

/// Predicted normalised retrieved peak: A e^{-2 gamma_c tau} cos^2((chi + 2 pi 2B (tau + tau_0)) / 2).
inline double envelope_model(double tau, double B, double chi, double amplitude, double gamma_c,
                             double tau_0) noexcept {
    const double c = std::cos(0.5 * (chi + two_pi * 2.0 * B * (tau + tau_0)));
    return amplitude * std::exp(-2.0 * gamma_c * tau) * c * c;
}

/// Least squares of h = A exp(-2 gamma_c tau); log-linear start, then refined
/// on the heights themselves.
inline FitResult fit_decay(std::span<const DecayPoint> points, const ExclusionOptions& excl = {},
                           const LeastSquaresOptions& solver = {}) {
    std::vector<DecayPoint> used;
    for (const auto& p : points) {
        if (excl.excluded(p.tau)) continue;
        if (!(p.height > 0.0)) {
            throw InputError("fit_decay: non-positive height at tau = " + std::to_string(p.tau));
        }
        used.push_back(p);
    }
    if (used.size() < 3) throw InputError("fit_decay: need at least 3 points after exclusions");

    // log h = log A - 2 gamma tau
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (const auto& p : used) {
        const double ly = std::log(p.height);
        st += p.tau;
        sy += ly;
        stt += p.tau * p.tau;
        sty += p.tau * ly;
    }
    const double n = static_cast<double>(used.size());
    const double denom = n * stt - st * st;
    if (denom == 0.0) throw DegenerateFit("fit_decay: all delays equal");
    const double slope = (n * sty - st * sy) / denom;
    const double icpt = (sy - slope * st) / n;

    Eigen::VectorXd x0(2);
    x0 << std::exp(icpt), -0.5 * slope;
    const auto m = static_cast<Eigen::Index>(used.size());
    auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& p = used[static_cast<std::size_t>(i)];
            r[i] = x[0] * std::exp(-2.0 * x[1] * p.tau) - p.height;
        }
    };
    const auto res = levenberg_marquardt(residual, x0, m, solver);

    FitResult fit;
    fit.amplitude = res.x[0];
    fit.gamma_c = res.x[1];
    fit.amplitude_err = res.stddev[0];
    fit.gamma_c_err = res.stddev[1];
    fit.residual_norm = res.residual_norm;
    fit.points_used = used.size();
    fit.points_excluded = points.size() - used.size();
    return fit;
}

struct Tau0Options {
    double bracket_lo = -0.5;
    double bracket_hi = 0.5;
    int starts = 21;
    ExclusionOptions exclusion{};
    LeastSquaresOptions solver{};
};

/// Global one-parameter fit of tau_0 with amplitude and gamma_c held fixed.
/// Multistart over the bracket; the best in-bracket optimum wins.
inline FitResult fit_tau0(std::span<const PeakRecord> records, double amplitude, double gamma_c,
                          const Tau0Options& opt = {}) {
    std::vector<PeakRecord> used;
    for (const auto& r : records) {
        if (!opt.exclusion.excluded(r.tau)) used.push_back(r);
    }
    if (used.empty()) throw InputError("fit_tau0: no records after exclusions");
    const bool all_zero =
        std::all_of(used.begin(), used.end(), [](const PeakRecord& r) { return r.height == 0.0; });
    if (all_zero) throw DegenerateFit("fit_tau0: all retrieved heights are zero");
    const bool no_field =
        std::all_of(used.begin(), used.end(), [](const PeakRecord& r) { return r.B == 0.0; });
    if (no_field) throw DegenerateFit("fit_tau0: tau_0 is not identifiable without B != 0 records");

    const auto m = static_cast<Eigen::Index>(used.size());
    auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& p = used[static_cast<std::size_t>(i)];
            r[i] = envelope_model(p.tau, p.B, p.chi, amplitude, gamma_c, x[0]) - p.height;
        }
    };

    bool found = false;
    LeastSquaresResult best;
    const int starts = std::max(opt.starts, 1);
    for (int k = 0; k < starts; ++k) {
        const double s = starts == 1 ? 0.5 * (opt.bracket_lo + opt.bracket_hi)
                                     : opt.bracket_lo + (opt.bracket_hi - opt.bracket_lo) * k / (starts - 1);
        Eigen::VectorXd x0(1);
        x0[0] = s;
        LeastSquaresResult res;
        try {
            res = levenberg_marquardt(residual, x0, m, opt.solver);
        } catch (const FitFailure&) {
            continue;
        }
        if (res.x[0] < opt.bracket_lo || res.x[0] > opt.bracket_hi) continue;
        if (!found || res.residual_norm < best.residual_norm) {
            best = res;
            found = true;
        }
    }
    if (!found) throw FitFailure("fit_tau0: no start converged inside the bracket", {});

    FitResult fit;
    fit.amplitude = amplitude;
    fit.gamma_c = gamma_c;
    fit.tau_0 = best.x[0];
    fit.tau_0_err = best.stddev[0];
    fit.residual_norm = best.residual_norm;
    fit.points_used = used.size();
    fit.points_excluded = records.size() - used.size();
    return fit;
}

// ---------------------------------------------------------------------------
// Reporting

/// "0.111(3)" style: value rounded to the first significant digit of err.
inline std::string format_uncertain(double value, double err) {
    char buf[64];
    if (!(err > 0.0) || !std::isfinite(err)) {
        std::snprintf(buf, sizeof buf, "%.6g", value);
        return buf;
    }
    int decimals = std::max(0, -static_cast<int>(std::floor(std::log10(err))));
    long digits = std::lround(err * std::pow(10.0, decimals));
    if (digits >= 10 && decimals > 0) {
        --decimals;
        digits = std::lround(err * std::pow(10.0, decimals));
    }
    std::snprintf(buf, sizeof buf, "%.*f(%ld)", decimals, value, digits);
    return buf;
}

/// Plain-text report; rates are shown as 2 pi x (linear MHz).
inline std::string format_fit_report(const FitResult& fit, bool decay, bool tau0) {
    std::ostringstream os;
    if (decay) {
        os << "A = " << format_uncertain(fit.amplitude, fit.amplitude_err) << '\n';
        os << "gamma_c = 2pi x " << format_uncertain(linear(fit.gamma_c), linear(fit.gamma_c_err))
           << " MHz\n";
        if (fit.gamma_c > 0.0) {
            const double tc = 1.0 / fit.gamma_c;
            os << "coherence time = " << format_uncertain(tc, tc * fit.gamma_c_err / fit.gamma_c)
               << " us\n";
        }
    }
    if (tau0) os << "tau_0 = " << format_uncertain(fit.tau_0, fit.tau_0_err) << " us\n";
    os << "residual norm = " << fit.residual_norm << '\n';
    os << "points used = " << fit.points_used << ", excluded = " << fit.points_excluded << '\n';
    return os.str();
}

inline void write_fit_csv(const std::string& path, const FitResult& fit) {
    csv::write_file(path, "tripod fit v1",
                    {"amplitude", "amplitude_err", "gamma_c_rad_per_us", "gamma_c_err", "tau_0_us",
                     "tau_0_err", "residual_norm", "points_used", "points_excluded"},
                    {{fit.amplitude, fit.amplitude_err, fit.gamma_c, fit.gamma_c_err, fit.tau_0,
                      fit.tau_0_err, fit.residual_norm, static_cast<double>(fit.points_used),
                      static_cast<double>(fit.points_excluded)}});
}

} // namespace tripod
