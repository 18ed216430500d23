#pragma once

// Control (storage + retrieval) and probe Rabi envelopes, and the fit of
// their shapes to background-subtracted intensity traces.

#include <tripod/errors.hpp>
#include <tripod/least_squares.hpp>
#include <tripod/units.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

namespace tripod {

using cplx = std::complex<double>;

/// Pulse-sequence constants. Times and widths in us, amplitudes in rad/us.
/// `tanh_times[2]` and `tanh_times[3]` are the retrieval edges for zero
/// delay; `edge_times()` adds `delay_tau` to them.
struct PulseParams {
    std::array<double, 4> tanh_times{-1.577, -0.031, 0.024, 1.568};
    std::array<double, 4> tanh_widths{0.1017, 0.1022, 0.1021, 0.1024};
    double probe_center = -0.07541;
    double probe_width = 0.11167;
    double omega_c_max = angular(9.5);
    double omega_pi_max = angular(1.0);
    /// Relative phase imprinted on the sigma- component during retrieval.
    double chi = 0.0;
    double delay_tau = 0.4;
    /// Constant phase of the input probe (rad); observables do not depend on it.
    double probe_phase = 0.0;

    std::array<double, 4> edge_times() const noexcept {
        return {tanh_times[0], tanh_times[1], tanh_times[2] + delay_tau,
                tanh_times[3] + delay_tau};
    }

    /// Phase switch time: midway between storage fall and retrieval rise.
    double retrieval_start() const noexcept {
        const auto e = edge_times();
        return 0.5 * (e[1] + e[2]);
    }

    void validate() const {
        for (double w : tanh_widths) {
            if (!(w > 0.0)) throw InputError("pulse: tanh widths must be positive");
        }
        if (!(probe_width > 0.0)) throw InputError("pulse: probe width must be positive");
        const auto e = edge_times();
        if (!(e[0] < e[1] && e[1] < e[2] && e[2] < e[3])) {
            throw InputError("pulse: control edges must satisfy t1 < t2 < t3 < t4");
        }
        if (!std::isfinite(chi) || !std::isfinite(omega_c_max) || !std::isfinite(omega_pi_max)) {
            throw InputError("pulse: non-finite amplitude or phase");
        }
    }
};

struct ControlFields {
    cplx plus;  ///< |1> <-> |4>
    cplx minus; ///< |3> <-> |4>
};

/// Signed tanh sum with unit amplitude; its square is the control intensity.
inline double control_shape(double t, const std::array<double, 4>& times,
                            const std::array<double, 4>& widths) noexcept {
    return 0.5 * (std::tanh((t - times[0]) / widths[0]) - std::tanh((t - times[1]) / widths[1]) +
                  std::tanh((t - times[2]) / widths[2]) - std::tanh((t - times[3]) / widths[3]));
}

inline ControlFields control_envelope(double t, const PulseParams& p) noexcept {
    const auto e = p.edge_times();
    const double mag = p.omega_c_max * std::abs(control_shape(t, e, p.tanh_widths));
    const cplx minus = t >= p.retrieval_start() ? std::polar(mag, p.chi) : cplx(mag, 0.0);
    return {cplx(mag, 0.0), minus};
}

inline cplx probe_envelope(double t, const PulseParams& p) noexcept {
    const double x = (t - p.probe_center) / p.probe_width;
    const double a = p.omega_pi_max * std::exp(-0.5 * x * x);
    if (p.probe_phase == 0.0) return {a, 0.0};
    return std::polar(a, p.probe_phase);
}

// ---------------------------------------------------------------------------
// Shape fits

enum class PulseModel { control, probe };

struct PulseFitOptions {
    /// Delay of the measured sequence; removed from the fitted t3, t4.
    double delay_tau = 0.4;
    bool subtract_background = true;
    LeastSquaresOptions solver{};
};

struct PulseFit {
    /// Base parameters with the fitted times and widths filled in.
    PulseParams params;
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<double> stddev;
    /// Intensity scale in the trace's arbitrary units.
    double scale = 0.0;
    double background = 0.0;
    double residual_norm = 0.0;
    int iterations = 0;
};

/// Median of the first 10% of samples (at least one).
inline double trace_background(std::span<const double> intensity) {
    if (intensity.empty()) return 0.0;
    const std::size_t n = std::max<std::size_t>(1, intensity.size() / 10);
    std::vector<double> head(intensity.begin(), intensity.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(head.begin(), head.end());
    return n % 2 ? head[n / 2] : 0.5 * (head[n / 2 - 1] + head[n / 2]);
}

namespace detail {

// Times where `amp` crosses `level`, linearly interpolated.
inline std::vector<double> crossings(std::span<const double> t, const std::vector<double>& amp,
                                     double level) {
    std::vector<double> out;
    for (std::size_t i = 1; i < amp.size(); ++i) {
        const double a = amp[i - 1] - level;
        const double b = amp[i] - level;
        if ((a < 0.0) != (b < 0.0)) {
            out.push_back(t[i - 1] + (t[i] - t[i - 1]) * a / (a - b));
        }
    }
    return out;
}

// Crossing of `level` nearest to `near`.
inline double nearest_crossing(std::span<const double> t, const std::vector<double>& amp,
                               double level, double near) {
    const auto c = crossings(t, amp, level);
    double best = near;
    double dist = INFINITY;
    for (double x : c) {
        if (std::abs(x - near) < dist) {
            dist = std::abs(x - near);
            best = x;
        }
    }
    return best;
}

} // namespace detail

inline PulseFit fit_pulse_params(std::span<const double> t, std::span<const double> intensity,
                                 PulseModel model, const PulseParams& base = {},
                                 const PulseFitOptions& opt = {}) {
    if (t.size() != intensity.size()) throw InputError("pulse fit: time/intensity length mismatch");
    const std::size_t n_params = model == PulseModel::control ? 9 : 3;
    if (t.size() < n_params) {
        throw InputError("pulse fit: " + std::to_string(t.size()) + " samples for " +
                         std::to_string(n_params) + " parameters");
    }

    PulseFit fit;
    fit.background = opt.subtract_background ? trace_background(intensity) : 0.0;
    std::vector<double> y(intensity.begin(), intensity.end());
    for (double& v : y) v -= fit.background;
    const double peak = *std::max_element(y.begin(), y.end());
    if (!(peak > 0.0)) throw InputError("pulse fit: trace has no positive signal");

    std::vector<double> amp(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) amp[i] = std::sqrt(std::max(y[i], 0.0) / peak);

    const Eigen::Index m = static_cast<Eigen::Index>(t.size());
    Eigen::VectorXd x0(static_cast<Eigen::Index>(n_params));

    if (model == PulseModel::control) {
        const auto half = detail::crossings(t, amp, 0.5);
        if (half.size() < 4) {
            throw InputError("pulse fit: control trace must contain both edges of both pulses");
        }
        x0[0] = peak;
        for (int l = 0; l < 4; ++l) {
            const double tl = half[static_cast<std::size_t>(l)];
            // Each edge goes 1/4 -> 3/4 of the amplitude over 2 atanh(1/2) widths.
            const double lo = detail::nearest_crossing(t, amp, 0.25, tl);
            const double hi = detail::nearest_crossing(t, amp, 0.75, tl);
            double w = std::abs(hi - lo) / (2.0 * std::atanh(0.5));
            if (!(w > 0.0)) w = 5.0 * std::abs(t[1] - t[0]);
            x0[1 + l] = tl;
            x0[5 + l] = w;
        }
        auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
            const std::array<double, 4> times{x[1], x[2], x[3], x[4]};
            const std::array<double, 4> widths{x[5], x[6], x[7], x[8]};
            for (Eigen::Index i = 0; i < m; ++i) {
                const double s = control_shape(t[static_cast<std::size_t>(i)], times, widths);
                r[i] = x[0] * s * s - y[static_cast<std::size_t>(i)];
            }
        };
        const auto res = levenberg_marquardt(residual, x0, m, opt.solver);
        fit.params = base;
        fit.params.delay_tau = opt.delay_tau;
        for (int l = 0; l < 4; ++l) {
            fit.params.tanh_times[static_cast<std::size_t>(l)] =
                res.x[1 + l] - (l >= 2 ? opt.delay_tau : 0.0);
            fit.params.tanh_widths[static_cast<std::size_t>(l)] = res.x[5 + l];
        }
        fit.names = {"t1", "t2", "t3", "t4", "tau1", "tau2", "tau3", "tau4"};
        for (int j = 1; j < 9; ++j) {
            fit.values.push_back(j >= 3 && j <= 4 ? res.x[j] - opt.delay_tau : res.x[j]);
            fit.stddev.push_back(res.stddev[j]);
        }
        fit.scale = res.x[0];
        fit.residual_norm = res.residual_norm;
        fit.iterations = res.iterations;
    } else {
        const auto peak_it = std::max_element(y.begin(), y.end());
        const double center = t[static_cast<std::size_t>(peak_it - y.begin())];
        const auto half = detail::crossings(t, amp, std::sqrt(0.5));
        double width = 0.1;
        if (half.size() >= 2) {
            // intensity FWHM = 2 sqrt(ln 2) tau_pi
            width = (half.back() - half.front()) / (2.0 * std::sqrt(std::log(2.0)));
        }
        x0 << peak, center, width;
        auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
            for (Eigen::Index i = 0; i < m; ++i) {
                const double u = (t[static_cast<std::size_t>(i)] - x[1]) / x[2];
                r[i] = x[0] * std::exp(-u * u) - y[static_cast<std::size_t>(i)];
            }
        };
        const auto res = levenberg_marquardt(residual, x0, m, opt.solver);
        fit.params = base;
        fit.params.probe_center = res.x[1];
        fit.params.probe_width = std::abs(res.x[2]);
        fit.names = {"t_pi", "tau_pi"};
        fit.values = {res.x[1], std::abs(res.x[2])};
        fit.stddev = {res.stddev[1], res.stddev[2]};
        fit.scale = res.x[0];
        fit.residual_norm = res.residual_norm;
        fit.iterations = res.iterations;
    }
    return fit;
}

} // namespace tripod
