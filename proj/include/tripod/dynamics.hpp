#pragma once

// Single-site atomic dynamics of the tripod: levels |1>,|2>,|3> (m_F = -1,0,+1
// of F=1) and |4> (F'=0). Matrix indices are zero based, so sigma_jk lives at
// (j-1, k-1).

#include <tripod/errors.hpp>
#include <tripod/pulses.hpp>
#include <tripod/units.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

namespace tripod {

using Sigma = Eigen::Matrix4cd;

/// Level structure, decay and medium constants.
struct SystemParams {
    /// Linear Zeeman shift in MHz; E1 = +2 pi B, E3 = -2 pi B.
    double zeeman_B = 0.0;
    /// E4 in rad/us (zero on resonance).
    double e4_detuning = 0.0;
    /// Excited-state decay rate, rad/us (lifetime 26.24 ns).
    double gamma = angular(6.065);
    /// Ground-state decoherence rate acting on all coherences, rad/us.
    double gamma_d = angular(0.111);
    /// Medium-field coupling c * mu_a, 1/us^2.
    double c_mu_a = 2.118e7;
    /// Medium length, mm.
    double length_L = 3.0;
    double t_initial = -3.0;

    double e1() const noexcept { return two_pi * zeeman_B; }
    double e3() const noexcept { return -two_pi * zeeman_B; }

    void validate() const {
        if (!(gamma > 0.0)) throw InputError("system: gamma must be positive");
        if (!(gamma_d >= 0.0)) throw InputError("system: gamma_d must be non-negative");
        if (!(c_mu_a >= 0.0)) throw InputError("system: c_mu_a must be non-negative");
        if (!(length_L > 0.0)) throw InputError("system: length_L must be positive");
        if (!std::isfinite(zeeman_B) || !std::isfinite(e4_detuning) || !std::isfinite(t_initial)) {
            throw InputError("system: non-finite level energy or start time");
        }
    }
};

/// Rabi couplings seen by one site at one instant, rad/us.
struct DriveFields {
    cplx control_plus{};
    cplx probe{};
    cplx control_minus{};
};

/// Collective operators sigma_jk at one (xi, Upsilon) point.
struct CollectiveState {
    Sigma sigma = Sigma::Zero();

    /// All population in ground level `level` (1..4).
    static CollectiveState pure(int level) {
        CollectiveState s;
        s.sigma(level - 1, level - 1) = 1.0;
        return s;
    }

    double trace_error() const { return std::abs(sigma.trace().real() - 1.0); }
    double hermiticity_error() const { return (sigma - sigma.adjoint()).cwiseAbs().maxCoeff(); }
    double min_eigenvalue() const {
        const Sigma h = 0.5 * (sigma + sigma.adjoint());
        Eigen::SelfAdjointEigenSolver<Sigma> es(h, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

    /// Throws InputError if trace, hermiticity or populations are off by more than tol.
    void check(double tol = 1e-6) const {
        if (trace_error() > tol) throw InputError("state: trace differs from 1");
        if (hermiticity_error() > tol) throw InputError("state: not Hermitian");
        for (int j = 0; j < 4; ++j) {
            const double p = sigma(j, j).real();
            if (p < -tol || p > 1.0 + tol) throw InputError("state: population outside [0, 1]");
        }
    }
};

/// Rotating-frame Hamiltonian, rad/us.
inline Sigma hamiltonian(const DriveFields& f, const SystemParams& sp) {
    Sigma h = Sigma::Zero();
    h(0, 0) = sp.e1();
    h(2, 2) = sp.e3();
    h(3, 3) = sp.e4_detuning;
    h(0, 3) = -0.5 * f.control_plus;
    h(1, 3) = -0.5 * f.probe;
    h(2, 3) = -0.5 * f.control_minus;
    h(3, 0) = std::conj(h(0, 3));
    h(3, 1) = std::conj(h(1, 3));
    h(3, 2) = std::conj(h(2, 3));
    return h;
}

/// Heisenberg-Langevin right-hand side (noise operators dropped). Writes the
/// upper triangle from the equations of motion and mirrors it, so the
/// derivative is Hermitian and its trace vanishes up to rounding.
inline void langevin_rhs(const Sigma& s, const DriveFields& f, const SystemParams& sp, Sigma& d) {
    const cplx i2(0.0, 0.5);
    const cplx a = f.control_plus;
    const cplx p = f.probe;
    const cplx m = f.control_minus;
    const double g = sp.gamma;
    const double gd = sp.gamma_d;
    const double e1 = sp.e1();
    const double e3 = sp.e3();
    const double e4 = sp.e4_detuning;
    const cplx i(0.0, 1.0);

    const cplx s11 = s(0, 0), s12 = s(0, 1), s13 = s(0, 2), s14 = s(0, 3);
    const cplx s22 = s(1, 1), s23 = s(1, 2), s24 = s(1, 3);
    const cplx s33 = s(2, 2), s34 = s(2, 3);
    const cplx s44 = s(3, 3);
    const cplx s21 = std::conj(s12), s31 = std::conj(s13), s32 = std::conj(s23);
    const cplx s41 = std::conj(s14), s42 = std::conj(s24), s43 = std::conj(s34);

    // (i/2) conj(Omega) sigma_j4 for the three optical transitions; the pair
    // terms in the population equations add to twice their real part.
    const double x1 = (i2 * std::conj(a) * s14).real();
    const double x2 = (i2 * std::conj(p) * s24).real();
    const double x3 = (i2 * std::conj(m) * s34).real();
    const double feed = g / 3.0 * s44.real();

    d(0, 0) = feed - 2.0 * x1;
    d(1, 1) = feed - 2.0 * x2;
    d(2, 2) = feed - 2.0 * x3;
    d(3, 3) = -g * s44.real() + 2.0 * (x1 + x2 + x3);

    d(0, 1) = -i2 * std::conj(p) * s14 + i2 * a * s42 - i * e1 * s12 - gd * s12;
    d(0, 2) = -i2 * std::conj(m) * s14 + i2 * a * s43 + i * (e3 - e1) * s13 - gd * s13;
    d(0, 3) = -i2 * a * s11 - i2 * p * s12 - i2 * m * s13 + i * (e4 - e1) * s14 + i2 * a * s44 -
              (0.5 * g + gd) * s14;
    d(1, 2) = -i2 * std::conj(m) * s24 + i2 * p * s43 + i * e3 * s23 - gd * s23;
    d(1, 3) = -i2 * a * s21 - i2 * p * s22 - i2 * m * s23 + i * e4 * s24 + i2 * p * s44 -
              (0.5 * g + gd) * s24;
    d(2, 3) = -i2 * a * s31 - i2 * p * s32 - i2 * m * s33 + i * (e4 - e3) * s34 + i2 * m * s44 -
              (0.5 * g + gd) * s34;

    d(1, 0) = std::conj(d(0, 1));
    d(2, 0) = std::conj(d(0, 2));
    d(3, 0) = std::conj(d(0, 3));
    d(2, 1) = std::conj(d(1, 2));
    d(3, 1) = std::conj(d(1, 3));
    d(3, 2) = std::conj(d(2, 3));
}

inline Sigma langevin_rhs(const Sigma& s, const DriveFields& f, const SystemParams& sp) {
    Sigma d;
    langevin_rhs(s, f, sp, d);
    return d;
}

// ---------------------------------------------------------------------------
// Time integration

/// Uniform output grid t_m = start + m * step, m = 0..count-1.
struct TimeGrid {
    double start = 0.0;
    double step = 1e-3;
    std::size_t count = 0;

    double at(std::size_t m) const noexcept { return start + static_cast<double>(m) * step; }
    double end() const noexcept { return at(count - 1); }
};

struct StepControl {
    /// Absolute bound on the step-doubling error estimate per matrix entry.
    double tolerance = 1e-8;
    double initial_step = 1e-3;
    double min_step = 1e-9;
    /// Reported in IntegrationError; -1 for a standalone site.
    int site = -1;
};

namespace detail {

// One classical RK4 step with the stage-1 derivative and drives supplied.
inline void rk4_step(const Sigma& y, const Sigma& k1, const DriveFields& dmid, const DriveFields& d1,
                     double h, const SystemParams& sp, Sigma& out) {
    Sigma k2, k3, k4, tmp;
    tmp.noalias() = y + (0.5 * h) * k1;
    langevin_rhs(tmp, dmid, sp, k2);
    tmp.noalias() = y + (0.5 * h) * k2;
    langevin_rhs(tmp, dmid, sp, k3);
    tmp.noalias() = y + h * k3;
    langevin_rhs(tmp, d1, sp, k4);
    out.noalias() = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

} // namespace detail

/// Fixed-step RK4 with `substeps` steps per grid interval. `drive(t)` returns
/// DriveFields. Writes grid.count states into `out`.
template <class Drive>
void integrate_fixed(const CollectiveState& initial, Drive&& drive, const SystemParams& sp,
                     const TimeGrid& grid, int substeps, std::span<Sigma> out) {
    if (out.size() < grid.count) throw InputError("integrate: output span too small");
    if (grid.count == 0) return;
    Sigma y = initial.sigma;
    out[0] = y;
    Sigma k1;
    for (std::size_t m = 1; m < grid.count; ++m) {
        const double t0 = grid.at(m - 1);
        const double h = grid.step / substeps;
        for (int k = 0; k < substeps; ++k) {
            const double t = t0 + k * h;
            const DriveFields d0 = drive(t);
            const DriveFields dh = drive(t + 0.5 * h);
            const DriveFields d1 = drive(k + 1 == substeps ? grid.at(m) : t + h);
            langevin_rhs(y, d0, sp, k1);
            detail::rk4_step(y, k1, dh, d1, h, sp, y);
        }
        out[m] = y;
    }
}

/// Adaptive RK4 with step doubling. Every output time is hit exactly; the
/// step may be shorter than the grid spacing where the error estimate
/// demands it. Throws IntegrationError when the step falls below min_step.
template <class Drive>
void integrate_site(const CollectiveState& initial, Drive&& drive, const SystemParams& sp,
                    const TimeGrid& grid, const StepControl& ctl, std::span<Sigma> out) {
    if (out.size() < grid.count) throw InputError("integrate: output span too small");
    if (grid.count == 0) return;

    Sigma y = initial.sigma;
    out[0] = y;
    double t = grid.start;
    double h = ctl.initial_step;
    DriveFields d0 = drive(t);
    Sigma f0, fh, full, half, twice;
    langevin_rhs(y, d0, sp, f0);
    const double tol2 = (15.0 * ctl.tolerance) * (15.0 * ctl.tolerance);

    for (std::size_t m = 1; m < grid.count; ++m) {
        const double target = grid.at(m);
        while (t < target) {
            const double remaining = target - t;
            const bool last = h >= remaining;
            const double hs = last ? remaining : h;
            const double t1 = last ? target : t + hs;
            const DriveFields dq = drive(t + 0.25 * hs);
            const DriveFields dh = drive(t + 0.5 * hs);
            const DriveFields d3q = drive(t + 0.75 * hs);
            const DriveFields d1 = drive(t1);

            detail::rk4_step(y, f0, dh, d1, hs, sp, full);
            detail::rk4_step(y, f0, dq, dh, 0.5 * hs, sp, half);
            langevin_rhs(half, dh, sp, fh);
            detail::rk4_step(half, fh, d3q, d1, 0.5 * hs, sp, twice);

            // |twice - full| / 15 estimates the local error of `twice`.
            const double err2 = (twice - full).cwiseAbs2().maxCoeff();
            if (err2 <= tol2) {
                y = twice;
                t = t1;
                d0 = d1;
                langevin_rhs(y, d0, sp, f0);
                const double grow =
                    err2 == 0.0 ? 4.0 : std::clamp(0.9 * std::pow(tol2 / err2, 0.1), 0.2, 4.0);
                const double proposal = hs * grow;
                h = (last && hs < h) ? std::max(h, proposal) : proposal;
            } else {
                h = hs * std::max(0.2, 0.9 * std::pow(tol2 / err2, 0.1));
                if (h < ctl.min_step) {
                    throw IntegrationError("integration step underflow at t = " + std::to_string(t) +
                                               " us (site " + std::to_string(ctl.site) + ")",
                                           ctl.site);
                }
            }
        }
        out[m] = y;
    }
}

/// Convenience overload returning the states.
template <class Drive>
std::vector<Sigma> integrate_site(const CollectiveState& initial, Drive&& drive,
                                  const SystemParams& sp, const TimeGrid& grid,
                                  const StepControl& ctl = {}) {
    std::vector<Sigma> out(grid.count);
    integrate_site(initial, std::forward<Drive>(drive), sp, grid, ctl, std::span<Sigma>(out));
    return out;
}

/// Drive for a single site: analytic control envelopes plus a caller-supplied
/// probe amplitude as a function of time.
template <class Probe>
struct PulseDrive {
    const PulseParams* pulses;
    Probe probe;

    DriveFields operator()(double t) const {
        const ControlFields c = control_envelope(t, *pulses);
        return {c.plus, probe(t), c.minus};
    }
};

template <class Probe>
PulseDrive(const PulseParams*, Probe) -> PulseDrive<Probe>;

} // namespace tripod
