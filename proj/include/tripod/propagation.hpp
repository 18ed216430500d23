#pragma once

// Self-consistent probe propagation through a 1D medium in the co-moving
// frame xi = z/c, Upsilon = t - z/c. The field is marched along xi with an
// explicit first-order update driven by sigma_24 of the previous slice; the
// atomic dynamics at each slice are integrated in Upsilon (taken equal to t).

#include <tripod/dynamics.hpp>
#include <tripod/errors.hpp>
#include <tripod/parallel.hpp>
#include <tripod/pulses.hpp>
#include <tripod/units.hpp>

#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tripod {

struct ComovingPoint {
    double xi;      ///< z / c, us
    double upsilon; ///< t - z / c, us
};

/// (z [mm], t [us]) -> (xi, Upsilon).
constexpr ComovingPoint comoving(double z, double t) noexcept {
    return {z / speed_of_light, t - z / speed_of_light};
}

/// Discretisation and iteration controls. Upsilon runs from
/// SystemParams::t_initial to t_final in n_upsilon uniform samples.
struct GridSpec {
    std::size_t n_xi = 201;
    std::size_t n_upsilon = 6001;
    double t_final = 3.0;
    /// Weight of the freshly propagated field in the under-relaxed update.
    double damping_y = 0.5;
    /// Threshold on sum |sigma_new - sigma_old| over the grid; unset means
    /// 1e-7 per stored matrix entry.
    std::optional<double> epsilon;
    int max_iterations = 200;
    StepControl step{};
    /// Threads used to integrate slices within one iteration.
    unsigned workers = 1;

    TimeGrid upsilon(const SystemParams& sp) const {
        return {sp.t_initial, (t_final - sp.t_initial) / static_cast<double>(n_upsilon - 1), n_upsilon};
    }
    double dxi(const SystemParams& sp) const {
        return sp.length_L / speed_of_light / static_cast<double>(n_xi - 1);
    }
    double resolved_epsilon() const {
        return epsilon ? *epsilon : 1e-7 * static_cast<double>(n_xi * n_upsilon * 16);
    }

    void validate(const SystemParams& sp) const {
        if (n_xi < 2) throw InputError("grid: n_xi must be at least 2");
        if (n_upsilon < 2) throw InputError("grid: n_upsilon must be at least 2");
        if (!(t_final > sp.t_initial)) throw InputError("grid: t_final must exceed t_initial");
        if (!(damping_y >= 0.0 && damping_y < 1.0)) {
            throw InputError("grid: damping_y must satisfy 0 <= y < 1");
        }
        if (!(resolved_epsilon() > 0.0)) throw InputError("grid: epsilon must be positive");
        if (max_iterations < 1) throw InputError("grid: max_iterations must be positive");
        if (!(step.tolerance > 0.0)) throw InputError("grid: integrator tolerance must be positive");
    }
};

/// Probe amplitude on the (xi_l, Upsilon_m) grid, row-major in xi.
struct FieldGrid {
    std::size_t n_xi = 0;
    std::size_t n_upsilon = 0;
    double dxi = 0.0;
    TimeGrid upsilon{};
    std::vector<cplx> omega;

    std::span<cplx> row(std::size_t l) { return {omega.data() + l * n_upsilon, n_upsilon}; }
    std::span<const cplx> row(std::size_t l) const {
        return {omega.data() + l * n_upsilon, n_upsilon};
    }
    cplx at(std::size_t l, std::size_t m) const { return omega[l * n_upsilon + m]; }
    double xi(std::size_t l) const { return static_cast<double>(l) * dxi; }
};

/// Collective state on the same grid as FieldGrid.
struct SigmaGrid {
    std::size_t n_xi = 0;
    std::size_t n_upsilon = 0;
    std::vector<Sigma> data;

    std::span<Sigma> row(std::size_t l) { return {data.data() + l * n_upsilon, n_upsilon}; }
    std::span<const Sigma> row(std::size_t l) const {
        return {data.data() + l * n_upsilon, n_upsilon};
    }
    const Sigma& at(std::size_t l, std::size_t m) const { return data[l * n_upsilon + m]; }
};

struct SolveResult {
    FieldGrid field;
    SigmaGrid sigma;
    /// Summed |sigma change| after each iteration.
    std::vector<double> residual_history;
    int iterations = 0;
    double epsilon = 0.0;
    double omega_pi_max = 0.0;

    /// |Omega(L, Upsilon)|^2 / |Omega_pi^max|^2, i.e. I / I_0^max at the exit.
    std::vector<double> exit_intensity() const {
        if (omega_pi_max == 0.0) throw InputError("normalisation needs a non-zero probe amplitude");
        const auto last = field.row(field.n_xi - 1);
        std::vector<double> out(last.size());
        const double norm = omega_pi_max * omega_pi_max;
        for (std::size_t m = 0; m < last.size(); ++m) out[m] = std::norm(last[m]) / norm;
        return out;
    }

    std::vector<double> times() const {
        std::vector<double> t(field.n_upsilon);
        for (std::size_t m = 0; m < t.size(); ++m) t[m] = field.upsilon.at(m);
        return t;
    }
};

/// One explicit march step of dOmega/dxi = -(i/2) c mu_a sigma_24:
/// next = prev - (i/2) c_mu_a sigma_24 dxi, pointwise in Upsilon.
inline void propagate_slice(std::span<const cplx> prev_field, std::span<const cplx> prev_sigma24,
                            double c_mu_a, double dxi, std::span<cplx> next_field) {
    if (prev_field.size() != prev_sigma24.size() || prev_field.size() != next_field.size()) {
        throw InputError("propagate_slice: rows must share the Upsilon grid");
    }
    const cplx k(0.0, -0.5 * c_mu_a * dxi);
    for (std::size_t m = 0; m < prev_field.size(); ++m) {
        next_field[m] = k * prev_sigma24[m] + prev_field[m];
    }
}

inline std::vector<cplx> propagate_slice(std::span<const cplx> prev_field,
                                         std::span<const cplx> prev_sigma24, double c_mu_a,
                                         double dxi) {
    std::vector<cplx> next(prev_field.size());
    propagate_slice(prev_field, prev_sigma24, c_mu_a, dxi, next);
    return next;
}

/// Probe amplitude between grid samples by linear interpolation.
struct RowInterpolant {
    const cplx* samples;
    double start;
    double inv_step;
    std::size_t count;

    cplx operator()(double t) const noexcept {
        const double x = (t - start) * inv_step;
        if (x <= 0.0) return samples[0];
        const auto i = static_cast<std::size_t>(x);
        if (i + 1 >= count) return samples[count - 1];
        const double frac = x - static_cast<double>(i);
        return samples[i] + frac * (samples[i + 1] - samples[i]);
    }
};

namespace detail {

inline void check_quiet_start(const PulseParams& pulses, const SystemParams& sp) {
    const double t0 = sp.t_initial;
    const double control = std::abs(control_shape(t0, pulses.edge_times(), pulses.tanh_widths));
    const double probe = std::abs(probe_envelope(t0, pulses)) / std::max(pulses.omega_pi_max, 1e-300);
    if (control > 1e-6 || (pulses.omega_pi_max != 0.0 && probe > 1e-6)) {
        throw InputError("t_initial = " + std::to_string(t0) +
                         " us is too late: pulses are not yet off at the start");
    }
}

} // namespace detail

/// Iterates field march and site integration until the summed change of all
/// sigma_jk between iterations drops below epsilon. Throws ConvergenceError
/// after max_iterations and IntegrationError if any site fails.
inline SolveResult solve_self_consistent(const PulseParams& pulses, const SystemParams& sp,
                                         const GridSpec& grid) {
    pulses.validate();
    sp.validate();
    grid.validate(sp);
    detail::check_quiet_start(pulses, sp);

    const std::size_t nx = grid.n_xi;
    const std::size_t nu = grid.n_upsilon;
    const TimeGrid times = grid.upsilon(sp);
    const double dxi = grid.dxi(sp);
    const double y = grid.damping_y;

    SolveResult res;
    res.epsilon = grid.resolved_epsilon();
    res.omega_pi_max = pulses.omega_pi_max;
    res.field = FieldGrid{nx, nu, dxi, times, std::vector<cplx>(nx * nu)};
    res.sigma = SigmaGrid{nx, nu, std::vector<Sigma>(nx * nu)};
    FieldGrid& field = res.field;
    SigmaGrid& sigma = res.sigma;

    // Step 0: input pulse everywhere, atoms in |2>.
    for (std::size_t m = 0; m < nu; ++m) field.omega[m] = probe_envelope(times.at(m), pulses);
    for (std::size_t l = 1; l < nx; ++l) {
        std::copy(field.row(0).begin(), field.row(0).end(), field.row(l).begin());
    }

    const CollectiveState initial = CollectiveState::pure(2);
    auto integrate_slice = [&](std::size_t l, std::span<Sigma> out) {
        StepControl ctl = grid.step;
        ctl.site = static_cast<int>(l);
        const auto row = field.row(l);
        const PulseDrive drive{&pulses, RowInterpolant{row.data(), times.start, 1.0 / times.step, nu}};
        integrate_site(initial, drive, sp, times, ctl, out);
    };

    parallel_for(nx, grid.workers, [&](std::size_t l, unsigned) { integrate_slice(l, sigma.row(l)); });

    const unsigned workers = std::max(1u, std::min<unsigned>(grid.workers, static_cast<unsigned>(nx)));
    std::vector<std::vector<Sigma>> scratch(workers, std::vector<Sigma>(nu));
    std::vector<double> slice_change(nx, 0.0);
    std::vector<char> row_changed(nx, 0);
    std::vector<cplx> candidate(field.row(0).begin(), field.row(0).end());
    std::vector<cplx> sigma24(nu);
    std::vector<cplx> next(nu);

    for (int iter = 1; iter <= grid.max_iterations; ++iter) {
        // Field update, sequential in xi: march the candidate through the
        // frozen sigma of the previous iterate, then under-relax.
        std::copy(field.row(0).begin(), field.row(0).end(), candidate.begin());
        for (std::size_t l = 1; l < nx; ++l) {
            const auto prev_sigma = sigma.row(l - 1);
            for (std::size_t m = 0; m < nu; ++m) sigma24[m] = prev_sigma[m](1, 3);
            propagate_slice(candidate, sigma24, sp.c_mu_a, dxi, next);
            candidate.swap(next);
            auto row = field.row(l);
            bool changed = false;
            for (std::size_t m = 0; m < nu; ++m) {
                const cplx updated =
                    candidate[m] == row[m] ? row[m] : y * candidate[m] + (1.0 - y) * row[m];
                changed = changed || updated != row[m];
                row[m] = updated;
            }
            row_changed[l] = changed;
        }

        // Re-integrate slices whose drive changed; slice 0 is the fixed boundary.
        std::fill(slice_change.begin(), slice_change.end(), 0.0);
        parallel_for(nx - 1, workers, [&](std::size_t k, unsigned w) {
            const std::size_t l = k + 1;
            if (!row_changed[l]) return;
            auto& buf = scratch[w];
            integrate_slice(l, buf);
            auto stored = sigma.row(l);
            double change = 0.0;
            for (std::size_t m = 0; m < nu; ++m) {
                change += (buf[m] - stored[m]).cwiseAbs().sum();
                stored[m] = buf[m];
            }
            slice_change[l] = change;
        });

        double total = 0.0;
        for (double c : slice_change) total += c;
        res.residual_history.push_back(total);
        res.iterations = iter;
        if (total < res.epsilon) return res;
    }
    throw ConvergenceError("self-consistent iteration did not reach epsilon = " +
                               std::to_string(res.epsilon) + " in " +
                               std::to_string(grid.max_iterations) + " iterations",
                           res.residual_history);
}

/// Dense |Omega|^2 and |Omega / Omega_pi^max|^2 maps, row-major in xi.
struct FieldMap {
    std::size_t n_xi = 0;
    std::size_t n_upsilon = 0;
    std::vector<double> xi;
    std::vector<double> upsilon;
    std::vector<double> abs_sq;
    std::vector<double> norm_sq;
};

inline FieldMap field_map(const SolveResult& res) {
    const FieldGrid& f = res.field;
    FieldMap map;
    map.n_xi = f.n_xi;
    map.n_upsilon = f.n_upsilon;
    map.xi.resize(f.n_xi);
    map.upsilon.resize(f.n_upsilon);
    for (std::size_t l = 0; l < f.n_xi; ++l) map.xi[l] = f.xi(l);
    for (std::size_t m = 0; m < f.n_upsilon; ++m) map.upsilon[m] = f.upsilon.at(m);
    map.abs_sq.resize(f.omega.size());
    map.norm_sq.resize(f.omega.size());
    const double norm = res.omega_pi_max * res.omega_pi_max;
    for (std::size_t k = 0; k < f.omega.size(); ++k) {
        map.abs_sq[k] = std::norm(f.omega[k]);
        map.norm_sq[k] = norm > 0.0 ? map.abs_sq[k] / norm : 0.0;
    }
    return map;
}

} // namespace tripod
