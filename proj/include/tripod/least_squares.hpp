#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems, with a
// central-difference Jacobian. Shared by the pulse-shape and peak fits.

#include <tripod/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace tripod {

struct LeastSquaresOptions {
    int max_iterations = 200;
    /// Converged once the accepted step is below this, relative to |x|.
    double step_tolerance = 1e-10;
    double initial_damping = 1e-3;
};

struct LeastSquaresResult {
    Eigen::VectorXd x;
    /// s^2 (J^T J)^-1 with s^2 = RSS / (m - n); zero when m == n.
    Eigen::MatrixXd covariance;
    Eigen::VectorXd stddev;
    double residual_norm = 0.0;
    int iterations = 0;
};

namespace detail {

template <class Residual>
void numeric_jacobian(Residual& residual, const Eigen::VectorXd& x, Eigen::Index m,
                      Eigen::MatrixXd& jac) {
    const double rel = std::cbrt(std::numeric_limits<double>::epsilon());
    Eigen::VectorXd xp = x;
    Eigen::VectorXd rp(m), rm(m);
    jac.resize(m, x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = rel * std::max(std::abs(x[j]), 1e-2);
        xp[j] = x[j] + h;
        residual(xp, rp);
        xp[j] = x[j] - h;
        residual(xp, rm);
        xp[j] = x[j];
        jac.col(j) = (rp - rm) / (2.0 * h);
    }
}

} // namespace detail

/// Minimise 0.5 * |r(x)|^2. `residual(x, r)` must write all `m` residuals.
/// Throws InputError when m < n and FitFailure when the iteration cap is
/// reached first.
template <class Residual>
LeastSquaresResult levenberg_marquardt(Residual&& residual, Eigen::VectorXd x, Eigen::Index m,
                                       const LeastSquaresOptions& opt = {}) {
    const Eigen::Index n = x.size();
    if (m < n) {
        throw InputError("least squares: " + std::to_string(m) + " samples for " +
                         std::to_string(n) + " parameters");
    }

    Eigen::VectorXd r(m), r_trial(m);
    residual(x, r);
    double cost = 0.5 * r.squaredNorm();
    double lambda = opt.initial_damping;
    Eigen::MatrixXd jac;

    auto finish = [&](int iterations) {
        LeastSquaresResult out;
        detail::numeric_jacobian(residual, x, m, jac);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const double s2 = m > n ? 2.0 * cost / static_cast<double>(m - n) : 0.0;
        out.covariance = s2 * jtj.completeOrthogonalDecomposition().pseudoInverse();
        out.stddev = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
        out.x = x;
        out.residual_norm = std::sqrt(2.0 * cost);
        out.iterations = iterations;
        return out;
    };

    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        if (cost == 0.0) return finish(iter - 1);
        detail::numeric_jacobian(residual, x, m, jac);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * r;
        if (grad.lpNorm<Eigen::Infinity>() == 0.0) return finish(iter - 1);

        // Inner loop: raise damping until the step lowers the cost.
        for (;;) {
            Eigen::MatrixXd lhs = jtj;
            for (Eigen::Index j = 0; j < n; ++j) {
                lhs(j, j) += lambda * std::max(jtj(j, j), 1e-12);
            }
            const Eigen::VectorXd step = lhs.ldlt().solve(-grad);
            const bool tiny = step.norm() <= opt.step_tolerance * (x.norm() + opt.step_tolerance);
            const Eigen::VectorXd trial = x + step;
            residual(trial, r_trial);
            const double trial_cost = 0.5 * r_trial.squaredNorm();
            if (std::isfinite(trial_cost) && trial_cost < cost) {
                x = trial;
                r = r_trial;
                cost = trial_cost;
                lambda = std::max(lambda / 3.0, 1e-15);
                if (tiny) return finish(iter);
                break;
            }
            if (tiny) return finish(iter);
            lambda *= 4.0;
            if (lambda > 1e16) return finish(iter);
        }
    }
    throw FitFailure("least squares did not converge in " + std::to_string(opt.max_iterations) +
                         " iterations",
                     std::vector<double>(x.data(), x.data() + n));
}

} // namespace tripod
