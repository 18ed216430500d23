#include <tripod/propagation.hpp>

#include "linear_response.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tripod;

namespace {

const cplx I(0.0, 1.0);

GridSpec coarse() {
    GridSpec g;
    g.n_xi = 21;
    g.n_upsilon = 1201;
    return g;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST(Comoving, EntryFaceIsIdentity) {
    const auto p = comoving(0.0, 0.37);
    EXPECT_EQ(p.xi, 0.0);
    EXPECT_EQ(p.upsilon, 0.37);
}

TEST(Comoving, ExitFaceOfThreeMillimetres) {
    const auto p = comoving(3.0, 0.0);
    EXPECT_NEAR(p.xi, 1.0007e-5, 1e-9);
    EXPECT_NEAR(p.upsilon, -1.0007e-5, 1e-9);
    // retardation across the medium is far below the 2e-4 us bound
    EXPECT_LT(std::abs(p.upsilon), 2e-4);
}

TEST(PropagateSlice, SourceFreeRowIsUnchanged) {
    const std::vector<cplx> row{1.0, cplx(2.0, -1.0), 0.5};
    const std::vector<cplx> zero(3);
    EXPECT_EQ(propagate_slice(row, zero, 2.118e7, 1e-7), row);
}

TEST(PropagateSlice, DecoupledMediumIsUnchanged) {
    const std::vector<cplx> row{1.0, cplx(2.0, -1.0), 0.5};
    const std::vector<cplx> s{cplx(0.3, 0.1), I, -2.0};
    EXPECT_EQ(propagate_slice(row, s, 0.0, 1e-7), row);
}

TEST(PropagateSlice, ImaginaryCoherenceAddsRealGain) {
    const double s = 0.01, cmu = 2.118e7, dxi = 5e-8;
    const std::vector<cplx> row{1.0, 3.0};
    const std::vector<cplx> sig{I * s, I * s};
    const auto next = propagate_slice(row, sig, cmu, dxi);
    for (std::size_t m = 0; m < row.size(); ++m) {
        EXPECT_DOUBLE_EQ(next[m].real(), row[m].real() + 0.5 * cmu * s * dxi);
        EXPECT_EQ(next[m].imag(), 0.0);
    }
}

TEST(PropagateSlice, RejectsMismatchedRows) {
    const std::vector<cplx> a(3), b(4);
    EXPECT_THROW(propagate_slice(a, b, 1.0, 1.0), InputError);
}

TEST(GridSpec, Validation) {
    SystemParams sp;
    GridSpec g = coarse();
    EXPECT_NO_THROW(g.validate(sp));
    g.damping_y = 1.0;
    EXPECT_THROW(g.validate(sp), InputError);
    g = coarse();
    g.n_xi = 1;
    EXPECT_THROW(g.validate(sp), InputError);
    g = coarse();
    g.t_final = -4.0;
    EXPECT_THROW(g.validate(sp), InputError);
    g = coarse();
    EXPECT_DOUBLE_EQ(g.dxi(sp), 3.0 / 2.99792458e5 / 20.0);
    EXPECT_DOUBLE_EQ(g.resolved_epsilon(), 1e-7 * 21 * 1201 * 16);
}

TEST(Solve, LateStartIsRejected) {
    SystemParams sp;
    sp.t_initial = -0.5;
    EXPECT_THROW(solve_self_consistent(PulseParams{}, sp, coarse()), InputError);
}

TEST(Solve, DecoupledMediumTransmitsInputExactlyInOneIteration) {
    PulseParams p;
    SystemParams sp;
    sp.c_mu_a = 0.0;
    const auto res = solve_self_consistent(p, sp, coarse());
    EXPECT_EQ(res.iterations, 1);
    const auto t = res.times();
    const auto I_exit = res.exit_intensity();
    for (std::size_t m = 0; m < t.size(); ++m) {
        const double expect = std::norm(probe_envelope(t[m], p)) / (p.omega_pi_max * p.omega_pi_max);
        ASSERT_EQ(I_exit[m], expect);
    }
    const auto map = field_map(res);
    for (std::size_t l = 0; l < map.n_xi; ++l) {
        for (std::size_t m = 0; m < map.n_upsilon; ++m) {
            ASSERT_EQ(map.norm_sq[l * map.n_upsilon + m], map.norm_sq[m]);
        }
    }
}

class DefaultSolve : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        result_ = new SolveResult(solve_self_consistent(PulseParams{}, SystemParams{}, coarse()));
    }
    static void TearDownTestSuite() {
        delete result_;
        result_ = nullptr;
    }
    static SolveResult* result_;
};

SolveResult* DefaultSolve::result_ = nullptr;

TEST_F(DefaultSolve, BoundaryRowIsTheInputProbe) {
    const auto map = field_map(*result_);
    PulseParams p;
    for (std::size_t m = 0; m < map.n_upsilon; ++m) {
        ASSERT_EQ(map.abs_sq[m], std::norm(probe_envelope(map.upsilon[m], p)));
    }
}

TEST_F(DefaultSolve, MainPulseDepletesAlongXi) {
    const auto map = field_map(*result_);
    std::size_t m0 = 0;
    for (std::size_t m = 0; m < map.n_upsilon; ++m) {
        if (std::abs(map.upsilon[m] + 0.075) < std::abs(map.upsilon[m0] + 0.075)) m0 = m;
    }
    for (std::size_t l = 1; l < map.n_xi; ++l) {
        EXPECT_LT(map.norm_sq[l * map.n_upsilon + m0], map.norm_sq[(l - 1) * map.n_upsilon + m0]);
    }
}

TEST_F(DefaultSolve, StatesStayPhysicalEverywhere) {
    double worst_trace = 0, worst_herm = 0, worst_eig = 0;
    for (const auto& s : result_->sigma.data) {
        const CollectiveState c{s};
        worst_trace = std::max(worst_trace, c.trace_error());
        worst_herm = std::max(worst_herm, c.hermiticity_error());
        worst_eig = std::min(worst_eig, c.min_eigenvalue());
    }
    EXPECT_LT(worst_trace, 1e-6);
    EXPECT_LT(worst_herm, 1e-8);
    EXPECT_GE(worst_eig, -1e-6);
}

TEST_F(DefaultSolve, ResidualHistoryEndsBelowEpsilon) {
    const auto& h = result_->residual_history;
    ASSERT_EQ(h.size(), static_cast<std::size_t>(result_->iterations));
    EXPECT_LT(h.back(), result_->epsilon);
    EXPECT_LT(h.back(), h.front());
}

TEST_F(DefaultSolve, OneMoreSweepBarelyMovesTheExitField) {
    const auto& res = *result_;
    SystemParams sp;
    std::vector<cplx> row(res.field.row(0).begin(), res.field.row(0).end());
    std::vector<cplx> s24(row.size());
    for (std::size_t l = 1; l < res.field.n_xi; ++l) {
        const auto prev = res.sigma.row(l - 1);
        for (std::size_t m = 0; m < row.size(); ++m) s24[m] = prev[m](1, 3);
        row = propagate_slice(row, s24, sp.c_mu_a, res.field.dxi);
    }
    const auto exit = res.exit_intensity();
    std::vector<double> again(row.size());
    for (std::size_t m = 0; m < row.size(); ++m) again[m] = std::norm(row[m]) / (res.omega_pi_max * res.omega_pi_max);
    EXPECT_LT(max_diff(exit, again), 1e-4 * max_abs(exit));
}

TEST(Solve, DampingWeightDoesNotChangeTheFixedPoint) {
    GridSpec lo = coarse(), hi = coarse();
    lo.damping_y = 0.3;
    hi.damping_y = 0.7;
    const auto a = solve_self_consistent(PulseParams{}, SystemParams{}, lo).exit_intensity();
    const auto b = solve_self_consistent(PulseParams{}, SystemParams{}, hi).exit_intensity();
    EXPECT_LT(max_diff(a, b), 1e-3 * max_abs(a));
}

TEST(Solve, MirrorSymmetricInZeemanSignAtZeroPhase) {
    SystemParams plus, minus;
    plus.zeeman_B = 0.4;
    minus.zeeman_B = -0.4;
    const auto a = solve_self_consistent(PulseParams{}, plus, coarse()).exit_intensity();
    const auto b = solve_self_consistent(PulseParams{}, minus, coarse()).exit_intensity();
    EXPECT_LT(max_diff(a, b), 1e-6 * max_abs(a));
}

TEST(Solve, InputProbePhaseDropsOutOfIntensity) {
    SystemParams sp;
    sp.zeeman_B = 0.4;
    PulseParams p;
    p.chi = M_PI / 2;
    PulseParams q = p;
    q.probe_phase = M_PI / 2;
    const auto a = solve_self_consistent(p, sp, coarse()).exit_intensity();
    const auto b = solve_self_consistent(q, sp, coarse()).exit_intensity();
    EXPECT_LT(max_diff(a, b), 1e-8 * max_abs(a));
}

TEST(Solve, WorkerCountDoesNotChangeBits) {
    GridSpec one = coarse(), three = coarse();
    three.workers = 3;
    SystemParams sp;
    sp.zeeman_B = 0.8;
    const auto a = solve_self_consistent(PulseParams{}, sp, one);
    const auto b = solve_self_consistent(PulseParams{}, sp, three);
    EXPECT_EQ(a.iterations, b.iterations);
    EXPECT_EQ(a.field.omega, b.field.omega);
    EXPECT_EQ(a.residual_history, b.residual_history);
}

TEST(Solve, IterationCapRaisesWithHistory) {
    GridSpec g = coarse();
    g.max_iterations = 2;
    g.epsilon = 1e-30;
    try {
        solve_self_consistent(PulseParams{}, SystemParams{}, g);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.residual_history().size(), 2u);
    }
}

TEST(Solve, ZeroProbeCannotBeNormalised) {
    PulseParams p;
    p.omega_pi_max = 0.0;
    SystemParams sp;
    const auto res = solve_self_consistent(p, sp, coarse());
    EXPECT_THROW(res.exit_intensity(), InputError);
}

TEST(Solve, WeakProbeWithoutControlMatchesLinearResponse) {
    PulseParams p;
    p.omega_c_max = 0.0;
    p.omega_pi_max = angular(0.01);
    SystemParams sp;
    GridSpec g = coarse();
    g.n_xi = 201;
    // epsilon is absolute; scale it with the 100x weaker probe
    g.epsilon = 0.01 * g.resolved_epsilon();
    const auto res = solve_self_consistent(p, sp, g);
    const auto t = res.times();
    std::vector<double> a(t.size());
    for (std::size_t m = 0; m < t.size(); ++m) a[m] = probe_envelope(t[m], p).real() / p.omega_pi_max;
    const double transit = sp.length_L / speed_of_light, width = sp.gamma + 2.0 * sp.gamma_d;
    const auto discrete = oracle::linear_transmission(t, a, sp.c_mu_a, transit, width, g.n_xi - 1);
    const auto got = res.exit_intensity();
    EXPECT_LT(max_diff(got, discrete), 2e-3 * max_abs(discrete));

    // the continuum answer is within first-order march error, and a 110 ns
    // probe is far from the quasi-steady limit
    const auto exact = oracle::linear_transmission(t, a, sp.c_mu_a, transit, width);
    EXPECT_NEAR(max_abs(got), max_abs(exact), 0.03 * max_abs(exact));
    EXPECT_GT(max_abs(exact), 2.0 * std::exp(-sp.c_mu_a * transit / width));
}

TEST(Solve, LongWeakProbeApproachesSteadyAbsorption) {
    PulseParams p;
    p.omega_c_max = 0.0;
    p.omega_pi_max = angular(0.01);
    p.probe_width = 1.0;
    SystemParams sp;
    sp.t_initial = -7.0;
    GridSpec g;
    g.n_xi = 401; // march error ~2% at 400 slices
    g.n_upsilon = 1401;
    g.t_final = 7.0;
    g.epsilon = 0.01 * g.resolved_epsilon();
    const auto I = solve_self_consistent(p, sp, g).exit_intensity();
    const double steady = std::exp(-sp.c_mu_a * (sp.length_L / speed_of_light) / (sp.gamma + 2.0 * sp.gamma_d));
    EXPECT_NEAR(max_abs(I), steady, 0.05 * steady);
}
