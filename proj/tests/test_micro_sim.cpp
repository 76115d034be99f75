#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "perfhom/micro_sim.hpp"

using namespace perfhom;

namespace {

const UnitCell& centred_cell()
{
    static const UnitCell c = UnitCell::build(0.5, {0.5, 0.5}, 8);
    return c;
}

MicroConfig base_config()
{
    MicroConfig c;
    c.law = RateLaw::make(0.0, 1.0, 2.0, 1.0);
    c.dt = 1e-3;
    c.T = 0.05;
    c.output_every = 5;
    return c;
}

double mean_u(const MicroState& s, const PerforatedGrid& g)
{
    double m = 0.0;
    for (double x : s.u)
        m += x;
    return m / g.fluid_count();
}

double mean_v(const MicroState& s)
{
    double m = 0.0;
    for (double x : s.v)
        m += x;
    return m / static_cast<double>(s.v.size());
}

} // namespace

TEST(MicroStep, ZeroStateStaysZero)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.25);
    const MicroTrajectory tr = run_micro(g, base_config());
    for (const auto& s : tr.snapshots) {
        for (double x : s.u)
            EXPECT_EQ(x, 0.0);
        for (double x : s.v)
            EXPECT_EQ(x, 0.0);
        for (double x : s.w)
            EXPECT_EQ(x, 0.0);
    }
}

TEST(MicroStep, SolubilityEquilibriumInClosedBox)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.25, EdgeSet::none());
    MicroConfig c = base_config();
    c.u_init = InitialData::constant(1.0);
    c.v_init = InitialData::constant(0.3);
    const MicroTrajectory tr = run_micro(g, c);
    EXPECT_TRUE(tr.warnings.empty());
    for (const auto& s : tr.snapshots) {
        for (double x : s.u)
            EXPECT_NEAR(x, 1.0, 1e-12);
        for (double x : s.v)
            EXPECT_NEAR(x, 0.3, 1e-12);
        for (double x : s.w)
            EXPECT_EQ(x, 1.0);
    }
}

TEST(MicroStep, ClosedBoxConservesMass)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.5, EdgeSet::none());
    MicroConfig c = base_config();
    c.u_init = InitialData::sine(0.3, 0.6);
    c.v_init = InitialData::sine(0.05, 0.1);
    c.T = 0.5;
    c.dt = 1e-3;
    const MicroTrajectory tr = run_micro(g, c);
    ASSERT_EQ(tr.mass.size(), 501u);
    const double m0 = tr.mass.front().total();
    for (const auto& m : tr.mass) {
        EXPECT_NEAR(m.total(), m0, 1e-8 * m0);
        EXPECT_EQ(m.outflow, 0.0);
    }
}

TEST(MicroStep, OpenBoundaryBalancesOutflow)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.25, EdgeSet{{true, true, false, true}});
    MicroConfig c = base_config();
    c.u_init = InitialData::sine(0.2, 0.5);
    c.v_init = InitialData::constant(0.1);
    c.T = 0.1;
    const MicroTrajectory tr = run_micro(g, c);
    const double m0 = tr.mass.front().total();
    EXPECT_GT(tr.mass.back().outflow, 0.0);
    for (const auto& m : tr.mass)
        EXPECT_NEAR(m.total(), m0, 1e-10);
}

TEST(MicroStep, WellMixedOracleAcrossEps)
{
    // Large D and a closed box keep u spatially uniform; the lumped system
    // depends on eps only through eps |Gamma^eps| = |Gamma_G|.
    const double gamma = centred_cell().surface_measure() / centred_cell().porosity();
    const double v0 = 0.2;
    for (double eps : {0.5, 0.25, 0.125}) {
        const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), eps, EdgeSet::none());
        MicroConfig c = base_config();
        c.D = 100.0;
        c.v_init = InitialData::constant(v0);
        c.T = 0.4;
        c.dt = 5e-4;
        c.output_every = 20;
        const MicroTrajectory tr = run_micro(g, c);
        double err_u = 0.0, err_v = 0.0;
        for (const auto& s : tr.snapshots) {
            const oracle::Lumped ref = oracle::well_mixed(gamma, 1.0, v0, s.t);
            err_u = std::max(err_u, std::abs(mean_u(s, g) - ref.u));
            err_v = std::max(err_v, std::abs(mean_v(s) - ref.v));
        }
        EXPECT_LE(err_u, 0.02 * gamma * v0) << "eps " << eps;
        EXPECT_LE(err_v, 0.02 * v0) << "eps " << eps;
        // past the event all precipitate is gone
        EXPECT_EQ(*std::max_element(tr.snapshots.back().v.begin(), tr.snapshots.back().v.end()), 0.0);
    }
}

TEST(MicroStep, NonnegativeInitialDataRequired)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.5);
    MicroConfig c = base_config();
    c.u_init = InitialData::sine(0.1, -0.5);
    try {
        run_micro(g, c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
}

TEST(MicroStep, PositivityBoundRejectsLargeSteps)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.25);
    MicroConfig c = base_config();
    c.v_init = InitialData::constant(0.1);
    c.dt = 0.1;
    c.T = 0.2;
    try {
        run_micro(g, c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
        EXPECT_NE(std::string(e.what()).find("dt * k * L_r"), std::string::npos);
    }
    const MicroSimulation sim = MicroSimulation::with_zero_velocity(g, c);
    // L_r = 2 on [0, 1], eps/h = 8, one grain face per fluid cell
    EXPECT_DOUBLE_EQ(sim.max_stable_dt(1.0), 1.0 / 16.0);
}

TEST(MicroStep, InvariantViolationCarriesState)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.5);
    const MicroSimulation sim = MicroSimulation::with_zero_velocity(g, base_config());
    MicroState s = sim.initial_state();
    s.t = 0.25;
    s.u[3] = -0.1;
    try {
        sim.check_invariants(s, 1.0, 1.0);
        FAIL();
    } catch (const InvariantViolation& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invariant);
        EXPECT_EQ(e.t(), 0.25);
        EXPECT_EQ(e.u()[3], -0.1);
        EXPECT_EQ(e.v().size(), s.v.size());
    }
    s.u[3] = 0.0;
    s.v[0] = 0.2;
    s.w[0] = 0.5; // v > 0 demands w = 1
    EXPECT_THROW(sim.check_invariants(s, 1.0, 1.0), InvariantViolation);
}

TEST(MicroRun, ZeroHorizonReturnsInitialState)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.5);
    MicroConfig c = base_config();
    c.T = 0.0;
    c.u_init = InitialData::constant(0.4);
    const MicroTrajectory tr = run_micro(g, c);
    ASSERT_EQ(tr.snapshots.size(), 1u);
    EXPECT_EQ(tr.snapshots[0].t, 0.0);
    EXPECT_EQ(tr.snapshots[0].u, MicroSimulation::with_zero_velocity(g, c).initial_state().u);
}

TEST(MicroRun, DeterministicReplay)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.25);
    MicroConfig c = base_config();
    c.u_init = InitialData::sine(0.1, 0.7);
    c.v_init = InitialData::constant(0.05);
    const MicroTrajectory a = run_micro(g, c);
    const MicroTrajectory b = run_micro(g, c);
    ASSERT_EQ(a.snapshots.size(), b.snapshots.size());
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
        EXPECT_EQ(a.snapshots[i].u, b.snapshots[i].u);
        EXPECT_EQ(a.snapshots[i].v, b.snapshots[i].v);
        EXPECT_EQ(a.snapshots[i].w, b.snapshots[i].w);
    }
}

TEST(MicroRun, SnapshotCadence)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.5);
    MicroConfig c = base_config();
    c.T = 0.023;
    c.dt = 1e-3;
    c.output_every = 10;
    const MicroTrajectory tr = run_micro(g, c);
    ASSERT_EQ(tr.snapshots.size(), 4u); // 0, 10, 20, 23
    EXPECT_NEAR(tr.snapshots[1].t, 0.01, 1e-15);
    EXPECT_NEAR(tr.snapshots.back().t, 0.023, 1e-15);
    EXPECT_EQ(tr.mass.size(), 24u);
}

TEST(MicroRun, CompatibilityWarningForDissolution)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.5);
    MicroConfig c = base_config();
    c.v_init = InitialData::constant(0.2);
    EXPECT_FALSE(run_micro(g, c).warnings.empty());
}

TEST(L1Distance, Examples)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.25);
    MicroConfig c = base_config();
    c.u_init = InitialData::sine(0.2, 0.3);
    c.v_init = InitialData::constant(0.1);
    const MicroSimulation sim = MicroSimulation::with_zero_velocity(g, c);
    const MicroState a = sim.initial_state();
    EXPECT_EQ(l1_distance(a, a, g), 0.0);
    MicroState b = a;
    for (double& x : b.u)
        x += 0.125;
    EXPECT_NEAR(l1_distance(a, b, g), 0.125 * g.measures().fluid_volume, 1e-15);
    MicroState d = a;
    for (double& x : d.v)
        x -= 0.05;
    EXPECT_NEAR(l1_distance(a, d, g), 0.05 * centred_cell().surface_measure(), 1e-14);
    const PerforatedGrid other = PerforatedGrid::tile(centred_cell(), 0.5);
    EXPECT_THROW(l1_distance(a, MicroSimulation::with_zero_velocity(other, c).initial_state(), g), Error);
}

TEST(L1Distance, ContractionForOrderedData)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.25);
    MicroConfig lo = base_config();
    lo.u_init = InitialData::sine(0.1, 0.4);
    lo.v_init = InitialData::constant(0.02);
    lo.T = 0.2;
    lo.output_every = 1;
    MicroConfig hi = lo;
    hi.u_init = InitialData::sine(0.3, 0.6);
    hi.v_init = InitialData::sine(0.1, 0.05);
    const MicroTrajectory a = run_micro(g, lo);
    const MicroTrajectory b = run_micro(g, hi);
    const double d0 = l1_distance(a.snapshots[0], b.snapshots[0], g);
    double prev = d0;
    for (std::size_t i = 1; i < a.snapshots.size(); ++i) {
        const double d = l1_distance(a.snapshots[i], b.snapshots[i], g);
        EXPECT_LE(d, prev + 1e-8 * d0) << "snapshot " << i;
        prev = d;
    }
}

TEST(Velocity, ZeroGradientGivesZeroField)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.5);
    const std::array<StokesCellSolution, 2> st{solve_stokes_cell(centred_cell(), 0), solve_stokes_cell(centred_cell(), 1)};
    EXPECT_TRUE(reconstruct_velocity(g, st, {0.0, 0.0}).is_zero());
}

TEST(Velocity, CellAverageMatchesPermeability)
{
    const UnitCell& cell = centred_cell();
    const std::array<StokesCellSolution, 2> st{solve_stokes_cell(cell, 0), solve_stokes_cell(cell, 1)};
    const double K11 = assemble_K(cell, st).K[0][0];
    const int n = cell.resolution();
    double qmax = -1.0;
    for (double eps : {0.5, 0.25}) {
        const PerforatedGrid g = PerforatedGrid::tile(cell, eps);
        const FaceVelocity q = reconstruct_velocity(g, st, {-1.0, 0.0});
        const int m = g.eps_cells_per_side();
        for (int k2 = 0; k2 < m; ++k2)
            for (int k1 = 0; k1 < m; ++k1) {
                double sx = 0.0, sy = 0.0;
                for (int j = 0; j < n; ++j)
                    for (int i = 0; i < n; ++i) {
                        sx += q.x(k1 * n + i, k2 * n + j);
                        sy += q.y(k1 * n + i, k2 * n + j);
                    }
                // mean over the fluid part of the eps-cell
                EXPECT_NEAR(sx / (n * n * cell.porosity()), K11, 1e-10);
                EXPECT_NEAR(sy, 0.0, 1e-10);
            }
        // discretely divergence-free on every fluid cell
        const double h = g.h();
        for (int c : g.fluid_cells()) {
            const int i = g.col(c), j = g.row(c);
            const double div = (q.x(i + 1, j) - q.x(i, j) + q.y(i, j + 1) - q.y(i, j)) / h;
            EXPECT_LE(std::abs(div) * h, 1e-9);
        }
        if (qmax < 0.0)
            qmax = q.max_abs();
        EXPECT_EQ(q.max_abs(), qmax);
    }
}

TEST(Velocity, GeometryMismatchIsConfigError)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.5);
    const UnitCell other = UnitCell::build(0.25, {0.5, 0.5}, 8);
    const std::array<StokesCellSolution, 2> st{solve_stokes_cell(other, 0), solve_stokes_cell(other, 1)};
    try {
        reconstruct_velocity(g, st, {-1.0, 0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
}

TEST(MicroRun, FirstOrderInTime)
{
    const UnitCell& cell = centred_cell();
    const std::array<StokesCellSolution, 2> st{solve_stokes_cell(cell, 0), solve_stokes_cell(cell, 1)};
    const PerforatedGrid g = PerforatedGrid::tile(cell, 0.5, EdgeSet{{true, true, false, false}});
    const FaceVelocity q = reconstruct_velocity(g, st, {-20.0, 0.0});
    auto final_u = [&](double dt) {
        MicroConfig c = base_config();
        c.u_init = InitialData::sine(0.2, 0.6);
        c.v_init = InitialData::constant(0.05);
        c.velocity_bound = q.max_abs();
        c.T = 0.08;
        c.dt = dt;
        c.output_every = 1000;
        return MicroSimulation(g, c, q).run().snapshots.back().u;
    };
    const auto ref = final_u(0.01 / 16);
    auto err = [&](const std::vector<double>& u) {
        double e = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i)
            e += std::abs(u[i] - ref[i]);
        return e;
    };
    const double e1 = err(final_u(0.01));
    const double e2 = err(final_u(0.005));
    const double e4 = err(final_u(0.0025));
    EXPECT_GT(e1 / e2, 1.5);
    EXPECT_LT(e1 / e2, 2.6);
    EXPECT_GT(e2 / e4, 1.5);
}

TEST(DifferenceQuotient, ConstantTrajectoryIsZero)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.5, EdgeSet::none());
    MicroConfig c = base_config();
    c.u_init = InitialData::constant(1.0);
    c.v_init = InitialData::constant(0.1);
    const MicroTrajectory tr = run_micro(g, c);
    for (double x : difference_quotient_norm(tr, 0.005, g))
        EXPECT_NEAR(x, 0.0, 1e-9);
}

TEST(DifferenceQuotient, FirstOutputIsZero)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.5);
    MicroConfig c = base_config();
    c.v_init = InitialData::constant(0.1);
    const MicroTrajectory tr = run_micro(g, c);
    const auto dq = difference_quotient_norm(tr, 0.005, g);
    EXPECT_EQ(dq.front(), 0.0);
    EXPECT_THROW(difference_quotient_norm(tr, 0.007, g), Error);
    EXPECT_THROW(difference_quotient_norm(tr, 0.0, g), Error);
}

TEST(DifferenceQuotient, BoundedByFirstLagForDissolution)
{
    const PerforatedGrid g = PerforatedGrid::tile(centred_cell(), 0.25, EdgeSet::none());
    MicroConfig c = base_config();
    c.v_init = InitialData::constant(0.2);
    c.T = 0.3;
    c.output_every = 10;
    const MicroTrajectory tr = run_micro(g, c);
    const auto dq = difference_quotient_norm(tr, 0.01, g);
    ASSERT_GT(dq.size(), 2u);
    for (std::size_t i = 2; i < dq.size(); ++i)
        EXPECT_LE(dq[i], dq[1] * (1 + 1e-8)) << "t " << tr.snapshots[i].t;
}
