#include <gtest/gtest.h>

#include <cmath>

#include "perfhom/homogenize.hpp"

using namespace perfhom;

namespace {

PerforatedGrid centred(double eps, int n = 8)
{
    return PerforatedGrid::tile(UnitCell::build(0.5, {0.5, 0.5}, n), eps, EdgeSet::none());
}

std::vector<double> sample_fluid(const PerforatedGrid& g, const std::function<double(Vec2)>& f)
{
    std::vector<double> out;
    for (int c : g.fluid_cells())
        out.push_back(f(g.cell_center(c)));
    return out;
}

MicroState micro_constant(const PerforatedGrid& g, double t, double u, double v)
{
    MicroState s;
    s.t = t;
    s.u.assign(g.fluid_count(), u);
    s.v.assign(g.boundary_faces().size(), v);
    s.w.assign(s.v.size(), 0.0);
    return s;
}

MacroState macro_constant(const MacroGrid& g, double t, double u, double v)
{
    MacroState s;
    s.t = t;
    s.u.assign(g.cell_count(), u);
    s.v.assign(g.cell_count(), v);
    s.w.assign(g.cell_count(), 0.0);
    return s;
}

} // namespace

TEST(Extension, ConstantAndZero)
{
    const PerforatedGrid g = centred(0.25);
    for (double c : {0.0, 0.7}) {
        const ExtendedField e = extend(std::vector<double>(g.fluid_count(), c), g);
        EXPECT_EQ(e.size, g.cells_per_side());
        for (double x : e.values)
            EXPECT_NEAR(x, c, 1e-15);
    }
}

TEST(Extension, RestrictsToTheOriginalField)
{
    const PerforatedGrid g = centred(0.125);
    const auto u = sample_fluid(g, [](Vec2 x) { return std::sin(3 * x[0]) + x[1] * x[1]; });
    const ExtendedField e = extend(u, g);
    for (int f = 0; f < g.fluid_count(); ++f)
        EXPECT_EQ(e.values[g.fluid_cells()[f]], u[f]);
}

TEST(Extension, LinearFieldFillsHolesWithTheCellCentreValue)
{
    // the centred hole is symmetric, so the fluid mean of a linear field is its value at the cell centre
    const PerforatedGrid g = centred(0.25);
    const auto u = sample_fluid(g, [](Vec2 x) { return 2.0 * x[0] - x[1]; });
    const ExtendedField e = extend(u, g);
    for (int c = 0; c < g.cell_count(); ++c) {
        if (g.is_fluid(c))
            continue;
        const auto k = g.eps_cell_of(c);
        const double xc = (k[0] + 0.5) * g.eps();
        const double yc = (k[1] + 0.5) * g.eps();
        EXPECT_NEAR(e.values[c], 2.0 * xc - yc, 1e-13);
    }
    EXPECT_THROW(extend(std::vector<double>(3, 0.0), g), Error);
}

TEST(Unfolding, UnitTraceGivesSurfaceMeasure)
{
    for (double eps : {0.5, 0.25, 0.125}) {
        const PerforatedGrid g = centred(eps);
        const UnfoldedTrace tr = unfold(std::vector<double>(g.boundary_faces().size(), 1.0), g);
        EXPECT_NEAR(tr.lhs, 2.0, 1e-12);
        EXPECT_NEAR(tr.rhs, 2.0, 1e-12);
        for (double x : tr.values)
            EXPECT_EQ(x, 1.0);
    }
}

TEST(Unfolding, SupportStaysInItsCell)
{
    const PerforatedGrid g = centred(0.25);
    const int target = g.eps_cell_linear({2, 1});
    std::vector<double> f;
    for (const auto& face : g.boundary_faces())
        f.push_back(g.eps_cell_linear(face.eps_cell) == target ? 1.0 : 0.0);
    const UnfoldedTrace tr = unfold(f, g);
    for (int k = 0; k < g.eps_cell_count(); ++k)
        for (int r = 0; r < tr.reference_faces; ++r)
            EXPECT_EQ(tr.at(k, r), k == target ? 1.0 : 0.0);
}

TEST(Unfolding, SeparableTraceFactorizes)
{
    const PerforatedGrid g = centred(0.125);
    std::vector<double> f;
    for (const auto& face : g.boundary_faces()) {
        const double a = 1.0 + face.eps_cell[0] + 10.0 * face.eps_cell[1];
        const double b = std::cos(face.y[0]) + face.y[1];
        f.push_back(a * b);
    }
    const UnfoldedTrace tr = unfold(f, g, 0.3);
    EXPECT_EQ(tr.t, 0.3);
    const auto& refs = g.unit_cell().reference_faces();
    for (int k1 = 0; k1 < 8; ++k1)
        for (int k0 = 0; k0 < 8; ++k0)
            for (int r = 0; r < tr.reference_faces; ++r) {
                const double expect = (1.0 + k0 + 10.0 * k1) * (std::cos(refs[r].y[0]) + refs[r].y[1]);
                EXPECT_NEAR(tr.at(g.eps_cell_linear({k0, k1}), r), expect, 1e-13);
            }
    EXPECT_NEAR(tr.lhs, tr.rhs, 1e-12 * tr.rhs);
    EXPECT_THROW(unfold(std::vector<double>(5, 0.0), g), Error);
}

TEST(Oscillation, ConstantIsExact)
{
    const UnitCell cell = UnitCell::build(0.5, {0.5, 0.5}, 8);
    const std::vector<double> eps{0.5, 0.25, 0.125};
    for (const auto& row : oscillation_check([](Vec2, Vec2) { return 1.0; }, cell, eps, 16)) {
        EXPECT_NEAR(row.product, 2.0, 1e-12);
        EXPECT_NEAR(row.error, 0.0, 1e-12);
    }
}

TEST(Oscillation, ErrorsDecreaseForOscillatingIntegrands)
{
    // off-centre hole: the face centres are not symmetric about the eps-cell centre
    const UnitCell cell = UnitCell::build(0.25, {0.375, 0.5}, 8);
    const std::vector<double> eps{0.5, 0.25, 0.125, 0.0625};
    const std::vector<TwoScaleFunction> fs{
        [](Vec2 x, Vec2) { return x[0]; },
        [](Vec2 x, Vec2 y) { return x[0] * y[1]; },
        [](Vec2 x, Vec2 y) { return std::sin(M_PI * x[1]) * (y[0] + 1.0); },
    };
    for (const auto& f : fs) {
        const auto rows = oscillation_check(f, cell, eps, 128);
        ASSERT_EQ(rows.size(), eps.size());
        EXPECT_GT(rows.front().error, 1e-6);
        for (std::size_t i = 1; i < rows.size(); ++i)
            EXPECT_LT(rows[i].error, rows[i - 1].error);
    }
}

TEST(EpsAverage, ExactForFieldsConstantOnEpsCells)
{
    const PerforatedGrid g = centred(0.25);
    for (int size : {4, 12, 16, 30}) {
        MacroGrid m{size, EdgeSet::none()};
        std::vector<double> field(m.cell_count());
        for (int c = 0; c < m.cell_count(); ++c)
            field[c] = 3.0;
        for (double x : average_onto_eps_cells(field, m, g))
            EXPECT_NEAR(x, 3.0, 1e-13);
    }
    MacroGrid m{16, EdgeSet::none()};
    std::vector<double> field(m.cell_count());
    for (int c = 0; c < m.cell_count(); ++c)
        field[c] = m.cell_center(c)[0];
    const auto avg = average_onto_eps_cells(field, m, g);
    for (int k1 = 0; k1 < 4; ++k1)
        for (int k0 = 0; k0 < 4; ++k0)
            EXPECT_NEAR(avg[g.eps_cell_linear({k0, k1})], (k0 + 0.5) * 0.25, 1e-13);
    EXPECT_THROW(average_onto_eps_cells(std::vector<double>(4, 0.0), MacroGrid{2, EdgeSet::none()}, g), Error);
}

TEST(TwoScaleErrors, MatchingStatesHaveZeroError)
{
    const PerforatedGrid g = centred(0.25);
    const MacroGrid m{16, EdgeSet::none()};
    const RateLaw law = RateLaw::make(0.0, 1.0, 2.0);
    MicroTrajectory micro;
    MacroTrajectory macro;
    for (int s = 0; s < 4; ++s) {
        micro.snapshots.push_back(micro_constant(g, 0.1 * s, 0.4, 0.05));
        macro.snapshots.push_back(macro_constant(m, 0.1 * s, 0.4, 0.05));
    }
    const ErrorRow row = two_scale_errors(micro, g, macro, m, law);
    EXPECT_EQ(row.eps, 0.25);
    EXPECT_NEAR(row.err_u, 0.0, 1e-14);
    EXPECT_NEAR(row.err_v, 0.0, 1e-14);
    EXPECT_NEAR(row.err_r, 0.0, 1e-14);
}

TEST(TwoScaleErrors, ConstantOffsetIsMeasuredExactly)
{
    // offset du over Omega x (0,T): err_u = du sqrt(T); err_v = dv sqrt(|Gamma_G| T)
    const PerforatedGrid g = centred(0.25);
    const MacroGrid m{8, EdgeSet::none()};
    const RateLaw law = RateLaw::make(0.0, 1.0, 2.0);
    MicroTrajectory micro;
    MacroTrajectory macro;
    for (int s = 0; s <= 5; ++s) {
        micro.snapshots.push_back(micro_constant(g, 0.1 * s, 0.5, 0.03));
        macro.snapshots.push_back(macro_constant(m, 0.1 * s, 0.3, 0.01));
    }
    const ErrorRow row = two_scale_errors(micro, g, macro, m, law);
    EXPECT_NEAR(row.err_u, 0.2 * std::sqrt(0.5), 1e-12);
    EXPECT_NEAR(row.err_v, 0.02 * std::sqrt(2.0 * 0.5), 1e-12);
    EXPECT_NEAR(row.err_r, (0.25 - 0.09) * std::sqrt(2.0 * 0.5), 1e-12);
}

TEST(TwoScaleErrors, TimeMismatchIsRejected)
{
    const PerforatedGrid g = centred(0.25);
    const MacroGrid m{8, EdgeSet::none()};
    MicroTrajectory micro;
    MacroTrajectory macro;
    micro.snapshots.push_back(micro_constant(g, 0.0, 0.0, 0.0));
    macro.snapshots.push_back(macro_constant(m, 0.0, 0.0, 0.0));
    micro.snapshots.push_back(micro_constant(g, 0.1, 0.0, 0.0));
    macro.snapshots.push_back(macro_constant(m, 0.2, 0.0, 0.0));
    try {
        two_scale_errors(micro, g, macro, m, RateLaw::make(0.0, 1.0, 2.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::mismatch);
    }
    macro.snapshots.pop_back();
    EXPECT_THROW(two_scale_errors(micro, g, macro, m, RateLaw::make(0.0, 1.0, 2.0)), Error);
}

namespace {

SweepConfig small_sweep()
{
    SweepConfig c;
    c.cell = UnitCell::build(0.5, {0.5, 0.5}, 4);
    c.eps_list = {0.25};
    c.macro_resolution = 16;
    c.T = 0.02;
    c.dt = 1e-3;
    c.output_every = 5;
    return c;
}

} // namespace

TEST(Sweep, SingleRowHasNoOrder)
{
    const ConvergenceReport r = sweep(small_sweep());
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_TRUE(std::isnan(r.rows[0].order_u));
    EXPECT_TRUE(std::isnan(r.rows[0].order_v));
    EXPECT_GT(r.rows[0].errors.err_u, 0.0);
    EXPECT_TRUE(std::isfinite(r.rows[0].errors.err_v));
    EXPECT_TRUE(r.tensors.S_spd);
}

TEST(Sweep, TwoRowsGiveAnOrder)
{
    SweepConfig c = small_sweep();
    c.eps_list = {0.5, 0.25};
    const ConvergenceReport r = sweep(c);
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_TRUE(std::isnan(r.rows[0].order_u));
    const double expect = std::log(r.rows[0].errors.err_u / r.rows[1].errors.err_u) / std::log(2.0);
    EXPECT_DOUBLE_EQ(r.rows[1].order_u, expect);
}

TEST(Sweep, ZeroErrorsLeaveOrdersUndefined)
{
    // solubility equilibrium: micro and macro agree exactly
    SweepConfig c = small_sweep();
    c.eps_list = {0.5, 0.25};
    c.dirichlet = EdgeSet::none();
    c.u_init = InitialData::constant(1.0);
    const ConvergenceReport r = sweep(c);
    for (const auto& row : r.rows) {
        EXPECT_LE(row.errors.err_u, 1e-12);
        EXPECT_TRUE(std::isnan(row.order_u));
    }
}

TEST(Sweep, RejectsBadEpsLists)
{
    SweepConfig c = small_sweep();
    c.eps_list = {0.25, 0.5};
    try {
        sweep(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
    c.eps_list = {};
    EXPECT_THROW(sweep(c), Error);
    c.eps_list = {0.3};
    EXPECT_THROW(sweep(c), Error);
}

TEST(Sweep, MacroGridCoarserThanEpsCellsIsMismatch)
{
    SweepConfig c = small_sweep();
    c.eps_list = {0.125};
    c.macro_resolution = 4;
    try {
        sweep(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::mismatch);
    }
}
