#pragma once

// Numerical counterparts of the two-scale tools: extension of pore-scale
// fields to all of Omega, the boundary unfolding operator, oscillation
// quadratures, micro/macro error norms and the eps-sweep.

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "perfhom/cell_problems.hpp"
#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/kinetics.hpp"
#include "perfhom/macro_sim.hpp"
#include "perfhom/micro_sim.hpp"

namespace perfhom {

/// Field on every cell of the perforated grid; solid cells carry the fluid
/// mean of their eps-cell.
struct ExtendedField {
    int size = 0;
    std::vector<double> values;
};

/// Per eps-cell mean of a fluid field.
inline std::vector<double> eps_cell_means(std::span<const double> u, const PerforatedGrid& grid)
{
    if (static_cast<int>(u.size()) != grid.fluid_count())
        fail(ErrorKind::mismatch, "field does not match the fluid cells of the grid");
    std::vector<double> sum(grid.eps_cell_count(), 0.0);
    std::vector<int> count(grid.eps_cell_count(), 0);
    for (int f = 0; f < grid.fluid_count(); ++f) {
        const int k = grid.eps_cell_linear(grid.eps_cell_of(grid.fluid_cells()[f]));
        sum[k] += u[f];
        ++count[k];
    }
    for (std::size_t k = 0; k < sum.size(); ++k)
        sum[k] /= count[k];
    return sum;
}

inline ExtendedField extend(std::span<const double> u, const PerforatedGrid& grid)
{
    const std::vector<double> mean = eps_cell_means(u, grid);
    ExtendedField out;
    out.size = grid.cells_per_side();
    out.values.resize(grid.cell_count());
    for (int c = 0; c < grid.cell_count(); ++c) {
        const int f = grid.fluid_index(c);
        out.values[c] = f >= 0 ? u[f] : mean[grid.eps_cell_linear(grid.eps_cell_of(c))];
    }
    return out;
}

/// T^eps f sampled at (k, y) for every eps-cell k and reference face y.
struct UnfoldedTrace {
    double t = 0.0;
    double eps = 0.0;
    int cells_per_side = 0; ///< 1/eps
    int reference_faces = 0;
    double reference_face_measure = 0.0; ///< 1/n
    std::vector<double> values; ///< index linear(k) * reference_faces + ref
    double lhs = 0.0; ///< int_Omega int_Gamma |T f|^2
    double rhs = 0.0; ///< eps int_{Gamma^eps} |f|^2

    double at(int k_linear, int ref) const { return values[static_cast<std::size_t>(k_linear) * reference_faces + ref]; }
};

inline UnfoldedTrace unfold(std::span<const double> f, const PerforatedGrid& grid, double t = 0.0)
{
    const auto& faces = grid.boundary_faces();
    if (f.size() != faces.size())
        fail(ErrorKind::mismatch, "boundary field does not match the grain faces of the grid");
    UnfoldedTrace tr;
    tr.t = t;
    tr.eps = grid.eps();
    tr.cells_per_side = grid.eps_cells_per_side();
    tr.reference_faces = static_cast<int>(grid.unit_cell().reference_faces().size());
    tr.reference_face_measure = grid.unit_cell().mesh_width();
    tr.values.assign(faces.size(), 0.0);
    double physical = 0.0;
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const auto& face = faces[i];
        tr.values[static_cast<std::size_t>(grid.eps_cell_linear(face.eps_cell)) * tr.reference_faces + face.reference] = f[i];
        physical += f[i] * f[i] * face.measure;
    }
    double unfolded = 0.0;
    for (double x : tr.values)
        unfolded += x * x;
    tr.lhs = unfolded * tr.eps * tr.eps * tr.reference_face_measure;
    tr.rhs = tr.eps * physical;
    if (std::abs(tr.lhs - tr.rhs) > 1e-12 * std::max(1.0, std::abs(tr.rhs))) {
        std::ostringstream msg;
        msg << "unfolding isometry violated: " << tr.lhs << " vs " << tr.rhs;
        fail(ErrorKind::invariant, msg.str());
    }
    return tr;
}

/// f(x, y) with x in Omega and y in the unit cell.
using TwoScaleFunction = std::function<double(Vec2, Vec2)>;

struct OscillationRow {
    double eps = 0.0;
    double oscillating = 0.0; ///< eps * sum over Gamma^eps of f(x, x/eps) h
    double product = 0.0;     ///< int_Omega int_Gamma f dx dsigma
    double error = 0.0;
};

/// Product-side integral by the midpoint rule in x (q^2 points) and the face
/// midpoints on Gamma_G.
inline double product_quadrature(const TwoScaleFunction& f, const UnitCell& cell, int q = 256)
{
    if (q < 1)
        fail(ErrorKind::parameter, "quadrature resolution must be >= 1");
    const double dx = 1.0 / q;
    const double ds = cell.mesh_width();
    double s = 0.0;
    for (int j = 0; j < q; ++j)
        for (int i = 0; i < q; ++i) {
            const Vec2 x{(i + 0.5) * dx, (j + 0.5) * dx};
            for (const auto& face : cell.reference_faces())
                s += f(x, face.y) * ds;
        }
    return s * dx * dx;
}

inline std::vector<OscillationRow> oscillation_check(const TwoScaleFunction& f, const UnitCell& cell,
                                                     std::span<const double> eps_list, int q = 256)
{
    const double product = product_quadrature(f, cell, q);
    std::vector<OscillationRow> rows;
    for (double eps : eps_list) {
        const PerforatedGrid grid = PerforatedGrid::tile(cell, eps, EdgeSet::none());
        double s = 0.0;
        for (const auto& face : grid.boundary_faces())
            s += f(face.center, face.y) * face.measure;
        OscillationRow row;
        row.eps = grid.eps();
        row.oscillating = grid.eps() * s;
        row.product = product;
        row.error = std::abs(row.oscillating - product);
        rows.push_back(row);
    }
    return rows;
}

namespace detail {

/// w[k][I]: fraction of eps-cell k (along one axis) covered by macro cell I.
inline std::vector<std::vector<std::pair<int, double>>> overlap_weights(int eps_cells, int macro_cells)
{
    std::vector<std::vector<std::pair<int, double>>> w(eps_cells);
    const double eps = 1.0 / eps_cells;
    const double h = 1.0 / macro_cells;
    for (int k = 0; k < eps_cells; ++k) {
        const double a = k * eps;
        const double b = (k + 1) * eps;
        const int first = std::max(0, static_cast<int>(std::floor(a / h)) - 1);
        const int last = std::min(macro_cells - 1, static_cast<int>(std::ceil(b / h)));
        for (int i = first; i <= last; ++i) {
            const double len = std::min(b, (i + 1) * h) - std::max(a, i * h);
            if (len > 1e-14 * h)
                w[k].push_back({i, len / eps});
        }
    }
    return w;
}

} // namespace detail

/// Macro cell field averaged over every eps-cell of `grid`.
inline std::vector<double> average_onto_eps_cells(std::span<const double> field, const MacroGrid& macro,
                                                  const PerforatedGrid& grid)
{
    const int m = grid.eps_cells_per_side();
    if (macro.size < m)
        fail(ErrorKind::mismatch, "macro grid is coarser than the eps-cell partition");
    if (static_cast<int>(field.size()) != macro.cell_count())
        fail(ErrorKind::mismatch, "macro field does not match the macro grid");
    const auto w = detail::overlap_weights(m, macro.size);
    std::vector<double> out(grid.eps_cell_count(), 0.0);
    for (int k1 = 0; k1 < m; ++k1)
        for (int k0 = 0; k0 < m; ++k0) {
            double s = 0.0;
            for (const auto& [j, wy] : w[k1])
                for (const auto& [i, wx] : w[k0])
                    s += wx * wy * field[macro.index(i, j)];
            out[grid.eps_cell_linear({k0, k1})] = s;
        }
    return out;
}

struct ErrorRow {
    double eps = 0.0;
    double err_u = 0.0; ///< || ext(u^eps) - u ||_{L2(Omega x (0,T))}
    double err_v = 0.0; ///< || T^eps v^eps - v ||_{L2(Omega x Gamma x (0,T))}
    double err_r = 0.0; ///< || T^eps r(u^eps) - r(u) ||, same norm
};

namespace detail {

inline double trapezoid(std::span<const double> t, std::span<const double> g)
{
    double s = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i)
        s += 0.5 * (t[i] - t[i - 1]) * (g[i] + g[i - 1]);
    return s;
}

} // namespace detail

/// Squared spatial errors of one micro/macro snapshot pair.
struct SnapshotErrors {
    double u = 0.0;
    double v = 0.0;
    double r = 0.0;
};

inline SnapshotErrors snapshot_errors(const MicroState& micro, const PerforatedGrid& grid, const MacroState& macro,
                                      const MacroGrid& macro_grid, const RateLaw& law)
{
    const std::vector<double> U = average_onto_eps_cells(macro.u, macro_grid, grid);
    const std::vector<double> V = average_onto_eps_cells(macro.v, macro_grid, grid);
    const ExtendedField ext = extend(micro.u, grid);
    SnapshotErrors e;
    const double area = grid.h() * grid.h();
    for (int c = 0; c < grid.cell_count(); ++c) {
        const double d = ext.values[c] - U[grid.eps_cell_linear(grid.eps_cell_of(c))];
        e.u += d * d * area;
    }
    const UnfoldedTrace tv = unfold(micro.v, grid, micro.t);
    std::vector<double> ru(micro.v.size());
    const auto& faces = grid.boundary_faces();
    for (std::size_t i = 0; i < faces.size(); ++i)
        ru[i] = law(micro.u[faces[i].owner_fluid]);
    const UnfoldedTrace tr = unfold(ru, grid, micro.t);
    const double weight = tv.eps * tv.eps * tv.reference_face_measure;
    for (int k = 0; k < grid.eps_cell_count(); ++k) {
        const double rk = law(U[k]);
        for (int ref = 0; ref < tv.reference_faces; ++ref) {
            const double dv = tv.at(k, ref) - V[k];
            const double dr = tr.at(k, ref) - rk;
            e.v += dv * dv * weight;
            e.r += dr * dr * weight;
        }
    }
    return e;
}

inline ErrorRow two_scale_errors(const MicroTrajectory& micro, const PerforatedGrid& grid, const MacroTrajectory& macro,
                                 const MacroGrid& macro_grid, const RateLaw& law)
{
    if (micro.snapshots.size() != macro.snapshots.size())
        fail(ErrorKind::mismatch, "micro and macro trajectories have different output times");
    std::vector<double> t, eu, ev, er;
    for (std::size_t s = 0; s < micro.snapshots.size(); ++s) {
        const double tm = micro.snapshots[s].t;
        if (std::abs(tm - macro.snapshots[s].t) > 1e-9 * std::max(1.0, std::abs(tm))) {
            std::ostringstream msg;
            msg << "output time mismatch at snapshot " << s << ": micro t = " << tm
                << ", macro t = " << macro.snapshots[s].t;
            fail(ErrorKind::mismatch, msg.str());
        }
        const SnapshotErrors e = snapshot_errors(micro.snapshots[s], grid, macro.snapshots[s], macro_grid, law);
        t.push_back(tm);
        eu.push_back(e.u);
        ev.push_back(e.v);
        er.push_back(e.r);
    }
    ErrorRow row;
    row.eps = grid.eps();
    row.err_u = std::sqrt(detail::trapezoid(t, eu));
    row.err_v = std::sqrt(detail::trapezoid(t, ev));
    row.err_r = std::sqrt(detail::trapezoid(t, er));
    return row;
}

/// Shared physical setup of a micro/macro comparison.
struct SweepConfig {
    UnitCell cell = UnitCell::build(0.5, {0.5, 0.5}, 8);
    double D = 1.0;
    RateLaw law;
    DissolutionResolution resolution;
    std::vector<double> eps_list{0.25, 0.125, 0.0625};
    EdgeSet dirichlet = EdgeSet::left_only();
    bool with_flow = false;
    Vec2 pressure_gradient{-1.0, 0.0};
    int macro_resolution = 64;
    double dt = 1e-3;
    double T = 0.1;
    InitialData u_init = InitialData::constant(0.0);
    InitialData v_init = InitialData::constant(0.2);
    int output_every = 10;
    CellSolveOptions cell_options;
    SolverOptions linear{1e-12, 20000, false};
    /// Orders are only reported when both errors exceed this floor.
    double error_floor = 1e-12;
};

struct ConvergenceRow {
    ErrorRow errors;
    double order_u = std::numeric_limits<double>::quiet_NaN();
    double order_v = std::numeric_limits<double>::quiet_NaN();
    double max_difference_quotient = 0.0;
    std::vector<std::string> warnings;
};

struct ConvergenceReport {
    EffectiveTensors tensors;
    std::vector<ConvergenceRow> rows;
};

inline MacroConfig macro_config_for(const SweepConfig& cfg, const EffectiveTensors& tensors)
{
    MacroConfig m;
    m.S = tensors.S;
    m.K = tensors.K;
    m.porosity = tensors.porosity;
    m.surface_density = tensors.surface_density;
    m.law = cfg.law;
    m.resolution = cfg.resolution;
    m.grid.size = cfg.macro_resolution;
    m.grid.dirichlet = cfg.dirichlet;
    m.with_flow = cfg.with_flow;
    // Unit pressure drop along the imposed gradient direction.
    m.pressure.edges = EdgeSet{{true, true, false, false}};
    m.pressure.values = {-cfg.pressure_gradient[0], 0.0, 0.0, 0.0};
    m.dt = cfg.dt;
    m.T = cfg.T;
    m.u_init = cfg.u_init;
    m.v_init = cfg.v_init;
    m.output_every = cfg.output_every;
    m.linear = cfg.linear;
    return m;
}

inline MicroConfig micro_config_for(const SweepConfig& cfg)
{
    MicroConfig m;
    m.D = cfg.D;
    m.law = cfg.law;
    m.resolution = cfg.resolution;
    m.velocity_mode = cfg.with_flow ? VelocityMode::reconstructed : VelocityMode::zero;
    m.pressure_gradient = cfg.pressure_gradient;
    m.dt = cfg.dt;
    m.T = cfg.T;
    m.u_init = cfg.u_init;
    m.v_init = cfg.v_init;
    m.output_every = cfg.output_every;
    m.linear = cfg.linear;
    return m;
}

inline void validate_eps_list(std::span<const double> eps_list)
{
    if (eps_list.empty())
        fail(ErrorKind::config, "eps_list must not be empty");
    for (std::size_t i = 1; i < eps_list.size(); ++i)
        if (!(eps_list[i] < eps_list[i - 1]))
            fail(ErrorKind::config, "eps_list must be strictly decreasing");
}

inline ConvergenceReport sweep(const SweepConfig& cfg)
{
    validate_eps_list(cfg.eps_list);
    for (double eps : cfg.eps_list)
        PerforatedGrid::tile(cfg.cell, eps, cfg.dirichlet); // admissibility before any solve
    if (cfg.with_flow && cfg.pressure_gradient[1] != 0.0)
        fail(ErrorKind::config, "flow in the sweep supports a pressure gradient along x1 only");

    ConvergenceReport report;
    const CellProblemSet cells = compute_effective_tensors(cfg.cell, cfg.D, cfg.cell_options);
    report.tensors = cells.tensors;
    const MacroConfig mcfg = macro_config_for(cfg, cells.tensors);
    const MacroTrajectory macro = MacroSimulation(mcfg).run();

    const MicroConfig ucfg = micro_config_for(cfg);
    for (double eps : cfg.eps_list) {
        const PerforatedGrid grid = PerforatedGrid::tile(cfg.cell, eps, cfg.dirichlet);
        FaceVelocity q = cfg.with_flow ? reconstruct_velocity(grid, cells.stokes, cfg.pressure_gradient)
                                       : FaceVelocity::zero(grid.cells_per_side());
        MicroConfig c = ucfg;
        c.velocity_bound = std::max(c.velocity_bound, q.max_abs());
        const MicroSimulation sim(grid, c, std::move(q));
        const MicroTrajectory micro = sim.run();
        ConvergenceRow row;
        row.errors = two_scale_errors(micro, grid, macro, mcfg.grid, cfg.law);
        row.warnings = micro.warnings;
        if (micro.snapshots.size() > 1) {
            const double lag = micro.snapshots[1].t - micro.snapshots[0].t;
            for (double x : difference_quotient_norm(micro, lag, grid))
                row.max_difference_quotient = std::max(row.max_difference_quotient, x);
        }
        report.rows.push_back(std::move(row));
    }
    for (std::size_t i = 1; i < report.rows.size(); ++i) {
        const ErrorRow& a = report.rows[i - 1].errors;
        const ErrorRow& b = report.rows[i].errors;
        const double scale = std::log(a.eps / b.eps);
        if (a.err_u > cfg.error_floor && b.err_u > cfg.error_floor)
            report.rows[i].order_u = std::log(a.err_u / b.err_u) / scale;
        if (a.err_v > cfg.error_floor && b.err_v > cfg.error_floor)
            report.rows[i].order_v = std::log(a.err_v / b.err_v) / scale;
    }
    return report;
}

} // namespace perfhom
