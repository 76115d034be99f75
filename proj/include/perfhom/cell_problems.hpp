#pragma once

// Periodic cell problems on the fluid part Y of the unit cell and the
// effective tensors they generate.
//
// Diffusion: cell-centered finite volumes with two-point fluxes. The corrector
// xi_i makes the potential y_i + xi_i flux-free through the grain faces, and
//     S_ij = D/|Y| * int_Y d_j (y_i + xi_i) dy,
// where the gradient integral is taken over the staggered (face) control
// volumes. With that quadrature the tensor coincides with the discrete energy
// form (D/|Y|) int_Y (e_i + grad xi_i).(e_j + grad xi_j) up to solver error.
//
// Stokes: MAC grid (face velocities, cell pressures), no-slip on the grain,
// periodic on the cell boundary, solved with an augmented-Lagrangian Uzawa
// iteration whose inner systems go through conjugate gradients.
//     K_ij = 1/|Y| int_Y chi^j_i dy.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/linalg.hpp"

namespace perfhom {

struct CellSolveOptions {
    SolverOptions linear{1e-10, 20000, false};
    /// Augmentation parameter of the Uzawa iteration (dimensionless).
    double augmentation = 50.0;
    /// Stop the Uzawa iteration once max |div chi| falls below this.
    double divergence_tolerance = 1e-11;
    int max_outer_iterations = 500;
    double symmetry_tolerance = 1e-8;
    double spd_tolerance = 1e-8;
};

/// Corrector xi_i at the cell centers of the unit cell (row-major, solid
/// cells hold 0). Zero mean over the fluid cells.
struct CellScalarField {
    int resolution = 0;
    int direction = 0;
    std::vector<double> values;
    bool periodic = true;
    bool zero_mean = true;
    double relative_residual = 0.0;
    int iterations = 0;
    std::string note;
};

struct StokesCellSolution {
    int resolution = 0;
    int direction = 0;
    /// Velocity on the west face of cell (i, j), row-major.
    std::vector<double> ux;
    /// Velocity on the south face of cell (i, j), row-major.
    std::vector<double> uy;
    /// Cell-centered pressure, zero mean over the fluid cells.
    std::vector<double> pressure;
    double momentum_residual = 0.0;
    double divergence = 0.0;
    int outer_iterations = 0;
};

struct DiffusionTensor {
    Tensor S{};
    /// Same tensor evaluated through the energy (quadratic) form.
    Tensor quadratic_form{};
    double asymmetry = 0.0;
    double alpha = 0.0;
};

struct PermeabilityTensor {
    Tensor K{};
    /// 1/|Y| int grad chi^i : grad chi^j
    Tensor gradient_gram{};
    double asymmetry = 0.0;
    double min_eigenvalue = 0.0;
};

struct EffectiveTensors {
    double D = 1.0;
    Tensor S{};
    Tensor K{};
    double alpha_S = 0.0;
    double porosity = 1.0;
    double surface_density = 0.0;
    // provenance
    int resolution = 0;
    double linear_tolerance = 0.0;
    double S_asymmetry = 0.0;
    double K_asymmetry = 0.0;
    bool S_spd = false;
    bool K_spd = false;
    std::array<double, kDim> diffusion_residual{};
    std::array<double, kDim> stokes_momentum_residual{};
    std::array<double, kDim> stokes_divergence{};
};

namespace detail {

/// Compact numbering of the fluid cells of a unit cell.
struct FluidNumbering {
    int n = 0;
    std::vector<int> id;    // n*n, -1 on solid
    std::vector<int> cells; // compact -> linear

    explicit FluidNumbering(const UnitCell& cell) : n(cell.resolution()), id(n * n, -1)
    {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if (!cell.is_solid(i, j)) {
                    id[j * n + i] = static_cast<int>(cells.size());
                    cells.push_back(j * n + i);
                }
    }
    int at(int i, int j) const { return id[wrap(j, n) * n + wrap(i, n)]; }
};

inline std::array<int, 2> step(int i, int j, Direction d)
{
    const int s = sign_of(d);
    return axis_of(d) == 0 ? std::array<int, 2>{i + s, j} : std::array<int, 2>{i, j + s};
}

} // namespace detail

inline CellScalarField solve_diffusion_cell(const UnitCell& cell, int direction,
                                            const CellSolveOptions& opt = {})
{
    if (direction < 0 || direction >= kDim)
        fail(ErrorKind::parameter, "cell problem direction out of range");
    const int n = cell.resolution();
    const double h = cell.mesh_width();
    CellScalarField out;
    out.resolution = n;
    out.direction = direction;
    out.values.assign(static_cast<std::size_t>(n) * n, 0.0);
    if (!cell.perforated()) {
        out.note = "no perforation: zero Neumann data, corrector vanishes identically";
        return out;
    }

    const detail::FluidNumbering num(cell);
    const int nf = static_cast<int>(num.cells.size());
    SparseMatrix::Builder builder(nf);
    std::vector<double> rhs(nf, 0.0);
    for (int c = 0; c < nf; ++c) {
        const int i = num.cells[c] % n;
        const int j = num.cells[c] / n;
        for (Direction d : kDirections) {
            const auto [ni, nj] = detail::step(i, j, d);
            const int nb = num.at(ni, nj);
            if (nb >= 0) {
                builder.add(c, c, 1.0);
                builder.add(c, nb, -1.0);
            } else {
                rhs[c] -= h * normal_of(d)[direction];
            }
        }
    }
    const SparseMatrix a = std::move(builder).build();
    std::vector<double> x(nf, 0.0);
    SolverOptions lin = opt.linear;
    lin.remove_constant = true;
    const SolveReport rep = solve(a, rhs, x, lin, "diffusion cell problem");
    for (int c = 0; c < nf; ++c)
        out.values[num.cells[c]] = x[c];
    out.relative_residual = rep.relative_residual;
    out.iterations = rep.iterations;
    return out;
}

namespace detail {

/// Jump of y_i + xi_i across every fluid-fluid face, visited once per face
/// (east and north faces of each fluid cell). Calls f(axis, jump).
template <class F>
void for_each_potential_jump(const UnitCell& cell, const CellScalarField& xi, F&& f)
{
    const int n = cell.resolution();
    const double h = cell.mesh_width();
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (cell.is_solid(i, j))
                continue;
            for (Direction d : {Direction::east, Direction::north}) {
                const auto [ni, nj] = step(i, j, d);
                if (cell.is_solid(ni, nj))
                    continue;
                const int ax = axis_of(d);
                const double jump = (ax == xi.direction ? h : 0.0) +
                                    xi.values[wrap(nj, n) * n + wrap(ni, n)] - xi.values[j * n + i];
                f(ax, jump);
            }
        }
    }
}

inline void check_fields(const UnitCell& cell, std::span<const CellScalarField> fields)
{
    if (static_cast<int>(fields.size()) != kDim)
        fail(ErrorKind::parameter, "need one cell solution per direction");
    for (int i = 0; i < kDim; ++i)
        if (fields[i].resolution != cell.resolution() || fields[i].direction != i)
            fail(ErrorKind::mismatch, "cell solutions do not match the unit cell");
}

} // namespace detail

/// |Y| (S_ij / D - delta_ij): the discrete correction integral int_Y d_j xi_i.
inline double correction_integral(const UnitCell& cell, const CellScalarField& xi, int j)
{
    const double h = cell.mesh_width();
    double sum = 0.0;
    detail::for_each_potential_jump(cell, xi, [&](int ax, double jump) {
        if (ax == j)
            sum += jump * h;
    });
    return sum - (xi.direction == j ? cell.porosity() : 0.0);
}

inline DiffusionTensor assemble_S(const UnitCell& cell, std::span<const CellScalarField> fields, double D,
                                  const CellSolveOptions& opt = {})
{
    detail::check_fields(cell, fields);
    if (!(D > 0.0))
        fail(ErrorKind::parameter, "diffusivity D must be > 0");
    const double por = cell.porosity();
    const double h = cell.mesh_width();
    DiffusionTensor out;
    Tensor raw{};
    for (int i = 0; i < kDim; ++i) {
        detail::for_each_potential_jump(cell, fields[i], [&](int ax, double jump) { raw[i][ax] += jump * h; });
    }
    // Quadratic form: sum over faces of products of potential jumps.
    std::array<std::vector<std::pair<int, double>>, kDim> jumps;
    for (int i = 0; i < kDim; ++i)
        detail::for_each_potential_jump(cell, fields[i], [&](int ax, double jump) { jumps[i].push_back({ax, jump}); });
    for (int i = 0; i < kDim; ++i)
        for (int j = 0; j < kDim; ++j) {
            double q = 0.0;
            for (std::size_t f = 0; f < jumps[i].size(); ++f)
                q += jumps[i][f].second * jumps[j][f].second;
            out.quadratic_form[i][j] = D * q / por;
        }
    const Tensor s = scaled(raw, D / por);
    out.asymmetry = asymmetry(s);
    if (out.asymmetry > opt.symmetry_tolerance * D) {
        std::ostringstream msg;
        msg << "effective diffusion tensor asymmetry " << out.asymmetry
            << " exceeds tolerance (unconverged cell solve?)";
        fail(ErrorKind::assembly, msg.str());
    }
    out.S = symmetrized(s);
    out.alpha = eigenvalues(out.S)[0];
    if (!(out.alpha > opt.spd_tolerance))
        fail(ErrorKind::assembly, "effective diffusion tensor is not positive definite");
    return out;
}

namespace detail {

/// Degrees of freedom of the MAC velocity on a perforated unit cell.
struct MacLayout {
    int n = 0;
    std::vector<int> ux_id; // n*n, -1 when inactive
    std::vector<int> uy_id;
    std::vector<int> dof_face; // dof -> linear face index
    std::vector<int> dof_axis;
    int count = 0;

    explicit MacLayout(const UnitCell& cell)
        : n(cell.resolution()), ux_id(n * n, -1), uy_id(n * n, -1)
    {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if (!cell.is_solid(i - 1, j) && !cell.is_solid(i, j)) {
                    ux_id[j * n + i] = count++;
                    dof_face.push_back(j * n + i);
                    dof_axis.push_back(0);
                }
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if (!cell.is_solid(i, j - 1) && !cell.is_solid(i, j)) {
                    uy_id[j * n + i] = count++;
                    dof_face.push_back(j * n + i);
                    dof_axis.push_back(1);
                }
    }

    int id(int axis, int i, int j) const
    {
        const int k = wrap(j, n) * n + wrap(i, n);
        return axis == 0 ? ux_id[k] : uy_id[k];
    }
};

/// -Laplacian on the MAC velocity with no-slip on the grain.
inline SparseMatrix mac_laplacian(const UnitCell& cell, const MacLayout& lay)
{
    const int n = lay.n;
    const double inv_h2 = 1.0 / (cell.mesh_width() * cell.mesh_width());
    SparseMatrix::Builder b(lay.count);
    for (int dof = 0; dof < lay.count; ++dof) {
        const int ax = lay.dof_axis[dof];
        const int i = lay.dof_face[dof] % n;
        const int j = lay.dof_face[dof] / n;
        for (Direction d : kDirections) {
            const auto [ni, nj] = step(i, j, d);
            const int nb = lay.id(ax, ni, nj);
            if (nb >= 0) {
                b.add(dof, dof, inv_h2);
                b.add(dof, nb, -inv_h2);
                continue;
            }
            if (axis_of(d) == ax) {
                // Neighbor face of the same orientation along the flow axis sits
                // on the grain wall: zero velocity one spacing away.
                b.add(dof, dof, inv_h2);
                continue;
            }
            // Tangential neighbor: the two cells straddling the missing face.
            const int oi = ax == 0 ? ni - 1 : ni;
            const int oj = ax == 0 ? nj : nj - 1;
            const bool both_solid = cell.is_solid(ni, nj) && cell.is_solid(oi, oj);
            // Wall half a spacing away (reflected ghost) or a wall face one spacing away.
            b.add(dof, dof, both_solid ? 2.0 * inv_h2 : inv_h2);
        }
    }
    return std::move(b).build();
}

struct MacDivergence {
    const UnitCell& cell;
    const MacLayout& lay;
    const FluidNumbering& num;

    /// div = B u  (fluid cells)
    void apply(std::span<const double> u, std::span<double> div) const
    {
        const int n = lay.n;
        const double inv_h = 1.0 / cell.mesh_width();
        for (std::size_t c = 0; c < num.cells.size(); ++c) {
            const int i = num.cells[c] % n;
            const int j = num.cells[c] / n;
            auto val = [&](int ax, int a, int bb) {
                const int id = lay.id(ax, a, bb);
                return id >= 0 ? u[id] : 0.0;
            };
            div[c] = (val(0, i + 1, j) - val(0, i, j) + val(1, i, j + 1) - val(1, i, j)) * inv_h;
        }
    }

    /// out = B^T p (a negative discrete gradient on the faces)
    void apply_transpose(std::span<const double> p, std::span<double> out) const
    {
        const int n = lay.n;
        const double inv_h = 1.0 / cell.mesh_width();
        for (int dof = 0; dof < lay.count; ++dof) {
            const int ax = lay.dof_axis[dof];
            const int i = lay.dof_face[dof] % n;
            const int j = lay.dof_face[dof] / n;
            const int lo = ax == 0 ? num.at(i - 1, j) : num.at(i, j - 1);
            const int hi = num.at(i, j);
            out[dof] = (p[lo] - p[hi]) * inv_h;
        }
    }
};

} // namespace detail

inline StokesCellSolution solve_stokes_cell(const UnitCell& cell, int direction, const CellSolveOptions& opt = {})
{
    if (direction < 0 || direction >= kDim)
        fail(ErrorKind::parameter, "cell problem direction out of range");
    if (!cell.perforated())
        fail(ErrorKind::degeneracy, "cell problem has no no-slip boundary; permeability undefined");

    const int n = cell.resolution();
    const detail::MacLayout lay(cell);
    const detail::FluidNumbering num(cell);
    const detail::MacDivergence div{cell, lay, num};
    const SparseMatrix lap = detail::mac_laplacian(cell, lay);
    const int nu = lay.count;
    const int np = static_cast<int>(num.cells.size());
    const double gamma = opt.augmentation;

    std::vector<double> force(nu, 0.0);
    for (int dof = 0; dof < nu; ++dof)
        force[dof] = lay.dof_axis[dof] == direction ? 1.0 : 0.0;

    std::vector<double> inv_diag = lap.diagonal();
    {
        // Diagonal of gamma B^T B: each active face touches two fluid cells.
        const double inv_h2 = 1.0 / (cell.mesh_width() * cell.mesh_width());
        for (double& d : inv_diag)
            d = 1.0 / (d + 2.0 * gamma * inv_h2);
    }
    std::vector<double> divbuf(np), tbuf(nu);
    auto apply_augmented = [&](std::span<const double> in, std::span<double> out) {
        lap.multiply(in, out);
        div.apply(in, divbuf);
        div.apply_transpose(divbuf, tbuf);
        for (int k = 0; k < nu; ++k)
            out[k] += gamma * tbuf[k];
    };

    std::vector<double> u(nu, 0.0), p(np, 0.0), rhs(nu), bt(nu), d(np);
    SolverOptions lin = opt.linear;
    lin.remove_constant = false;
    lin.relative_tolerance = std::min(lin.relative_tolerance, 1e-12);

    StokesCellSolution sol;
    sol.resolution = n;
    sol.direction = direction;
    double div_max = 0.0;
    int outer = 0;
    for (; outer < opt.max_outer_iterations; ++outer) {
        div.apply_transpose(p, bt);
        for (int k = 0; k < nu; ++k)
            rhs[k] = force[k] - bt[k];
        const SolveReport rep = conjugate_gradient(apply_augmented, inv_diag, rhs, u, lin);
        if (!rep.converged && rep.relative_residual > 1e-8) {
            std::ostringstream msg;
            msg << "Stokes cell inner solve stalled at relative residual " << rep.relative_residual;
            fail(ErrorKind::solver, msg.str());
        }
        div.apply(u, d);
        div_max = max_abs(d);
        for (int c = 0; c < np; ++c)
            p[c] += gamma * d[c];
        if (div_max <= opt.divergence_tolerance)
            break;
    }
    if (div_max > opt.divergence_tolerance) {
        std::ostringstream msg;
        msg << "Stokes cell iteration did not reach the divergence tolerance: max |div| = " << div_max;
        fail(ErrorKind::solver, msg.str());
    }
    detail::project_constant(p);

    // Momentum residual of the saddle system  A u + B^T p = f.
    std::vector<double> au(nu);
    lap.multiply(u, au);
    div.apply_transpose(p, bt);
    double res = 0.0;
    for (int k = 0; k < nu; ++k)
        res = std::max(res, std::abs(force[k] - au[k] - bt[k]));

    sol.ux.assign(static_cast<std::size_t>(n) * n, 0.0);
    sol.uy.assign(static_cast<std::size_t>(n) * n, 0.0);
    sol.pressure.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int dof = 0; dof < nu; ++dof)
        (lay.dof_axis[dof] == 0 ? sol.ux : sol.uy)[lay.dof_face[dof]] = u[dof];
    for (int c = 0; c < np; ++c)
        sol.pressure[num.cells[c]] = p[c];
    sol.momentum_residual = res;
    sol.divergence = div_max;
    sol.outer_iterations = outer + 1;
    return sol;
}

/// max |div chi| of a stored cell solution, recomputed from the face values.
inline double cell_divergence(const UnitCell& cell, const StokesCellSolution& s)
{
    const int n = cell.resolution();
    const double inv_h = 1.0 / cell.mesh_width();
    double m = 0.0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            if (cell.is_solid(i, j))
                continue;
            const double d = (s.ux[j * n + detail::wrap(i + 1, n)] - s.ux[j * n + i] +
                              s.uy[detail::wrap(j + 1, n) * n + i] - s.uy[j * n + i]) *
                             inv_h;
            m = std::max(m, std::abs(d));
        }
    return m;
}

inline PermeabilityTensor assemble_K(const UnitCell& cell, std::span<const StokesCellSolution> sols,
                                     const CellSolveOptions& opt = {})
{
    if (static_cast<int>(sols.size()) != kDim)
        fail(ErrorKind::parameter, "need one Stokes solution per direction");
    for (int j = 0; j < kDim; ++j)
        if (sols[j].resolution != cell.resolution() || sols[j].direction != j)
            fail(ErrorKind::mismatch, "Stokes solutions do not match the unit cell");
    const int n = cell.resolution();
    const double h = cell.mesh_width();
    const double por = cell.porosity();
    const detail::MacLayout lay(cell);
    const SparseMatrix lap = detail::mac_laplacian(cell, lay);

    std::array<std::vector<double>, kDim> dofs;
    for (int j = 0; j < kDim; ++j) {
        dofs[j].assign(lay.count, 0.0);
        for (int dof = 0; dof < lay.count; ++dof)
            dofs[j][dof] = (lay.dof_axis[dof] == 0 ? sols[j].ux : sols[j].uy)[lay.dof_face[dof]];
    }

    PermeabilityTensor out;
    Tensor raw{};
    for (int j = 0; j < kDim; ++j) {
        for (int cidx = 0; cidx < n * n; ++cidx) {
            raw[0][j] += sols[j].ux[cidx] * h * h;
            raw[1][j] += sols[j].uy[cidx] * h * h;
        }
    }
    raw = scaled(raw, 1.0 / por);
    std::vector<double> au(lay.count);
    for (int j = 0; j < kDim; ++j) {
        lap.multiply(dofs[j], au);
        for (int i = 0; i < kDim; ++i)
            out.gradient_gram[i][j] = dot(dofs[i], au) * h * h / por;
    }
    out.asymmetry = asymmetry(raw);
    out.K = symmetrized(raw);
    out.min_eigenvalue = eigenvalues(out.K)[0];
    if (out.asymmetry > opt.symmetry_tolerance) {
        std::ostringstream msg;
        msg << "permeability asymmetry " << out.asymmetry << " exceeds tolerance";
        fail(ErrorKind::assembly, msg.str());
    }
    if (!(out.min_eigenvalue > opt.spd_tolerance))
        fail(ErrorKind::assembly, "permeability tensor is not positive definite");
    return out;
}

struct CellProblemSet {
    std::array<CellScalarField, kDim> diffusion;
    std::array<StokesCellSolution, kDim> stokes;
    EffectiveTensors tensors;
};

/// Solves all cell problems of a perforated unit cell and assembles S and K.
inline CellProblemSet compute_effective_tensors(const UnitCell& cell, double D, const CellSolveOptions& opt = {})
{
    CellProblemSet set;
    for (int i = 0; i < kDim; ++i)
        set.diffusion[i] = solve_diffusion_cell(cell, i, opt);
    for (int j = 0; j < kDim; ++j)
        set.stokes[j] = solve_stokes_cell(cell, j, opt);
    const DiffusionTensor s = assemble_S(cell, set.diffusion, D, opt);
    const PermeabilityTensor k = assemble_K(cell, set.stokes, opt);
    EffectiveTensors& t = set.tensors;
    t.D = D;
    t.S = s.S;
    t.K = k.K;
    t.alpha_S = s.alpha;
    t.porosity = cell.porosity();
    t.surface_density = cell.surface_measure();
    t.resolution = cell.resolution();
    t.linear_tolerance = opt.linear.relative_tolerance;
    t.S_asymmetry = s.asymmetry;
    t.K_asymmetry = k.asymmetry;
    t.S_spd = s.alpha > opt.spd_tolerance;
    t.K_spd = k.min_eigenvalue > opt.spd_tolerance;
    for (int i = 0; i < kDim; ++i) {
        t.diffusion_residual[i] = set.diffusion[i].relative_residual;
        t.stokes_momentum_residual[i] = set.stokes[i].momentum_residual;
        t.stokes_divergence[i] = set.stokes[i].divergence;
    }
    return set;
}

} // namespace perfhom
