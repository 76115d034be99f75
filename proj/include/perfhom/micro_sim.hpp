#pragma once

// Pore-scale reactive transport on a perforated grid.
//
// One step is split as
//   1. explicit first-order upwind advection with a divergence-free face velocity,
//   2. exact surface ODE on every grain face with the owner-cell value frozen,
//   3. backward-Euler diffusion over the fluid cells; the grain flux is the
//      source -eps * dv/dt per unit face, so mass moves between u and eps*v
//      without loss.
// Step 2 maps (u, v) monotonically as long as dt k L_r (eps/h) f <= 1 where
// f is the largest number of grain faces touching one fluid cell; together
// with the M-matrix of step 3 this keeps the box bounds and the L1 contraction.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "perfhom/cell_problems.hpp"
#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/kinetics.hpp"
#include "perfhom/linalg.hpp"

namespace perfhom {

/// Spatially constant or smooth initial profile: base + amplitude sin(pi x1) sin(pi x2).
struct InitialData {
    enum class Kind { constant, sine };
    Kind kind = Kind::constant;
    double base = 0.0;
    double amplitude = 0.0;

    static InitialData constant(double c) { return {Kind::constant, c, 0.0}; }
    static InitialData sine(double base, double amplitude) { return {Kind::sine, base, amplitude}; }

    double operator()(Vec2 x) const
    {
        if (kind == Kind::constant)
            return base;
        return base + amplitude * std::sin(std::numbers::pi * x[0]) * std::sin(std::numbers::pi * x[1]);
    }
    double upper_bound() const { return base + std::max(amplitude, 0.0); }
    double lower_bound() const { return base + std::min(amplitude, 0.0); }
    bool is_constant() const { return kind == Kind::constant || amplitude == 0.0; }
};

/// Normal velocities on the faces of an N x N grid.
struct FaceVelocity {
    int size = 0;
    std::vector<double> qx; ///< x-face (I, J), I in [0, N], stored J * (N + 1) + I
    std::vector<double> qy; ///< y-face (I, J), J in [0, N], stored J * N + I

    static FaceVelocity zero(int n)
    {
        FaceVelocity f;
        f.size = n;
        f.qx.assign(static_cast<std::size_t>(n + 1) * n, 0.0);
        f.qy.assign(static_cast<std::size_t>(n) * (n + 1), 0.0);
        return f;
    }
    double x(int i, int j) const { return qx[j * (size + 1) + i]; }
    double y(int i, int j) const { return qy[j * size + i]; }
    double& x(int i, int j) { return qx[j * (size + 1) + i]; }
    double& y(int i, int j) { return qy[j * size + i]; }
    double max_abs() const { return std::max(perfhom::max_abs(qx), perfhom::max_abs(qy)); }
    bool is_zero() const { return max_abs() == 0.0; }
};

/// q(x) = sum_j chi^j(x/eps mod Z) (-G_j) sampled on the faces of the grid.
inline FaceVelocity reconstruct_velocity(const PerforatedGrid& grid, std::span<const StokesCellSolution> stokes,
                                         Vec2 pressure_gradient)
{
    const int n = grid.unit_cell().resolution();
    if (static_cast<int>(stokes.size()) != kDim)
        fail(ErrorKind::config, "velocity reconstruction needs one Stokes cell solution per direction");
    for (int j = 0; j < kDim; ++j)
        if (stokes[j].resolution != n || stokes[j].direction != j)
            fail(ErrorKind::config, "Stokes cell solutions do not match the grid's unit cell");
    const int size = grid.cells_per_side();
    FaceVelocity q = FaceVelocity::zero(size);
    auto sample = [&](int axis, int i, int j) {
        const int li = detail::wrap(i, n);
        const int lj = detail::wrap(j, n);
        double v = 0.0;
        for (int d = 0; d < kDim; ++d) {
            const auto& field = axis == 0 ? stokes[d].ux : stokes[d].uy;
            v += field[lj * n + li] * (-pressure_gradient[d]);
        }
        return v;
    };
    for (int j = 0; j < size; ++j)
        for (int i = 0; i <= size; ++i)
            q.x(i, j) = sample(0, i, j);
    for (int j = 0; j <= size; ++j)
        for (int i = 0; i < size; ++i)
            q.y(i, j) = sample(1, i, j);
    // No-slip must be inherited: faces touching a solid cell carry no flow.
    const auto& cell = grid.unit_cell();
    for (int j = 0; j < size; ++j)
        for (int i = 0; i <= size; ++i)
            if ((cell.is_solid(i - 1, j) || cell.is_solid(i, j)) && q.x(i, j) != 0.0)
                fail(ErrorKind::config, "Stokes cell geometry does not match the grid (flow through a grain)");
    for (int j = 0; j <= size; ++j)
        for (int i = 0; i < size; ++i)
            if ((cell.is_solid(i, j - 1) || cell.is_solid(i, j)) && q.y(i, j) != 0.0)
                fail(ErrorKind::config, "Stokes cell geometry does not match the grid (flow through a grain)");
    return q;
}

enum class VelocityMode { zero, reconstructed };

struct MicroConfig {
    double D = 1.0;
    RateLaw law;
    DissolutionResolution resolution;
    VelocityMode velocity_mode = VelocityMode::zero;
    Vec2 pressure_gradient{-1.0, 0.0};
    /// M_q: admissible sup-norm of the velocity.
    double velocity_bound = 1.0;
    double dt = 1e-3;
    double T = 0.1;
    InitialData u_init = InitialData::constant(0.0);
    InitialData v_init = InitialData::constant(0.0);
    /// Snapshot cadence in steps.
    int output_every = 1;
    double invariant_slack = 1e-8;
    SolverOptions linear{1e-12, 20000, false};
};

struct MicroState {
    double t = 0.0;
    std::vector<double> u; ///< per fluid cell
    std::vector<double> v; ///< per grain face
    std::vector<double> w; ///< per grain face
};

struct MassRecord {
    double t = 0.0;
    double mass_u = 0.0;
    double mass_v = 0.0; ///< storage-weighted precipitate
    double outflow = 0.0; ///< cumulative loss through the outer boundary
    double total() const { return mass_u + mass_v + outflow; }
};

template <class State>
struct Trajectory {
    std::vector<State> snapshots;
    std::vector<MassRecord> mass; ///< one record per step, starting with t = 0
    std::vector<std::string> warnings;
    double bound_u = 0.0;
    double bound_v = 0.0;
};

using MicroTrajectory = Trajectory<MicroState>;

/// Raised when a step leaves the admissible box; carries the offending state.
class InvariantViolation : public Error {
public:
    InvariantViolation(const std::string& message, double t, std::vector<double> u, std::vector<double> v,
                       std::vector<double> w)
        : Error(ErrorKind::invariant, message), t_(t), u_(std::move(u)), v_(std::move(v)), w_(std::move(w))
    {
    }
    double t() const { return t_; }
    const std::vector<double>& u() const { return u_; }
    const std::vector<double>& v() const { return v_; }
    const std::vector<double>& w() const { return w_; }

private:
    double t_;
    std::vector<double> u_, v_, w_;
};

namespace detail {

inline int step_count(double T, double dt)
{
    if (!(dt > 0.0))
        fail(ErrorKind::config, "time step dt must be > 0");
    if (!(T >= 0.0))
        fail(ErrorKind::config, "final time T must be >= 0");
    if (T == 0.0)
        return 0;
    return std::max(1, static_cast<int>(std::ceil(T / dt - 1e-9)));
}

} // namespace detail

class MicroSimulation {
public:
    MicroSimulation(const PerforatedGrid& grid, MicroConfig cfg, FaceVelocity velocity)
        : grid_(grid), cfg_(std::move(cfg)), q_(std::move(velocity))
    {
        if (!(cfg_.D > 0.0))
            fail(ErrorKind::config, "diffusivity D must be > 0");
        cfg_.resolution.validate();
        if (q_.size != grid_.cells_per_side())
            fail(ErrorKind::config, "velocity field does not match the grid");
        if (cfg_.output_every < 1)
            fail(ErrorKind::config, "output_every must be >= 1");
        steps_ = detail::step_count(cfg_.T, cfg_.dt);
        dt_ = steps_ > 0 ? cfg_.T / steps_ : cfg_.dt;
        if (q_.max_abs() > cfg_.velocity_bound * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "velocity sup-norm " << q_.max_abs() << " exceeds the configured bound M_q = "
                << cfg_.velocity_bound;
            fail(ErrorKind::config, msg.str());
        }
        check_cfl();
        assemble();
    }

    static MicroSimulation with_zero_velocity(const PerforatedGrid& grid, MicroConfig cfg)
    {
        return MicroSimulation(grid, std::move(cfg), FaceVelocity::zero(grid.cells_per_side()));
    }

    const PerforatedGrid& grid() const { return grid_; }
    const MicroConfig& config() const { return cfg_; }
    const FaceVelocity& velocity() const { return q_; }
    double dt() const { return dt_; }
    int steps() const { return steps_; }

    /// Largest dt allowed by the kinetic positivity bound and the advective CFL.
    double max_stable_dt(double bound_u) const
    {
        const double lr = cfg_.law.lipschitz(bound_u);
        const double ratio = grid_.eps() / grid_.h() * grid_.max_faces_per_cell();
        double lim = lr > 0.0 ? 1.0 / (cfg_.law.k() * lr * ratio) : INFINITY;
        const double out = max_outflow_rate();
        if (out > 0.0)
            lim = std::min(lim, 1.0 / out);
        return lim;
    }

    MicroState initial_state() const
    {
        MicroState s;
        s.u.resize(grid_.fluid_count());
        for (int f = 0; f < grid_.fluid_count(); ++f)
            s.u[f] = cfg_.u_init(grid_.cell_center(grid_.fluid_cells()[f]));
        const auto& faces = grid_.boundary_faces();
        s.v.resize(faces.size());
        for (std::size_t k = 0; k < faces.size(); ++k)
            s.v[k] = cfg_.v_init(faces[k].center);
        refresh_w(s);
        return s;
    }

    /// Sets w from (u at the owner cell, v).
    void refresh_w(MicroState& s) const
    {
        const auto& faces = grid_.boundary_faces();
        s.w.resize(faces.size());
        for (std::size_t k = 0; k < faces.size(); ++k)
            s.w[k] = resolved_w(cfg_.law, cfg_.resolution, s.u[faces[k].owner_fluid], s.v[k]);
    }

    double mass_u(const MicroState& s) const
    {
        double m = 0.0;
        for (double x : s.u)
            m += x;
        return m * grid_.h() * grid_.h();
    }
    double mass_v(const MicroState& s) const
    {
        double m = 0.0;
        for (double x : s.v)
            m += x;
        return grid_.eps() * m * grid_.h();
    }

    /// One split step; `outflow` receives the mass that left through the outer boundary.
    MicroState step(const MicroState& s, double* outflow = nullptr) const
    {
        const double h = grid_.h();
        const double dt = dt_;
        double lost = 0.0;
        std::vector<double> u = advect(s.u, &lost);

        const auto& faces = grid_.boundary_faces();
        MicroState next;
        next.t = s.t + dt;
        next.v.resize(faces.size());
        std::vector<double> rhs = u;
        const double coupling = grid_.eps() / h; // eps * h (face) / h^2 (cell)
        for (std::size_t k = 0; k < faces.size(); ++k) {
            const int owner = faces[k].owner_fluid;
            const OdeStep st = surface_step(cfg_.law, cfg_.resolution, u[owner], s.v[k], dt);
            next.v[k] = st.v_new;
            rhs[owner] -= coupling * (st.v_new - s.v[k]);
        }
        next.u = u;
        solve(matrix_, rhs, next.u, cfg_.linear, "micro diffusion step");
        for (const auto& of : grid_.outer_faces())
            if (of.dirichlet)
                lost += dt * 2.0 * cfg_.D * next.u[of.owner_fluid];
        refresh_w(next);
        if (outflow)
            *outflow = lost;
        return next;
    }

    MicroTrajectory run() const { return run(initial_state()); }

    MicroTrajectory run(MicroState state) const
    {
        if (static_cast<int>(state.u.size()) != grid_.fluid_count() ||
            state.v.size() != grid_.boundary_faces().size())
            fail(ErrorKind::mismatch, "initial state does not match the grid");
        refresh_w(state);
        MicroTrajectory traj;
        traj.bound_u = std::max({cfg_.law.solubility(), perfhom::max_abs(state.u), 0.0});
        double vmax = 0.0;
        for (double x : state.v)
            vmax = std::max(vmax, x);
        traj.bound_v = vmax + cfg_.T * cfg_.law.k() * std::max(cfg_.law(traj.bound_u) - 1.0, 0.0);
        for (double x : state.u)
            if (x < 0.0)
                fail(ErrorKind::config, "initial concentration must be nonnegative");
        for (double x : state.v)
            if (x < 0.0)
                fail(ErrorKind::config, "initial precipitate must be nonnegative");
        const double lim = max_stable_dt(traj.bound_u);
        if (dt_ > lim * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "dt = " << dt_ << " violates the positivity bound dt * k * L_r * (eps/h) * faces_per_cell <= 1"
                << " and advective CFL (largest admissible dt = " << lim << ")";
            fail(ErrorKind::config, msg.str());
        }
        compatibility_warning(state, traj.warnings);

        double outflow = 0.0;
        traj.mass.push_back({state.t, mass_u(state), mass_v(state), 0.0});
        traj.snapshots.push_back(state);
        for (int n = 1; n <= steps_; ++n) {
            double lost = 0.0;
            state = step(state, &lost);
            outflow += lost;
            check_invariants(state, traj.bound_u, traj.bound_v);
            traj.mass.push_back({state.t, mass_u(state), mass_v(state), outflow});
            if (n % cfg_.output_every == 0 || n == steps_)
                traj.snapshots.push_back(state);
        }
        return traj;
    }

    void check_invariants(const MicroState& s, double bound_u, double bound_v) const
    {
        const double tol = cfg_.invariant_slack;
        auto violation = [&](const std::string& what, double value) {
            std::ostringstream msg;
            msg << "invariant violated at t = " << s.t << ": " << what << " (value " << value << ")";
            throw InvariantViolation(msg.str(), s.t, s.u, s.v, s.w);
        };
        for (double x : s.u) {
            if (x < -tol)
                violation("u < 0", x);
            if (x > bound_u + tol)
                violation("u > M", x);
        }
        for (std::size_t k = 0; k < s.v.size(); ++k) {
            if (s.v[k] < 0.0)
                violation("v < 0", s.v[k]);
            if (s.v[k] > bound_v + tol)
                violation("v > M", s.v[k]);
            if (s.w[k] < 0.0 || s.w[k] > 1.0)
                violation("w outside [0,1]", s.w[k]);
            if (cfg_.resolution.mode == ResolutionMode::exact && s.v[k] > 0.0 && s.w[k] != 1.0)
                violation("w != 1 on a face carrying precipitate", s.w[k]);
        }
    }

private:
    double max_outflow_rate() const
    {
        const double h = grid_.h();
        double worst = 0.0;
        for (int c : grid_.fluid_cells()) {
            const int i = grid_.col(c);
            const int j = grid_.row(c);
            const double out = std::max(-q_.x(i, j), 0.0) + std::max(q_.x(i + 1, j), 0.0) +
                               std::max(-q_.y(i, j), 0.0) + std::max(q_.y(i, j + 1), 0.0);
            worst = std::max(worst, out / h);
        }
        return worst;
    }

    void check_cfl() const
    {
        if (q_.is_zero())
            return;
        const double rate = max_outflow_rate();
        if (dt_ * rate > 1.0 + 1e-12) {
            std::ostringstream msg;
            msg << "dt = " << dt_ << " violates the advective CFL bound dt * sum(outflow)/h <= 1 (limit "
                << 1.0 / rate << ")";
            fail(ErrorKind::config, msg.str());
        }
    }

    void assemble()
    {
        const int nf = grid_.fluid_count();
        const int size = grid_.cells_per_side();
        const double h = grid_.h();
        const double a = dt_ * cfg_.D / (h * h);
        SparseMatrix::Builder b(nf);
        for (int f = 0; f < nf; ++f) {
            const int c = grid_.fluid_cells()[f];
            const int i = grid_.col(c);
            const int j = grid_.row(c);
            b.add(f, f, 1.0);
            const std::array<std::array<int, 2>, 4> nbrs{{{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}}};
            for (const auto& [ni, nj] : nbrs) {
                if (ni < 0 || nj < 0 || ni >= size || nj >= size)
                    continue;
                const int g = grid_.fluid_index(grid_.index(ni, nj));
                if (g < 0)
                    continue;
                b.add(f, f, a);
                b.add(f, g, -a);
            }
        }
        for (const auto& of : grid_.outer_faces())
            if (of.dirichlet)
                b.add(of.owner_fluid, of.owner_fluid, 2.0 * a);
        matrix_ = std::move(b).build();
    }

    std::vector<double> advect(const std::vector<double>& u, double* lost) const
    {
        if (q_.is_zero())
            return u;
        const int size = grid_.cells_per_side();
        const double h = grid_.h();
        const double lam = dt_ / h;
        std::vector<double> out = u;
        auto value = [&](int i, int j) -> std::optional<double> {
            if (i < 0 || j < 0 || i >= size || j >= size)
                return std::nullopt;
            const int g = grid_.fluid_index(grid_.index(i, j));
            if (g < 0)
                return std::nullopt;
            return u[g];
        };
        auto edge_dirichlet = [&](Edge e) { return grid_.dirichlet_edges().contains(e); };
        // x-faces
        for (int j = 0; j < size; ++j) {
            for (int i = 0; i <= size; ++i) {
                const double q = q_.x(i, j);
                if (q == 0.0)
                    continue;
                const auto left = value(i - 1, j);
                const auto right = value(i, j);
                if (left && right) {
                    const double flux = q * (q > 0.0 ? *left : *right);
                    out[grid_.fluid_index(grid_.index(i - 1, j))] -= lam * flux;
                    out[grid_.fluid_index(grid_.index(i, j))] += lam * flux;
                } else if (!left && right && i == 0 && edge_dirichlet(Edge::left) && q < 0.0) {
                    const double flux = q * *right; // outflow through x = 0
                    out[grid_.fluid_index(grid_.index(i, j))] += lam * flux;
                    *lost -= dt_ * flux * h;
                } else if (left && !right && i == size && edge_dirichlet(Edge::right) && q > 0.0) {
                    const double flux = q * *left;
                    out[grid_.fluid_index(grid_.index(i - 1, j))] -= lam * flux;
                    *lost += dt_ * flux * h;
                }
            }
        }
        // y-faces
        for (int j = 0; j <= size; ++j) {
            for (int i = 0; i < size; ++i) {
                const double q = q_.y(i, j);
                if (q == 0.0)
                    continue;
                const auto low = value(i, j - 1);
                const auto high = value(i, j);
                if (low && high) {
                    const double flux = q * (q > 0.0 ? *low : *high);
                    out[grid_.fluid_index(grid_.index(i, j - 1))] -= lam * flux;
                    out[grid_.fluid_index(grid_.index(i, j))] += lam * flux;
                } else if (!low && high && j == 0 && edge_dirichlet(Edge::bottom) && q < 0.0) {
                    const double flux = q * *high;
                    out[grid_.fluid_index(grid_.index(i, j))] += lam * flux;
                    *lost -= dt_ * flux * h;
                } else if (low && !high && j == size && edge_dirichlet(Edge::top) && q > 0.0) {
                    const double flux = q * *low;
                    out[grid_.fluid_index(grid_.index(i, j - 1))] -= lam * flux;
                    *lost += dt_ * flux * h;
                }
            }
        }
        return out;
    }

    void compatibility_warning(const MicroState& s, std::vector<std::string>& warnings) const
    {
        // For spatially constant data the compatibility condition reduces to
        // r(u_I) = w_I on the grain boundary.
        if (!cfg_.u_init.is_constant())
            return;
        double worst = 0.0;
        const auto& faces = grid_.boundary_faces();
        for (std::size_t k = 0; k < faces.size(); ++k) {
            const double u = s.u[faces[k].owner_fluid];
            worst = std::max(worst, std::abs(grid_.eps() * (cfg_.law(u) - s.w[k])));
        }
        if (worst > 1e-12) {
            std::ostringstream msg;
            msg << "initial data violate the compatibility condition on the grain boundary: max |eps (r(u_I) - w_I)| = "
                << worst;
            warnings.push_back(msg.str());
        }
    }

    const PerforatedGrid& grid_;
    MicroConfig cfg_;
    FaceVelocity q_;
    int steps_ = 0;
    double dt_ = 0.0;
    SparseMatrix matrix_;
};

inline MicroTrajectory run_micro(const PerforatedGrid& grid, const MicroConfig& cfg)
{
    return MicroSimulation::with_zero_velocity(grid, cfg).run();
}

/// sum |u_a - u_b| h^2 + eps sum |v_a - v_b| h
inline double l1_distance(const MicroState& a, const MicroState& b, const PerforatedGrid& grid)
{
    if (a.u.size() != b.u.size() || a.v.size() != b.v.size() ||
        static_cast<int>(a.u.size()) != grid.fluid_count() || a.v.size() != grid.boundary_faces().size())
        fail(ErrorKind::mismatch, "states do not live on the same grid");
    double du = 0.0;
    for (std::size_t i = 0; i < a.u.size(); ++i)
        du += std::abs(a.u[i] - b.u[i]);
    double dv = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i)
        dv += std::abs(a.v[i] - b.v[i]);
    const double h = grid.h();
    return du * h * h + grid.eps() * dv * h;
}

namespace detail {

template <class State, class Distance>
std::vector<double> difference_quotients(const std::vector<State>& snaps, double lag, Distance&& dist)
{
    std::vector<double> out;
    if (snaps.empty())
        return out;
    if (!(lag > 0.0))
        fail(ErrorKind::parameter, "difference-quotient lag must be > 0");
    if (snaps.size() == 1)
        return {0.0};
    const double spacing = snaps[1].t - snaps[0].t;
    for (std::size_t i = 1; i < snaps.size(); ++i)
        if (std::abs(snaps[i].t - snaps[i - 1].t - spacing) > 1e-9 * std::max(1.0, spacing))
            fail(ErrorKind::parameter, "difference quotients need uniformly spaced snapshots");
    const double ratio = lag / spacing;
    const long shift = std::lround(ratio);
    if (shift < 1 || std::abs(ratio - static_cast<double>(shift)) > 1e-9 * std::max(1.0, ratio))
        fail(ErrorKind::parameter, "lag is not a multiple of the snapshot spacing");
    out.reserve(snaps.size());
    for (std::size_t i = 0; i < snaps.size(); ++i) {
        // Before t = 0 the trajectory is extended by the initial state.
        const std::size_t back = i >= static_cast<std::size_t>(shift) ? i - shift : 0;
        out.push_back(dist(snaps[i], snaps[back]) / lag);
    }
    return out;
}

} // namespace detail

/// int |D_h u| + eps int |D_h v| at each snapshot, D_h g(t) = (g(t) - g(t - h)) / h.
inline std::vector<double> difference_quotient_norm(const MicroTrajectory& traj, double lag, const PerforatedGrid& grid)
{
    return detail::difference_quotients(traj.snapshots, lag, [&grid](const MicroState& a, const MicroState& b) {
        return l1_distance(a, b, grid);
    });
}

} // namespace perfhom
