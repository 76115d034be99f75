#pragma once

// Darcy-scale model on a uniform grid over (0,1)^2:
//   d/dt (u + |Gamma_G|/|Y| v) = div (S grad u - q u),   dv/dt = k (r(u) - w),
// with q = -K grad P from the Darcy problem. The step uses the same splitting
// as the pore-scale simulator with the surface term replaced by the storage
// factor |Gamma_G|/|Y|.
//
// Tensor diffusion: two-point fluxes for the diagonal of S plus a cross term
// built from gradients at interior grid vertices. The resulting operator is
// symmetric and reduces to the 5-point stencil when S is diagonal.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/kinetics.hpp"
#include "perfhom/linalg.hpp"
#include "perfhom/micro_sim.hpp"

namespace perfhom {

/// Uniform N x N cell grid over the unit square.
struct MacroGrid {
    int size = 64;
    EdgeSet dirichlet = EdgeSet::left_only();

    double h() const { return 1.0 / size; }
    int cell_count() const { return size * size; }
    int index(int i, int j) const { return j * size + i; }
    Vec2 cell_center(int c) const { return {(c % size + 0.5) * h(), (c / size + 0.5) * h()}; }
};

namespace detail {

/// Outward flux (times face length) through one face as a linear combination
/// of cell values.
struct FaceStencil {
    std::array<std::pair<int, double>, 8> terms{};
    int count = 0;
    void add(int cell, double coef)
    {
        for (int k = 0; k < count; ++k)
            if (terms[k].first == cell) {
                terms[k].second += coef;
                return;
            }
        terms[count++] = {cell, coef};
    }
    double apply(std::span<const double> u) const
    {
        double s = 0.0;
        for (int k = 0; k < count; ++k)
            s += terms[k].second * u[terms[k].first];
        return s;
    }
};

/// Interior face between `lo` (west / south) and `hi` (east / north). Returns
/// the stencil of the flux leaving `lo`.
inline FaceStencil interior_flux(const MacroGrid& g, const Tensor& S, int axis, int i, int j)
{
    const int n = g.size;
    FaceStencil st;
    auto cell = [&](int a, int b) { return g.index(a, b); };
    auto interior_vertex = [&](int a, int b) { return a >= 1 && a <= n - 1 && b >= 1 && b <= n - 1; };
    const double cross = axis == 0 ? S[0][1] : S[1][0];
    if (axis == 0) {
        // face at x = i h between (i-1, j) and (i, j)
        st.add(cell(i, j), -S[0][0]);
        st.add(cell(i - 1, j), S[0][0]);
        if (cross != 0.0) {
            // vertices (i, j) and (i, j+1); g_y = (u(i-1,b)+u(i,b)-u(i-1,b-1)-u(i,b-1)) / 2h
            for (int b : {j, j + 1}) {
                if (!interior_vertex(i, b))
                    continue;
                const double c = -cross / 4.0;
                st.add(cell(i - 1, b), c);
                st.add(cell(i, b), c);
                st.add(cell(i - 1, b - 1), -c);
                st.add(cell(i, b - 1), -c);
            }
        }
    } else {
        // face at y = j h between (i, j-1) and (i, j)
        st.add(cell(i, j), -S[1][1]);
        st.add(cell(i, j - 1), S[1][1]);
        if (cross != 0.0) {
            for (int a : {i, i + 1}) {
                if (!interior_vertex(a, j))
                    continue;
                const double c = -cross / 4.0;
                st.add(cell(a, j), c);
                st.add(cell(a, j - 1), c);
                st.add(cell(a - 1, j), -c);
                st.add(cell(a - 1, j - 1), -c);
            }
        }
    }
    return st;
}

inline Edge edge_of_boundary_face(int axis, bool high) { return axis == 0 ? (high ? Edge::right : Edge::left) : (high ? Edge::top : Edge::bottom); }

} // namespace detail

/// L u = (1/h^2) sum of outward fluxes, with homogeneous Dirichlet ghosts on
/// `dirichlet` edges and no flux elsewhere. Returns I * shift + scale * L.
inline SparseMatrix assemble_tensor_operator(const MacroGrid& g, const Tensor& S, const EdgeSet& dirichlet,
                                             double shift, double scale)
{
    const int n = g.size;
    const double f = scale / (g.h() * g.h());
    SparseMatrix::Builder b(g.cell_count());
    for (int c = 0; c < g.cell_count(); ++c)
        if (shift != 0.0)
            b.add(c, c, shift);
    auto scatter = [&](int lo, int hi, const detail::FaceStencil& st) {
        for (int k = 0; k < st.count; ++k) {
            b.add(lo, st.terms[k].first, f * st.terms[k].second);
            b.add(hi, st.terms[k].first, -f * st.terms[k].second);
        }
    };
    for (int j = 0; j < n; ++j)
        for (int i = 1; i < n; ++i)
            scatter(g.index(i - 1, j), g.index(i, j), detail::interior_flux(g, S, 0, i, j));
    for (int j = 1; j < n; ++j)
        for (int i = 0; i < n; ++i)
            scatter(g.index(i, j - 1), g.index(i, j), detail::interior_flux(g, S, 1, i, j));
    for (int k = 0; k < n; ++k) {
        if (dirichlet.contains(Edge::left))
            b.add(g.index(0, k), g.index(0, k), f * 2.0 * S[0][0]);
        if (dirichlet.contains(Edge::right))
            b.add(g.index(n - 1, k), g.index(n - 1, k), f * 2.0 * S[0][0]);
        if (dirichlet.contains(Edge::bottom))
            b.add(g.index(k, 0), g.index(k, 0), f * 2.0 * S[1][1]);
        if (dirichlet.contains(Edge::top))
            b.add(g.index(k, n - 1), g.index(k, n - 1), f * 2.0 * S[1][1]);
    }
    return std::move(b).build();
}

/// Dirichlet pressure data on a subset of edges; no flow through the rest.
struct PressureBC {
    EdgeSet edges{{true, true, false, false}};
    std::array<double, 4> values{1.0, 0.0, 0.0, 0.0};
};

struct DarcySolution {
    std::vector<double> pressure;
    FaceVelocity q;
    double max_divergence = 0.0;
    SolveReport report;
};

/// div(K grad P) = 0 with the given pressure data; q = -K grad P on faces.
inline DarcySolution darcy_solve(const Tensor& K, const MacroGrid& g, const PressureBC& bc,
                                 SolverOptions opt = {1e-14, 20000, false})
{
    if (asymmetry(K) > 1e-12 || !(eigenvalues(K)[0] > 0.0))
        fail(ErrorKind::parameter, "permeability must be symmetric positive definite");
    const int n = g.size;
    const double h = g.h();
    const SparseMatrix a = assemble_tensor_operator(g, K, bc.edges, 0.0, 1.0);
    std::vector<double> rhs(g.cell_count(), 0.0);
    const double f = 1.0 / (h * h);
    for (int k = 0; k < n; ++k) {
        if (bc.edges.contains(Edge::left))
            rhs[g.index(0, k)] += f * 2.0 * K[0][0] * bc.values[0];
        if (bc.edges.contains(Edge::right))
            rhs[g.index(n - 1, k)] += f * 2.0 * K[0][0] * bc.values[1];
        if (bc.edges.contains(Edge::bottom))
            rhs[g.index(k, 0)] += f * 2.0 * K[1][1] * bc.values[2];
        if (bc.edges.contains(Edge::top))
            rhs[g.index(k, n - 1)] += f * 2.0 * K[1][1] * bc.values[3];
    }
    DarcySolution out;
    out.pressure.assign(g.cell_count(), 0.0);
    opt.remove_constant = bc.edges.empty();
    out.report = solve(a, rhs, out.pressure, opt, "Darcy pressure solve");

    out.q = FaceVelocity::zero(n);
    for (int j = 0; j < n; ++j)
        for (int i = 1; i < n; ++i)
            out.q.x(i, j) = detail::interior_flux(g, K, 0, i, j).apply(out.pressure) / h;
    for (int j = 1; j < n; ++j)
        for (int i = 0; i < n; ++i)
            out.q.y(i, j) = detail::interior_flux(g, K, 1, i, j).apply(out.pressure) / h;
    for (int k = 0; k < n; ++k) {
        // boundary fluxes: outward flux 2 K_nn (P_c - P_bc), converted to a +axis velocity
        if (bc.edges.contains(Edge::left))
            out.q.x(0, k) = -2.0 * K[0][0] * (out.pressure[g.index(0, k)] - bc.values[0]) / h;
        if (bc.edges.contains(Edge::right))
            out.q.x(n, k) = 2.0 * K[0][0] * (out.pressure[g.index(n - 1, k)] - bc.values[1]) / h;
        if (bc.edges.contains(Edge::bottom))
            out.q.y(k, 0) = -2.0 * K[1][1] * (out.pressure[g.index(k, 0)] - bc.values[2]) / h;
        if (bc.edges.contains(Edge::top))
            out.q.y(k, n) = 2.0 * K[1][1] * (out.pressure[g.index(k, n - 1)] - bc.values[3]) / h;
    }
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double d = (out.q.x(i + 1, j) - out.q.x(i, j) + out.q.y(i, j + 1) - out.q.y(i, j)) / h;
            out.max_divergence = std::max(out.max_divergence, std::abs(d));
        }
    return out;
}

struct MacroConfig {
    Tensor S = identity_tensor();
    Tensor K = identity_tensor();
    double porosity = 1.0;        ///< |Y|
    double surface_density = 0.0; ///< |Gamma_G|
    RateLaw law;
    DissolutionResolution resolution;
    MacroGrid grid;
    bool with_flow = false;
    PressureBC pressure;
    double dt = 1e-3;
    double T = 0.1;
    InitialData u_init = InitialData::constant(0.0);
    InitialData v_init = InitialData::constant(0.0);
    int output_every = 1;
    double invariant_slack = 1e-8;
    SolverOptions linear{1e-12, 20000, false};

    double storage() const { return surface_density / porosity; }
};

struct MacroState {
    double t = 0.0;
    std::vector<double> u, v, w; ///< per cell
};

using MacroTrajectory = Trajectory<MacroState>;

class MacroSimulation {
public:
    explicit MacroSimulation(MacroConfig cfg) : cfg_(std::move(cfg))
    {
        if (cfg_.grid.size < 2)
            fail(ErrorKind::config, "macro resolution must be >= 2");
        if (asymmetry(cfg_.S) > 1e-12 || !(eigenvalues(cfg_.S)[0] > 0.0))
            fail(ErrorKind::config, "effective diffusion tensor S must be symmetric positive definite");
        if (!(cfg_.porosity > 0.0 && cfg_.porosity <= 1.0) || !(cfg_.surface_density >= 0.0))
            fail(ErrorKind::config, "geometry factors |Y| in (0,1] and |Gamma_G| >= 0 required");
        if (cfg_.output_every < 1)
            fail(ErrorKind::config, "output_every must be >= 1");
        cfg_.resolution.validate();
        steps_ = detail::step_count(cfg_.T, cfg_.dt);
        dt_ = steps_ > 0 ? cfg_.T / steps_ : cfg_.dt;
        if (cfg_.with_flow) {
            darcy_ = darcy_solve(cfg_.K, cfg_.grid, cfg_.pressure);
            q_ = darcy_.q;
        } else {
            q_ = FaceVelocity::zero(cfg_.grid.size);
        }
        matrix_ = assemble_tensor_operator(cfg_.grid, cfg_.S, cfg_.grid.dirichlet, 1.0, dt_);
    }

    const MacroConfig& config() const { return cfg_; }
    const FaceVelocity& velocity() const { return q_; }
    double dt() const { return dt_; }
    int steps() const { return steps_; }

    double max_stable_dt(double bound_u) const
    {
        const double lr = cfg_.law.lipschitz(bound_u);
        const double gamma = cfg_.storage();
        double lim = (lr > 0.0 && gamma > 0.0) ? 1.0 / (cfg_.law.k() * lr * gamma) : INFINITY;
        const double out = max_outflow_rate();
        if (out > 0.0)
            lim = std::min(lim, 1.0 / out);
        return lim;
    }

    MacroState initial_state() const
    {
        MacroState s;
        const int nc = cfg_.grid.cell_count();
        s.u.resize(nc);
        s.v.resize(nc);
        for (int c = 0; c < nc; ++c) {
            const Vec2 x = cfg_.grid.cell_center(c);
            s.u[c] = cfg_.u_init(x);
            s.v[c] = cfg_.v_init(x);
        }
        refresh_w(s);
        return s;
    }

    void refresh_w(MacroState& s) const
    {
        s.w.resize(s.u.size());
        for (std::size_t c = 0; c < s.u.size(); ++c)
            s.w[c] = resolved_w(cfg_.law, cfg_.resolution, s.u[c], s.v[c]);
    }

    double mass_u(const MacroState& s) const
    {
        double m = 0.0;
        for (double x : s.u)
            m += x;
        return m * cfg_.grid.h() * cfg_.grid.h();
    }
    double mass_v(const MacroState& s) const
    {
        double m = 0.0;
        for (double x : s.v)
            m += x;
        return cfg_.storage() * m * cfg_.grid.h() * cfg_.grid.h();
    }

    MacroState step(const MacroState& s, double* outflow = nullptr) const
    {
        double lost = 0.0;
        std::vector<double> u = advect(s.u, &lost);
        const double gamma = cfg_.storage();
        MacroState next;
        next.t = s.t + dt_;
        next.v.resize(u.size());
        std::vector<double> rhs = u;
        for (std::size_t c = 0; c < u.size(); ++c) {
            const OdeStep st = surface_step(cfg_.law, cfg_.resolution, u[c], s.v[c], dt_);
            next.v[c] = st.v_new;
            rhs[c] -= gamma * (st.v_new - s.v[c]);
        }
        next.u = u;
        solve(matrix_, rhs, next.u, cfg_.linear, "macro diffusion step");
        const int n = cfg_.grid.size;
        const auto& S = cfg_.S;
        const auto& dir = cfg_.grid.dirichlet;
        for (int k = 0; k < n; ++k) {
            if (dir.contains(Edge::left))
                lost += dt_ * 2.0 * S[0][0] * next.u[cfg_.grid.index(0, k)];
            if (dir.contains(Edge::right))
                lost += dt_ * 2.0 * S[0][0] * next.u[cfg_.grid.index(n - 1, k)];
            if (dir.contains(Edge::bottom))
                lost += dt_ * 2.0 * S[1][1] * next.u[cfg_.grid.index(k, 0)];
            if (dir.contains(Edge::top))
                lost += dt_ * 2.0 * S[1][1] * next.u[cfg_.grid.index(k, n - 1)];
        }
        refresh_w(next);
        if (outflow)
            *outflow = lost;
        return next;
    }

    MacroTrajectory run() const { return run(initial_state()); }

    MacroTrajectory run(MacroState state) const
    {
        if (static_cast<int>(state.u.size()) != cfg_.grid.cell_count() || state.v.size() != state.u.size())
            fail(ErrorKind::mismatch, "initial state does not match the macro grid");
        for (std::size_t c = 0; c < state.u.size(); ++c)
            if (state.u[c] < 0.0 || state.v[c] < 0.0)
                fail(ErrorKind::config, "initial data must be nonnegative");
        refresh_w(state);
        MacroTrajectory traj;
        traj.bound_u = std::max({cfg_.law.solubility(), max_abs(state.u), 0.0});
        traj.bound_v = max_abs(state.v) + cfg_.T * cfg_.law.k() * std::max(cfg_.law(traj.bound_u) - 1.0, 0.0);
        const double lim = max_stable_dt(traj.bound_u);
        if (dt_ > lim * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "dt = " << dt_ << " violates the positivity bound dt * k * L_r * |Gamma_G|/|Y| <= 1"
                << " and advective CFL (largest admissible dt = " << lim << ")";
            fail(ErrorKind::config, msg.str());
        }
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

    void check_invariants(const MacroState& s, double bound_u, double bound_v) const
    {
        const double tol = cfg_.invariant_slack;
        auto violation = [&](const std::string& what, double value) {
            std::ostringstream msg;
            msg << "invariant violated at t = " << s.t << ": " << what << " (value " << value << ")";
            throw InvariantViolation(msg.str(), s.t, s.u, s.v, s.w);
        };
        // The vertex cross terms of a full S are not monotone; only the
        // diagonal case carries the discrete maximum principle.
        const bool monotone = cfg_.S[0][1] == 0.0;
        for (std::size_t c = 0; c < s.u.size(); ++c) {
            if (monotone && s.u[c] < -tol)
                violation("u < 0", s.u[c]);
            if (monotone && s.u[c] > bound_u + tol)
                violation("u > M", s.u[c]);
            if (s.v[c] < 0.0)
                violation("v < 0", s.v[c]);
            if (s.v[c] > bound_v + tol)
                violation("v > M", s.v[c]);
            if (s.w[c] < 0.0 || s.w[c] > 1.0)
                violation("w outside [0,1]", s.w[c]);
            if (s.w[c] != resolved_w(cfg_.law, cfg_.resolution, s.u[c], s.v[c]))
                violation("w inconsistent with the dissolution rate", s.w[c]);
        }
    }

private:
    double max_outflow_rate() const
    {
        const int n = cfg_.grid.size;
        double worst = 0.0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double out = std::max(-q_.x(i, j), 0.0) + std::max(q_.x(i + 1, j), 0.0) +
                                   std::max(-q_.y(i, j), 0.0) + std::max(q_.y(i, j + 1), 0.0);
                worst = std::max(worst, out / cfg_.grid.h());
            }
        return worst;
    }

    std::vector<double> advect(const std::vector<double>& u, double* lost) const
    {
        if (q_.is_zero())
            return u;
        const int n = cfg_.grid.size;
        const double h = cfg_.grid.h();
        const double lam = dt_ / h;
        const auto& g = cfg_.grid;
        std::vector<double> out = u;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i <= n; ++i) {
                const double q = q_.x(i, j);
                if (q == 0.0)
                    continue;
                if (i > 0 && i < n) {
                    const double flux = q * (q > 0.0 ? u[g.index(i - 1, j)] : u[g.index(i, j)]);
                    out[g.index(i - 1, j)] -= lam * flux;
                    out[g.index(i, j)] += lam * flux;
                } else if (i == 0 && q < 0.0 && g.dirichlet.contains(Edge::left)) {
                    const double flux = q * u[g.index(0, j)];
                    out[g.index(0, j)] += lam * flux;
                    *lost -= dt_ * flux * h;
                } else if (i == n && q > 0.0 && g.dirichlet.contains(Edge::right)) {
                    const double flux = q * u[g.index(n - 1, j)];
                    out[g.index(n - 1, j)] -= lam * flux;
                    *lost += dt_ * flux * h;
                }
            }
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i < n; ++i) {
                const double q = q_.y(i, j);
                if (q == 0.0)
                    continue;
                if (j > 0 && j < n) {
                    const double flux = q * (q > 0.0 ? u[g.index(i, j - 1)] : u[g.index(i, j)]);
                    out[g.index(i, j - 1)] -= lam * flux;
                    out[g.index(i, j)] += lam * flux;
                } else if (j == 0 && q < 0.0 && g.dirichlet.contains(Edge::bottom)) {
                    const double flux = q * u[g.index(i, 0)];
                    out[g.index(i, 0)] += lam * flux;
                    *lost -= dt_ * flux * h;
                } else if (j == n && q > 0.0 && g.dirichlet.contains(Edge::top)) {
                    const double flux = q * u[g.index(i, n - 1)];
                    out[g.index(i, n - 1)] -= lam * flux;
                    *lost += dt_ * flux * h;
                }
            }
        return out;
    }

    MacroConfig cfg_;
    int steps_ = 0;
    double dt_ = 0.0;
    FaceVelocity q_;
    DarcySolution darcy_;
    SparseMatrix matrix_;
};

/// L2 norms of the differences of two runs at each snapshot.
struct StabilityGap {
    std::vector<double> t;
    std::vector<double> gap_u;
    std::vector<double> gap_v;
    /// Smallest rate with gap_u(t) <= amplitude * exp(rate t) on every snapshot.
    double lambda = 0.0;
    double amplitude = 0.0;
};

/// Envelope rate: max over t > 0 of log(g(t) / amplitude) / t (samples with g = 0 skipped).
inline double envelope_rate(std::span<const double> t, std::span<const double> g, double amplitude)
{
    double rate = -INFINITY;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i] > 0.0 && g[i] > 0.0)
            rate = std::max(rate, std::log(g[i] / amplitude) / t[i]);
    return rate;
}

inline StabilityGap stability_gap(const MacroTrajectory& run1, const MacroTrajectory& run2, double amplitude,
                                  const MacroGrid& grid)
{
    if (run1.snapshots.size() != run2.snapshots.size())
        fail(ErrorKind::mismatch, "runs have different snapshot counts");
    StabilityGap out;
    out.amplitude = amplitude;
    const double area = grid.h() * grid.h();
    for (std::size_t s = 0; s < run1.snapshots.size(); ++s) {
        const auto& a = run1.snapshots[s];
        const auto& b = run2.snapshots[s];
        if (std::abs(a.t - b.t) > 1e-12 || a.u.size() != b.u.size())
            fail(ErrorKind::mismatch, "runs are not on matching grids and output times");
        double su = 0.0;
        double sv = 0.0;
        for (std::size_t c = 0; c < a.u.size(); ++c) {
            su += (a.u[c] - b.u[c]) * (a.u[c] - b.u[c]);
            sv += (a.v[c] - b.v[c]) * (a.v[c] - b.v[c]);
        }
        out.t.push_back(a.t);
        out.gap_u.push_back(std::sqrt(su * area));
        out.gap_v.push_back(std::sqrt(sv * area));
    }
    out.lambda = amplitude > 0.0 ? envelope_rate(out.t, out.gap_u, amplitude) : 0.0;
    return out;
}

inline MacroTrajectory run_macro(const MacroConfig& cfg) { return MacroSimulation(cfg).run(); }

} // namespace perfhom
