#pragma once

// Reference solutions used by the tests. Nothing here calls the solvers under
// test: geometry masks, assembly and the linear algebra are written out
// directly so that agreement is a genuine cross-check.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracle {

/// Dense row-major matrix with Gaussian elimination and partial pivoting.
struct Dense {
    int n = 0;
    std::vector<double> a;
    explicit Dense(int size) : n(size), a(static_cast<std::size_t>(size) * size, 0.0) {}
    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }

    std::vector<double> solve(std::vector<double> b) const
    {
        std::vector<double> m = a;
        auto at = [&](int i, int j) -> double& { return m[static_cast<std::size_t>(i) * n + j]; };
        for (int k = 0; k < n; ++k) {
            int piv = k;
            for (int i = k + 1; i < n; ++i)
                if (std::abs(at(i, k)) > std::abs(at(piv, k)))
                    piv = i;
            if (at(piv, k) == 0.0)
                throw std::runtime_error("singular dense system");
            if (piv != k) {
                for (int j = 0; j < n; ++j)
                    std::swap(at(k, j), at(piv, j));
                std::swap(b[k], b[piv]);
            }
            for (int i = k + 1; i < n; ++i) {
                const double f = at(i, k) / at(k, k);
                if (f == 0.0)
                    continue;
                for (int j = k; j < n; ++j)
                    at(i, j) -= f * at(k, j);
                b[i] -= f * b[k];
            }
        }
        std::vector<double> x(n);
        for (int i = n - 1; i >= 0; --i) {
            double s = b[i];
            for (int j = i + 1; j < n; ++j)
                s -= at(i, j) * x[j];
            x[i] = s / at(i, i);
        }
        return x;
    }
};

/// Square hole of side a centred at c on an n x n periodic cell; solid when
/// the cell centre lies inside the hole.
struct Mask {
    int n;
    std::vector<char> solid;
    std::vector<int> id;
    int fluid = 0;
    Mask(int n_, double a, double cx, double cy) : n(n_), solid(n_ * n_, 0), id(n_ * n_, -1)
    {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double x = (i + 0.5) / n;
                const double y = (j + 0.5) / n;
                solid[j * n + i] = std::abs(x - cx) < a / 2 && std::abs(y - cy) < a / 2;
                if (!solid[j * n + i])
                    id[j * n + i] = fluid++;
            }
    }
    int w(int i) const { return ((i % n) + n) % n; }
    bool is_solid(int i, int j) const { return solid[w(j) * n + w(i)]; }
    int at(int i, int j) const { return id[w(j) * n + w(i)]; }
};

/// Effective diffusion tensor from a dense solve of the periodic cell problem
/// for phi_i = y_i + xi_i with no flux through the grain faces:
///   S_ij = D / |Y| * sum over fluid-fluid faces normal to e_j of h * jump(phi_i).
inline std::array<std::array<double, 2>, 2> diffusion_tensor(int n, double a, double cx, double cy, double D)
{
    const Mask m(n, a, cx, cy);
    const double h = 1.0 / n;
    const int di[4] = {1, -1, 0, 0};
    const int dj[4] = {0, 0, 1, -1};
    std::array<std::array<double, 2>, 2> S{};
    const double por = static_cast<double>(m.fluid) / (n * n);
    for (int comp = 0; comp < 2; ++comp) {
        Dense L(m.fluid);
        std::vector<double> b(m.fluid, 0.0);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const int c = m.at(i, j);
                if (c < 0)
                    continue;
                for (int k = 0; k < 4; ++k) {
                    const int nb = m.at(i + di[k], j + dj[k]);
                    if (nb < 0)
                        continue;
                    // sum over fluid neighbours of (phi_c - phi_nb) = 0
                    L(c, c) += 1.0;
                    L(c, nb) -= 1.0;
                    b[c] += h * (comp == 0 ? di[k] : dj[k]);
                }
            }
        // Replace the last equation by the zero-mean gauge.
        const int last = m.fluid - 1;
        for (int k = 0; k < m.fluid; ++k)
            L(last, k) = 1.0;
        b[last] = 0.0;
        const std::vector<double> xi = L.solve(b);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const int c = m.at(i, j);
                if (c < 0)
                    continue;
                for (int axis = 0; axis < 2; ++axis) {
                    const int nb = axis == 0 ? m.at(i + 1, j) : m.at(i, j + 1);
                    if (nb < 0)
                        continue;
                    const double jump = (axis == comp ? h : 0.0) + xi[nb] - xi[c];
                    S[comp][axis] += jump * h;
                }
            }
    }
    for (auto& row : S)
        for (double& x : row)
            x *= D / por;
    return S;
}

/// Permeability from a dense saddle-point solve of the MAC Stokes cell
/// problem  -lap chi - grad Pi = e_j, div chi = 0, chi = 0 on the grain,
/// with the pressure mean fixed by a Lagrange multiplier.
/// Wall rules: a face on the grain carries zero velocity; tangential
/// neighbours across a solid block are reflected ghosts.
inline std::array<std::array<double, 2>, 2> permeability(int n, double a, double cx, double cy)
{
    const Mask m(n, a, cx, cy);
    const double h = 1.0 / n;
    const double ih2 = 1.0 / (h * h);
    // Velocity unknowns: x-face (i, j) between cells (i-1, j) and (i, j).
    std::vector<int> ux(n * n, -1), uy(n * n, -1);
    int nu = 0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (!m.is_solid(i - 1, j) && !m.is_solid(i, j))
                ux[j * n + i] = nu++;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (!m.is_solid(i, j - 1) && !m.is_solid(i, j))
                uy[j * n + i] = nu++;
    auto fx = [&](int i, int j) { return ux[m.w(j) * n + m.w(i)]; };
    auto fy = [&](int i, int j) { return uy[m.w(j) * n + m.w(i)]; };
    const int np = m.fluid;
    const int size = nu + np + 1;
    std::array<std::array<double, 2>, 2> K{};
    for (int comp = 0; comp < 2; ++comp) {
        Dense M(size);
        std::vector<double> rhs(size, 0.0);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                for (int axis = 0; axis < 2; ++axis) {
                    const int r = axis == 0 ? fx(i, j) : fy(i, j);
                    if (r < 0)
                        continue;
                    auto face = [&](int a, int b) { return axis == 0 ? fx(a, b) : fy(a, b); };
                    // along-axis neighbours
                    for (int s : {-1, 1}) {
                        const int nb = axis == 0 ? face(i + s, j) : face(i, j + s);
                        M(r, r) += ih2;
                        if (nb >= 0)
                            M(r, nb) -= ih2;
                    }
                    // cross-axis neighbours
                    for (int s : {-1, 1}) {
                        const int ni = axis == 0 ? i : i + s;
                        const int nj = axis == 0 ? j + s : j;
                        const int nb = face(ni, nj);
                        if (nb >= 0) {
                            M(r, r) += ih2;
                            M(r, nb) -= ih2;
                            continue;
                        }
                        // cells on either side of the missing face
                        const bool s1 = m.is_solid(ni, nj);
                        const bool s2 = axis == 0 ? m.is_solid(ni - 1, nj) : m.is_solid(ni, nj - 1);
                        M(r, r) += (s1 && s2) ? 2.0 * ih2 : ih2;
                    }
                    // -grad p on the face: (p_low - p_high) / h
                    const int lo = axis == 0 ? m.at(i - 1, j) : m.at(i, j - 1);
                    const int hi = m.at(i, j);
                    M(r, nu + lo) += 1.0 / h;
                    M(r, nu + hi) -= 1.0 / h;
                    rhs[r] = axis == comp ? 1.0 : 0.0;
                }
            }
        // Continuity rows are the transpose of the gradient block.
        for (int r = 0; r < nu; ++r)
            for (int c = 0; c < np; ++c)
                M(nu + c, r) = M(r, nu + c);
        for (int c = 0; c < np; ++c) {
            M(nu + c, nu + np) = 1.0;
            M(nu + np, nu + c) = 1.0;
        }
        const std::vector<double> x = M.solve(rhs);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                if (fx(i, j) >= 0)
                    K[0][comp] += x[fx(i, j)] * h * h;
                if (fy(i, j) >= 0)
                    K[1][comp] += x[fy(i, j)] * h * h;
            }
    }
    const double por = static_cast<double>(m.fluid) / (n * n);
    for (auto& row : K)
        for (double& x : row)
            x /= por;
    return K;
}

/// Lumped two-compartment solution for r(u) = u^2, k, storage gamma, from
/// u(0) = 0 and v(0) = v0 > 0:
///   while v > 0:  u = tanh(gamma k t),  v = v0 - u / gamma
///   afterwards:   u = gamma v0, v = 0 (r(u) < 1 keeps v at zero)
struct Lumped {
    double u;
    double v;
};

inline Lumped well_mixed(double gamma, double k, double v0, double t)
{
    if (!(gamma * v0 < 1.0))
        throw std::invalid_argument("well_mixed oracle needs gamma * v0 < 1");
    const double t_star = std::atanh(gamma * v0) / (gamma * k);
    if (t >= t_star)
        return {gamma * v0, 0.0};
    const double u = std::tanh(gamma * k * t);
    return {u, v0 - u / gamma};
}

/// dv/dt = k (r - 1) while v > 0, v = 0 afterwards (r < 1, frozen).
inline double decay_and_stop(double r, double k, double v0, double t)
{
    return std::max(v0 - k * (1.0 - r) * t, 0.0);
}

} // namespace oracle
