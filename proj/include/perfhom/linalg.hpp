#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"

namespace perfhom {

using Tensor = std::array<std::array<double, kDim>, kDim>;

inline Tensor identity_tensor(double scale = 1.0)
{
    Tensor t{};
    for (int i = 0; i < kDim; ++i)
        t[i][i] = scale;
    return t;
}

inline Tensor scaled(const Tensor& t, double s)
{
    Tensor out = t;
    for (auto& row : out)
        for (double& x : row)
            x *= s;
    return out;
}

/// max |t_ij - t_ji|
inline double asymmetry(const Tensor& t)
{
    double a = 0.0;
    for (int i = 0; i < kDim; ++i)
        for (int j = i + 1; j < kDim; ++j)
            a = std::max(a, std::abs(t[i][j] - t[j][i]));
    return a;
}

inline Tensor symmetrized(const Tensor& t)
{
    Tensor out = t;
    for (int i = 0; i < kDim; ++i)
        for (int j = 0; j < kDim; ++j)
            out[i][j] = 0.5 * (t[i][j] + t[j][i]);
    return out;
}

/// Eigenvalues of a symmetric 2x2 tensor, ascending.
inline std::array<double, 2> eigenvalues(const Tensor& t)
{
    const double mean = 0.5 * (t[0][0] + t[1][1]);
    const double diff = 0.5 * (t[0][0] - t[1][1]);
    const double rad = std::hypot(diff, 0.5 * (t[0][1] + t[1][0]));
    return {mean - rad, mean + rad};
}

inline double max_abs(std::span<const double> x)
{
    double m = 0.0;
    for (double v : x)
        m = std::max(m, std::abs(v));
    return m;
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Compressed sparse row matrix assembled from (row, col, value) triplets.
class SparseMatrix {
public:
    SparseMatrix() = default;

    class Builder {
    public:
        explicit Builder(int n) : n_(n) {}
        void add(int row, int col, double value) { entries_.push_back({row, col, value}); }
        int size() const { return n_; }

        SparseMatrix build() &&
        {
            std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
                return a.row != b.row ? a.row < b.row : a.col < b.col;
            });
            SparseMatrix m;
            m.n_ = n_;
            m.row_start_.assign(n_ + 1, 0);
            for (std::size_t k = 0; k < entries_.size();) {
                const Entry& e = entries_[k];
                double v = 0.0;
                std::size_t l = k;
                for (; l < entries_.size() && entries_[l].row == e.row && entries_[l].col == e.col; ++l)
                    v += entries_[l].value;
                m.cols_.push_back(e.col);
                m.values_.push_back(v);
                ++m.row_start_[e.row + 1];
                k = l;
            }
            for (int i = 0; i < n_; ++i)
                m.row_start_[i + 1] += m.row_start_[i];
            return m;
        }

    private:
        struct Entry {
            int row;
            int col;
            double value;
        };
        int n_;
        std::vector<Entry> entries_;
    };

    int size() const { return n_; }

    void multiply(std::span<const double> x, std::span<double> y) const
    {
        for (int i = 0; i < n_; ++i) {
            double s = 0.0;
            for (int k = row_start_[i]; k < row_start_[i + 1]; ++k)
                s += values_[k] * x[cols_[k]];
            y[i] = s;
        }
    }

    std::vector<double> diagonal() const
    {
        std::vector<double> d(n_, 0.0);
        for (int i = 0; i < n_; ++i)
            for (int k = row_start_[i]; k < row_start_[i + 1]; ++k)
                if (cols_[k] == i)
                    d[i] += values_[k];
        return d;
    }

    double at(int i, int j) const
    {
        for (int k = row_start_[i]; k < row_start_[i + 1]; ++k)
            if (cols_[k] == j)
                return values_[k];
        return 0.0;
    }

    /// max |a_ij - a_ji|, used to certify assembled operators.
    double asymmetry() const
    {
        double a = 0.0;
        for (int i = 0; i < n_; ++i)
            for (int k = row_start_[i]; k < row_start_[i + 1]; ++k)
                a = std::max(a, std::abs(values_[k] - at(cols_[k], i)));
        return a;
    }

private:
    int n_ = 0;
    std::vector<int> row_start_;
    std::vector<int> cols_;
    std::vector<double> values_;
};

struct SolverOptions {
    double relative_tolerance = 1e-10;
    int max_iterations = 20000;
    /// Project out the constant vector (consistent singular systems).
    bool remove_constant = false;
};

struct SolveReport {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

namespace detail {

inline void project_constant(std::span<double> x)
{
    if (x.empty())
        return;
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    for (double& v : x)
        v -= mean;
}

} // namespace detail

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// (semi)definite operator. `apply` computes y = A x. `x` holds the initial
/// guess on entry.
template <class Apply>
SolveReport conjugate_gradient(Apply&& apply, std::span<const double> inv_diag, std::span<const double> b,
                               std::span<double> x, const SolverOptions& opt)
{
    const std::size_t n = b.size();
    std::vector<double> rhs(b.begin(), b.end());
    if (opt.remove_constant) {
        detail::project_constant(rhs);
        detail::project_constant(x);
    }
    const double bnorm = norm2(rhs);
    SolveReport rep;
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        rep.converged = true;
        return rep;
    }
    std::vector<double> r(n), z(n), p(n), q(n);
    apply(std::span<const double>(x.data(), n), std::span<double>(q));
    for (std::size_t i = 0; i < n; ++i)
        r[i] = rhs[i] - q[i];
    if (opt.remove_constant)
        detail::project_constant(r);
    double rnorm = norm2(r);
    for (std::size_t i = 0; i < n; ++i)
        z[i] = inv_diag[i] * r[i];
    if (opt.remove_constant)
        detail::project_constant(z);
    p = z;
    double rz = dot(r, z);
    int it = 0;
    while (rnorm > opt.relative_tolerance * bnorm && it < opt.max_iterations) {
        apply(std::span<const double>(p), std::span<double>(q));
        const double pq = dot(p, q);
        if (!(pq > 0.0))
            break;
        const double alpha = rz / pq;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if (opt.remove_constant)
            detail::project_constant(r);
        ++it;
        // Recompute the true residual periodically to avoid drift.
        if (it % 200 == 0) {
            apply(std::span<const double>(x.data(), n), std::span<double>(q));
            for (std::size_t i = 0; i < n; ++i)
                r[i] = rhs[i] - q[i];
            if (opt.remove_constant)
                detail::project_constant(r);
        }
        rnorm = norm2(r);
        for (std::size_t i = 0; i < n; ++i)
            z[i] = inv_diag[i] * r[i];
        if (opt.remove_constant)
            detail::project_constant(z);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i)
            p[i] = z[i] + beta * p[i];
    }
    if (opt.remove_constant)
        detail::project_constant(x);
    rep.iterations = it;
    rep.relative_residual = rnorm / bnorm;
    rep.converged = rnorm <= opt.relative_tolerance * bnorm;
    return rep;
}

inline SolveReport solve(const SparseMatrix& a, std::span<const double> b, std::span<double> x,
                         const SolverOptions& opt, const char* what = "linear solve")
{
    std::vector<double> inv = a.diagonal();
    for (double& d : inv)
        d = d > 0.0 ? 1.0 / d : 1.0;
    const SolveReport rep = conjugate_gradient(
        [&a](std::span<const double> in, std::span<double> out) { a.multiply(in, out); }, inv, b, x, opt);
    if (!rep.converged) {
        std::ostringstream msg;
        msg << what << " did not converge: relative residual " << rep.relative_residual << " after "
            << rep.iterations << " iterations";
        fail(ErrorKind::solver, msg.str());
    }
    return rep;
}

} // namespace perfhom
