#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "perfhom/linalg.hpp"

using namespace perfhom;

namespace {

// 1D periodic or Dirichlet Laplacian with a diagonal shift.
SparseMatrix laplacian_1d(int n, double shift, bool periodic)
{
    SparseMatrix::Builder b(n);
    for (int i = 0; i < n; ++i) {
        b.add(i, i, 2.0 + shift);
        if (i > 0 || periodic)
            b.add(i, (i + n - 1) % n, -1.0);
        if (i < n - 1 || periodic)
            b.add(i, (i + 1) % n, -1.0);
    }
    return std::move(b).build();
}

} // namespace

TEST(Tensor, EigenvaluesAndSymmetry)
{
    const Tensor t{{{2.0, 1.0}, {1.0, 2.0}}};
    const auto ev = eigenvalues(t);
    EXPECT_DOUBLE_EQ(ev[0], 1.0);
    EXPECT_DOUBLE_EQ(ev[1], 3.0);
    const Tensor a{{{1.0, 0.3}, {0.1, 1.0}}};
    EXPECT_DOUBLE_EQ(asymmetry(a), 0.2);
    const Tensor s = symmetrized(a);
    EXPECT_DOUBLE_EQ(s[0][1], 0.2);
    EXPECT_EQ(asymmetry(s), 0.0);
    EXPECT_EQ(scaled(identity_tensor(), 3.0)[1][1], 3.0);
}

TEST(Sparse, BuilderSumsDuplicates)
{
    SparseMatrix::Builder b(2);
    b.add(0, 0, 1.0);
    b.add(0, 0, 2.0);
    b.add(1, 0, -1.0);
    b.add(0, 1, -1.5);
    b.add(1, 1, 4.0);
    const SparseMatrix m = std::move(b).build();
    EXPECT_EQ(m.at(0, 0), 3.0);
    EXPECT_EQ(m.at(0, 1), -1.5);
    EXPECT_EQ(m.asymmetry(), 0.5);
    std::vector<double> y(2);
    m.multiply(std::vector<double>{1.0, 2.0}, y);
    EXPECT_EQ(y[0], 0.0);
    EXPECT_EQ(y[1], 7.0);
    EXPECT_EQ(m.diagonal()[1], 4.0);
}

TEST(ConjugateGradient, MatchesDenseSolve)
{
    const int n = 40;
    const SparseMatrix a = laplacian_1d(n, 0.1, false);
    oracle::Dense d(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            d(i, j) = a.at(i, j);
    std::vector<double> b(n);
    for (int i = 0; i < n; ++i)
        b[i] = std::sin(0.3 * i) + 0.1 * i;
    const auto ref = d.solve(b);
    std::vector<double> x(n, 0.0);
    const SolveReport rep = solve(a, b, x, {1e-13, 1000, false});
    EXPECT_TRUE(rep.converged);
    for (int i = 0; i < n; ++i)
        EXPECT_NEAR(x[i], ref[i], 1e-10);
}

TEST(ConjugateGradient, SingularPeriodicSystem)
{
    const int n = 32;
    const SparseMatrix a = laplacian_1d(n, 0.0, true);
    std::vector<double> b(n);
    for (int i = 0; i < n; ++i)
        b[i] = std::cos(2 * M_PI * i / n);
    std::vector<double> x(n, 1.0);
    const SolveReport rep = solve(a, b, x, {1e-12, 1000, true});
    EXPECT_TRUE(rep.converged);
    EXPECT_NEAR(std::accumulate(x.begin(), x.end(), 0.0), 0.0, 1e-12);
    std::vector<double> ax(n);
    a.multiply(x, ax);
    for (int i = 0; i < n; ++i)
        EXPECT_NEAR(ax[i], b[i], 1e-10);
}

TEST(ConjugateGradient, ZeroRightHandSide)
{
    const SparseMatrix a = laplacian_1d(8, 1.0, false);
    std::vector<double> b(8, 0.0), x(8, 3.0);
    EXPECT_TRUE(solve(a, b, x, {}).converged);
    for (double v : x)
        EXPECT_EQ(v, 0.0);
}

TEST(ConjugateGradient, NonConvergenceIsSolverError)
{
    const SparseMatrix a = laplacian_1d(200, 0.0, false);
    std::vector<double> b(200, 1.0), x(200, 0.0);
    try {
        solve(a, b, x, {1e-14, 3, false});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::solver);
        EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
    }
}
