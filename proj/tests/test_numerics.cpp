#include <gtest/gtest.h>

#include <cmath>

#include "gsq/numerics.hpp"

using namespace gsq;

TEST(GaussHermite, SingleNode) {
    auto [x, w] = gh_nodes(1);
    ASSERT_EQ(x.size(), 1u);
    EXPECT_EQ(x[0], 0.0);
    EXPECT_EQ(w[0], 1.0);
}

TEST(GaussHermite, TwoNodesAreRootsOfHe2) {
    auto [x, w] = gh_nodes(2);
    EXPECT_NEAR(x[0], -1.0, 1e-14);
    EXPECT_NEAR(x[1], 1.0, 1e-14);
    EXPECT_NEAR(w[0], 0.5, 1e-14);
    EXPECT_NEAR(w[1], 0.5, 1e-14);
}

TEST(GaussHermite, ReproducesNormalMoments) {
    // E G^{2k} = (2k-1)!!
    for (int n : {3, 5, 10, 20, 40, 64, 128}) {
        auto [x, w] = gh_nodes(n);
        double dfact = 1.0;
        for (int k = 0; 2 * k <= 2 * n - 1 && k <= 12; ++k) {
            if (k > 0) dfact *= 2 * k - 1;
            double m = 0.0, odd = 0.0;
            for (int i = 0; i < n; ++i) {
                m += w[i] * std::pow(x[i], 2 * k);
                odd += w[i] * std::pow(x[i], 2 * k + 1);
            }
            EXPECT_NEAR(m / dfact, 1.0, 1e-12) << "n=" << n << " k=" << k;
            EXPECT_NEAR(odd / dfact, 0.0, 1e-12);
        }
    }
}

TEST(GaussHermite, FourthMomentIsThree) {
    auto [x, w] = gh_nodes(3);
    double m = 0.0;
    for (int i = 0; i < 3; ++i) m += w[i] * std::pow(x[i], 4);
    EXPECT_NEAR(m, 3.0, 1e-13);
}

TEST(GaussHermite, RejectsOutOfRange) {
    EXPECT_THROW(gh_nodes(0), PreconditionViolated);
    EXPECT_THROW(gh_nodes(129), PreconditionViolated);
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
    for (int n : {1, 2, 5, 10, 20}) {
        auto [x, w] = gl_nodes(n);
        for (int k = 0; k <= 2 * n - 1; ++k) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += w[i] * std::pow(x[i], k);
            double exact = (k % 2) ? 0.0 : 2.0 / (k + 1);
            EXPECT_NEAR(s, exact, 1e-13) << n << " " << k;
        }
    }
}

TEST(MonteCarlo, ConstantHasZeroError) {
    auto e = mc_estimate([](const Vec &) { return 3.5; },
                         [](std::uint64_t s, std::uint64_t i) { return standard_normal(s, i, 1); }, 1000, 7);
    EXPECT_DOUBLE_EQ(e.mean, 3.5);
    EXPECT_EQ(e.stderr_, 0.0);
}

TEST(MonteCarlo, CenteredCoordinate) {
    auto e = mc_estimate([](const Vec &x) { return x(0); },
                         [](std::uint64_t s, std::uint64_t i) { return standard_normal(s, i, 1); }, 200000, 11);
    EXPECT_LT(std::abs(e.mean), 3.0 * e.stderr_);
}

TEST(MonteCarlo, VarianceOfScaledCoordinate) {
    auto e = mc_estimate([](const Vec &x) { return x(0) * x(0); },
                         [](std::uint64_t s, std::uint64_t i) { return Vec(2.0 * standard_normal(s, i, 1)); },
                         200000, 5);
    EXPECT_LT(std::abs(e.mean - 4.0), 3.0 * e.stderr_);
}

TEST(MonteCarlo, ThreadCountIndependent) {
    auto f = [](const Vec &x) { return std::exp(0.3 * x(0)) + x(1) * x(1); };
    auto sm = [](std::uint64_t s, std::uint64_t i) { return standard_normal(s, i, 2); };
    auto a = mc_estimate(f, sm, 50000, 99, 1);
    auto b = mc_estimate(f, sm, 50000, 99, 4);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.stderr_, b.stderr_);
    auto c = mc_estimate(f, sm, 50000, 100, 1);
    EXPECT_NE(a.mean, c.mean);
}

TEST(MonteCarlo, StderrScalesAsInverseRoot) {
    auto f = [](const Vec &x) { return x(0); };
    auto sm = [](std::uint64_t s, std::uint64_t i) { return standard_normal(s, i, 1); };
    auto a = mc_estimate(f, sm, 10000, 3);
    auto b = mc_estimate(f, sm, 1000000, 3);
    EXPECT_NEAR(a.stderr_ / b.stderr_, 10.0, 0.5);
}

TEST(MonteCarlo, NeedsTwoSamples) {
    EXPECT_THROW(mc_estimate([](const Vec &) { return 0.0; },
                             [](std::uint64_t s, std::uint64_t i) { return standard_normal(s, i, 1); }, 1, 0),
                 PreconditionViolated);
}

TEST(StandardGaussian, TensorRuleIsExactForPolynomials) {
    auto e = standard_gaussian_expectation(
        3, [](const Vec &g) { return g(0) * g(0) * g(1) * g(1) + std::pow(g(2), 4); },
        QuadScheme::gauss_hermite(4));
    EXPECT_NEAR(e.mean, 4.0, 1e-13);
}

TEST(StandardGaussian, SchemeTooCoarseGate) {
    QuadScheme s = QuadScheme::monte_carlo(100, 1);
    s.tolerance = 1e-6;
    EXPECT_THROW(standard_gaussian_expectation(1, [](const Vec &g) { return g(0); }, s), SchemeTooCoarse);
}
