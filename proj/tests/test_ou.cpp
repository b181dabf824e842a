#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "gsq/ou.hpp"
#include "gsq/presets.hpp"

using namespace gsq;

namespace {

Vec vec(std::initializer_list<double> l) {
    Vec v(l.size());
    int i = 0;
    for (double x : l) v(i++) = x;
    return v;
}

// Composite Simpson with n (even) intervals, the oracle for time integrals.
Mat simpson(const std::function<Mat(double)> &g, double a, double b, int n) {
    double h = (b - a) / n;
    Mat acc = g(a) + g(b);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * g(a + i * h);
    return acc * (h / 3.0);
}

Mat arctan_q_oracle(double c1, double c2, int d, double s, double t) {
    auto g = [&](double r) {
        Mat D = Mat::Zero(d, d);
        for (int k = 1; k <= d; ++k) {
            double k2 = double(k) * k;
            double lu = -k2 * (arctan_abs_antiderivative(t) - arctan_abs_antiderivative(r) + c1 * (t - r));
            double b = std::sin(k * r) + c2;
            D(k - 1, k - 1) = std::exp(2 * lu) * b * b;
        }
        return D;
    };
    // split at the kink so Simpson keeps its order
    if (s < 0.0 && t > 0.0) return simpson(g, s, 0.0, 200000) + simpson(g, 0.0, t, 200000);
    return simpson(g, s, t, 200000);
}

// dX = A X dt + dW with A upper triangular, so u(t,s) = exp(A(t-s)) in closed form.
OUModel coupled_model() {
    double a = -1.0, b = -2.0, c = 0.5;
    auto u = [=](double t, double s) {
        double tau = t - s;
        Mat U(2, 2);
        U << std::exp(a * tau), c * (std::exp(a * tau) - std::exp(b * tau)) / (a - b), 0.0, std::exp(b * tau);
        return U;
    };
    return OUModel("coupled", std::make_shared<MatrixFamily>(2, u),
                   std::make_shared<MatrixNoise>(2, [](double) { return Mat::Identity(2, 2); }, 1.0), -0.5);
}

}  // namespace

TEST(Covariance, ConstantModelClosedForm) {
    auto m = constant_diagonal_preset(-1.5, 2);
    for (double tau : {0.01, 0.3, 2.0}) {
        Mat Q = q_ts(m, 1.0, 1.0 + tau);
        double want = (1 - std::exp(-3.0 * tau)) / 3.0;
        EXPECT_NEAR(Q(0, 0), want, 1e-13);
        EXPECT_NEAR(Q(1, 1), want, 1e-13);
        EXPECT_EQ(Q(0, 1), 0.0);
    }
    EXPECT_EQ(q_ts(m, 2.0, 2.0), Mat::Zero(2, 2));
    EXPECT_THROW(q_ts(m, 2.0, 1.0), PreconditionViolated);
}

TEST(Covariance, ArctanMatchesSimpson) {
    auto m = diag_arctan_preset(1.0, 2.0, 3);
    for (auto [s, t] : {std::pair{-2.0, 1.5}, std::pair{0.3, 0.9}, std::pair{-1.0, -0.2}}) {
        Mat Q = q_ts(m, s, t), O = arctan_q_oracle(1.0, 2.0, 3, s, t);
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(Q(k, k), O(k, k), 1e-10 * std::max(1.0, O(k, k)));
    }
}

TEST(Covariance, CoupledMatchesSimpson) {
    auto m = coupled_model();
    Mat Q = q_ts(m, -1.0, 0.5);
    Mat O = simpson(
        [&](double r) {
            Mat U = m.family().u(0.5, r);
            return Mat(U * U.transpose());
        },
        -1.0, 0.5, 20000);
    EXPECT_LT((Q - O).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_GT(std::abs(Q(0, 1)), 1e-3);
}

TEST(Covariance, LowOrderRuleAgreesAfterRefinement) {
    auto m = diag_arctan_preset(1.0, 2.0, 2);
    auto lo = diag_arctan_preset(1.0, 2.0, 2);
    lo.with_time_quadrature(2, 14);
    EXPECT_LT((q_ts(m, -1.0, 2.0) - q_ts(lo, -1.0, 2.0)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Covariance, RefinementCapRaises) {
    auto m = diag_arctan_preset(1.0, 2.0, 2);
    m.with_time_quadrature(2, 0);
    EXPECT_THROW(q_ts(m, -1.0, 2.0), QuadratureFailure);
}

TEST(Invariant, ConstantModel) {
    auto m = constant_diagonal_preset(-2.0, 3);
    auto r = q_t_inf(m, 0.7);
    EXPECT_LT((r.Q - 0.25 * Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(r.tail_cert, 1e-12);
    auto g = measure_at(m, 0.7);
    EXPECT_NEAR(g.eigenvalue(2), 0.25, 1e-12);
}

TEST(Invariant, ArctanMatchesLongSimpson) {
    auto m = diag_arctan_preset(1.0, 2.0, 3);
    for (double t : {-1.0, 0.5, 3.0}) {
        Mat Q = q_t_inf(m, t).Q, O = arctan_q_oracle(1.0, 2.0, 3, t - 30.0, t);
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(Q(k, k), O(k, k), 1e-10) << t << " " << k;
    }
}

TEST(Invariant, ToleranceControlsTruncation) {
    auto m = diag_arctan_preset(1.0, 2.0, 2);
    auto coarse = q_t_inf(m, 1.0, 1e-4), fine = q_t_inf(m, 1.0, 1e-12);
    EXPECT_LE(coarse.tail_cert, 1e-4);
    EXPECT_GT(coarse.s_min, fine.s_min);
    double gap = fine.Q.trace() - coarse.Q.trace();
    EXPECT_GE(gap, -1e-12);
    EXPECT_LE(gap, 1e-4 + 1e-10);
}

TEST(Invariant, NoDecayAndNonDiagonal) {
    std::vector<DiagonalFamily::Mode> modes{{[](double) { return 0.1; }, {}}};
    std::vector<ScalarFn> noise{[](double) { return 1.0; }};
    OUModel grow("grow", std::make_shared<DiagonalFamily>(modes), std::make_shared<DiagonalNoise>(noise, Vec::Ones(1)),
                 0.1);
    EXPECT_THROW(q_t_inf(grow, 0.0), NoDecay);
    EXPECT_THROW(measure_at(coupled_model(), 0.0), PreconditionViolated);
}

TEST(Transition, MomentsOfConstantModel) {
    auto m = constant_diagonal_preset(-1.0, 2);
    Vec x = vec({1.2, -0.4});
    double s = 0.0, t = 0.8, e = std::exp(-0.8), q = (1 - std::exp(-1.6)) / 2;
    auto f = [](const Vec &y) { return y(0) * y(0) + y(1); };
    EXPECT_NEAR(pst_apply(m, f, s, t, x, QuadScheme::gauss_hermite(4)), e * e * 1.44 + q + e * -0.4, 1e-13);
    EXPECT_EQ(pst_apply(m, f, t, t, x, QuadScheme::gauss_hermite(4)), f(x));
}

TEST(Transition, SecondQuantizationAgrees) {
    auto m = diag_arctan_preset(1.0, 2.0, 2);
    Polynomial p{2, {{1.0, {2, 1}}, {-0.3, {0, 2}}, {0.7, {1, 0}}, {0.2, {0, 0}}}};
    Vec x = vec({0.4, -0.9});
    for (auto [s, t] : {std::pair{0.0, 0.1}, std::pair{0.0, 1.0}, std::pair{-1.0, 2.0}}) {
        double direct = pst_apply(m, p, s, t, x, QuadScheme::gauss_hermite(5));
        double sq = pst_via_second_quant(m, p, s, t, x, QuadScheme::gauss_hermite(5));
        EXPECT_NEAR(direct, sq, 1e-9 * std::max(1.0, std::abs(direct)));
        auto e = pst_via_second_quant(m, project(measure_at(m, t), p, 3), s, t);
        EXPECT_NEAR(eval_expansion(e, x), direct, 1e-9 * std::max(1.0, std::abs(direct)));
    }
}

TEST(Transition, CocycleAndChapmanKolmogorov) {
    auto m = diag_arctan_preset(1.0, 2.0, 2);
    double s = -0.5, r = 0.4, t = 1.3;
    Mat lhs = m.family().u(t, r) * m.family().u(r, s);
    EXPECT_LT((lhs - m.family().u(t, s)).cwiseAbs().maxCoeff(), 1e-13);
    auto f = [](const Vec &y) { return y(0) * y(0) * y(1) + std::pow(y(1), 3); };
    Vec x = vec({0.3, 0.8});
    QuadScheme sc = QuadScheme::gauss_hermite(4);
    auto inner = pst_kernel(m, r, t);
    double nested = pst_apply(m, [&](const Vec &y) { return pst_estimate(inner, f, y, sc).mean; }, s, r, x, sc);
    EXPECT_NEAR(nested, pst_apply(m, f, s, t, x, sc), 1e-10);
}

TEST(Transition, InvarianceOfEvolutionSystem) {
    auto m = diag_arctan_preset(1.0, 2.0, 2);
    auto f = [](const Vec &y) { return std::pow(y(0), 4) - y(0) * y(1) + y(1) * y(1); };
    QuadScheme sc = QuadScheme::gauss_hermite(5);
    double s = 0.0, t = 1.0;
    auto k = pst_kernel(m, s, t);
    double lhs = expectation(measure_at(m, s), [&](const Vec &x) { return pst_estimate(k, f, x, sc).mean; }, sc).mean;
    EXPECT_NEAR(lhs, mean_functional(m, f, t, sc), 1e-9);
}

TEST(Contraction, ConstantModelNorm) {
    auto m = constant_diagonal_preset(-1.0, 3);
    for (double tau : {0.1, std::log(2.0), 3.0}) {
        auto L = pst_contraction(m, 0.0, tau);
        EXPECT_LT((L.M() - std::exp(-tau) * Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_NEAR(hyper_threshold(m, 0.0, std::log(2.0), 2.0), 5.0, 1e-10);
    EXPECT_EQ(hyper_threshold(m, 1.0, 1.0, 3.0), 3.0);
}

TEST(Contraction, DualityWithCovariances) {
    auto m = diag_arctan_preset(1.0, 2.0, 3);
    double s = -0.3, t = 0.9;
    auto L = pst_contraction(m, s, t);
    Mat lhs = x_extension(L).matrix * q_t_inf(m, t).Q;
    Mat rhs = q_t_inf(m, s).Q * m.family().u(t, s).transpose();
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Contraction, NormDecreasesAlongForwardTime) {
    auto m = diag_arctan_preset(1.0, 2.0, 3);
    double prev = 1.0;
    for (double t : {0.1, 0.5, 1.0, 2.0, 5.0}) {
        double n = norm_u_cm(m, 0.0, t);
        EXPECT_LT(n, prev);
        prev = n;
    }
    EXPECT_NEAR(norm_u_cm(m, 0.7, 0.7), 1.0, 1e-12);
}

TEST(Decay, ConstantFunctionIsZero) {
    auto m = diag_arctan_preset(1.0, 2.0, 2);
    EXPECT_EQ(decay_ratio(m, [](const Vec &) { return 3.0; }, 2.0, 0.0, 1.0, QuadScheme::gauss_hermite(4)), 0.0);
}

TEST(Decay, BoundedByCameronMartinNorm) {
    auto m = diag_arctan_preset(1.0, 2.0, 2);
    auto f = [](const Vec &y) { return y(0) + y(1) * y(1) - 0.3 * y(0) * y(1); };
    for (double t : {0.1, 1.0, 5.0}) {
        double r = decay_ratio(m, f, 2.0, 0.0, t, QuadScheme::gauss_hermite(6));
        EXPECT_LE(r, norm_u_cm(m, 0.0, t) * (1 + 1e-9)) << t;
    }
}

TEST(Bignamini, ConstantModelPasses) {
    auto m = constant_diagonal_preset(-1.0, 2);
    auto r = bignamini_check(m, 0.0, 1.0, 1.0, 1.0, 0.0);
    EXPECT_NEAR(r.norm_cm, std::exp(-1.0), 1e-12);
    EXPECT_NEAR(r.h_norm, std::exp(-1.0), 1e-12);
    EXPECT_TRUE(r.hypothesis_verified);
    EXPECT_GE(r.margin_bound, -1e-12);
}

TEST(Bignamini, AdversarialBoundRaises) {
    auto m = constant_diagonal_preset(-1.0, 2);
    EXPECT_THROW(bignamini_check(m, 0.0, 1.0, 0.5, 1.0, 0.0), HypothesisFailed);
    EXPECT_THROW(bignamini_check(m, 1.0, 1.0, 1.0, 1.0, 0.0), PreconditionViolated);
}

TEST(Bignamini, VanishingNoiseGivesInfiniteRatio) {
    auto m = diag_arctan_preset(1.0, 2.0, 2);
    auto r = bignamini_check(m, -4.0, -std::numbers::pi, 10.0, 0.0, 0.0);
    EXPECT_TRUE(std::isinf(r.h_norm));
    EXPECT_FALSE(r.hypothesis_verified);
}
