#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "gsq/errors.hpp"

namespace gsq {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Declarative integration scheme.
struct QuadScheme {
    enum class Kind { gauss_hermite, monte_carlo, time_panels };

    Kind kind = Kind::gauss_hermite;
    int nodes = 8;                 // per axis, gauss_hermite
    std::size_t samples = 100000;  // monte_carlo
    std::uint64_t seed = 0;        // monte_carlo
    int order = 10;                // time_panels
    int max_refine = 14;           // time_panels
    double tolerance = 0.0;        // 0 disables the stderr gate
    int threads = 1;

    static QuadScheme gauss_hermite(int n) {
        QuadScheme s;
        s.kind = Kind::gauss_hermite;
        s.nodes = n;
        return s;
    }
    static QuadScheme monte_carlo(std::size_t n, std::uint64_t seed, int threads = 1) {
        QuadScheme s;
        s.kind = Kind::monte_carlo;
        s.samples = n;
        s.seed = seed;
        s.threads = threads;
        return s;
    }
    static QuadScheme time_panels(int order, int max_refine) {
        QuadScheme s;
        s.kind = Kind::time_panels;
        s.order = order;
        s.max_refine = max_refine;
        return s;
    }
};

struct Estimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

namespace detail {

// Golub-Welsch on a symmetric tridiagonal Jacobi matrix followed by a few
// Newton steps on the three-term recurrence. Weights come from the
// Christoffel function 1/sum p_k(x)^2 of the orthonormal polynomials, which
// is far more accurate than squared eigenvector components for large n.
template <class Recur>
std::pair<std::vector<double>, std::vector<double>> jacobi_rule(int n, const Vec &offdiag, Recur orthonormal,
                                                                double mass) {
    Mat J = Mat::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) J(i, i + 1) = J(i + 1, i) = offdiag(i);
    Eigen::SelfAdjointEigenSolver<Mat> es(J, Eigen::EigenvaluesOnly);
    std::vector<double> x(es.eigenvalues().data(), es.eigenvalues().data() + n), w(n);
    for (int i = 0; i < n; ++i) {
        for (int it = 0; it < 3; ++it) {
            auto [pn, dpn, sum] = orthonormal(x[i]);
            (void)sum;
            if (dpn == 0.0) break;
            x[i] -= pn / dpn;
        }
        auto [pn, dpn, sum] = orthonormal(x[i]);
        (void)pn;
        (void)dpn;
        w[i] = mass / sum;
    }
    return {x, w};
}

}  // namespace detail

/// Probabilists' Gauss-Hermite rule: sum w_i f(x_i) ~ E f(G), G ~ N(0,1).
inline std::pair<std::vector<double>, std::vector<double>> gh_nodes(int n) {
    if (n < 1 || n > 128) throw PreconditionViolated("gh_nodes needs 1 <= n <= 128");
    if (n == 1) return {{0.0}, {1.0}};
    Vec off(n - 1);
    for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(double(k));
    // orthonormal He_k / sqrt(k!)
    auto rec = [n](double x) {
        double p0 = 1.0, p1 = x, d0 = 0.0, d1 = 1.0, sum = 1.0 + x * x;
        for (int k = 1; k + 1 <= n; ++k) {
            double s = std::sqrt(double(k + 1));
            double p2 = (x * p1 - std::sqrt(double(k)) * p0) / s;
            double d2 = (p1 + x * d1 - std::sqrt(double(k)) * d0) / s;
            p0 = p1;
            p1 = p2;
            d0 = d1;
            d1 = d2;
            if (k + 1 < n) sum += p1 * p1;
        }
        return std::tuple{p1, d1, sum};
    };
    auto [x, w] = detail::jacobi_rule(n, off, rec, 1.0);
    double tot = 0.0;
    for (double v : w) tot += v;
    for (double &v : w) v /= tot;
    return {x, w};
}

/// Gauss-Legendre rule on [-1,1].
inline std::pair<std::vector<double>, std::vector<double>> gl_nodes(int n) {
    if (n < 1) throw PreconditionViolated("gl_nodes needs n >= 1");
    if (n == 1) return {{0.0}, {2.0}};
    Vec off(n - 1);
    for (int k = 1; k < n; ++k) off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
    auto rec = [n](double x) {
        // orthonormal P_k * sqrt(k + 1/2)
        double p0 = std::sqrt(0.5), p1 = std::sqrt(1.5) * x;
        double d0 = 0.0, d1 = std::sqrt(1.5);
        double sum = p0 * p0 + p1 * p1;
        for (int k = 1; k + 1 <= n; ++k) {
            double a = std::sqrt((4.0 * (k + 1) * (k + 1) - 1.0)) / (k + 1);
            double b = k * std::sqrt(4.0 * (k + 1) * (k + 1) - 1.0) / ((k + 1) * std::sqrt(4.0 * k * k - 1.0));
            double p2 = a * x * p1 - b * p0;
            double d2 = a * (p1 + x * d1) - b * d0;
            p0 = p1;
            p1 = p2;
            d0 = d1;
            d1 = d2;
            if (k + 1 < n) sum += p1 * p1;
        }
        return std::tuple{p1, d1, sum};
    };
    auto [x, w] = detail::jacobi_rule(n, off, rec, 1.0);
    return {x, w};
}

// Counter-based normal stream. A draw is a pure function of
// (seed, sample, component), so any batching or threading reproduces it.
inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t sample, std::uint64_t slot) {
    std::uint64_t h = splitmix64(seed ^ splitmix64(sample ^ splitmix64(slot + 0x632be59bd9b4e019ULL)));
    return (double(h >> 11) + 0.5) * 0x1.0p-53;  // open interval (0,1)
}

inline double counter_normal(std::uint64_t seed, std::uint64_t sample, std::uint64_t comp) {
    std::uint64_t pair = comp / 2;
    double u1 = counter_uniform(seed, sample, 2 * pair);
    double u2 = counter_uniform(seed, sample, 2 * pair + 1);
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * std::numbers::pi * u2;
    return (comp % 2 == 0) ? r * std::cos(th) : r * std::sin(th);
}

inline Vec standard_normal(std::uint64_t seed, std::uint64_t sample, int d) {
    Vec g(d);
    for (int k = 0; k < d; ++k) g(k) = counter_normal(seed, sample, k);
    return g;
}

/// Sample mean and standard error of f(sampler(seed, i)), i < n.
/// Batches of fixed size are reduced in index order, so the result does not
/// depend on `threads`.
inline Estimate mc_estimate(const std::function<double(const Vec &)> &f,
                            const std::function<Vec(std::uint64_t, std::uint64_t)> &sampler, std::size_t n,
                            std::uint64_t seed, int threads = 1) {
    if (n < 2) throw PreconditionViolated("mc_estimate needs n >= 2");
    constexpr std::size_t batch = 4096;
    std::size_t nb = (n + batch - 1) / batch;
    std::vector<double> bmean(nb), bm2(nb);
    std::vector<std::size_t> bcount(nb);
    auto run = [&](std::size_t b) {
        std::size_t lo = b * batch, hi = std::min(n, lo + batch);
        double mean = 0.0, m2 = 0.0;
        std::size_t c = 0;
        for (std::size_t i = lo; i < hi; ++i) {
            double v = f(sampler(seed, i));
            ++c;
            double delta = v - mean;
            mean += delta / double(c);
            m2 += delta * (v - mean);
        }
        bmean[b] = mean;
        bm2[b] = m2;
        bcount[b] = c;
    };
    int nt = std::max(1, threads);
    if (nt == 1 || nb == 1) {
        for (std::size_t b = 0; b < nb; ++b) run(b);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t b = t; b < nb; b += nt) run(b);
            });
        for (auto &th : pool) th.join();
    }
    double mean = 0.0, m2 = 0.0;
    double count = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        double cb = double(bcount[b]);
        double delta = bmean[b] - mean;
        double tot = count + cb;
        mean += delta * cb / tot;
        m2 += bm2[b] + delta * delta * count * cb / tot;
        count = tot;
    }
    double var = m2 / (count - 1.0);
    return {mean, std::sqrt(std::max(0.0, var) / count)};
}

/// E f(G), G ~ N(0, I_d), by tensor Gauss-Hermite or Monte Carlo.
inline Estimate standard_gaussian_expectation(int d, const std::function<double(const Vec &)> &f,
                                              const QuadScheme &scheme) {
    if (d == 0) return {f(Vec(0)), 0.0};
    if (scheme.kind == QuadScheme::Kind::monte_carlo) {
        auto sampler = [d](std::uint64_t seed, std::uint64_t i) { return standard_normal(seed, i, d); };
        Estimate e = mc_estimate(f, sampler, scheme.samples, scheme.seed, scheme.threads);
        if (scheme.tolerance > 0.0 && e.stderr_ > scheme.tolerance)
            throw SchemeTooCoarse("Monte Carlo standard error above tolerance");
        return e;
    }
    if (scheme.kind != QuadScheme::Kind::gauss_hermite)
        throw PreconditionViolated("time_panels is not a Gaussian integration scheme");
    auto [x, w] = gh_nodes(scheme.nodes);
    int n = scheme.nodes;
    std::vector<int> idx(d, 0);
    Vec g(d);
    double acc = 0.0;
    while (true) {
        double wt = 1.0;
        for (int k = 0; k < d; ++k) {
            g(k) = x[idx[k]];
            wt *= w[idx[k]];
        }
        acc += wt * f(g);
        int k = 0;
        while (k < d && ++idx[k] == n) idx[k++] = 0;
        if (k == d) break;
    }
    return {acc, 0.0};
}

}  // namespace gsq
