#pragma once

#include <random>

#include "gsq/second_quant.hpp"

namespace gsq::testing {

inline SpectralGaussian random_measure(std::mt19937_64 &rng, int d) {
    std::uniform_real_distribution<double> u(0.3, 3.0);
    Vec l(d);
    for (int k = 0; k < d; ++k) l(k) = u(rng);
    return SpectralGaussian(l);
}

inline Mat random_matrix(std::mt19937_64 &rng, int r, int c) {
    std::normal_distribution<double> nd;
    Mat M(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) M(i, j) = nd(rng);
    return M;
}

/// Random contraction with operator norm drawn from [lo, hi].
inline CMContraction random_contraction(std::mt19937_64 &rng, const SpectralGaussian &mu, const SpectralGaussian &nu,
                                        double lo = 0.2, double hi = 0.95) {
    Mat M = random_matrix(rng, nu.dim(), mu.dim());
    std::uniform_real_distribution<double> u(lo, hi);
    double s = Eigen::JacobiSVD<Mat>(M).singularValues()(0);
    return CMContraction(mu, nu, M * (u(rng) / s));
}

inline Polynomial random_polynomial(std::mt19937_64 &rng, int d, int deg, int terms = 6) {
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<int> ui(0, d - 1);
    Polynomial p{d, {}};
    p.terms.push_back({nd(rng), MultiIndex(d, 0)});
    for (int k = 0; k < terms; ++k) {
        MultiIndex e(d, 0);
        int target = 1 + k % deg;
        for (int r = 0; r < target; ++r) e[ui(rng)]++;
        p.terms.push_back({nd(rng), e});
    }
    MultiIndex top(d, 0);
    top[0] = deg;
    p.terms.push_back({0.5, top});
    return p;
}

}  // namespace gsq::testing
