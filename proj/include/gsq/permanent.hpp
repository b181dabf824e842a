#pragma once

#include <cstdint>
#include <vector>

#include "gsq/errors.hpp"
#include "gsq/numerics.hpp"

namespace gsq {

/// Ryser's formula with Gray-code subset updates, O(2^n n).
inline double permanent(const Mat &A) {
    const int n = int(A.rows());
    if (A.cols() != n) throw PreconditionViolated("permanent needs a square matrix");
    if (n > 12) throw SizeTooLarge("permanent limited to n <= 12");
    if (n == 0) return 1.0;
    std::vector<double> rowsum(n, 0.0);
    double total = 0.0;
    std::uint32_t gray = 0;
    for (std::uint32_t k = 1; k < (1u << n); ++k) {
        std::uint32_t g = k ^ (k >> 1);
        std::uint32_t flip = g ^ gray;
        int j = __builtin_ctz(flip);
        double sgn = (g & flip) ? 1.0 : -1.0;
        for (int i = 0; i < n; ++i) rowsum[i] += sgn * A(i, j);
        gray = g;
        double prod = 1.0;
        for (int i = 0; i < n; ++i) prod *= rowsum[i];
        int bits = __builtin_popcount(g);
        total += ((n - bits) % 2 == 0) ? prod : -prod;
    }
    return total;
}

}  // namespace gsq
