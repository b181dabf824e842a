#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "gsq/errors.hpp"
#include "gsq/gaussian.hpp"
#include "gsq/numerics.hpp"
#include "gsq/permanent.hpp"

namespace gsq {

using MultiIndex = std::vector<int>;
using Evaluable = std::function<double(const Vec &)>;

inline int degree(const MultiIndex &a) {
    int s = 0;
    for (int v : a) s += v;
    return s;
}

inline double factorial_d(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

/// alpha! as a double; exact for the degrees used here.
inline double alpha_factorial(const MultiIndex &a) {
    double f = 1.0;
    for (int v : a) f *= factorial_d(v);
    return f;
}

inline std::uint64_t checked_factorial(int n) {
    if (n < 0 || n > 20) throw Overflow("factorial beyond 20! does not fit 64 bits");
    std::uint64_t f = 1;
    for (int k = 2; k <= n; ++k) f *= std::uint64_t(k);
    return f;
}

/// |alpha|! / alpha!, the number of distinct index sequences of type alpha.
inline std::uint64_t sigma_class_count(const MultiIndex &a) {
    std::uint64_t r = checked_factorial(degree(a));
    for (int v : a) r /= checked_factorial(v);
    return r;
}

/// Graded colexicographic order: by degree, then by the last differing entry.
struct GradedColex {
    bool operator()(const MultiIndex &a, const MultiIndex &b) const {
        int da = degree(a), db = degree(b);
        if (da != db) return da < db;
        for (std::size_t k = a.size(); k-- > 0;)
            if (a[k] != b[k]) return a[k] < b[k];
        return false;
    }
};

namespace detail {
inline void enumerate_rec(MultiIndex &cur, int pos, int rem, std::vector<MultiIndex> &out) {
    if (pos == 0) {
        cur[0] = rem;
        out.push_back(cur);
        return;
    }
    for (int v = 0; v <= rem; ++v) {
        cur[pos] = v;
        enumerate_rec(cur, pos - 1, rem - v, out);
    }
    cur[pos] = 0;
}
}  // namespace detail

inline std::vector<MultiIndex> enumerate_indices(int d, int n) {
    if (d < 1 || n < 0) throw PreconditionViolated("enumerate_indices needs d >= 1, n >= 0");
    std::vector<MultiIndex> out;
    MultiIndex cur(d, 0);
    detail::enumerate_rec(cur, d - 1, n, out);
    return out;
}

inline std::vector<MultiIndex> enumerate_upto(int d, int N) {
    std::vector<MultiIndex> out;
    for (int n = 0; n <= N; ++n) {
        auto b = enumerate_indices(d, n);
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

/// The sorted index sequence i^alpha: j repeated alpha_j times.
inline std::vector<int> index_sequence(const MultiIndex &a) {
    std::vector<int> s;
    for (std::size_t j = 0; j < a.size(); ++j)
        for (int r = 0; r < a[j]; ++r) s.push_back(int(j));
    return s;
}

/// phi_n = He_n / n!.
inline double hermite_phi(int n, double xi) {
    if (n < 0) throw PreconditionViolated("negative Hermite degree");
    if (n > 60) throw DegreeTooLarge("hermite_phi limited to n <= 60");
    if (n == 0) return 1.0;
    double p0 = 1.0, p1 = xi;
    for (int k = 1; k < n; ++k) {
        double p2 = (xi * p1 - p0) / (k + 1);
        p0 = p1;
        p1 = p2;
    }
    return p1;
}

/// phi_0 .. phi_n at xi.
inline std::vector<double> hermite_phi_table(int n, double xi) {
    std::vector<double> t(n + 1);
    t[0] = 1.0;
    if (n >= 1) t[1] = xi;
    for (int k = 1; k < n; ++k) t[k + 1] = (xi * t[k] - t[k - 1]) / (k + 1);
    return t;
}

inline void check_alpha_support(const SpectralGaussian &g, const MultiIndex &a) {
    if (int(a.size()) != g.dim()) throw PreconditionViolated("multi-index length differs from dimension");
    for (int j = 0; j < g.dim(); ++j)
        if (a[j] > 0 && !g.in_support(j)) throw OffSupport("multi-index charges a kernel direction");
}

inline double phi_alpha(const SpectralGaussian &g, const MultiIndex &a, const Vec &x) {
    check_alpha_support(g, a);
    double v = std::sqrt(alpha_factorial(a));
    for (int j = 0; j < g.dim(); ++j)
        if (a[j] > 0) v *= hermite_phi(a[j], x(j) / std::sqrt(g.eigenvalue(j)));
    return v;
}

/// Polynomial in canonical coordinates, sum of c * prod x_k^{e_k}.
struct Polynomial {
    struct Term {
        double c;
        MultiIndex exponents;
    };
    int dim = 1;
    std::vector<Term> terms;

    double operator()(const Vec &x) const {
        double s = 0.0;
        for (const auto &t : terms) {
            double m = t.c;
            for (int k = 0; k < dim; ++k)
                for (int r = 0; r < t.exponents[k]; ++r) m *= x(k);
            s += m;
        }
        return s;
    }
    int degree() const {
        int d = 0;
        for (const auto &t : terms) d = std::max(d, gsq::degree(t.exponents));
        return d;
    }
    static Polynomial constant(int dim, double c) { return {dim, {{c, MultiIndex(dim, 0)}}}; }
    static Polynomial monomial(const MultiIndex &e, double c = 1.0) { return {int(e.size()), {{c, e}}}; }
};

inline void to_json(nlohmann::json &j, const Polynomial &p) {
    j = nlohmann::json::array();
    for (const auto &t : p.terms) j.push_back({{"c", t.c}, {"exponents", t.exponents}});
}

inline void from_json(const nlohmann::json &j, Polynomial &p) {
    p.terms.clear();
    p.dim = 0;
    for (const auto &t : j) {
        for (auto it = t.begin(); it != t.end(); ++it)
            if (it.key() != "c" && it.key() != "exponents") throw ConfigInvalid("unknown polynomial key " + it.key());
        Polynomial::Term term{t.at("c").get<double>(), t.at("exponents").get<MultiIndex>()};
        if (p.dim == 0) p.dim = int(term.exponents.size());
        if (int(term.exponents.size()) != p.dim) throw ConfigInvalid("polynomial terms differ in dimension");
        for (int e : term.exponents)
            if (e < 0) throw ConfigInvalid("negative exponent");
        p.terms.push_back(std::move(term));
    }
    if (p.dim == 0) throw ConfigInvalid("empty polynomial");
}

/// Finite chaos expansion sum c_alpha Phi_alpha over a measure.
struct ChaosExpansion {
    SpectralGaussian measure;
    int max_degree = 0;
    std::map<MultiIndex, double, GradedColex> coeffs;

    double coeff(const MultiIndex &a) const {
        auto it = coeffs.find(a);
        return it == coeffs.end() ? 0.0 : it->second;
    }
    /// Degree-n slice.
    ChaosExpansion slice(int n) const {
        ChaosExpansion e{measure, max_degree, {}};
        for (const auto &[a, c] : coeffs)
            if (degree(a) == n) e.coeffs[a] = c;
        return e;
    }
};

inline double eval_expansion(const ChaosExpansion &e, const Vec &x) {
    const auto &g = e.measure;
    std::vector<std::vector<double>> tab(g.dim());
    for (int j = 0; j < g.dim(); ++j)
        if (g.in_support(j)) tab[j] = hermite_phi_table(e.max_degree, x(j) / std::sqrt(g.eigenvalue(j)));
    double s = 0.0;
    for (const auto &[a, c] : e.coeffs) {
        double v = std::sqrt(alpha_factorial(a));
        for (int j = 0; j < g.dim(); ++j)
            if (a[j] > 0) {
                if (!g.in_support(j)) throw OffSupport("multi-index charges a kernel direction");
                v *= tab[j][a[j]];
            }
        s += c * v;
    }
    return s;
}

inline double l2_norm(const ChaosExpansion &e) {
    double s = 0.0;
    for (const auto &[a, c] : e.coeffs) s += c * c;
    return std::sqrt(s);
}

/// L2 inner product of two expansions over the same measure.
inline double l2_inner(const ChaosExpansion &a, const ChaosExpansion &b) {
    double s = 0.0;
    for (const auto &[al, c] : a.coeffs) s += c * b.coeff(al);
    return s;
}

/// Multi-indices of degree <= N charging only support coordinates.
inline std::vector<MultiIndex> support_indices_upto(const SpectralGaussian &g, int N) {
    std::vector<MultiIndex> out;
    for (auto &a : enumerate_upto(g.dim(), N)) {
        bool ok = true;
        for (int j = 0; j < g.dim(); ++j)
            if (a[j] > 0 && !g.in_support(j)) ok = false;
        if (ok) out.push_back(std::move(a));
    }
    return out;
}

inline QuadScheme default_chaos_scheme(const SpectralGaussian &g, int N) {
    if (g.rank() <= 4) return QuadScheme::gauss_hermite(N + 2);
    return QuadScheme::monte_carlo(100000, 0);
}

namespace detail {

// Visits every quadrature point of the scheme over the support of g as
// (x in canonical coordinates, weight).
inline void for_each_point(const SpectralGaussian &g, const QuadScheme &scheme,
                           const std::function<void(const Vec &, double)> &visit) {
    auto supp = g.support_indices();
    int r = int(supp.size());
    Vec sd = g.eigenvalues().cwiseSqrt();
    Vec x = Vec::Zero(g.dim());
    if (scheme.kind == QuadScheme::Kind::monte_carlo) {
        double w = 1.0 / double(scheme.samples);
        for (std::size_t i = 0; i < scheme.samples; ++i) {
            Vec u = standard_normal(scheme.seed, i, r);
            for (int j = 0; j < r; ++j) x(supp[j]) = sd(supp[j]) * u(j);
            visit(x, w);
        }
        return;
    }
    if (scheme.kind != QuadScheme::Kind::gauss_hermite) throw PreconditionViolated("not a Gaussian scheme");
    auto [nodes, weights] = gh_nodes(scheme.nodes);
    int n = scheme.nodes;
    std::vector<int> idx(r, 0);
    while (true) {
        double wt = 1.0;
        for (int j = 0; j < r; ++j) {
            x(supp[j]) = sd(supp[j]) * nodes[idx[j]];
            wt *= weights[idx[j]];
        }
        visit(x, wt);
        int k = 0;
        while (k < r && ++idx[k] == n) idx[k++] = 0;
        if (k == r) break;
    }
}

}  // namespace detail

/// c_alpha = int f Phi_alpha dgamma, |alpha| <= N, by the scheme.
inline ChaosExpansion project(const SpectralGaussian &g, const Evaluable &f, int N, const QuadScheme &scheme) {
    auto idx = support_indices_upto(g, N);
    std::vector<double> acc(idx.size(), 0.0);
    std::vector<double> sqf(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) sqf[i] = std::sqrt(alpha_factorial(idx[i]));
    std::vector<std::vector<double>> tab(g.dim());
    detail::for_each_point(g, scheme, [&](const Vec &x, double w) {
        double fx = f(x) * w;
        for (int j = 0; j < g.dim(); ++j)
            if (g.in_support(j)) tab[j] = hermite_phi_table(N, x(j) / std::sqrt(g.eigenvalue(j)));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            double v = sqf[i];
            for (int j = 0; j < g.dim(); ++j)
                if (idx[i][j] > 0) v *= tab[j][idx[i][j]];
            acc[i] += fx * v;
        }
    });
    ChaosExpansion e{g, N, {}};
    for (std::size_t i = 0; i < idx.size(); ++i) e.coeffs[idx[i]] = acc[i];
    return e;
}

inline ChaosExpansion project(const SpectralGaussian &g, const Evaluable &f, int N) {
    return project(g, f, N, default_chaos_scheme(g, N));
}

/// Projection of a polynomial with the Parseval residual check. When the
/// polynomial degree is <= N, |f|^2 - sum c^2 must vanish up to `tol`
/// (relative), otherwise SchemeTooCoarse.
inline ChaosExpansion project(const SpectralGaussian &g, const Polynomial &p, int N, const QuadScheme &scheme,
                              double tol = 1e-9) {
    ChaosExpansion e = project(g, Evaluable(p), N, scheme);
    if (p.degree() <= N) {
        double f2 = 0.0;
        detail::for_each_point(g, scheme, [&](const Vec &x, double w) {
            double v = p(x);
            f2 += w * v * v;
        });
        double c2 = l2_norm(e) * l2_norm(e);
        if (std::abs(f2 - c2) > tol * std::max(1.0, f2))
            throw SchemeTooCoarse("chaos reconstruction residual above tolerance");
    }
    return e;
}

inline ChaosExpansion project(const SpectralGaussian &g, const Polynomial &p, int N) {
    return project(g, p, N, default_chaos_scheme(g, N));
}

/// Coefficients of exp(W_z - |z|^2/2): z^alpha / sqrt(alpha!).
inline ChaosExpansion exp_functional_coeffs(const SpectralGaussian &g, const Vec &z, int N) {
    ChaosExpansion e{g, N, {}};
    for (const auto &a : support_indices_upto(g, N)) {
        double c = 1.0 / std::sqrt(alpha_factorial(a));
        for (int j = 0; j < g.dim(); ++j)
            if (a[j] > 0) c *= std::pow(z(j), a[j]);
        e.coeffs[a] = c;
    }
    return e;
}

/// Degree-n chaos of prod_j W_{h_j}: c_alpha = perm(H_alpha)/sqrt(alpha!),
/// H_alpha[k][m] = (h_k) at coordinate i^alpha_m.
inline ChaosExpansion monomial_coeffs(const SpectralGaussian &g, const std::vector<Vec> &h) {
    const int n = int(h.size());
    if (n > 8) throw SizeTooLarge("monomial_coeffs limited to n <= 8");
    std::vector<Vec> a;
    for (const auto &v : h) a.push_back(support_part(g, v));
    ChaosExpansion e{g, n, {}};
    for (const auto &al : enumerate_indices(g.dim(), n)) {
        bool ok = true;
        for (int j = 0; j < g.dim(); ++j)
            if (al[j] > 0 && !g.in_support(j)) ok = false;
        if (!ok) continue;
        auto seq = index_sequence(al);
        Mat H(n, n);
        for (int k = 0; k < n; ++k)
            for (int m = 0; m < n; ++m) H(k, m) = a[k](seq[m]);
        e.coeffs[al] = permanent(H) / std::sqrt(alpha_factorial(al));
    }
    return e;
}

inline void to_json(nlohmann::json &j, const ChaosExpansion &e) {
    j = nlohmann::json::array();
    for (const auto &[a, c] : e.coeffs) j.push_back({{"alpha", a}, {"c", c}});
}

}  // namespace gsq
