#pragma once

#include <json.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "gsq/chaos.hpp"
#include "gsq/errors.hpp"
#include "gsq/gaussian.hpp"
#include "gsq/numerics.hpp"
#include "gsq/permanent.hpp"

namespace gsq {

/// Operator H_mu -> H_nu stored in the Cameron-Martin orthonormal bases.
/// The same matrix acts on canonical coordinates as Q_nu^{-1/2} T Q_mu^{1/2}.
class CMContraction {
public:
    CMContraction() = default;
    CMContraction(SpectralGaussian mu, SpectralGaussian nu, Mat M)
        : mu_(std::move(mu)), nu_(std::move(nu)), M_(std::move(M)) {
        if (M_.rows() != nu_.dim() || M_.cols() != mu_.dim())
            throw PreconditionViolated("contraction matrix must be dim(nu) x dim(mu)");
        if (!M_.allFinite()) throw PreconditionViolated("contraction matrix has non-finite entries");
        for (int k = 0; k < mu_.dim(); ++k)
            if (!mu_.in_support(k)) M_.col(k).setZero();
        for (int n = 0; n < nu_.dim(); ++n)
            if (!nu_.in_support(n)) M_.row(n).setZero();
        s_ = Eigen::JacobiSVD<Mat>(M_).singularValues();
    }

    const SpectralGaussian &mu() const { return mu_; }
    const SpectralGaussian &nu() const { return nu_; }
    const Mat &M() const { return M_; }
    const Vec &singular_values() const { return s_; }

    CMContraction adjoint() const { return {nu_, mu_, M_.transpose()}; }

    /// Canonical-coordinate action of T-hat.
    Vec hat_apply(const Vec &z) const { return M_ * support_part(mu_, z); }

private:
    SpectralGaussian mu_, nu_;
    Mat M_;
    Vec s_;
};

inline double op_norm(const CMContraction &T) {
    return T.singular_values().size() ? T.singular_values()(0) : 0.0;
}

/// S o T with T: mu -> sigma and S: sigma -> nu.
inline CMContraction compose(const CMContraction &S, const CMContraction &T) {
    if (!(S.mu() == T.nu())) throw PreconditionViolated("contractions are not composable");
    return {T.mu(), S.nu(), S.M() * T.M()};
}

inline CMContraction scaled_identity(const SpectralGaussian &g, double c) {
    return {g, g, c * Mat::Identity(g.dim(), g.dim())};
}

inline void require_contraction(const CMContraction &T) {
    if (op_norm(T) > 1.0 + 1e-12) throw NotContraction("operator norm " + std::to_string(op_norm(T)) + " > 1");
}

/// Bounded canonical-coordinate version Q_nu^{1/2} M Q_mu^{-1/2} (I - P_mu).
inline LinearMap x_extension(const CMContraction &T) {
    const auto &mu = T.mu();
    const auto &nu = T.nu();
    Mat X = Mat::Zero(nu.dim(), mu.dim());
    for (int k = 0; k < mu.dim(); ++k) {
        if (!mu.in_support(k)) continue;
        for (int n = 0; n < nu.dim(); ++n) {
            double v = T.M()(n, k) * std::sqrt(nu.eigenvalue(n) / mu.eigenvalue(k));
            if (std::abs(v) > 1e12) throw Unbounded("entry exceeds 1e12; no bounded version at this truncation");
            X(n, k) = v;
        }
    }
    return {X};
}

/// <Gamma_n(T) Phi^mu_alpha, Phi^nu_beta> = perm(A)/sqrt(alpha! beta!),
/// A_kl = M[i^beta_k, i^alpha_l].
inline double gamma_matrix_element(const CMContraction &T, const MultiIndex &alpha, const MultiIndex &beta) {
    if (int(alpha.size()) != T.mu().dim() || int(beta.size()) != T.nu().dim())
        throw PreconditionViolated("multi-index length mismatch");
    int n = degree(alpha);
    if (degree(beta) != n) return 0.0;
    if (n > 12) throw SizeTooLarge("series form limited to degree <= 12");
    auto ia = index_sequence(alpha), ib = index_sequence(beta);
    Mat A(n, n);
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) A(k, l) = T.M()(ib[k], ia[l]);
    return permanent(A) / std::sqrt(alpha_factorial(alpha) * alpha_factorial(beta));
}

/// Degree-n block, rows over nu-side indices, columns over mu-side indices
/// (both restricted to the supports), in graded colex order.
struct GammaBlock {
    std::vector<MultiIndex> rows, cols;
    Mat G;
};

inline std::vector<MultiIndex> support_indices_of_degree(const SpectralGaussian &g, int n) {
    std::vector<MultiIndex> out;
    for (auto &a : enumerate_indices(g.dim(), n)) {
        bool ok = true;
        for (int j = 0; j < g.dim(); ++j)
            if (a[j] > 0 && !g.in_support(j)) ok = false;
        if (ok) out.push_back(std::move(a));
    }
    return out;
}

inline GammaBlock gamma_block(const CMContraction &T, int n) {
    GammaBlock b{support_indices_of_degree(T.nu(), n), support_indices_of_degree(T.mu(), n), {}};
    b.G.resize(Eigen::Index(b.rows.size()), Eigen::Index(b.cols.size()));
    for (std::size_t r = 0; r < b.rows.size(); ++r)
        for (std::size_t c = 0; c < b.cols.size(); ++c) b.G(r, c) = gamma_matrix_element(T, b.cols[c], b.rows[r]);
    return b;
}

inline ChaosExpansion gamma_series_apply(const CMContraction &T, const ChaosExpansion &e) {
    require_contraction(T);
    if (e.measure.dim() != T.mu().dim()) throw PreconditionViolated("expansion lives on another measure");
    int N = e.max_degree;
    for (const auto &[a, c] : e.coeffs) N = std::max(N, degree(a));
    if (N > 12) throw SizeTooLarge("series form limited to degree <= 12");
    ChaosExpansion out{T.nu(), e.max_degree, {}};
    for (int n = 0; n <= N; ++n) {
        std::vector<std::pair<MultiIndex, double>> in;
        for (const auto &[a, c] : e.coeffs)
            if (degree(a) == n && c != 0.0) in.emplace_back(a, c);
        auto rows = support_indices_of_degree(T.nu(), n);
        for (const auto &b : rows) {
            double s = 0.0;
            for (const auto &[a, c] : in) s += gamma_matrix_element(T, a, b) * c;
            out.coeffs[b] = s;
        }
    }
    return out;
}

/// (I - M^T M)^{1/2} on H_mu by a clamped symmetric eigendecomposition.
inline Mat defect_root(const CMContraction &T) {
    int d = T.mu().dim();
    Mat D = Mat::Identity(d, d) - T.M().transpose() * T.M();
    D = 0.5 * (D + D.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(D);
    Vec ev = es.eigenvalues();
    for (int k = 0; k < d; ++k) {
        if (ev(k) < -1e-10) throw NotContraction("I - T*T has a negative eigenvalue");
        ev(k) = std::max(0.0, ev(k));
    }
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

/// Gamma(T) f (x) = E f(A x + Q_mu^{1/2} R g), g ~ N(0, I) over the mu-support,
/// A = x_extension(T*), R = (I - T*T)^{1/2}.
inline Estimate gamma_integral_estimate(const CMContraction &T, const Evaluable &f, const Vec &x,
                                        const QuadScheme &scheme) {
    require_contraction(T);
    Mat A = x_extension(T.adjoint()).matrix;
    Mat R = defect_root(T);
    auto supp = T.mu().support_indices();
    int r = int(supp.size());
    Mat L = Mat::Zero(T.mu().dim(), r);  // Q_mu^{1/2} R restricted to support columns
    for (int j = 0; j < r; ++j)
        for (int k = 0; k < T.mu().dim(); ++k)
            L(k, j) = std::sqrt(T.mu().eigenvalue(k)) * R(k, supp[j]);
    Vec m = A * x;
    return standard_gaussian_expectation(r, [&](const Vec &g) { return f(m + L * g); }, scheme);
}

inline double gamma_integral_apply(const CMContraction &T, const Evaluable &f, const Vec &x,
                                   const QuadScheme &scheme) {
    return gamma_integral_estimate(T, f, x, scheme).mean;
}

struct PolarFactors {
    CMContraction B;  // H_mu -> H_mu, (T*T)^{1/2}
    CMContraction C;  // H_mu -> H_nu, partial isometry
};

inline PolarFactors polar_factors(const CMContraction &T) {
    Eigen::JacobiSVD<Mat> svd(T.M(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec &s = svd.singularValues();
    const Mat &U = svd.matrixU();
    const Mat &V = svd.matrixV();
    int k = int(s.size());
    Mat B = V.leftCols(k) * s.asDiagonal() * V.leftCols(k).transpose();
    int r = 0;
    double s1 = k ? s(0) : 0.0;
    while (r < k && s(r) > 1e-12 * std::max(1.0, s1) && s(r) > 0.0) ++r;
    Mat C = U.leftCols(r) * V.leftCols(r).transpose();
    if (r == 0) C = Mat::Zero(T.M().rows(), T.M().cols());
    return {CMContraction(T.mu(), T.mu(), B), CMContraction(T.mu(), T.nu(), C)};
}

inline double q0_threshold(double norm, double p) {
    if (!(p > 1.0)) throw PreconditionViolated("q0 needs p > 1");
    if (norm == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 + (p - 1.0) / (norm * norm);
}

inline double q0_threshold(const CMContraction &T, double p) { return q0_threshold(op_norm(T), p); }

/// |f|_{L^p(g)} by the scheme.
inline double lp_norm(const SpectralGaussian &g, const Evaluable &f, double p, const QuadScheme &scheme) {
    Estimate e = expectation(g, [&](const Vec &x) { return std::pow(std::abs(f(x)), p); }, scheme);
    return std::pow(e.mean, 1.0 / p);
}

/// |Gamma(T) f|_{L^q(nu)}: outer average over nu by `outer`, inner integral
/// form by `inner`. stderr_ is the delta-method error in MC outer mode.
inline Estimate lq_norm_gamma(const CMContraction &T, const Evaluable &f, double q, const QuadScheme &outer,
                              const QuadScheme &inner) {
    if (!(q >= 1.0)) throw PreconditionViolated("lq_norm_gamma needs q >= 1");
    require_contraction(T);
    Estimate e = expectation(
        T.nu(), [&](const Vec &x) { return std::pow(std::abs(gamma_integral_apply(T, f, x, inner)), q); }, outer);
    double v = std::pow(e.mean, 1.0 / q);
    double se = e.mean > 0.0 ? e.stderr_ * v / (q * e.mean) : 0.0;
    return {v, se};
}

inline Estimate lq_norm_gamma(const CMContraction &T, const Evaluable &f, double q, const QuadScheme &scheme) {
    return lq_norm_gamma(T, f, q, scheme, scheme);
}

/// Witness f(x) = exp(alpha W_a(x)^2) with a the Cameron-Martin coordinates
/// of h, together with its closed-form image under Gamma(T).
struct HyperWitness {
    CMContraction T;
    double p = 2.0, q = 2.0, alpha = 0.0;
    Vec a;           // Q_mu^{-1/2} h
    Vec Ma;          // coordinates of Th in H_nu
    double h2 = 0;   // |h|^2_{H_mu}
    double th2 = 0;  // |Th|^2_{H_nu}
    double sigma2 = 0;
    bool lq_finite = true;

    double f(const Vec &x) const {
        double w = white_noise(T.mu(), a, x);
        return std::exp(alpha * w * w);
    }
    double gamma_image(const Vec &x) const {
        double den = 1.0 - 2.0 * alpha * sigma2;
        double w = white_noise(T.nu(), Ma, x);
        return std::exp(alpha / den * w * w) / std::sqrt(den);
    }
    /// |f|_{L^p(mu)} in closed form.
    double f_lp_norm() const { return std::pow(1.0 - 2.0 * p * alpha * h2, -0.5 / p); }
    /// |Gamma f|_{L^q(nu)} in closed form; infinity when divergent.
    double lq_norm_exact() const {
        if (!lq_finite) return std::numeric_limits<double>::infinity();
        double den = 1.0 - 2.0 * alpha * sigma2;
        double inner = 1.0 - 2.0 * q * alpha * th2 / den;
        return std::pow(std::pow(den, -q / 2.0) / std::sqrt(inner), 1.0 / q);
    }
    /// Smallest q at which this witness leaves L^q, infinity if none.
    double diverges_at() const {
        if (th2 == 0.0 || alpha == 0.0) return std::numeric_limits<double>::infinity();
        return 1.0 + (1.0 - 2.0 * alpha * h2) / (2.0 * alpha * th2);
    }
};

inline HyperWitness hyper_witness(const CMContraction &T, double p, double q, const Vec &h, double alpha) {
    require_contraction(T);
    HyperWitness w;
    w.T = T;
    w.p = p;
    w.q = q;
    w.alpha = alpha;
    w.a = pinv_sqrt_apply(T.mu(), h);
    w.Ma = T.M() * w.a;
    w.h2 = w.a.squaredNorm();
    w.th2 = w.Ma.squaredNorm();
    w.sigma2 = std::max(0.0, w.h2 - w.th2);
    if (!(alpha >= 0.0) || !(2.0 * alpha * p * w.h2 < 1.0))
        throw PreconditionViolated("witness needs 2 alpha p |h|^2 < 1");
    w.lq_finite = !(2.0 * alpha * w.th2 * (q - 1.0) >= 1.0 - 2.0 * alpha * w.h2);
    return w;
}

/// MC estimate of |Gamma f|_{L^q(nu)} from the closed-form image.
inline Estimate witness_lq_mc(const HyperWitness &w, std::size_t samples, std::uint64_t seed, int threads = 1) {
    auto sampler = [&](std::uint64_t s, std::uint64_t i) { return sample_one(w.T.nu(), s, i); };
    Estimate e = mc_estimate([&](const Vec &x) { return std::pow(w.gamma_image(x), w.q); }, sampler, samples, seed,
                             threads);
    double v = std::pow(e.mean, 1.0 / w.q);
    return {v, e.stderr_ * v / (w.q * e.mean)};
}

/// Witness direction and admissible alpha window used in the sharpness
/// argument: h along the top right singular vector, |h|_H = 1, and
/// alpha in [1/(2(p+eps)), 1/(2p)).
struct WitnessWindow {
    Vec h;
    double eps = 0.0;
    double alpha_lo = 0.0, alpha_hi = 0.0;
};

inline WitnessWindow witness_window(const CMContraction &T, double p, double eps) {
    Eigen::JacobiSVD<Mat> svd(T.M(), Eigen::ComputeFullV);
    Vec v = svd.matrixV().col(0);
    WitnessWindow w;
    w.h = sqrt_apply(T.mu(), v);
    w.eps = eps;
    w.alpha_lo = 1.0 / (2.0 * (p + eps));
    w.alpha_hi = 1.0 / (2.0 * p);
    return w;
}

/// Largest eps for which the top singular direction satisfies
/// |Th|^2 >= (p+eps-1)/(q-1)|h|^2, i.e. (q-1)|T|^2 - (p-1). Nonpositive when q <= q0.
inline double witness_eps_max(const CMContraction &T, double p, double q) {
    double s = op_norm(T);
    return (q - 1.0) * s * s - (p - 1.0);
}

/// Infimum over the witness family of the smallest divergent exponent,
/// attained in the limit alpha -> 1/(2p |h|^2) along the top singular
/// direction.
inline double witness_diverges_at(const CMContraction &T, double p) {
    if (op_norm(T) == 0.0) return std::numeric_limits<double>::infinity();
    WitnessWindow w = witness_window(T, p, 0.0);
    Vec a = pinv_sqrt_apply(T.mu(), w.h);
    double h2 = a.squaredNorm(), th2 = (T.M() * a).squaredNorm();
    double alpha = 1.0 / (2.0 * p * h2);
    return 1.0 + (1.0 - 2.0 * alpha * h2) / (2.0 * alpha * th2);
}

struct HSReport {
    double partial = 0;
    double closed_form = 0;
    double paper_printed = 0;  // prod 1/(1 - t_k^2), t_k eigenvalues of T*T
    double tail_bound = 0;
};

inline double binomial_d(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
    return r;
}

/// Sum of |Gamma_n(T)|_HS^2 over n <= N. Gamma(T) is unitarily equivalent to
/// Gamma(diag s) through Gamma of the orthogonal SVD factors, whose diagonal
/// elements are prod s^alpha, so block n contributes the complete homogeneous
/// symmetric polynomial h_n(s_1^2, ..., s_r^2).
inline std::vector<double> hs_block_squares(const Vec &s, int N) {
    std::vector<double> h(N + 1, 0.0);
    h[0] = 1.0;
    for (int k = 0; k < s.size(); ++k) {
        double x = s(k) * s(k);
        for (int n = 1; n <= N; ++n) h[n] += x * h[n - 1];
    }
    return h;
}

inline HSReport hs_norm_gamma(const CMContraction &T, int N) {
    const Vec &s = T.singular_values();
    double s1 = op_norm(T);
    if (s1 >= 1.0 - 1e-12) throw NotStrictContraction("Hilbert-Schmidt bound needs |T| < 1");
    HSReport r;
    auto blocks = hs_block_squares(s, N);
    double sum = 0.0;
    for (double b : blocks) sum += b;
    r.partial = std::sqrt(sum);
    r.closed_form = 1.0;
    r.paper_printed = 1.0;
    int rank = 0;
    for (int k = 0; k < s.size(); ++k) {
        r.closed_form /= std::sqrt(1.0 - s(k) * s(k));
        r.paper_printed /= 1.0 - std::pow(s(k), 4);
        if (s(k) > 0.0) ++rank;
    }
    if (rank > 0) {
        double tail = 0.0;
        for (int n = N + 1; n < N + 100000; ++n) {
            double term = std::pow(s1, 2.0 * n) * binomial_d(n + rank - 1, rank - 1);
            tail += term;
            if (term < 1e-18 * std::max(tail, 1e-300) && n > N + rank + 1) break;
            if (term == 0.0) break;
        }
        r.tail_bound = tail;
    }
    return r;
}

/// Eigenpairs of a self-adjoint T on H_mu, eigenvalues in descending order.
struct SelfAdjointSpectrum {
    Vec t;
    Mat V;  // columns are orthonormal eigenvectors in H_mu coordinates
};

inline SelfAdjointSpectrum self_adjoint_spectrum(const CMContraction &T) {
    if (!(T.mu() == T.nu())) throw NotSelfAdjoint("mu and nu differ");
    if ((T.M() - T.M().transpose()).cwiseAbs().maxCoeff() > 1e-12) throw NotSelfAdjoint("matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (T.M() + T.M().transpose()));
    int d = int(T.M().rows());
    SelfAdjointSpectrum sp{Vec(d), Mat(d, d)};
    for (int k = 0; k < d; ++k) {
        sp.t(k) = es.eigenvalues()(d - 1 - k);
        sp.V.col(k) = es.eigenvectors().col(d - 1 - k);
    }
    return sp;
}

/// t_alpha = prod t_j^{alpha_j} with 0^0 = 1, eigenvalues as in
/// self_adjoint_spectrum.
inline double gamma_eigen(const CMContraction &T, const MultiIndex &alpha) {
    auto sp = self_adjoint_spectrum(T);
    if (int(alpha.size()) != sp.t.size()) throw PreconditionViolated("multi-index length mismatch");
    double v = 1.0;
    for (int j = 0; j < sp.t.size(); ++j)
        if (alpha[j] > 0) v *= std::pow(sp.t(j), alpha[j]);
    return v;
}

/// psi_alpha = sqrt(alpha!) prod_j phi_{alpha_j}(W_{v_j}) with v_j the
/// eigenvectors, as an evaluable on X.
inline Evaluable gamma_eigenfunction(const CMContraction &T, const MultiIndex &alpha) {
    auto sp = self_adjoint_spectrum(T);
    SpectralGaussian mu = T.mu();
    return [sp, mu, alpha](const Vec &x) {
        double v = std::sqrt(alpha_factorial(alpha));
        for (int j = 0; j < sp.t.size(); ++j)
            if (alpha[j] > 0) v *= hermite_phi(alpha[j], white_noise(mu, sp.V.col(j), x));
        return v;
    };
}

inline void to_json(nlohmann::json &j, const CMContraction &T) {
    std::vector<std::vector<double>> rows(T.M().rows(), std::vector<double>(T.M().cols()));
    for (int r = 0; r < T.M().rows(); ++r)
        for (int c = 0; c < T.M().cols(); ++c) rows[r][c] = T.M()(r, c);
    j = nlohmann::json{{"mu", T.mu()}, {"nu", T.nu()}, {"M", rows}};
}

inline void from_json(const nlohmann::json &j, CMContraction &T) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "mu" && it.key() != "nu" && it.key() != "M")
            throw ConfigInvalid("unknown contraction key " + it.key());
    auto mu = j.at("mu").get<SpectralGaussian>();
    auto nu = j.at("nu").get<SpectralGaussian>();
    auto rows = j.at("M").get<std::vector<std::vector<double>>>();
    Mat M(Eigen::Index(rows.size()), rows.empty() ? 0 : Eigen::Index(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (Eigen::Index(rows[r].size()) != M.cols()) throw ConfigInvalid("ragged contraction matrix");
        for (std::size_t c = 0; c < rows[r].size(); ++c) M(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
    }
    if (M.rows() != nu.dim() || M.cols() != mu.dim()) throw ConfigInvalid("contraction matrix shape mismatch");
    T = CMContraction(mu, nu, M);
}

}  // namespace gsq
