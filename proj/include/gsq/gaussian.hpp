#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "gsq/errors.hpp"
#include "gsq/numerics.hpp"

namespace gsq {

/// Centered Gaussian measure N(0, diag(lambda)) in canonical coordinates.
class SpectralGaussian {
public:
    SpectralGaussian() = default;
    explicit SpectralGaussian(Vec eigenvalues, double kernel_tol = 1e-12)
        : lambda_(std::move(eigenvalues)), kernel_tol_(kernel_tol) {
        if (lambda_.size() < 1) throw PreconditionViolated("SpectralGaussian needs dim >= 1");
        for (int k = 0; k < lambda_.size(); ++k)
            if (!(lambda_(k) >= 0.0) || !std::isfinite(lambda_(k)))
                throw PreconditionViolated("covariance eigenvalues must be finite and nonnegative");
        double mx = lambda_.maxCoeff();
        support_.resize(lambda_.size());
        for (int k = 0; k < lambda_.size(); ++k) support_[k] = mx > 0.0 && lambda_(k) > kernel_tol_ * mx;
    }
    static SpectralGaussian diag(std::initializer_list<double> l) {
        Vec v(l.size());
        int i = 0;
        for (double x : l) v(i++) = x;
        return SpectralGaussian(v);
    }

    int dim() const { return int(lambda_.size()); }
    const Vec &eigenvalues() const { return lambda_; }
    double eigenvalue(int k) const { return lambda_(k); }
    double kernel_tol() const { return kernel_tol_; }
    bool in_support(int k) const { return support_[k]; }
    int rank() const {
        int r = 0;
        for (bool b : support_) r += b;
        return r;
    }
    std::vector<int> support_indices() const {
        std::vector<int> s;
        for (int k = 0; k < dim(); ++k)
            if (support_[k]) s.push_back(k);
        return s;
    }

    /// Throws OffRange when the kernel part of v exceeds 1e-8 of |v|.
    void check_in_range(const Vec &v) const {
        if (v.size() != dim()) throw PreconditionViolated("dimension mismatch");
        double ker = 0.0;
        for (int k = 0; k < dim(); ++k)
            if (!support_[k]) ker += v(k) * v(k);
        if (std::sqrt(ker) > 1e-8 * v.norm()) throw OffRange("vector has a component over the kernel");
    }

    bool operator==(const SpectralGaussian &o) const {
        return lambda_ == o.lambda_ && kernel_tol_ == o.kernel_tol_;
    }

private:
    Vec lambda_;
    double kernel_tol_ = 1e-12;
    std::vector<bool> support_;
};

inline void to_json(nlohmann::json &j, const SpectralGaussian &g) {
    j = nlohmann::json{{"dim", g.dim()},
                       {"eigenvalues", std::vector<double>(g.eigenvalues().data(),
                                                           g.eigenvalues().data() + g.dim())}};
}

inline void from_json(const nlohmann::json &j, SpectralGaussian &g) {
    auto ev = j.at("eigenvalues").get<std::vector<double>>();
    if (j.contains("dim") && j.at("dim").get<int>() != int(ev.size()))
        throw ConfigInvalid("measure dim does not match eigenvalue count");
    g = SpectralGaussian(Eigen::Map<const Vec>(ev.data(), Eigen::Index(ev.size())));
}

/// Dense canonical-coordinate matrix with the adjoint and operator norm.
struct LinearMap {
    Mat matrix;

    LinearMap adjoint() const { return {matrix.transpose()}; }
    double op_norm() const {
        if (matrix.size() == 0) return 0.0;
        return Eigen::JacobiSVD<Mat>(matrix).singularValues()(0);
    }
};

/// Q^{-1/2} h on the support, 0 on the kernel.
inline Vec pinv_sqrt_apply(const SpectralGaussian &g, const Vec &h) {
    g.check_in_range(h);
    Vec out = Vec::Zero(g.dim());
    for (int k = 0; k < g.dim(); ++k)
        if (g.in_support(k)) out(k) = h(k) / std::sqrt(g.eigenvalue(k));
    return out;
}

/// Q^{1/2} v.
inline Vec sqrt_apply(const SpectralGaussian &g, const Vec &v) {
    return g.eigenvalues().cwiseSqrt().cwiseProduct(v);
}

inline double cm_inner(const SpectralGaussian &g, const Vec &h, const Vec &k) {
    return pinv_sqrt_apply(g, h).dot(pinv_sqrt_apply(g, k));
}

inline double cm_norm(const SpectralGaussian &g, const Vec &h) { return std::sqrt(cm_inner(g, h, h)); }

/// (I - P) z: kernel components removed.
inline Vec support_part(const SpectralGaussian &g, const Vec &z) {
    Vec out = z;
    for (int k = 0; k < g.dim(); ++k)
        if (!g.in_support(k)) out(k) = 0.0;
    return out;
}

inline double white_noise(const SpectralGaussian &g, const Vec &z, const Vec &x) {
    double s = 0.0;
    for (int k = 0; k < g.dim(); ++k)
        if (g.in_support(k)) s += x(k) * z(k) / std::sqrt(g.eigenvalue(k));
    return s;
}

inline double exp_functional(const SpectralGaussian &g, const Vec &z, const Vec &x) {
    return std::exp(white_noise(g, z, x) - 0.5 * support_part(g, z).squaredNorm());
}

/// Density of N(h, Q) with respect to N(0, Q).
inline double cameron_martin_density(const SpectralGaussian &g, const Vec &h, const Vec &x) {
    Vec a = pinv_sqrt_apply(g, h);
    return std::exp(-0.5 * a.squaredNorm() + white_noise(g, a, x));
}

/// Draw number `i` of the counter-based stream.
inline Vec sample_one(const SpectralGaussian &g, std::uint64_t seed, std::uint64_t i) {
    return sqrt_apply(g, standard_normal(seed, i, g.dim()));
}

inline std::vector<Vec> sample(const SpectralGaussian &g, std::uint64_t seed, std::size_t n) {
    if (n < 1) throw PreconditionViolated("sample needs n >= 1");
    std::vector<Vec> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_one(g, seed, i));
    return out;
}

/// E_g f by the scheme. Gauss-Hermite integrates only over the support.
inline Estimate expectation(const SpectralGaussian &g, const std::function<double(const Vec &)> &f,
                            const QuadScheme &scheme) {
    auto supp = g.support_indices();
    Vec sd = g.eigenvalues().cwiseSqrt();
    int r = int(supp.size());
    auto lift = [&](const Vec &u) {
        Vec x = Vec::Zero(g.dim());
        for (int j = 0; j < r; ++j) x(supp[j]) = sd(supp[j]) * u(j);
        return f(x);
    };
    return standard_gaussian_expectation(r, lift, scheme);
}

/// Smallest C with |L1^T x| <= C |L2^T x|. Throws Incomparable when
/// Range(L1) is not contained in Range(L2).
inline double range_ratio_norm(const LinearMap &L1, const LinearMap &L2, double tol = 1e-10) {
    if (L1.matrix.rows() != L2.matrix.rows()) throw PreconditionViolated("outer dimensions differ");
    Eigen::CompleteOrthogonalDecomposition<Mat> cod;
    cod.setThreshold(1e-12);
    cod.compute(L2.matrix);
    double mx = L2.matrix.size() ? L2.matrix.cwiseAbs().maxCoeff() : 0.0;
    Mat X = cod.solve(L1.matrix);
    Mat resid = L2.matrix * X - L1.matrix;
    double scale = std::max({1.0, L1.matrix.norm(), mx});
    if (resid.norm() > tol * scale) throw Incomparable("range inclusion fails");
    if (X.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Mat>(X).singularValues()(0);
}

}  // namespace gsq
