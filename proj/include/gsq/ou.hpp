#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gsq/chaos.hpp"
#include "gsq/errors.hpp"
#include "gsq/gaussian.hpp"
#include "gsq/numerics.hpp"
#include "gsq/second_quant.hpp"

namespace gsq {

using ScalarFn = std::function<double(double)>;

/// Two-parameter evolution operators u(t, s), t >= s.
class EvolutionFamily {
public:
    virtual ~EvolutionFamily() = default;
    virtual int dim() const = 0;
    virtual Mat u(double t, double s) const = 0;
    virtual bool diagonal() const { return false; }
    /// Diagonal entries when diagonal().
    virtual Vec u_diag(double t, double s) const { return u(t, s).diagonal(); }
};

/// u(t, s) = diag(exp(int_s^t a_k)).
class DiagonalFamily final : public EvolutionFamily {
public:
    struct Mode {
        ScalarFn rate;
        ScalarFn antiderivative;  // optional; numeric integration otherwise
    };

    explicit DiagonalFamily(std::vector<Mode> modes) : modes_(std::move(modes)) {
        auto [x, w] = gl_nodes(20);
        x_ = std::move(x);
        w_ = std::move(w);
    }

    int dim() const override { return int(modes_.size()); }
    bool diagonal() const override { return true; }

    double log_u(int k, double t, double s) const {
        if (t == s) return 0.0;
        const Mode &m = modes_[k];
        if (m.antiderivative) return m.antiderivative(t) - m.antiderivative(s);
        // composite 20-point Gauss-Legendre on unit-length panels
        int panels = std::max(1, int(std::ceil(std::abs(t - s))));
        double h = (t - s) / panels, acc = 0.0;
        for (int p = 0; p < panels; ++p) {
            double a = s + p * h;
            for (std::size_t i = 0; i < x_.size(); ++i) acc += w_[i] * m.rate(a + 0.5 * h * (x_[i] + 1.0));
        }
        return 0.5 * h * acc;
    }

    Vec u_diag(double t, double s) const override {
        Vec v(dim());
        for (int k = 0; k < dim(); ++k) v(k) = std::exp(log_u(k, t, s));
        return v;
    }
    Mat u(double t, double s) const override { return u_diag(t, s).asDiagonal(); }

private:
    std::vector<Mode> modes_;
    std::vector<double> x_, w_;
};

/// Matrix-valued family supplied by the caller.
class MatrixFamily final : public EvolutionFamily {
public:
    MatrixFamily(int d, std::function<Mat(double, double)> u) : d_(d), u_(std::move(u)) {}
    int dim() const override { return d_; }
    Mat u(double t, double s) const override {
        if (t == s) return Mat::Identity(d_, d_);
        return u_(t, s);
    }

private:
    int d_;
    std::function<Mat(double, double)> u_;
};

class NoiseFamily {
public:
    virtual ~NoiseFamily() = default;
    virtual int dim() const = 0;
    virtual Mat b(double t) const = 0;
    virtual bool diagonal() const { return false; }
    virtual Vec b_diag(double t) const { return b(t).diagonal(); }
    /// Uniform bound sup_t |b(t)|.
    virtual double bound() const = 0;
};

class DiagonalNoise final : public NoiseFamily {
public:
    DiagonalNoise(std::vector<ScalarFn> modes, Vec bounds) : modes_(std::move(modes)), bounds_(std::move(bounds)) {}
    int dim() const override { return int(modes_.size()); }
    bool diagonal() const override { return true; }
    Vec b_diag(double t) const override {
        Vec v(dim());
        for (int k = 0; k < dim(); ++k) v(k) = modes_[k](t);
        return v;
    }
    Mat b(double t) const override { return b_diag(t).asDiagonal(); }
    double bound() const override { return bounds_.size() ? bounds_.maxCoeff() : 0.0; }
    const Vec &mode_bounds() const { return bounds_; }

private:
    std::vector<ScalarFn> modes_;
    Vec bounds_;
};

class MatrixNoise final : public NoiseFamily {
public:
    MatrixNoise(int d, std::function<Mat(double)> b, double K) : d_(d), b_(std::move(b)), K_(K) {}
    int dim() const override { return d_; }
    Mat b(double t) const override { return b_(t); }
    double bound() const override { return K_; }

private:
    int d_;
    std::function<Mat(double)> b_;
    double K_;
};

struct TailCertified {
    Mat Q;
    double tail_cert = 0.0;
    double s_min = 0.0;
};

/// Evolution family, noise family and the decay data used to truncate the
/// integral over (-inf, t].
class OUModel {
public:
    OUModel(std::string name, std::shared_ptr<const EvolutionFamily> family, std::shared_ptr<const NoiseFamily> noise,
            double lambda0)
        : name_(std::move(name)), family_(std::move(family)), noise_(std::move(noise)), lambda0_(lambda0),
          cache_(std::make_shared<Cache>()) {
        if (family_->dim() != noise_->dim()) throw PreconditionViolated("family and noise dimensions differ");
    }

    const std::string &name() const { return name_; }
    int dim() const { return family_->dim(); }
    const EvolutionFamily &family() const { return *family_; }
    const NoiseFamily &noise() const { return *noise_; }
    double lambda0() const { return lambda0_; }
    bool diagonal() const { return family_->diagonal() && noise_->diagonal(); }

    /// Per-mode sup a_k and sup |b_k| for the sharper diagonal tail bound.
    OUModel &with_mode_constants(Vec rates, Vec bounds) {
        mode_rates_ = std::move(rates);
        mode_bounds_ = std::move(bounds);
        return *this;
    }
    const std::optional<Vec> &mode_rates() const { return mode_rates_; }
    const std::optional<Vec> &mode_bounds() const { return mode_bounds_; }

    /// Points where the coefficients are not smooth; used as panel breaks.
    OUModel &with_kinks(std::vector<double> k) {
        kinks_ = std::move(k);
        return *this;
    }
    const std::vector<double> &kinks() const { return kinks_; }

    /// Time-quadrature settings.
    OUModel &with_time_quadrature(int order, int max_refine) {
        order_ = order;
        max_refine_ = max_refine;
        return *this;
    }
    int order() const { return order_; }
    int max_refine() const { return max_refine_; }

    /// Analytic upper bound on Trace Q(t, -inf) - Trace Q(t, s), L = t - s.
    double tail_bound(double L) const {
        if (mode_rates_ && mode_bounds_) {
            double s = 0.0;
            for (int k = 0; k < mode_rates_->size(); ++k) {
                double lk = (*mode_rates_)(k), Kk = (*mode_bounds_)(k);
                s += Kk * Kk / (2.0 * std::abs(lk)) * std::exp(2.0 * lk * L);
            }
            return s;
        }
        double K = noise_->bound();
        return dim() * K * K / (2.0 * std::abs(lambda0_)) * std::exp(2.0 * lambda0_ * L);
    }

    std::optional<TailCertified> cached(double t, double tol) const {
        std::lock_guard<std::mutex> lk(cache_->m);
        auto it = cache_->q_inf.find({t, tol});
        if (it == cache_->q_inf.end()) return std::nullopt;
        return it->second;
    }
    void store(double t, double tol, const TailCertified &v) const {
        std::lock_guard<std::mutex> lk(cache_->m);
        cache_->q_inf.emplace(std::make_pair(t, tol), v);
    }

private:
    struct Cache {
        std::mutex m;
        std::map<std::pair<double, double>, TailCertified> q_inf;
    };

    std::string name_;
    std::shared_ptr<const EvolutionFamily> family_;
    std::shared_ptr<const NoiseFamily> noise_;
    double lambda0_;
    std::optional<Vec> mode_rates_, mode_bounds_;
    std::vector<double> kinks_;
    int order_ = 10;
    int max_refine_ = 14;
    std::shared_ptr<Cache> cache_;
};

namespace detail {

// Breakpoints on [s, t], geometrically graded toward t (where the integrand
// concentrates for fast modes) plus the model's kinks.
inline std::vector<double> time_breaks(const OUModel &m, double s, double t) {
    std::vector<double> b{s, t};
    double L = t - s;
    for (double d = L / 2.0; d > 1.0 / 256.0; d /= 2.0) b.push_back(t - d);
    for (double k : m.kinks())
        if (k > s && k < t) b.push_back(k);
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
}

inline Mat integrand(const OUModel &m, double t, double r) {
    if (m.diagonal()) {
        Vec u = m.family().u_diag(t, r);
        Vec b = m.noise().b_diag(r);
        return (u.cwiseProduct(b).cwiseAbs2()).asDiagonal();
    }
    Mat U = m.family().u(t, r);
    Mat B = m.noise().b(r);
    Mat UB = U * B;
    return UB * UB.transpose();
}

inline Mat panel_quadrature(const OUModel &m, double t, const std::vector<double> &breaks, int refine,
                            const std::vector<double> &x, const std::vector<double> &w) {
    int d = m.dim();
    Mat acc = Mat::Zero(d, d);
    int sub = 1 << refine;
    for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
        double h = (breaks[p + 1] - breaks[p]) / sub;
        for (int j = 0; j < sub; ++j) {
            double a = breaks[p] + j * h;
            for (std::size_t i = 0; i < x.size(); ++i)
                acc += (0.5 * h * w[i]) * integrand(m, t, a + 0.5 * h * (x[i] + 1.0));
        }
    }
    return acc;
}

}  // namespace detail

/// Q(t, s) = int_s^t u(t,r) b(r) b(r)^T u(t,r)^T dr by composite
/// Gauss-Legendre with panel doubling.
inline Mat q_ts(const OUModel &m, double s, double t) {
    if (s > t) throw PreconditionViolated("q_ts needs s <= t");
    int d = m.dim();
    if (s == t) return Mat::Zero(d, d);
    auto [x, w] = gl_nodes(m.order());
    auto breaks = detail::time_breaks(m, s, t);
    Mat prev = detail::panel_quadrature(m, t, breaks, 0, x, w);
    for (int j = 1; j <= m.max_refine(); ++j) {
        Mat cur = detail::panel_quadrature(m, t, breaks, j, x, w);
        double dtr = std::abs(cur.trace() - prev.trace());
        if (dtr < 1e-10 * std::max(1.0, std::abs(cur.trace()))) {
            Mat sym = 0.5 * (cur + cur.transpose());
            return sym;
        }
        prev = std::move(cur);
    }
    throw QuadratureFailure("panel refinement did not converge on [" + std::to_string(s) + ", " +
                            std::to_string(t) + "]");
}

/// Q(t, -inf) truncated at s_min where the analytic trace tail drops below tol.
inline TailCertified q_t_inf(const OUModel &m, double t, double tol = 1e-12) {
    if (!(m.lambda0() < 0.0)) throw NoDecay("lambda0 must be negative");
    if (m.mode_rates())
        for (int k = 0; k < m.mode_rates()->size(); ++k)
            if (!((*m.mode_rates())(k) < 0.0)) throw NoDecay("mode rate must be negative");
    if (auto c = m.cached(t, tol)) return *c;
    double lo = 0.0, hi = 1.0;
    while (m.tail_bound(hi) >= tol) {
        hi *= 2.0;
        if (hi > 1e8) throw NoDecay("tail bound does not fall below tolerance");
    }
    for (int it = 0; it < 100 && hi - lo > 1e-9 * hi; ++it) {
        double mid = 0.5 * (lo + hi);
        (m.tail_bound(mid) < tol ? hi : lo) = mid;
    }
    TailCertified r;
    r.s_min = t - hi;
    r.Q = q_ts(m, r.s_min, t);
    r.tail_cert = m.tail_bound(hi);
    m.store(t, tol, r);
    return r;
}

/// gamma_t = N(0, Q(t, -inf)); the covariance must be diagonal.
inline SpectralGaussian measure_at(const OUModel &m, double t, double tol = 1e-12) {
    Mat Q = q_t_inf(m, t, tol).Q;
    Mat off = Q;
    off.diagonal().setZero();
    double scale = Q.diagonal().cwiseAbs().maxCoeff();
    if (off.cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1e-300))
        throw PreconditionViolated("Q(t,-inf) is not diagonal in canonical coordinates");
    return SpectralGaussian(Q.diagonal().cwiseMax(0.0));
}

/// Symmetric square-root factor L (d x r) of a PSD matrix, rank-trimmed.
inline Mat psd_factor(const Mat &Q) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Q + Q.transpose()));
    const Vec &ev = es.eigenvalues();
    double mx = ev.size() ? std::max(0.0, ev.maxCoeff()) : 0.0;
    std::vector<int> keep;
    for (int k = 0; k < ev.size(); ++k)
        if (ev(k) > 1e-14 * mx && ev(k) > 0.0) keep.push_back(k);
    Mat L(Q.rows(), Eigen::Index(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j)
        L.col(Eigen::Index(j)) = es.eigenvectors().col(keep[j]) * std::sqrt(ev(keep[j]));
    return L;
}

/// Mean map and covariance factor of the transition N(u(t,s) x, Q(t,s)).
struct PstKernel {
    Mat U;
    Mat L;
};

inline PstKernel pst_kernel(const OUModel &m, double s, double t) {
    if (s > t) throw PreconditionViolated("P_{s,t} needs s <= t");
    if (s == t) return {Mat::Identity(m.dim(), m.dim()), Mat(m.dim(), 0)};
    return {m.family().u(t, s), psd_factor(q_ts(m, s, t))};
}

inline Estimate pst_estimate(const PstKernel &k, const Evaluable &f, const Vec &x, const QuadScheme &scheme) {
    if (k.L.cols() == 0) return {f(k.U * x), 0.0};
    Vec mean = k.U * x;
    return standard_gaussian_expectation(int(k.L.cols()), [&](const Vec &g) { return f(mean + k.L * g); }, scheme);
}

/// P_{s,t} f (x) = E f(u(t,s) x + Q(t,s)^{1/2} g).
inline Estimate pst_estimate(const OUModel &m, const Evaluable &f, double s, double t, const Vec &x,
                             const QuadScheme &scheme) {
    if (s == t) return {f(x), 0.0};
    return pst_estimate(pst_kernel(m, s, t), f, x, scheme);
}

inline double pst_apply(const OUModel &m, const Evaluable &f, double s, double t, const Vec &x,
                        const QuadScheme &scheme) {
    return pst_estimate(m, f, s, t, x, scheme).mean;
}

/// V = Q(t,-inf)^{-1/2} u(t,s) Q(s,-inf)^{1/2} on the supports.
inline Mat pst_v(const OUModel &m, double s, double t, double tol = 1e-12) {
    SpectralGaussian gt = measure_at(m, t, tol), gs = measure_at(m, s, tol);
    Mat U = m.family().u(t, s);
    int d = m.dim();
    Mat V = Mat::Zero(d, d);
    for (int n = 0; n < d; ++n) {
        if (!gt.in_support(n)) continue;
        for (int k = 0; k < d; ++k)
            if (gs.in_support(k)) V(n, k) = U(n, k) * std::sqrt(gs.eigenvalue(k) / gt.eigenvalue(n));
    }
    return V;
}

/// L = (u(t,s) restricted to H_s)^*: H_t -> H_s as a contraction from
/// gamma_t to gamma_s with matrix V^T.
inline CMContraction pst_contraction(const OUModel &m, double s, double t, double tol = 1e-12) {
    if (s > t) throw PreconditionViolated("pst_contraction needs s <= t");
    SpectralGaussian gt = measure_at(m, t, tol), gs = measure_at(m, s, tol);
    CMContraction L(gt, gs, pst_v(m, s, t, tol).transpose());
    if (op_norm(L) > 1.0 + 1e-10)
        throw NotContraction("Cameron-Martin norm of u(" + std::to_string(t) + "," + std::to_string(s) +
                             ") is " + std::to_string(op_norm(L)));
    return L;
}

inline double norm_u_cm(const OUModel &m, double s, double t, double tol = 1e-12) {
    return op_norm(pst_contraction(m, s, t, tol));
}

/// P_{s,t} f through Gamma_{gamma_s, gamma_t}(L).
inline double pst_via_second_quant(const OUModel &m, const Evaluable &f, double s, double t, const Vec &x,
                                   const QuadScheme &scheme) {
    if (s == t) return f(x);
    CMContraction L = pst_contraction(m, s, t);
    // clamp rounding above 1 so the Gamma-level contraction check applies
    if (op_norm(L) > 1.0) L = CMContraction(L.mu(), L.nu(), L.M() / op_norm(L));
    return gamma_integral_apply(L, f, x, scheme);
}

/// Chaos-input variant: the image expansion over gamma_s.
inline ChaosExpansion pst_via_second_quant(const OUModel &m, const ChaosExpansion &e, double s, double t) {
    CMContraction L = pst_contraction(m, s, t);
    if (op_norm(L) > 1.0) L = CMContraction(L.mu(), L.nu(), L.M() / op_norm(L));
    return gamma_series_apply(L, e);
}

inline double hyper_threshold(const OUModel &m, double s, double t, double p) {
    if (s == t) return q0_threshold(1.0, p);
    return q0_threshold(pst_contraction(m, s, t), p);
}

inline double mean_functional(const OUModel &m, const Evaluable &f, double t, const QuadScheme &scheme) {
    return expectation(measure_at(m, t), f, scheme).mean;
}

/// |P_{s,t} f - m_t(f)|_{L^p(gamma_s)} / |f|_{L^p(gamma_t)}.
inline double decay_ratio(const OUModel &m, const Evaluable &f, double p, double s, double t,
                          const QuadScheme &scheme) {
    if (!(p >= 1.0)) throw PreconditionViolated("decay_ratio needs p >= 1");
    SpectralGaussian gs = measure_at(m, s), gt = measure_at(m, t);
    double mt = expectation(gt, f, scheme).mean;
    QuadScheme inner = scheme;
    if (inner.kind == QuadScheme::Kind::monte_carlo) inner = QuadScheme::gauss_hermite(8);
    PstKernel k = pst_kernel(m, s, t);
    double num =
        expectation(
            gs, [&](const Vec &x) { return std::pow(std::abs(pst_estimate(k, f, x, inner).mean - mt), p); }, scheme)
            .mean;
    double den = lp_norm(gt, f, p, scheme);
    if (den == 0.0) return 0.0;
    return std::pow(num, 1.0 / p) / den;
}

struct BignaminiReport {
    double s = 0, t = 0;
    double norm_cm = 0;      // |u(t,s)| in L(H_s-spaces), computed
    double bound = 0;        // M e^{-omega (t-s)} / (t-s)^alpha
    double margin_one = 0;   // 1 - norm_cm
    double margin_bound = 0; // bound - norm_cm
    double h_norm = 0;       // |Q(t)^{-1/2} u Q(s)^{1/2}|, infinity when ranges fail
    bool hypothesis_verified = false;
};

inline BignaminiReport bignamini_check(const OUModel &m, double s, double t, double M, double omega, double alpha) {
    if (!(s < t)) throw PreconditionViolated("bignamini_check needs s < t");
    BignaminiReport r;
    r.s = s;
    r.t = t;
    double tau = t - s;
    r.norm_cm = norm_u_cm(m, s, t);
    r.bound = M * std::exp(-omega * tau) / std::pow(tau, alpha);
    r.margin_one = 1.0 - r.norm_cm;
    r.margin_bound = r.bound - r.norm_cm;
    Mat U = m.family().u(t, s);
    Mat Bt = m.noise().b(t), Bs = m.noise().b(s);
    auto root = [](const Mat &Q) {
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Q + Q.transpose()));
        return Mat(es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                   es.eigenvectors().transpose());
    };
    try {
        r.h_norm = range_ratio_norm(LinearMap{U * root(Bs * Bs.transpose())}, LinearMap{root(Bt * Bt.transpose())});
    } catch (const Incomparable &) {
        r.h_norm = std::numeric_limits<double>::infinity();
    }
    r.hypothesis_verified = r.h_norm <= r.bound * (1.0 + 1e-10);
    if (!(r.norm_cm < 1.0) || r.norm_cm > r.bound * (1.0 + 1e-10))
        throw HypothesisFailed("bound violated at (s,t) = (" + std::to_string(s) + ", " + std::to_string(t) + ")");
    return r;
}

}  // namespace gsq
