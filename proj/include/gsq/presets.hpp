#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "gsq/errors.hpp"
#include "gsq/ou.hpp"

namespace gsq {

/// int_0^t arctan|r| dr.
inline double arctan_abs_antiderivative(double t) {
    double a = std::abs(t);
    double v = a * std::atan(a) - 0.5 * std::log1p(a * a);
    return t < 0.0 ? -v : v;
}

/// a_k(t) = -k^2 (arctan|t| + c1), b_k(t) = sin(kt) + c2 (0 at t = -m pi).
inline OUModel diag_arctan_preset(double c1, double c2, int d) {
    if (!(c1 > 0.0) || !(c2 > 1.0) || d < 1) throw PreconditionViolated("diag_arctan needs c1 > 0, c2 > 1, d >= 1");
    std::vector<DiagonalFamily::Mode> modes;
    std::vector<ScalarFn> noise;
    Vec rates(d), bounds(d);
    for (int k = 1; k <= d; ++k) {
        double k2 = double(k) * k;
        modes.push_back({[k2, c1](double t) { return -k2 * (std::atan(std::abs(t)) + c1); },
                         [k2, c1](double t) { return -k2 * (arctan_abs_antiderivative(t) + c1 * t); }});
        noise.push_back([k, c2](double t) {
            if (t <= 0.0 && std::remainder(t, std::numbers::pi) == 0.0) return 0.0;
            return std::sin(k * t) + c2;
        });
        rates(k - 1) = -k2 * c1;
        bounds(k - 1) = 1.0 + c2;
    }
    OUModel m("diag_arctan", std::make_shared<DiagonalFamily>(std::move(modes)),
              std::make_shared<DiagonalNoise>(std::move(noise), bounds), -c1);
    m.with_mode_constants(rates, bounds).with_kinks({0.0});
    return m;
}

/// Scalar family a(t) I with per-mode noise.
struct MalliavinSpec {
    ScalarFn rate;
    ScalarFn antiderivative;  // optional
    double a0 = -1.0;         // sup a
    std::vector<ScalarFn> b_modes;
    Vec b_bounds;             // sup |b_k|
    double C_t = 1.0;         // |B(s)x| <= C_t |B(t)x|
};

inline void verify_malliavin_bound(const OUModel &m, double a0, double C_t) {
    const double grid[][2] = {{0.0, 0.5}, {-1.0, 1.0}, {0.0, 3.0}, {2.0, 2.25}};
    for (const auto &st : grid) {
        double s = st[0], t = st[1];
        double n = norm_u_cm(m, s, t);
        double b = std::min(1.0, C_t * std::exp(a0 * (t - s)));
        if (!(n < 1.0) || n > b * (1.0 + 1e-10))
            throw HypothesisFailed("Cameron-Martin norm above min{1, C e^{a0(t-s)}} at (s,t) = (" +
                                   std::to_string(s) + ", " + std::to_string(t) + ")");
    }
}

inline OUModel malliavin_preset(const MalliavinSpec &spec, int d) {
    if (!(spec.a0 < 0.0)) throw PreconditionViolated("malliavin preset needs sup a < 0");
    if (int(spec.b_modes.size()) != d || spec.b_bounds.size() != d)
        throw PreconditionViolated("noise modes must match dimension");
    std::vector<DiagonalFamily::Mode> modes(d, DiagonalFamily::Mode{spec.rate, spec.antiderivative});
    OUModel m("malliavin", std::make_shared<DiagonalFamily>(std::move(modes)),
              std::make_shared<DiagonalNoise>(spec.b_modes, spec.b_bounds), spec.a0);
    m.with_mode_constants(Vec::Constant(d, spec.a0), spec.b_bounds);
    verify_malliavin_bound(m, spec.a0, spec.C_t);
    return m;
}

/// a(t) = lambda, b_k = b (constant) for every mode.
inline OUModel malliavin_constant_preset(double lambda, double b, int d) {
    MalliavinSpec spec;
    spec.rate = [lambda](double) { return lambda; };
    spec.antiderivative = [lambda](double t) { return lambda * t; };
    spec.a0 = lambda;
    spec.b_modes.assign(d, [b](double) { return b; });
    spec.b_bounds = Vec::Constant(d, std::abs(b));
    spec.C_t = 1.0;
    return malliavin_preset(spec, d);
}

/// a_k = lambda, b_k = 1.
inline OUModel constant_diagonal_preset(double lambda, int d) {
    if (!(lambda < 0.0)) throw PreconditionViolated("constant diagonal model needs lambda < 0");
    std::vector<DiagonalFamily::Mode> modes(
        d, DiagonalFamily::Mode{[lambda](double) { return lambda; }, [lambda](double t) { return lambda * t; }});
    std::vector<ScalarFn> noise(d, [](double) { return 1.0; });
    OUModel m("constant_diagonal", std::make_shared<DiagonalFamily>(std::move(modes)),
              std::make_shared<DiagonalNoise>(std::move(noise), Vec::Ones(d)), lambda);
    m.with_mode_constants(Vec::Constant(d, lambda), Vec::Ones(d));
    return m;
}

/// Dirichlet Laplacian on (0, pi) in the sine basis: a_k = -k^2,
/// b_k = k^{-2 gamma}.
inline OUModel heat1d_preset(double gamma_exp, int d) {
    if (!(gamma_exp >= 0.0 && gamma_exp < 1.0) || d < 1) throw PreconditionViolated("heat1d needs 0 <= gamma < 1");
    std::vector<DiagonalFamily::Mode> modes;
    std::vector<ScalarFn> noise;
    Vec rates(d), bounds(d);
    for (int k = 1; k <= d; ++k) {
        double k2 = double(k) * k;
        double bk = std::pow(double(k), -2.0 * gamma_exp);
        modes.push_back({[k2](double) { return -k2; }, [k2](double t) { return -k2 * t; }});
        noise.push_back([bk](double) { return bk; });
        rates(k - 1) = -k2;
        bounds(k - 1) = bk;
    }
    OUModel m("heat1d", std::make_shared<DiagonalFamily>(std::move(modes)),
              std::make_shared<DiagonalNoise>(std::move(noise), bounds), -1.0);
    m.with_mode_constants(rates, bounds);
    return m;
}

}  // namespace gsq
