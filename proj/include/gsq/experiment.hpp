#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gsq/chaos.hpp"
#include "gsq/errors.hpp"
#include "gsq/gaussian.hpp"
#include "gsq/numerics.hpp"
#include "gsq/ou.hpp"
#include "gsq/presets.hpp"
#include "gsq/second_quant.hpp"

namespace gsq {

using nlohmann::json;

namespace detail {

inline void reject_unknown(const json &j, std::initializer_list<const char *> allowed, const std::string &where) {
    if (!j.is_object()) throw ConfigInvalid(where + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw ConfigInvalid("unknown key '" + it.key() + "' in " + where);
}

template <class T>
T get_or(const json &j, const char *key, T dflt) {
    if (!j.contains(key)) return dflt;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &e) {
        throw ConfigInvalid(std::string("bad value for '") + key + "': " + e.what());
    }
}

// A list of numbers, or {"from", "to", "count"} for an evenly spaced grid.
inline std::vector<double> number_list(const json &j, const std::string &where) {
    if (j.is_number()) return {j.get<double>()};
    if (j.is_array()) {
        std::vector<double> v;
        for (const auto &e : j) {
            if (!e.is_number()) throw ConfigInvalid(where + " must hold numbers");
            v.push_back(e.get<double>());
        }
        return v;
    }
    if (j.is_object()) {
        reject_unknown(j, {"from", "to", "count"}, where);
        double a = j.at("from").get<double>(), b = j.at("to").get<double>();
        int n = j.at("count").get<int>();
        if (n < 1) throw ConfigInvalid(where + ".count must be >= 1");
        std::vector<double> v;
        for (int i = 0; i < n; ++i) v.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
        return v;
    }
    throw ConfigInvalid(where + " must be a number, list or range");
}

}  // namespace detail

/// Parsed and validated experiment configuration.
struct ExperimentConfig {
    json model = json{{"preset", "diag_arctan"}, {"c1", 1.0}, {"c2", 2.0}, {"d", 3}};
    std::vector<double> s{0.0}, t{0.1, 1.0, 5.0}, p{2.0};
    QuadScheme scheme = QuadScheme::gauss_hermite(8);
    std::optional<Polynomial> test_function;
    std::optional<CMContraction> contraction;
    std::vector<int> hs_N{10, 20, 40};
    // mehler-demo
    std::optional<SpectralGaussian> mehler_measure;
    std::vector<double> mehler_t{0.1, 0.5, 1.0, 2.0};
    std::vector<Vec> mehler_points;
    std::string output;
};

inline OUModel build_model(const json &j) {
    detail::reject_unknown(j, {"preset", "c1", "c2", "d", "lambda", "b", "gamma", "rates", "noise"}, "model");
    std::string preset = j.at("preset").get<std::string>();
    auto need = [&](std::initializer_list<const char *> keys) {
        std::set<std::string> ok(keys.begin(), keys.end());
        ok.insert("preset");
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!ok.count(it.key())) throw ConfigInvalid("key '" + it.key() + "' not used by preset " + preset);
    };
    try {
        if (preset == "diag_arctan") {
            need({"c1", "c2", "d"});
            return diag_arctan_preset(detail::get_or(j, "c1", 1.0), detail::get_or(j, "c2", 2.0),
                                      detail::get_or(j, "d", 3));
        }
        if (preset == "malliavin_constant") {
            need({"lambda", "b", "d"});
            return malliavin_constant_preset(detail::get_or(j, "lambda", -1.0), detail::get_or(j, "b", 1.0),
                                             detail::get_or(j, "d", 2));
        }
        if (preset == "constant_diagonal") {
            need({"lambda", "d"});
            return constant_diagonal_preset(detail::get_or(j, "lambda", -1.0), detail::get_or(j, "d", 2));
        }
        if (preset == "heat1d") {
            need({"gamma", "d"});
            return heat1d_preset(detail::get_or(j, "gamma", 0.0), detail::get_or(j, "d", 4));
        }
        if (preset == "diagonal") {
            // inline constant-coefficient diagonal model
            need({"rates", "noise"});
            auto a = j.at("rates").get<std::vector<double>>();
            auto b = j.at("noise").get<std::vector<double>>();
            if (a.size() != b.size() || a.empty()) throw ConfigInvalid("rates and noise must have equal length");
            int d = int(a.size());
            std::vector<DiagonalFamily::Mode> modes;
            std::vector<ScalarFn> noise;
            Vec rates(d), bounds(d);
            for (int k = 0; k < d; ++k) {
                double ak = a[k], bk = b[k];
                if (!(ak < 0.0)) throw ConfigInvalid("inline rates must be negative");
                modes.push_back({[ak](double) { return ak; }, [ak](double tt) { return ak * tt; }});
                noise.push_back([bk](double) { return bk; });
                rates(k) = ak;
                bounds(k) = std::abs(bk);
            }
            OUModel m("diagonal", std::make_shared<DiagonalFamily>(std::move(modes)),
                      std::make_shared<DiagonalNoise>(std::move(noise), bounds), rates.maxCoeff());
            m.with_mode_constants(rates, bounds);
            return m;
        }
    } catch (const json::exception &e) {
        throw ConfigInvalid(std::string("model: ") + e.what());
    } catch (const PreconditionViolated &e) {
        throw ConfigInvalid(std::string("model: ") + e.what());
    }
    throw ConfigInvalid("unknown preset '" + preset + "'");
}

inline QuadScheme parse_scheme(const json &j) {
    detail::reject_unknown(j, {"kind", "nodes", "samples", "seed", "tolerance"}, "scheme");
    std::string kind = j.at("kind").get<std::string>();
    QuadScheme s;
    if (kind == "gauss_hermite") {
        s = QuadScheme::gauss_hermite(detail::get_or(j, "nodes", 8));
        if (s.nodes < 1 || s.nodes > 128) throw ConfigInvalid("nodes must be in [1, 128]");
    } else if (kind == "monte_carlo") {
        s = QuadScheme::monte_carlo(detail::get_or<std::size_t>(j, "samples", 100000),
                                    detail::get_or<std::uint64_t>(j, "seed", 0));
        if (s.samples < 2) throw ConfigInvalid("samples must be >= 2");
    } else {
        throw ConfigInvalid("unknown scheme kind '" + kind + "'");
    }
    s.tolerance = detail::get_or(j, "tolerance", 0.0);
    return s;
}

inline ExperimentConfig parse_config(const json &j) {
    detail::reject_unknown(j, {"model", "sweep", "scheme", "test_function", "contraction", "hs", "mehler", "output"},
                           "config");
    ExperimentConfig c;
    try {
        if (j.contains("model")) {
            c.model = j.at("model");
            build_model(c.model);  // validate eagerly
        }
        if (j.contains("sweep")) {
            const json &sw = j.at("sweep");
            detail::reject_unknown(sw, {"s", "t", "p"}, "sweep");
            if (sw.contains("s")) c.s = detail::number_list(sw.at("s"), "sweep.s");
            if (sw.contains("t")) c.t = detail::number_list(sw.at("t"), "sweep.t");
            if (sw.contains("p")) c.p = detail::number_list(sw.at("p"), "sweep.p");
            for (double p : c.p)
                if (!(p > 1.0)) throw ConfigInvalid("sweep.p entries must exceed 1");
        }
        if (j.contains("scheme")) c.scheme = parse_scheme(j.at("scheme"));
        if (j.contains("test_function")) c.test_function = j.at("test_function").get<Polynomial>();
        if (j.contains("contraction")) c.contraction = j.at("contraction").get<CMContraction>();
        if (j.contains("hs")) {
            detail::reject_unknown(j.at("hs"), {"N"}, "hs");
            c.hs_N = j.at("hs").at("N").get<std::vector<int>>();
        }
        if (j.contains("mehler")) {
            const json &mj = j.at("mehler");
            detail::reject_unknown(mj, {"measure", "t", "points"}, "mehler");
            if (mj.contains("measure")) c.mehler_measure = mj.at("measure").get<SpectralGaussian>();
            if (mj.contains("t")) c.mehler_t = detail::number_list(mj.at("t"), "mehler.t");
            if (mj.contains("points"))
                for (const auto &pt : mj.at("points")) {
                    auto v = pt.get<std::vector<double>>();
                    c.mehler_points.push_back(Eigen::Map<Vec>(v.data(), Eigen::Index(v.size())));
                }
        }
        if (j.contains("output")) c.output = j.at("output").get<std::string>();
    } catch (const json::exception &e) {
        throw ConfigInvalid(e.what());
    } catch (const PreconditionViolated &e) {
        throw ConfigInvalid(e.what());
    }
    return c;
}

inline ExperimentConfig parse_config_text(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw ConfigInvalid(std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

/// RFC-4180 CSV with 17 significant digits and CRLF records.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : ncols_(header.size()) { row_strings(header); }

    void row(const std::vector<double> &v) {
        if (v.size() != ncols_) throw PreconditionViolated("CSV row width mismatch");
        std::vector<std::string> s;
        for (double x : v) s.push_back(number(x));
        row_strings(s);
    }
    const std::string &str() const { return out_; }

    static std::string number(double x) {
        if (std::isnan(x)) return "nan";
        if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return buf;
    }

private:
    static std::string quote(const std::string &f) {
        if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
        std::string q = "\"";
        for (char c : f) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + "\"";
    }
    void row_strings(const std::vector<std::string> &v) {
        for (std::size_t i = 0; i < v.size(); ++i) out_ += (i ? "," : "") + quote(v[i]);
        out_ += "\r\n";
    }

    std::size_t ncols_;
    std::string out_;
};

/// Runs body(i) for i < n on `threads` workers; results land by index so
/// output order never depends on scheduling.
template <class R>
std::vector<R> parallel_map(std::size_t n, int threads, const std::function<R(std::size_t)> &body) {
    std::vector<R> out(n);
    std::vector<std::exception_ptr> err(n);
    auto run = [&](std::size_t i) {
        try {
            out[i] = body(i);
        } catch (...) {
            err[i] = std::current_exception();
        }
    };
    int nt = std::max(1, threads);
    if (nt == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) run(i);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nt; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < n; i += nt) run(i);
            });
        for (auto &th : pool) th.join();
    }
    for (auto &e : err)
        if (e) std::rethrow_exception(e);
    return out;
}

struct RunOptions {
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

struct CommandResult {
    int exit_code = 0;
    std::string output;   // CSV, or JSON lines for verify
    std::string message;  // diagnostic for stderr
};

namespace detail {

inline std::vector<std::pair<double, double>> st_pairs(const ExperimentConfig &c) {
    std::vector<std::pair<double, double>> v;
    for (double s : c.s)
        for (double t : c.t)
            if (s <= t) v.emplace_back(s, t);
    return v;
}

inline QuadScheme with_options(QuadScheme s, const RunOptions &o) {
    if (o.seed) s.seed = *o.seed;
    s.threads = o.threads;
    return s;
}

// Default test function: a mixed polynomial touching the first two modes.
inline Polynomial default_test_function(int d) {
    Polynomial p{d, {}};
    MultiIndex e(d, 0);
    e[0] = 1;
    p.terms.push_back({1.0, e});
    if (d > 1) {
        MultiIndex e2(d, 0);
        e2[1] = 2;
        p.terms.push_back({0.5, e2});
    }
    MultiIndex e3(d, 0);
    e3[0] = 2;
    p.terms.push_back({-0.25, e3});
    return p;
}

inline double hs_value(const CMContraction &L) {
    if (op_norm(L) >= 1.0 - 1e-12) return std::numeric_limits<double>::infinity();
    return hs_norm_gamma(L, 0).closed_form;
}

}  // namespace detail

inline CommandResult cmd_hyper_scan(const ExperimentConfig &c, const RunOptions &o = {}) {
    OUModel m = build_model(c.model);
    auto pairs = detail::st_pairs(c);
    auto Ls = parallel_map<CMContraction>(pairs.size(), o.threads,
                                          [&](std::size_t i) { return pst_contraction(m, pairs[i].first, pairs[i].second); });
    CsvWriter w({"s", "t", "p", "norm_U", "q0", "witness_diverges_at"});
    for (std::size_t i = 0; i < pairs.size(); ++i)
        for (double p : c.p) {
            double n = op_norm(Ls[i]);
            w.row({pairs[i].first, pairs[i].second, p, n, q0_threshold(n, p), witness_diverges_at(Ls[i], p)});
        }
    return {0, w.str(), ""};
}

inline CommandResult cmd_decay(const ExperimentConfig &c, const RunOptions &o = {}) {
    OUModel m = build_model(c.model);
    Polynomial f = c.test_function ? *c.test_function : detail::default_test_function(m.dim());
    if (f.dim != m.dim()) throw ConfigInvalid("test_function dimension differs from model");
    QuadScheme sc = detail::with_options(c.scheme, o);
    sc.threads = 1;  // cells are already parallel
    auto pairs = detail::st_pairs(c);
    struct Cell {
        double norm = 0, hs = 0, r2 = 0, tail = 0;
        std::vector<double> rp;
    };
    auto cells = parallel_map<Cell>(pairs.size(), o.threads, [&](std::size_t i) {
        auto [s, t] = pairs[i];
        Cell cell;
        if (s == t) {
            cell.norm = 1.0;
            cell.hs = std::numeric_limits<double>::infinity();
        } else {
            CMContraction L = pst_contraction(m, s, t);
            cell.norm = op_norm(L);
            cell.hs = detail::hs_value(L);
        }
        cell.tail = std::max(q_t_inf(m, t).tail_cert, q_t_inf(m, s).tail_cert);
        cell.r2 = decay_ratio(m, f, 2.0, s, t, sc);
        for (double p : c.p) cell.rp.push_back(p == 2.0 ? cell.r2 : decay_ratio(m, f, p, s, t, sc));
        return cell;
    });
    CsvWriter w({"s", "t", "p", "norm_U_cm", "q0", "hs_norm", "decay_ratio_p2", "decay_ratio_p", "tail_cert"});
    for (std::size_t i = 0; i < pairs.size(); ++i)
        for (std::size_t k = 0; k < c.p.size(); ++k) {
            const Cell &cl = cells[i];
            w.row({pairs[i].first, pairs[i].second, c.p[k], cl.norm, q0_threshold(cl.norm, c.p[k]), cl.hs, cl.r2,
                   cl.rp[k], cl.tail});
        }
    return {0, w.str(), ""};
}

inline CommandResult cmd_hs_table(const ExperimentConfig &c, const RunOptions &o = {}) {
    if (c.contraction) {
        CsvWriter w({"N", "partial", "closed_form", "paper_printed", "tail_bound"});
        for (int N : c.hs_N) {
            HSReport r = hs_norm_gamma(*c.contraction, N);
            w.row({double(N), r.partial, r.closed_form, r.paper_printed, r.tail_bound});
        }
        return {0, w.str(), ""};
    }
    OUModel m = build_model(c.model);
    auto pairs = detail::st_pairs(c);
    std::vector<std::pair<double, double>> strict;
    for (auto pr : pairs)
        if (pr.first < pr.second) strict.push_back(pr);
    auto Ls = parallel_map<CMContraction>(strict.size(), o.threads,
                                          [&](std::size_t i) { return pst_contraction(m, strict[i].first, strict[i].second); });
    CsvWriter w({"s", "t", "N", "norm_U_cm", "partial", "closed_form", "paper_printed", "tail_bound"});
    for (std::size_t i = 0; i < strict.size(); ++i)
        for (int N : c.hs_N) {
            HSReport r = hs_norm_gamma(Ls[i], N);
            w.row({strict[i].first, strict[i].second, double(N), op_norm(Ls[i]), r.partial, r.closed_form,
                   r.paper_printed, r.tail_bound});
        }
    return {0, w.str(), ""};
}

/// Classical OU semigroup by direct Gauss-Hermite:
/// E f(e^{-t} x + sqrt(1 - e^{-2t}) y), y ~ mu.
inline double classical_ou(const SpectralGaussian &mu, const Evaluable &f, double t, const Vec &x, int nodes) {
    double c = std::exp(-t), r = std::sqrt(-std::expm1(-2.0 * t));
    return expectation(mu, [&](const Vec &y) { return f(c * x + r * y); }, QuadScheme::gauss_hermite(nodes)).mean;
}

inline CommandResult cmd_mehler_demo(const ExperimentConfig &c, const RunOptions & = {}) {
    SpectralGaussian mu = c.mehler_measure ? *c.mehler_measure : SpectralGaussian(Vec::Ones(2));
    Polynomial f = c.test_function ? *c.test_function : detail::default_test_function(mu.dim());
    if (f.dim != mu.dim()) throw ConfigInvalid("test_function dimension differs from mehler measure");
    std::vector<Vec> pts = c.mehler_points;
    if (pts.empty()) {
        pts.push_back(Vec::Zero(mu.dim()));
        pts.push_back(Vec::Constant(mu.dim(), 0.7));
        Vec v(mu.dim());
        for (int k = 0; k < mu.dim(); ++k) v(k) = (k % 2 ? 1.0 : -1.0) * (1.0 + 0.3 * k);
        pts.push_back(v);
    }
    for (const auto &p : pts)
        if (p.size() != mu.dim()) throw ConfigInvalid("mehler point dimension mismatch");
    int N = std::max(1, f.degree());
    if (N > 12) throw ConfigInvalid("mehler-demo series form needs degree <= 12");
    ChaosExpansion e = project(mu, f, N, QuadScheme::gauss_hermite(N + 2));
    CsvWriter w({"t", "c", "point", "gamma_series", "ou_classical", "abs_dev"});
    double worst = 0.0;
    for (double t : c.mehler_t) {
        double cc = std::exp(-t);
        ChaosExpansion img = gamma_series_apply(scaled_identity(mu, cc), e);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double a = eval_expansion(img, pts[i]);
            double b = classical_ou(mu, f, t, pts[i], N + 2);
            worst = std::max(worst, std::abs(a - b));
            w.row({t, cc, double(i), a, b, std::abs(a - b)});
        }
    }
    CommandResult r{0, w.str(), ""};
    if (worst > 1e-8) {
        r.exit_code = 1;
        r.message = "mehler deviation " + CsvWriter::number(worst) + " above 1e-8";
    }
    return r;
}

/// Invariant suites. Each check emits one JSON line; the first failure stops
/// the run with exit code 1.
inline CommandResult cmd_verify(const ExperimentConfig &c, const RunOptions &o = {}) {
    std::ostringstream out;
    CommandResult res;
    auto emit = [&](const std::string &suite, const std::string &check, double value, double tol, bool pass) {
        json line{{"suite", suite}, {"check", check}, {"value", value}, {"tol", tol}, {"pass", pass}};
        out << line.dump() << "\n";
        return pass;
    };
    auto fail = [&](const std::string &msg) {
        res.exit_code = 1;
        res.message = msg;
        res.output = out.str();
        return res;
    };

    try {
        OUModel m = build_model(c.model);
        int d = m.dim();
        QuadScheme gh = QuadScheme::gauss_hermite(8);
        if (c.scheme.kind == QuadScheme::Kind::gauss_hermite) gh = c.scheme;
        auto pairs = detail::st_pairs(c);
        double t0 = c.t.empty() ? 0.0 : c.t.front();
        SpectralGaussian g = measure_at(m, t0);

        // gaussian_core
        {
            Vec z = Vec::LinSpaced(d, 0.3, 0.9);
            // exp is not a polynomial; a finer rule keeps the quadrature error below tol
            QuadScheme fine = QuadScheme::gauss_hermite(std::max(gh.nodes, d <= 3 ? 24 : 12));
            double mean = expectation(g, [&](const Vec &x) { return exp_functional(g, z, x); }, fine).mean;
            if (!emit("gaussian", "exp_functional_mean", mean, 1e-10, std::abs(mean - 1.0) < 1e-10))
                return fail("exp_functional mean");
            double var = expectation(g, [&](const Vec &x) {
                             double w = white_noise(g, z, x);
                             return w * w;
                         }, gh).mean;
            double want = support_part(g, z).squaredNorm();
            if (!emit("gaussian", "white_noise_variance", var - want, 1e-10, std::abs(var - want) < 1e-10))
                return fail("white noise variance");
        }
        // chaos
        {
            auto idx = support_indices_upto(g, 3);
            QuadScheme sc = QuadScheme::gauss_hermite(5);
            double worst = 0.0;
            for (std::size_t a = 0; a < idx.size(); ++a)
                for (std::size_t b = a; b < idx.size(); ++b) {
                    double v = expectation(g, [&](const Vec &x) {
                                   return phi_alpha(g, idx[a], x) * phi_alpha(g, idx[b], x);
                               }, sc).mean;
                    worst = std::max(worst, std::abs(v - (a == b ? 1.0 : 0.0)));
                }
            if (!emit("chaos", "orthonormality_deg3", worst, 1e-10, worst < 1e-10)) return fail("orthonormality");
        }
        // second_quant
        {
            std::vector<CMContraction> Ts;
            if (c.contraction) Ts.push_back(*c.contraction);
            for (auto [s, t] : pairs)
                if (s < t) {
                    Ts.push_back(pst_contraction(m, s, t));
                    break;
                }
            for (const auto &T : Ts) {
                double n = op_norm(T);
                if (!emit("second_quant", "op_norm", n, 1.0 + 1e-12, n <= 1.0 + 1e-12))
                    return fail("NotContraction: operator norm " + CsvWriter::number(n));
                Polynomial f = detail::default_test_function(T.mu().dim());
                ChaosExpansion e = project(T.mu(), f, f.degree());
                ChaosExpansion img = gamma_series_apply(T, e);
                QuadScheme sc = QuadScheme::gauss_hermite(f.degree() + 2);
                Vec x = Vec::Constant(T.nu().dim(), 0.4);
                double a = eval_expansion(img, x), b = gamma_integral_apply(T, f, x, sc);
                if (!emit("second_quant", "series_equals_integral", a - b, 1e-8, std::abs(a - b) < 1e-8))
                    return fail("series vs integral");
                ChaosExpansion gnu = project(T.nu(), detail::default_test_function(T.nu().dim()), 2);
                double lhs = l2_inner(img, gnu);
                double rhs = l2_inner(e, gamma_series_apply(T.adjoint(), gnu));
                if (!emit("second_quant", "adjoint_law", lhs - rhs, 1e-10, std::abs(lhs - rhs) < 1e-10))
                    return fail("adjoint law");
            }
        }
        // ou_evolution
        {
            double worst_norm = 0.0, worst_cocycle = 0.0, worst_ck = 0.0, worst_dual = 0.0, worst_emb = 0.0;
            double worst_inv = 0.0, worst_tail = 0.0;
            Polynomial phi = detail::default_test_function(d);
            for (auto [s, t] : pairs) {
                if (!(s < t)) continue;
                double r = 0.5 * (s + t);
                Mat U = m.family().u(t, s);
                worst_cocycle = std::max(worst_cocycle, (m.family().u(t, r) * m.family().u(r, s) - U).norm());
                Mat Qts = q_ts(m, s, t), Qrs = q_ts(m, s, r), Qtr = q_ts(m, r, t);
                Mat Ur = m.family().u(t, r);
                worst_ck = std::max(worst_ck, (Ur * Qrs * Ur.transpose() + Qtr - Qts).norm() /
                                                  std::max(1.0, Qts.norm()));
                CMContraction L = pst_contraction(m, s, t);
                worst_norm = std::max(worst_norm, op_norm(L));
                SpectralGaussian gt = measure_at(m, t), gs = measure_at(m, s);
                Mat Lx = x_extension(L).matrix;  // canonical matrix of L as a map X_t -> X_s
                Mat Qt = gt.eigenvalues().asDiagonal(), Qs = gs.eigenvalues().asDiagonal();
                worst_dual = std::max(worst_dual, (Lx * Qt - Qs * U.transpose()).norm() / std::max(1.0, Qs.norm()));
                double emb = range_ratio_norm(LinearMap{psd_factor(Qts)}, LinearMap{Mat(Qt.cwiseSqrt())});
                worst_emb = std::max(worst_emb, emb);
                QuadScheme sc = QuadScheme::gauss_hermite(phi.degree() + 2);
                PstKernel k = pst_kernel(m, s, t);
                double lhs = expectation(gs, [&](const Vec &x) { return pst_estimate(k, phi, x, sc).mean; }, sc).mean;
                double rhs = expectation(gt, phi, sc).mean;
                worst_inv = std::max(worst_inv, std::abs(lhs - rhs));
                worst_tail = std::max(worst_tail, q_t_inf(m, t).tail_cert);
            }
            if (!emit("ou", "cm_contraction", worst_norm, 1.0 + 1e-10, worst_norm <= 1.0 + 1e-10))
                return fail("NotContraction: Cameron-Martin norm above 1");
            if (!emit("ou", "cocycle", worst_cocycle, 1e-10, worst_cocycle < 1e-10)) return fail("cocycle");
            if (!emit("ou", "chapman_kolmogorov", worst_ck, 1e-10, worst_ck < 1e-10))
                return fail("Chapman-Kolmogorov");
            if (!emit("ou", "duality", worst_dual, 1e-10, worst_dual < 1e-10)) return fail("duality");
            if (!emit("ou", "embedding", worst_emb, 1.0 + 1e-10, worst_emb <= 1.0 + 1e-10)) return fail("embedding");
            if (!emit("ou", "invariance", worst_inv, 1e-8, worst_inv < 1e-8)) return fail("invariance");
            if (!emit("ou", "tail_certificate", worst_tail, 1e-12, worst_tail <= 1e-12))
                return fail("tail certificate");
        }
    } catch (const ConfigInvalid &) {
        throw;
    } catch (const Error &e) {
        return fail(e.what());
    }
    res.output = out.str();
    return res;
}

inline CommandResult run_command(const std::string &name, const ExperimentConfig &c, const RunOptions &o = {}) {
    if (name == "verify") return cmd_verify(c, o);
    if (name == "hyper-scan") return cmd_hyper_scan(c, o);
    if (name == "decay") return cmd_decay(c, o);
    if (name == "hs-table") return cmd_hs_table(c, o);
    if (name == "mehler-demo") return cmd_mehler_demo(c, o);
    throw ConfigInvalid("unknown subcommand '" + name + "'");
}

}  // namespace gsq
