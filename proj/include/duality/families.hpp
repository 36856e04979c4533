#pragma once

// Built-in preference families with closed-form oracles. The oracles are
// ground truth for tests, so each instance cross-checks its own formulas on
// a few points before it is handed out.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "duality/error.hpp"
#include "duality/expr.hpp"
#include "duality/numkit.hpp"
#include "duality/wheel.hpp"

namespace duality {

using Params = std::map<std::string, double>;

struct FamilyInstance {
    std::string name;
    Params params;
    std::string utility_text;
    UtilityExpr utility;

    // Oracles; empty when the family has no closed form for that node.
    std::function<Vec(const Vec& P, double M)> mdf;
    std::function<Vec(const Vec& P, double u)> hdf;
    std::function<double(const Vec& P, double M)> iuf;
    std::function<double(const Vec& P, double u)> ef;
    std::function<double(const Vec& q, double u)> df;
    std::function<Vec(const Vec& q)> hidf;
    std::function<Vec(const Vec& q, double u)> aidf;

    bool has_oracle(NodeId which) const;
};

inline bool FamilyInstance::has_oracle(NodeId which) const {
    switch (which) {
    case NodeId::DUF:
    case NodeId::BC:
    case NodeId::EAF: return true;
    case NodeId::MDF: return bool(mdf);
    case NodeId::HDF: return bool(hdf);
    case NodeId::IUF: return bool(iuf);
    case NodeId::EF: return bool(ef);
    case NodeId::DF: return bool(df);
    case NodeId::HIDF: return bool(hidf);
    case NodeId::AIDF: return bool(aidf);
    }
    return false;
}

namespace detail {

inline const Vec& need_vec(const std::optional<Vec>& v, const char* what, std::size_t n) {
    if (!v) throw DomainError(std::string("point is missing ") + what);
    if (v->size() != n) throw DomainError(std::string(what) + " has the wrong length");
    return *v;
}

inline double need_num(const std::optional<double>& v, const char* what) {
    if (!v) throw DomainError(std::string("point is missing ") + what);
    return *v;
}

inline double param_or(const Params& p, const std::string& key, double fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

inline void reject_unknown(const Params& p, const std::vector<std::string>& allowed, const std::string& family) {
    for (const auto& [k, _] : p)
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            throw ParamError("unknown parameter '" + k + "' for family " + family);
}

// Homogeneous-of-degree-one utilities: D = U/u, psi = grad U / u,
// phi = grad U / U (Euler: grad U . q = U).
inline void attach_homogeneous_inverse_oracles(FamilyInstance& f) {
    auto U = f.utility;
    f.df = [U](const Vec& q, double u) { return eval_utility(U, q) / u; };
    f.hidf = [U](const Vec& q) { return scaled(gradient(U, q), 1.0 / eval_utility(U, q)); };
    f.aidf = [U](const Vec& q, double u) { return scaled(gradient(U, q), 1.0 / u); };
}

/// Cross-checks the oracle set against itself at 5 fixed points.
inline void self_check(const FamilyInstance& f) {
    const int n = f.utility.n_goods();
    const double tol = 1e-6;
    auto fail = [&](const std::string& what) {
        throw ParamError("family " + f.name + " failed its oracle self-check (" + what + ")");
    };
    for (int k = 0; k < 5; ++k) {
        Vec P(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) P[static_cast<std::size_t>(i)] = 0.5 + 0.37 * ((k + 2 * i) % 5);
        double M = 3.0 + 2.5 * k;
        if (f.mdf) {
            Vec x = f.mdf(P, M);
            if (relative_residual(dot(P, x), M) > tol) fail("budget");
            if (f.iuf && relative_residual(eval_utility(f.utility, x), f.iuf(P, M)) > tol) fail("V = U(x^M)");
        }
        if (f.iuf && f.ef) {
            double u = f.iuf(P, M);
            if (relative_residual(f.ef(P, u), M) > tol) fail("E(P,V) = M");
            if (f.hdf && f.mdf && relative_residual(f.hdf(P, u), f.mdf(P, M)) > tol) fail("x^c(P,V) = x^M");
            if (f.hdf && relative_residual(dot(P, f.hdf(P, u)), f.ef(P, u)) > tol) fail("E = P.x^c");
        }
        if (f.df && f.mdf) {
            Vec x = f.mdf(P, M);
            if (relative_residual(f.df(x, eval_utility(f.utility, x)), 1.0) > tol) fail("D(q,U(q)) = 1");
        }
        if (f.hidf && f.mdf) {
            Vec x = f.mdf(P, M);
            if (relative_residual(f.hidf(x), scaled(P, 1.0 / M)) > tol) fail("phi(x^M) = P/M");
        }
    }
}

} // namespace detail

inline FamilyInstance cobb_douglas(const Params& params) {
    Vec a;
    for (int i = 1; i <= kMaxGoods; ++i) {
        auto it = params.find("a" + std::to_string(i));
        if (it == params.end()) break;
        a.push_back(it->second);
    }
    if (a.size() != params.size()) {
        for (const auto& [k, _] : params)
            if (k.size() < 2 || k[0] != 'a') throw ParamError("unknown parameter '" + k + "' for family cobb_douglas");
        throw ParamError("cobb_douglas exponents must be a1, a2, ... without gaps");
    }
    if (a.empty()) a.push_back(0.5);
    double s = sum(a);
    if (std::abs(s - 1.0) > 1e-12) {
        if (s >= 1.0) throw ParamError("cobb_douglas exponents must sum to 1 (the last one may be omitted)");
        a.push_back(1.0 - s);
    }
    if (a.size() < 2 || a.size() > static_cast<std::size_t>(kMaxGoods))
        throw ParamError("cobb_douglas needs 2 to 4 goods");
    for (double ai : a)
        if (!(ai > 0.0 && ai < 1.0)) throw ParamError("cobb_douglas exponents must lie in (0,1)");

    FamilyInstance f;
    f.name = "cobb_douglas";
    for (std::size_t i = 0; i < a.size(); ++i) f.params["a" + std::to_string(i + 1)] = a[i];
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i) f.utility_text += "*";
        f.utility_text += "q" + std::to_string(i + 1) + "^" + detail::format_number(a[i]);
    }
    f.utility = parse_utility(f.utility_text);

    f.mdf = [a](const Vec& P, double M) {
        Vec x(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) x[i] = a[i] * M / P[i];
        return x;
    };
    f.iuf = [a](const Vec& P, double M) {
        double v = M;
        for (std::size_t i = 0; i < a.size(); ++i) v *= std::pow(a[i] / P[i], a[i]);
        return v;
    };
    f.ef = [a](const Vec& P, double u) {
        double e = u;
        for (std::size_t i = 0; i < a.size(); ++i) e *= std::pow(P[i] / a[i], a[i]);
        return e;
    };
    auto ef = f.ef;
    f.hdf = [a, ef](const Vec& P, double u) {
        double e = ef(P, u);
        Vec x(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) x[i] = a[i] * e / P[i];
        return x;
    };
    detail::attach_homogeneous_inverse_oracles(f);
    return f;
}

/// U = (a1 q1^rho + a2 q2^rho)^(1/rho), sigma = 1/(1-rho).
inline FamilyInstance ces(const Params& params) {
    detail::reject_unknown(params, {"a1", "a2", "rho"}, "ces");
    double a1 = detail::param_or(params, "a1", 0.5);
    double a2 = detail::param_or(params, "a2", 1.0 - a1);
    double rho = detail::param_or(params, "rho", 0.5);
    if (!(a1 > 0 && a2 > 0)) throw ParamError("ces shares must be positive");
    if (std::abs(a1 + a2 - 1.0) > 1e-12) throw ParamError("ces shares must sum to 1");
    if (!(rho > -5.0 && rho < 1.0) || rho == 0.0) throw ParamError("ces needs rho in (-5,1) excluding 0");

    FamilyInstance f;
    f.name = "ces";
    f.params = {{"a1", a1}, {"a2", a2}, {"rho", rho}};
    auto num = [](double v) { return detail::format_number(v); };
    f.utility_text =
        "(" + num(a1) + "*q1^" + num(rho) + "+" + num(a2) + "*q2^" + num(rho) + ")^" + num(1.0 / rho);
    f.utility = parse_utility(f.utility_text);

    const Vec a{a1, a2};
    const double sigma = 1.0 / (1.0 - rho);
    auto A = [a, sigma](const Vec& P) {
        double s = 0.0;
        for (std::size_t i = 0; i < 2; ++i) s += std::pow(a[i], sigma) * std::pow(P[i], 1.0 - sigma);
        return s;
    };
    f.mdf = [a, sigma, A](const Vec& P, double M) {
        double d = A(P);
        return Vec{M * std::pow(a[0] / P[0], sigma) / d, M * std::pow(a[1] / P[1], sigma) / d};
    };
    f.iuf = [sigma, A](const Vec& P, double M) { return M * std::pow(A(P), 1.0 / (sigma - 1.0)); };
    f.ef = [sigma, A](const Vec& P, double u) { return u * std::pow(A(P), 1.0 / (1.0 - sigma)); };
    auto ef = f.ef;
    f.hdf = [a, sigma, A, ef](const Vec& P, double u) {
        double e = ef(P, u), d = A(P);
        return Vec{e * std::pow(a[0] / P[0], sigma) / d, e * std::pow(a[1] / P[1], sigma) / d};
    };
    detail::attach_homogeneous_inverse_oracles(f);
    return f;
}

/// U = q1 + ln(q2). Demand for good 2 is P1/P2 until income runs out.
inline FamilyInstance quasilinear(const Params& params) {
    detail::reject_unknown(params, {}, "quasilinear");
    FamilyInstance f;
    f.name = "quasilinear";
    f.utility_text = "q1+ln(q2)";
    f.utility = parse_utility(f.utility_text);

    f.mdf = [](const Vec& P, double M) {
        if (M <= P[0]) return Vec{0.0, M / P[1]};
        return Vec{M / P[0] - 1.0, P[0] / P[1]};
    };
    f.iuf = [](const Vec& P, double M) {
        if (M <= P[0]) return std::log(M / P[1]);
        return M / P[0] - 1.0 + std::log(P[0] / P[1]);
    };
    f.hdf = [](const Vec& P, double u) {
        double r = std::log(P[0] / P[1]);
        if (u <= r) return Vec{0.0, std::exp(u)};
        return Vec{u - r, P[0] / P[1]};
    };
    f.ef = [](const Vec& P, double u) {
        double r = std::log(P[0] / P[1]);
        if (u <= r) return P[1] * std::exp(u);
        return P[0] * (u + 1.0 - r);
    };
    f.hidf = [](const Vec& q) {
        double d = q[0] + 1.0;
        return Vec{1.0 / d, 1.0 / (q[1] * d)};
    };
    return f;
}

/// U = q1^2 + q2^2: concave-to-origin indifference curves, corner demand.
inline FamilyInstance nonconvex_demo(const Params& params) {
    detail::reject_unknown(params, {}, "nonconvex_demo");
    FamilyInstance f;
    f.name = "nonconvex_demo";
    f.utility_text = "q1^2+q2^2";
    f.utility = parse_utility(f.utility_text);
    f.iuf = [](const Vec& P, double M) {
        double r = M / std::min(P[0], P[1]);
        return r * r;
    };
    f.ef = [](const Vec& P, double u) { return std::min(P[0], P[1]) * std::sqrt(u); };
    f.df = [](const Vec& q, double u) { return std::sqrt((q[0] * q[0] + q[1] * q[1]) / u); };
    return f;
}

inline FamilyInstance make_family(const std::string& name, const Params& params = {}) {
    FamilyInstance f;
    if (name == "cobb_douglas") f = cobb_douglas(params);
    else if (name == "ces") f = ces(params);
    else if (name == "quasilinear") f = quasilinear(params);
    else if (name == "nonconvex_demo") f = nonconvex_demo(params);
    else throw ParamError("unknown family '" + name + "'");
    detail::self_check(f);
    return f;
}

/// "name" or "name:k=v,k=v".
inline FamilyInstance parse_family_spec(const std::string& spec) {
    auto colon = spec.find(':');
    std::string name = spec.substr(0, colon);
    Params params;
    if (colon != std::string::npos) {
        std::string rest = spec.substr(colon + 1);
        std::size_t pos = 0;
        while (pos <= rest.size() && !rest.empty()) {
            auto comma = rest.find(',', pos);
            std::string item = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            auto eq = item.find('=');
            if (eq == std::string::npos || eq == 0) throw ParamError("expected k=v in family spec, got '" + item + "'");
            std::string key = item.substr(0, eq), val = item.substr(eq + 1);
            double v = 0.0;
            auto res = std::from_chars(val.data(), val.data() + val.size(), v);
            if (res.ec != std::errc{} || res.ptr != val.data() + val.size())
                throw ParamError("bad number '" + val + "' for parameter " + key);
            params[key] = v;
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    return make_family(name, params);
}

/// Analytic value of `which` at `pt`; scalars come back as length-1 vectors.
inline Vec oracle_eval(const FamilyInstance& f, NodeId which, const Point& pt) {
    if (!f.has_oracle(which))
        throw NoOracleError("family " + f.name + " has no closed form for " + std::string(node_name(which)));
    const std::size_t n = static_cast<std::size_t>(f.utility.n_goods());
    using detail::need_num;
    using detail::need_vec;
    auto prices = [&]() -> const Vec& { return need_vec(pt.P, "P", n); };
    switch (which) {
    case NodeId::DUF: return {eval_utility(f.utility, need_vec(pt.q, "q", n))};
    case NodeId::MDF: return f.mdf(prices(), need_num(pt.M, "M"));
    case NodeId::HDF: return f.hdf(prices(), need_num(pt.u, "u"));
    case NodeId::IUF: return {f.iuf(prices(), need_num(pt.M, "M"))};
    case NodeId::EF: return {f.ef(prices(), need_num(pt.u, "u"))};
    case NodeId::DF: return {f.df(need_vec(pt.q, "q", n), need_num(pt.u, "u"))};
    case NodeId::HIDF: return f.hidf(need_vec(pt.q, "q", n));
    case NodeId::AIDF: return f.aidf(need_vec(pt.q, "q", n), need_num(pt.u, "u"));
    case NodeId::BC: return {need_num(pt.M, "M") - dot(prices(), need_vec(pt.q, "q", n))};
    case NodeId::EAF: return {dot(prices(), need_vec(pt.q, "q", n))};
    }
    return {};
}

} // namespace duality
