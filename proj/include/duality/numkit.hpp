#pragma once

// Numerical primitives shared by the wheel: scalar root finding, central
// differences, Nelder-Mead, lattices over the budget simplex, and the two
// canonical consumer problems (utility maximization on a budget and
// expenditure minimization under a utility floor).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "duality/error.hpp"
#include "duality/expr.hpp"
#include "duality/vec.hpp"

namespace duality {

struct PriceIncome {
    Vec P;
    double M = 0.0;

    void validate(int n_goods) const {
        if (static_cast<int>(P.size()) != n_goods)
            throw DomainError("price vector has " + std::to_string(P.size()) + " entries, expected " +
                              std::to_string(n_goods));
        for (double p : P)
            if (!(p > 0.0) || !std::isfinite(p)) throw DomainError("prices must be positive and finite");
        if (!(M > 0.0) || !std::isfinite(M)) throw DomainError("income must be positive and finite");
    }
};

/// p = P / M; normalized income is identically 1.
struct NormalizedPrices {
    Vec p;

    static NormalizedPrices from(const PriceIncome& pi) { return {scaled(pi.P, 1.0 / pi.M)}; }
};

struct SolveResult {
    Bundle argmin_or_argmax;
    double objective_value = 0.0;
    bool converged = false;
    int iterations = 0;
    double active_constraint_residual = 0.0;
};

struct SolverOptions {
    double feasibility_tol = 1e-8;
    double optimality_tol = 1e-8;
    double tie_tol = 1e-9;
    int max_seeds = 3;
    bool polish = true;
    /// Lattice divisions per simplex edge for n = 2, 3, 4 goods.
    int seed_divisions[3] = {200, 40, 16};

    int divisions(int n) const { return seed_divisions[std::clamp(n, 2, 4) - 2]; }
};

// ---------------------------------------------------------------------------
// Scalar root finding

/// Brent's method on a sign-changing bracket. Stops when the bracket is
/// narrower than `xtol` or |g| <= `ftol`. Non-finite samples fall back to
/// bisection.
inline double brent_solve(const std::function<double(double)>& g, double lo, double hi, double xtol,
                          double ftol, int max_iter = 200) {
    double a = lo, b = hi;
    double fa = g(a), fb = g(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (std::isnan(fa) || std::isnan(fb) || (fa > 0) == (fb > 0))
        throw BracketError("root not bracketed on [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    double c = a, fc = fa, d = b - a, e = d;
    for (int it = 0; it < max_iter; ++it) {
        if ((fb > 0) == (fc > 0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * xtol;
        double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || std::abs(fb) <= ftol) return b;
        bool finite = std::isfinite(fa) && std::isfinite(fb) && std::isfinite(fc);
        if (finite && std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double s = fb / fa, p, q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                double qq = fa / fc, r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += std::abs(d) > tol1 ? d : (xm > 0 ? tol1 : -tol1);
        fb = g(b);
        if (std::isnan(fb)) throw BracketError("function undefined inside bracket");
    }
    return b;
}

/// x in [lo, hi] with |g(x)| <= tol or bracket width <= tol.
inline double brent_root(const std::function<double(double)>& g, double lo, double hi, double tol) {
    return brent_solve(g, lo, hi, tol, tol);
}

/// Solves f(x) = target for increasing f on (0, inf), bracketing
/// geometrically from x0. Returns 0 when f stays >= target down to
/// x0 * 1e-12. NaN from f means "undefined"; treated as below target near 0
/// and as above target far out.
inline double solve_increasing_positive(const std::function<double(double)>& f, double target, double x0,
                                        double rel_tol = 1e-13) {
    auto g = [&](double x) { return f(x) - target; };
    double lo = x0, hi = x0;
    double ghi = g(hi);
    if (!(ghi >= 0.0)) {
        int k = 0;
        do {
            lo = hi;
            hi *= 4.0;
            ghi = g(hi);
            if (++k > 60) throw BracketError("target value not reached on increasing search");
        } while (!(ghi >= 0.0) && !std::isnan(ghi));
        if (std::isnan(ghi)) throw BracketError("function undefined while bracketing");
    } else {
        double glo = ghi;
        int k = 0;
        while (glo >= 0.0) {
            hi = lo;
            lo *= 0.25;
            if (++k > 20) return 0.0;
            glo = g(lo);
        }
    }
    auto gs = [&](double x) {
        double v = g(x);
        return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    };
    return brent_solve(gs, lo, hi, rel_tol * lo, 0.0);
}

/// Solves f(x) = target for increasing f on the real line. NaN from f is
/// treated as +inf (target unattainable beyond that point).
inline double solve_increasing_real(const std::function<double(double)>& f, double target, double x0,
                                    double step0, double rel_tol = 1e-13) {
    auto g = [&](double x) {
        double v = f(x) - target;
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };
    double lo = x0, hi = x0;
    double glo = g(lo), ghi = glo;
    double step = step0;
    int k = 0;
    while (ghi < 0.0) {
        lo = hi;
        glo = ghi;
        hi += step;
        step *= 2.0;
        ghi = g(hi);
        if (++k > 80) throw BracketError("target value not reached on increasing search");
    }
    step = step0;
    while (glo > 0.0) {
        hi = lo;
        lo -= step;
        step *= 2.0;
        glo = g(lo);
        if (++k > 160) throw BracketError("target value not reached on decreasing search");
    }
    if (glo == 0.0) return lo;
    double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
    return brent_solve(g, lo, hi, rel_tol * scale, 0.0);
}

// ---------------------------------------------------------------------------
// Finite differences

/// Default step h = 1e-6 * max(1, |x|).
inline double fd_step(double x, double rel = 1e-6) { return rel * std::max(1.0, std::abs(x)); }

inline double central_diff(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x, std::size_t i, double h) {
    Vec xp(x.begin(), x.end()), xm(x.begin(), x.end());
    xp[i] += h;
    xm[i] -= h;
    return (f(xp) - f(xm)) / (2.0 * h);
}

inline double central_diff(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x, std::size_t i) {
    return central_diff(f, x, i, fd_step(x[i]));
}

// ---------------------------------------------------------------------------
// Nelder-Mead

struct NelderMeadResult {
    Vec x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Minimizes f from x0 with an axis-aligned initial simplex of size `step`.
/// Converges when the simplex diameter (max distance to the best vertex)
/// drops below `xtol`.
inline NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& f, Vec x0, double step,
                                    double xtol, int max_iter = 2000) {
    const std::size_t n = x0.size();
    std::vector<Vec> pts(n + 1, x0);
    Vec vals(n + 1);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
    for (std::size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);

    std::vector<std::size_t> order(n + 1);
    auto sort_simplex = [&] {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        std::vector<Vec> p2;
        Vec v2;
        for (auto k : order) {
            p2.push_back(pts[k]);
            v2.push_back(vals[k]);
        }
        pts = std::move(p2);
        vals = std::move(v2);
    };
    auto diameter = [&] {
        double d = 0.0;
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t j = 0; j < n; ++j) d = std::max(d, std::abs(pts[i][j] - pts[0][j]));
        return d;
    };
    auto blend = [&](const Vec& c, const Vec& w, double t) {
        Vec r(n);
        for (std::size_t j = 0; j < n; ++j) r[j] = c[j] + t * (w[j] - c[j]);
        return r;
    };

    int it = 0;
    for (; it < max_iter; ++it) {
        sort_simplex();
        if (diameter() <= xtol) return {pts[0], vals[0], it, true};
        Vec c(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) c[j] += pts[i][j] / static_cast<double>(n);
        Vec xr = blend(c, pts[n], -1.0);
        double fr = f(xr);
        if (fr < vals[0]) {
            Vec xe = blend(c, pts[n], -2.0);
            double fe = f(xe);
            if (fe < fr) {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if (fr < vals[n - 1]) {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            bool outside = fr < vals[n];
            Vec xc = outside ? blend(c, xr, 0.5) : blend(c, pts[n], 0.5);
            double fc = f(xc);
            if (fc < std::min(fr, vals[n])) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    pts[i] = blend(pts[0], pts[i], 0.5);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }
    sort_simplex();
    return {pts[0], vals[0], it, diameter() <= xtol};
}

// ---------------------------------------------------------------------------
// Simplex geometry

/// Euclidean projection onto {s >= 0, sum s = 1}.
inline Vec project_to_simplex(const Vec& v) {
    Vec u = v;
    std::sort(u.begin(), u.end(), std::greater<>());
    double css = 0.0, theta = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        css += u[i];
        double t = (css - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0) theta = t;
    }
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
    return out;
}

/// Projection onto {s >= floor, sum s = 1}.
inline Vec project_to_simplex(const Vec& v, double floor) {
    if (floor <= 0.0) return project_to_simplex(v);
    const double n = static_cast<double>(v.size());
    const double width = 1.0 - n * floor;
    Vec w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = (v[i] - floor) / width;
    Vec p = project_to_simplex(w);
    for (double& x : p) x = floor + width * x;
    return p;
}

/// Integer compositions of `k` into `n` nonnegative parts, lexicographic.
inline std::vector<std::vector<int>> simplex_compositions(int n, int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(n), 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == n - 1) {
            cur[static_cast<std::size_t>(pos)] = left;
            out.push_back(cur);
            return;
        }
        for (int c = 0; c <= left; ++c) {
            cur[static_cast<std::size_t>(pos)] = c;
            rec(pos + 1, left - c);
        }
    };
    rec(0, k);
    return out;
}

/// Shares from the first n-1 free coordinates (the last share is implied).
inline Vec shares_from_free(const Vec& y) {
    Vec s(y);
    s.push_back(1.0 - sum(y));
    return s;
}

inline bool lexicographically_less(const Vec& a, const Vec& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

namespace detail {

struct LatticePoint {
    std::vector<int> comp;
    Vec shares;
    double value; // minimized; +inf when undefined
};

/// Evaluates `value(shares)` on the lattice and returns local minima, best
/// first (ties broken by `tiebreak` lexicographic order).
inline std::vector<LatticePoint> lattice_local_minima(int n, int k, double floor,
                                                      const std::function<double(const Vec&)>& value,
                                                      const std::function<Vec(const Vec&)>& tiebreak,
                                                      std::size_t max_count) {
    auto comps = simplex_compositions(n, k);
    std::vector<LatticePoint> pts;
    pts.reserve(comps.size());
    const double width = 1.0 - n * floor;
    for (auto& c : comps) {
        Vec s(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = floor + width * c[static_cast<std::size_t>(i)] / double(k);
        double v = value(s);
        if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
        pts.push_back({c, s, v});
    }
    // Index compositions for neighbor lookup.
    auto key = [&](const std::vector<int>& c) {
        std::int64_t h = 0;
        for (int x : c) h = h * (k + 1) + x;
        return h;
    };
    std::vector<std::pair<std::int64_t, std::size_t>> index;
    index.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) index.emplace_back(key(pts[i].comp), i);
    std::sort(index.begin(), index.end());
    auto find = [&](const std::vector<int>& c) -> const LatticePoint* {
        auto kk = key(c);
        auto it = std::lower_bound(index.begin(), index.end(), std::make_pair(kk, std::size_t{0}));
        return (it != index.end() && it->first == kk) ? &pts[it->second] : nullptr;
    };
    std::vector<LatticePoint> minima;
    for (const auto& p : pts) {
        if (!std::isfinite(p.value)) continue;
        bool is_min = true;
        auto c = p.comp;
        for (int a = 0; a < n && is_min; ++a)
            for (int b = 0; b < n && is_min; ++b) {
                if (a == b || c[static_cast<std::size_t>(b)] == 0) continue;
                c[static_cast<std::size_t>(a)]++;
                c[static_cast<std::size_t>(b)]--;
                if (auto* nb = find(c); nb && nb->value < p.value) is_min = false;
                c[static_cast<std::size_t>(a)]--;
                c[static_cast<std::size_t>(b)]++;
            }
        if (is_min) minima.push_back(p);
    }
    std::stable_sort(minima.begin(), minima.end(), [&](const LatticePoint& a, const LatticePoint& b) {
        if (a.value != b.value) return a.value < b.value;
        return lexicographically_less(tiebreak(a.shares), tiebreak(b.shares));
    });
    // Drop plateau neighbors: keep minima at least two lattice steps apart.
    std::vector<LatticePoint> kept;
    for (auto& m : minima) {
        bool close = false;
        for (auto& kp : kept) {
            int dist = 0;
            for (int i = 0; i < n; ++i)
                dist = std::max(dist, std::abs(kp.comp[static_cast<std::size_t>(i)] - m.comp[static_cast<std::size_t>(i)]));
            if (dist <= 1) close = true;
        }
        if (!close) kept.push_back(m);
        if (kept.size() >= max_count) break;
    }
    return kept;
}

/// Minimizes f over the floored simplex from a seed, via Nelder-Mead on the
/// free coordinates with a projection penalty.
inline NelderMeadResult refine_on_simplex(const std::function<double(const Vec&)>& f, const Vec& seed,
                                          double floor, double step, double xtol) {
    auto obj = [&](const Vec& y) {
        Vec s = shares_from_free(y);
        Vec p = project_to_simplex(s, floor);
        double dist = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) dist += (s[i] - p[i]) * (s[i] - p[i]);
        double v = f(p);
        if (!std::isfinite(v)) return std::numeric_limits<double>::max() / 4;
        return v + std::sqrt(dist) * (1.0 + std::abs(v));
    };
    Vec y0(seed.begin(), seed.end() - 1);
    auto r = nelder_mead(obj, y0, step, xtol);
    r.x = project_to_simplex(shares_from_free(r.x), floor);
    r.value = f(r.x);
    return r;
}

inline bool solve_small(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, Eigen::VectorXd& x) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.rank() < A.rows()) return false;
    x = lu.solve(b);
    return x.allFinite();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Brute-force oracle

/// Exhaustive search over a uniform lattice on the budget face P.q = M.
/// `points_per_dim` lattice points per simplex edge (n <= 3).
inline SolveResult grid_oracle_budget(const UtilityExpr& U, const PriceIncome& pi, int points_per_dim) {
    const int n = U.n_goods();
    pi.validate(n);
    if (n > 3) throw ParamError("grid oracle supports at most 3 goods");
    if (points_per_dim < 2) throw ParamError("grid oracle needs at least 2 points per dimension");
    const int k = points_per_dim - 1;
    SolveResult best;
    best.objective_value = -std::numeric_limits<double>::infinity();
    int count = 0;
    std::vector<int> c(static_cast<std::size_t>(n), 0);
    Bundle q(static_cast<std::size_t>(n));
    auto visit = [&] {
        for (int i = 0; i < n; ++i)
            q[static_cast<std::size_t>(i)] = c[static_cast<std::size_t>(i)] / double(k) * pi.M / pi.P[static_cast<std::size_t>(i)];
        ++count;
        double v = U.value_or_nan(q);
        if (std::isnan(v)) return;
        if (best.argmin_or_argmax.empty()) {
            best.objective_value = v;
            best.argmin_or_argmax = q;
            return;
        }
        double tie = 1e-9 * std::max(1.0, std::abs(best.objective_value));
        if (v > best.objective_value + tie ||
            (std::abs(v - best.objective_value) <= tie && lexicographically_less(q, best.argmin_or_argmax))) {
            best.objective_value = v;
            best.argmin_or_argmax = q;
        }
    };
    if (n == 2) {
        for (int a = 0; a <= k; ++a) {
            c = {a, k - a};
            visit();
        }
    } else {
        for (int a = 0; a <= k; ++a)
            for (int b = 0; a + b <= k; ++b) {
                c = {a, b, k - a - b};
                visit();
            }
    }
    best.converged = std::isfinite(best.objective_value);
    best.iterations = count;
    if (best.converged) best.active_constraint_residual = std::abs(dot(pi.P, best.argmin_or_argmax) - pi.M) / pi.M;
    return best;
}

// ---------------------------------------------------------------------------
// Utility maximization on the budget set

namespace detail {

/// Newton on the tangency system grad U = lambda P, P.q = M.
inline std::optional<Bundle> polish_budget(const UtilityExpr& U, const PriceIncome& pi, Bundle q) {
    const int n = U.n_goods();
    Vec g = U.gradient_or_nan(q);
    if (!all_finite(g)) return std::nullopt;
    double lambda = dot(g, q) / pi.M;
    auto residual = [&](const Bundle& x, double lam, Eigen::VectorXd& F) {
        Vec gx = U.gradient_or_nan(x);
        F.resize(n + 1);
        for (int i = 0; i < n; ++i) F(i) = gx[static_cast<std::size_t>(i)] - lam * pi.P[static_cast<std::size_t>(i)];
        F(n) = (dot(pi.P, x) - pi.M) / pi.M;
        return F.allFinite();
    };
    Eigen::VectorXd F;
    if (!residual(q, lambda, F)) return std::nullopt;
    for (int it = 0; it < 30; ++it) {
        Vec H = U.hessian_or_nan(q);
        if (!all_finite(H)) return std::nullopt;
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n + 1, n + 1);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) J(i, j) = H[static_cast<std::size_t>(i * n + j)];
            J(i, n) = -pi.P[static_cast<std::size_t>(i)];
            J(n, i) = pi.P[static_cast<std::size_t>(i)] / pi.M;
        }
        Eigen::VectorXd step;
        if (!solve_small(J, -F, step)) return std::nullopt;
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
            Bundle x = q;
            bool positive = true;
            for (int i = 0; i < n; ++i) {
                x[static_cast<std::size_t>(i)] += t * step(i);
                if (!(x[static_cast<std::size_t>(i)] > 0.0)) positive = false;
            }
            if (!positive) continue;
            Eigen::VectorXd Fx;
            double lam = lambda + t * step(n);
            if (residual(x, lam, Fx) && Fx.norm() < F.norm()) {
                q = x;
                lambda = lam;
                F = Fx;
                moved = true;
                break;
            }
        }
        if (!moved) break;
        if (t * step.head(n).cwiseAbs().maxCoeff() <= 1e-15 * max_abs(q)) break;
    }
    double scale = pi.M / dot(pi.P, q);
    for (double& x : q) x *= scale;
    return q;
}

inline Bundle bundle_from_shares(const Vec& s, const Vec& P, double M) {
    Bundle q(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) q[i] = s[i] * M / P[i];
    return q;
}

inline bool better_choice(double v, const Bundle& q, double best_v, const Bundle& best_q, double tie_tol,
                          bool maximize) {
    if (best_q.empty()) return true;
    double tie = tie_tol * std::max(1.0, std::abs(best_v));
    double diff = maximize ? v - best_v : best_v - v;
    if (diff > tie) return true;
    if (diff < -tie) return false;
    return lexicographically_less(q, best_q);
}

} // namespace detail

/// Maximizes U over {q >= 0, P.q <= M}. Lattice seed over expenditure
/// shares, Nelder-Mead refinement with the budget substituted out, then a
/// Newton polish at interior optima. Ties within 1e-9 resolve to the
/// lexicographically smallest bundle.
inline SolveResult maximize_on_budget(const UtilityExpr& U, const PriceIncome& pi,
                                      const SolverOptions& opt = {}) {
    const int n = U.n_goods();
    pi.validate(n);
    const int k = opt.divisions(n);
    auto neg_u = [&](const Vec& s) {
        double v = U.value_or_nan(detail::bundle_from_shares(s, pi.P, pi.M));
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : -v;
    };
    auto to_bundle = [&](const Vec& s) { return detail::bundle_from_shares(s, pi.P, pi.M); };
    auto seeds = detail::lattice_local_minima(n, k, 0.0, neg_u, to_bundle, static_cast<std::size_t>(opt.max_seeds));
    if (seeds.empty()) throw ConvergenceError("utility undefined everywhere on the budget face");

    SolveResult best;
    int iterations = 0;
    for (const auto& seed : seeds) {
        auto r = detail::refine_on_simplex(neg_u, seed.shares, 0.0, 1.0 / k, std::min(1e-10, opt.optimality_tol));
        iterations += r.iterations;
        Vec s = r.x;
        double v = -r.value;
        if (!(v >= -seed.value)) {
            s = seed.shares;
            v = -seed.value;
        }
        Bundle q = to_bundle(s);
        bool interior = std::all_of(s.begin(), s.end(), [](double x) { return x > 1e-7; });
        if (opt.polish && interior) {
            if (auto pq = detail::polish_budget(U, pi, q)) {
                double pv = U.value_or_nan(*pq);
                if (pv >= v - 1e-12 * (1.0 + std::abs(v))) {
                    q = *pq;
                    v = pv;
                }
            }
        }
        if (detail::better_choice(v, q, best.objective_value, best.argmin_or_argmax, opt.tie_tol, true)) {
            best.argmin_or_argmax = q;
            best.objective_value = v;
        }
    }
    best.iterations = iterations;
    best.active_constraint_residual = std::abs(dot(pi.P, best.argmin_or_argmax) - pi.M) / pi.M;
    best.converged = std::isfinite(best.objective_value) && best.active_constraint_residual <= opt.feasibility_tol;
    if (!best.converged) throw ConvergenceError("budget maximization did not converge");
    return best;
}

// ---------------------------------------------------------------------------
// Expenditure minimization under a utility floor

/// Radius r > 0 with U(r d) = u, or nullopt if U(r_hi d) < u (or undefined).
inline std::optional<double> ray_radius(const UtilityExpr& U, const Vec& d, double u, double r_hi) {
    Vec q(d.size());
    auto g = [&](double r) {
        for (std::size_t i = 0; i < d.size(); ++i) q[i] = r * d[i];
        return U.value_or_nan(q) - u;
    };
    double ghi = g(r_hi);
    if (!(ghi >= 0.0)) return std::nullopt;
    if (ghi == 0.0) return r_hi;
    double lo = r_hi, hi = r_hi;
    double glo = ghi;
    int k = 0;
    while (glo >= 0.0) {
        hi = lo;
        lo *= 0.5;
        if (++k > 1000 || lo == 0.0) return 0.0;
        glo = g(lo);
        if (std::isnan(glo)) break;
    }
    auto gs = [&](double r) {
        double v = g(r);
        return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    };
    return brent_solve(gs, lo, hi, 1e-15 * lo, 0.0);
}

namespace detail {

/// Newton on grad U = mu P, U = u; the result is pulled back onto the
/// indifference surface along its ray.
inline std::optional<Bundle> polish_expenditure(const UtilityExpr& U, const Vec& P, double u, Bundle q) {
    const int n = U.n_goods();
    Vec g = U.gradient_or_nan(q);
    if (!all_finite(g)) return std::nullopt;
    double mu = dot(g, q) / dot(P, q);
    const double uscale = std::max(1.0, std::abs(u));
    auto residual = [&](const Bundle& x, double m, Eigen::VectorXd& F) {
        Vec gx = U.gradient_or_nan(x);
        F.resize(n + 1);
        for (int i = 0; i < n; ++i) F(i) = gx[static_cast<std::size_t>(i)] - m * P[static_cast<std::size_t>(i)];
        F(n) = (U.value_or_nan(x) - u) / uscale;
        return F.allFinite();
    };
    Eigen::VectorXd F;
    if (!residual(q, mu, F)) return std::nullopt;
    for (int it = 0; it < 30; ++it) {
        Vec H = U.hessian_or_nan(q);
        Vec gq = U.gradient_or_nan(q);
        if (!all_finite(H) || !all_finite(gq)) return std::nullopt;
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n + 1, n + 1);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) J(i, j) = H[static_cast<std::size_t>(i * n + j)];
            J(i, n) = -P[static_cast<std::size_t>(i)];
            J(n, i) = gq[static_cast<std::size_t>(i)] / uscale;
        }
        Eigen::VectorXd step;
        if (!solve_small(J, -F, step)) return std::nullopt;
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
            Bundle x = q;
            bool positive = true;
            for (int i = 0; i < n; ++i) {
                x[static_cast<std::size_t>(i)] += t * step(i);
                if (!(x[static_cast<std::size_t>(i)] > 0.0)) positive = false;
            }
            if (!positive) continue;
            Eigen::VectorXd Fx;
            double m = mu + t * step(n);
            if (residual(x, m, Fx) && Fx.norm() < F.norm()) {
                q = x;
                mu = m;
                F = Fx;
                moved = true;
                break;
            }
        }
        if (!moved) break;
        if (t * step.head(n).cwiseAbs().maxCoeff() <= 1e-15 * max_abs(q)) break;
    }
    // Back onto U = u exactly.
    Vec d = q;
    auto r = ray_radius(U, d, u, 4.0);
    if (!r || *r <= 0.0) return std::nullopt;
    for (double& x : q) x *= *r;
    return q;
}

} // namespace detail

/// Minimizes P.q over {q >= 0, U(q) >= u}. The indifference surface is
/// parameterized by rays d(s) = s_i / P_i (so P.d = 1) and the radius r(s)
/// solving U(r d) = u is the expenditure along that ray.
inline SolveResult minimize_expenditure(const UtilityExpr& U, const Vec& P, double u,
                                        const SolverOptions& opt = {}) {
    const int n = U.n_goods();
    PriceIncome{P, 1.0}.validate(n);
    if (!std::isfinite(u)) throw DomainError("utility target must be finite");

    Bundle zero(static_cast<std::size_t>(n), 0.0);
    if (double u0 = U.value_or_nan(zero); !std::isnan(u0) && u0 >= u) {
        SolveResult r;
        r.argmin_or_argmax = zero;
        r.objective_value = 0.0;
        r.converged = true;
        return r;
    }

    // Search box [0, Q_max]^n with U(Q_max * 1) above the target.
    const double margin = 1e-3 * std::max(1.0, std::abs(u));
    double qmax = 1.0;
    for (;;) {
        Bundle ones(static_cast<std::size_t>(n), qmax);
        double v = U.value_or_nan(ones);
        if (!std::isnan(v) && v >= u + margin) break;
        qmax *= 2.0;
        if (qmax > 1e6) throw InfeasibleError("utility target not attainable within the search box");
    }
    const double r_hi = qmax * sum(P);

    auto dir = [&](const Vec& s) {
        Vec d(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) d[i] = s[i] / P[i];
        return d;
    };
    auto radius = [&](const Vec& s) {
        Vec d = dir(s);
        if (auto r = ray_radius(U, d, u, r_hi)) return *r;
        Vec q = scaled(d, r_hi);
        double v = U.value_or_nan(q);
        double deficit = std::isnan(v) ? 10.0 : (u - v) / std::max(1.0, std::abs(u));
        return r_hi * (2.0 + deficit);
    };
    auto to_bundle = [&](const Vec& s) { return scaled(dir(s), radius(s)); };

    const int k = opt.divisions(n);
    auto seeds = detail::lattice_local_minima(n, k, 0.0, radius, dir, static_cast<std::size_t>(opt.max_seeds));
    if (seeds.empty()) throw ConvergenceError("expenditure undefined on every ray");

    SolveResult best;
    best.objective_value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    for (const auto& seed : seeds) {
        auto r = detail::refine_on_simplex(radius, seed.shares, 0.0, 1.0 / k, std::min(1e-10, opt.optimality_tol));
        iterations += r.iterations;
        Vec s = r.value <= seed.value ? r.x : seed.shares;
        double e = std::min(r.value, seed.value);
        if (!(e < r_hi)) continue;
        Bundle q = to_bundle(s);
        bool interior = std::all_of(s.begin(), s.end(), [](double x) { return x > 1e-7; });
        if (opt.polish && interior) {
            if (auto pq = detail::polish_expenditure(U, P, u, q)) {
                double pe = dot(P, *pq);
                if (pe <= e * (1.0 + 1e-12)) {
                    q = *pq;
                    e = pe;
                }
            }
        }
        e = dot(P, q);
        if (detail::better_choice(e, q, best.objective_value, best.argmin_or_argmax, opt.tie_tol, false)) {
            best.argmin_or_argmax = q;
            best.objective_value = e;
        }
    }
    if (best.argmin_or_argmax.empty()) throw InfeasibleError("utility target not attainable within the search box");
    best.iterations = iterations;
    double uq = U.value_or_nan(best.argmin_or_argmax);
    best.active_constraint_residual = std::abs(uq - u) / std::max(1.0, std::abs(u));
    best.converged = best.active_constraint_residual <= opt.feasibility_tol;
    if (!best.converged) throw ConvergenceError("expenditure minimization did not reach the utility floor");
    return best;
}

} // namespace duality
