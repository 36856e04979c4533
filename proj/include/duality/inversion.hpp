#pragma once

// Root finding for vector equations r(s) = 0 over the unit simplex. Used to
// invert demand systems: lattice scan for basins of |r|^2, Levenberg-Marquardt
// from each basin, then dedupe the roots. More than one distinct root is
// reported as ambiguity instead of picking one.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "duality/error.hpp"
#include "duality/numkit.hpp"
#include "duality/vec.hpp"

namespace duality {

struct InversionOptions {
    /// Lattice divisions per simplex edge for n = 2, 3, 4.
    int lattice[3] = {12, 8, 6};
    /// A candidate counts as a root when max |r_i| is at most this.
    double root_tol = 1e-7;
    double jac_step = 1e-7;
    int max_basins = 3;
    double floor = 1e-6;
    /// Roots closer than this (max share difference) are the same root.
    double distinct_tol = 1e-4;
    int max_iter = 80;
};

using ResidualFn = std::function<Vec(const Vec& shares)>;

namespace detail {

inline double sq_norm(const Vec& r) {
    if (!all_finite(r)) return std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (double v : r) s += v * v;
    return s;
}

struct LmResult {
    Vec shares;
    Vec residual;
    int iterations = 0;
};

/// Levenberg-Marquardt over the free coordinates y (s = (y, 1 - sum y)),
/// kept inside the floored simplex by projection.
inline LmResult levenberg_marquardt(const ResidualFn& r, Vec s, const InversionOptions& opt) {
    const std::size_t n = s.size();
    const std::size_t m_free = n - 1;
    Vec rs = r(s);
    double f = sq_norm(rs);
    double lambda = 1e-3;
    int it = 0, stalled = 0;
    for (; it < opt.max_iter && std::isfinite(f); ++it) {
        if (max_abs(rs) <= 1e-14) break;
        // far from any root and barely moving: this basin has no root
        if (stalled >= 4 && max_abs(rs) > 1e-3) break;
        const std::size_t m = rs.size();
        Eigen::MatrixXd J(m, m_free);
        bool ok = true;
        for (std::size_t j = 0; j < m_free && ok; ++j) {
            // Move share j against the last share; step backward if forward leaves the simplex.
            double h = opt.jac_step;
            Vec sp = s;
            if (sp[n - 1] - h < opt.floor) h = -h;
            sp[j] += h;
            sp[n - 1] -= h;
            Vec rp = r(sp);
            if (!all_finite(rp) || rp.size() != m) {
                h = -h;
                sp = s;
                sp[j] += h;
                sp[n - 1] -= h;
                rp = r(sp);
                if (!all_finite(rp) || rp.size() != m) ok = false;
            }
            if (!ok) break;
            for (std::size_t i = 0; i < m; ++i) J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (rp[i] - rs[i]) / h;
        }
        if (!ok) break;
        Eigen::VectorXd F = Eigen::Map<const Eigen::VectorXd>(rs.data(), static_cast<Eigen::Index>(rs.size()));
        Eigen::MatrixXd A = J.transpose() * J;
        Eigen::VectorXd g = J.transpose() * F;
        bool improved = false;
        while (lambda < 1e12) {
            Eigen::MatrixXd Al = A;
            for (Eigen::Index d = 0; d < Al.rows(); ++d) Al(d, d) += lambda * std::max(A(d, d), 1e-12);
            Eigen::VectorXd step = Al.ldlt().solve(-g);
            Vec trial = s;
            for (std::size_t j = 0; j < m_free; ++j) {
                trial[j] += step(static_cast<Eigen::Index>(j));
                trial[n - 1] -= step(static_cast<Eigen::Index>(j));
            }
            trial = project_to_simplex(trial, opt.floor);
            Vec rt = r(trial);
            double ft = sq_norm(rt);
            if (ft < f) {
                stalled = ft > f * (1.0 - 1e-4) ? stalled + 1 : 0;
                double moved = 0.0;
                for (std::size_t i = 0; i < n; ++i) moved = std::max(moved, std::abs(trial[i] - s[i]));
                s = trial;
                rs = rt;
                f = ft;
                lambda = std::max(lambda / 3.0, 1e-12);
                improved = moved > 1e-16;
                break;
            }
            lambda *= 4.0;
        }
        if (!improved) break;
    }
    return {s, rs, it};
}

inline int lattice_divisions(const InversionOptions& opt, std::size_t n) {
    return opt.lattice[std::clamp<std::size_t>(n, 2, 4) - 2];
}

} // namespace detail

/// All distinct roots of r on the floored n-simplex reachable from the best
/// lattice basins, best residual first.
inline std::vector<Vec> simplex_roots(std::size_t n, const ResidualFn& r, const InversionOptions& opt = {},
                                      double* best_residual = nullptr) {
    auto value = [&](const Vec& s) { return detail::sq_norm(r(s)); };
    auto ident = [](const Vec& s) { return s; };
    const int k = detail::lattice_divisions(opt, n);
    auto basins = detail::lattice_local_minima(static_cast<int>(n), k, opt.floor, value, ident,
                                               static_cast<std::size_t>(opt.max_basins));
    std::vector<std::pair<double, Vec>> roots;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : basins) {
        auto lm = detail::levenberg_marquardt(r, b.shares, opt);
        double res = all_finite(lm.residual) ? max_abs(lm.residual) : std::numeric_limits<double>::infinity();
        best = std::min(best, res);
        if (!(res <= opt.root_tol)) continue;
        bool dup = false;
        for (auto& [rv, rs] : roots) {
            double d = 0.0;
            for (std::size_t i = 0; i < n; ++i) d = std::max(d, std::abs(rs[i] - lm.shares[i]));
            if (d <= opt.distinct_tol) {
                dup = true;
                if (res < rv) {
                    rv = res;
                    rs = lm.shares;
                }
            }
        }
        if (!dup) roots.emplace_back(res, lm.shares);
    }
    if (best_residual) *best_residual = best;
    std::stable_sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Vec> out;
    for (auto& [_, s] : roots) out.push_back(std::move(s));
    return out;
}

/// The unique root of r on the simplex; ConvergenceError when none is found,
/// AmbiguityError when several distinct ones are.
inline Vec invert_on_simplex(std::size_t n, const ResidualFn& r, const std::string& what,
                             const InversionOptions& opt = {}) {
    double best = 0.0;
    auto roots = simplex_roots(n, r, opt, &best);
    if (roots.empty())
        throw ConvergenceError(what + ": no root found (best residual " + std::to_string(best) + ")");
    if (roots.size() > 1) {
        std::string msg = what + ": " + std::to_string(roots.size()) + " distinct roots, e.g. shares (";
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t i = 0; i < n; ++i) msg += (i ? "," : "") + std::to_string(roots[k][i]);
            msg += k == 0 ? ") and (" : ")";
        }
        throw AmbiguityError(msg);
    }
    return roots.front();
}

} // namespace duality
