#pragma once

// Function handles, the transitions that build them, and the session that
// caches them. A handle is an immutable closure; transitions compose them
// lazily, so nothing numeric happens until a handle is evaluated.

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "duality/error.hpp"
#include "duality/expr.hpp"
#include "duality/inversion.hpp"
#include "duality/numkit.hpp"
#include "duality/wheel.hpp"

namespace duality {

struct SessionSettings {
    /// Relative finite-difference step.
    double fd_rel = 1e-6;
    /// Quantities below this are treated as a corner.
    double interior_min = 1e-6;
    SolverOptions solver;
    InversionOptions inversion;
    /// Lattice divisions for the price searches of the dual recoveries (n = 2, 3, 4).
    int dual_lattice[3] = {24, 10, 6};
};

using NumericFn = std::function<Vec(const Vec& x, double s)>;

/// Arguments: (P, M) for IUF/MDF, (P, u) for EF/HDF, (q, u) for DF/AIDF,
/// (q, -) for DUF/HIDF, (P ++ q, M) for BC and (P ++ q, -) for EAF.
/// Scalar-valued nodes return length-1 vectors.
struct FunctionHandle {
    NodeId node = NodeId::DUF;
    bool normalized = false;
    std::vector<std::string> provenance;
    /// Keys of other handles this one reads besides its path predecessor.
    std::vector<std::string> inputs;
    int n_goods = 2;
    NumericFn fn;

    Vec operator()(const Vec& x, double s = 0.0) const { return fn(x, s); }
    double scalar(const Vec& x, double s = 0.0) const { return fn(x, s).at(0); }

    std::string key() const {
        std::string k(node_name(node));
        k += ":";
        for (std::size_t i = 0; i < provenance.size(); ++i) k += (i ? ">" : "") + provenance[i];
        if (!inputs.empty()) {
            k += "[";
            for (std::size_t i = 0; i < inputs.size(); ++i) k += (i ? "," : "") + inputs[i];
            k += "]";
        }
        return k;
    }

    bool can_evaluate(const Point& pt) const;
    Vec evaluate(const Point& pt) const;
};

using HandlePtr = std::shared_ptr<const FunctionHandle>;

namespace detail {

inline void check_prices(const Vec& P, int n, const char* what = "P") {
    if (static_cast<int>(P.size()) != n)
        throw DomainError(std::string(what) + " needs " + std::to_string(n) + " entries");
    for (double v : P)
        if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " entries must be positive");
}

inline void check_quantities(const Vec& q, int n) {
    if (static_cast<int>(q.size()) != n) throw DomainError("q needs " + std::to_string(n) + " entries");
    for (double v : q)
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("q entries must be nonnegative");
}

inline void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + " must be finite");
}

inline Vec concat(const Vec& a, const Vec& b) {
    Vec out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

} // namespace detail

inline bool FunctionHandle::can_evaluate(const Point& pt) const {
    const bool prices = pt.P.has_value() || pt.p.has_value();
    switch (node) {
    case NodeId::DUF:
    case NodeId::HIDF: return pt.q.has_value();
    case NodeId::IUF:
    case NodeId::MDF: return (pt.P && pt.M) || pt.p;
    case NodeId::EF:
    case NodeId::HDF: return prices && pt.u;
    case NodeId::DF:
    case NodeId::AIDF: return pt.q && pt.u;
    case NodeId::BC: return pt.P && pt.q && pt.M;
    case NodeId::EAF: return pt.P && pt.q;
    }
    return false;
}

inline Vec FunctionHandle::evaluate(const Point& pt) const {
    if (!can_evaluate(pt))
        throw DomainError("point lacks the arguments of " + std::string(node_name(node)) + " " +
                          std::string(signature(node).text));
    const int n = n_goods;
    switch (node) {
    case NodeId::DUF:
    case NodeId::HIDF: detail::check_quantities(*pt.q, n); return fn(*pt.q, 0.0);
    case NodeId::IUF:
    case NodeId::MDF:
        if (pt.P && pt.M) {
            detail::check_prices(*pt.P, n);
            if (!(*pt.M > 0.0) || !std::isfinite(*pt.M)) throw DomainError("M must be positive");
            return fn(*pt.P, *pt.M);
        }
        detail::check_prices(*pt.p, n, "p");
        return fn(*pt.p, 1.0);
    case NodeId::EF:
    case NodeId::HDF: {
        const Vec& P = pt.P ? *pt.P : *pt.p;
        detail::check_prices(P, n, pt.P ? "P" : "p");
        detail::check_finite(*pt.u, "u");
        return fn(P, *pt.u);
    }
    case NodeId::DF:
    case NodeId::AIDF:
        detail::check_quantities(*pt.q, n);
        detail::check_finite(*pt.u, "u");
        return fn(*pt.q, *pt.u);
    case NodeId::BC:
        detail::check_prices(*pt.P, n);
        detail::check_quantities(*pt.q, n);
        detail::check_finite(*pt.M, "M");
        return fn(detail::concat(*pt.P, *pt.q), *pt.M);
    case NodeId::EAF:
        detail::check_prices(*pt.P, n);
        detail::check_quantities(*pt.q, n);
        return fn(detail::concat(*pt.P, *pt.q), 0.0);
    }
    return {};
}

class WheelSession;

/// What a transition sees while it builds: its path predecessor, handles
/// produced earlier on the same path, and the session for everything else.
struct BuildContext {
    WheelSession& session;
    HandlePtr source;
    const std::map<NodeId, HandlePtr>& local;
    std::vector<std::string> inputs;

    HandlePtr resolve(NodeId id);
};

using TransitionBuilder = std::function<NumericFn(BuildContext&)>;

const std::map<std::string, TransitionBuilder, std::less<>>& transition_builders();

class WheelSession {
public:
    explicit WheelSession(UtilityExpr U, SessionSettings settings = {})
        : U_(std::move(U)), settings_(settings) {}

    const UtilityExpr& utility() const { return U_; }
    const SessionSettings& settings() const { return settings_; }
    int n_goods() const { return U_.n_goods(); }

    /// Routes used when a node is needed but no path supplies it.
    static const std::vector<std::string>& default_route(NodeId id) {
        static const std::map<NodeId, std::vector<std::string>> routes = {
            {NodeId::DUF, {}},
            {NodeId::BC, {}},
            {NodeId::EAF, {}},
            {NodeId::MDF, {"t_primal_solve"}},
            {NodeId::IUF, {"t_primal_solve", "t_mdf_to_iuf"}},
            {NodeId::DF, {"t_duf_to_df"}},
            {NodeId::HDF, {"t_duf_to_df", "t_dual_solve"}},
            {NodeId::EF, {"t_duf_to_df", "t_dual_solve", "t_hdf_to_ef"}},
            {NodeId::HIDF, {"t_hotelling_wold"}},
            {NodeId::AIDF, {"t_duf_to_df", "t_antonelli"}},
        };
        return routes.at(id);
    }

    static bool is_seed(NodeId id) { return id == NodeId::DUF || id == NodeId::BC || id == NodeId::EAF; }

    /// Handle for `id` along its default route (cached).
    HandlePtr handle(NodeId id) {
        std::lock_guard lock(mu_);
        if (is_seed(id)) return seed(id);
        HandlePtr h = seed(NodeId::DUF);
        std::map<NodeId, HandlePtr> local{{NodeId::DUF, h}};
        for (const auto& name : default_route(id)) {
            h = apply(find_edge(name), h, local);
            local[h->node] = h;
        }
        return h;
    }

    /// Builds (or fetches) the handle produced by `edge` from `source`.
    HandlePtr apply(const WheelEdge& edge, HandlePtr source, const std::map<NodeId, HandlePtr>& local = {}) {
        std::lock_guard lock(mu_);
        if (source->node != edge.from)
            throw NoPathError(std::string(edge.name) + " starts at " + std::string(node_name(edge.from)) +
                              ", not at " + std::string(node_name(source->node)));
        auto it = transition_builders().find(edge.name);
        if (it == transition_builders().end())
            throw NotFoundError("no builder for transition " + std::string(edge.name));
        BuildContext ctx{*this, source, local, {}};
        NumericFn fn = it->second(ctx);
        auto h = std::make_shared<FunctionHandle>();
        h->node = edge.to;
        h->normalized = edge.normalized;
        h->provenance = source->provenance;
        h->provenance.emplace_back(edge.name);
        h->inputs = std::move(ctx.inputs);
        h->n_goods = n_goods();
        h->fn = std::move(fn);
        return remember(std::move(h));
    }

    /// One transition from the default handle of its source node.
    HandlePtr transition(std::string_view edge_name) {
        const auto& e = find_edge(edge_name);
        return apply(e, handle(e.from));
    }

    std::vector<HandlePtr> cached() const {
        std::lock_guard lock(mu_);
        std::vector<HandlePtr> out;
        for (const auto& [_, h] : cache_) out.push_back(h);
        return out;
    }

private:
    HandlePtr seed(NodeId id) {
        auto h = std::make_shared<FunctionHandle>();
        h->node = id;
        h->n_goods = n_goods();
        const int n = n_goods();
        if (id == NodeId::DUF) {
            auto U = U_;
            h->fn = [U](const Vec& q, double) { return Vec{eval_utility(U, q)}; };
        } else if (id == NodeId::BC) {
            h->fn = [n](const Vec& x, double M) {
                return Vec{M - dot(std::span(x).first(static_cast<std::size_t>(n)),
                                   std::span(x).subspan(static_cast<std::size_t>(n)))};
            };
        } else {
            h->fn = [n](const Vec& x, double) {
                return Vec{dot(std::span(x).first(static_cast<std::size_t>(n)),
                               std::span(x).subspan(static_cast<std::size_t>(n)))};
            };
        }
        return remember(std::move(h));
    }

    HandlePtr remember(std::shared_ptr<FunctionHandle> h) {
        auto key = h->key();
        auto [it, inserted] = cache_.try_emplace(key, std::move(h));
        return it->second;
    }

    UtilityExpr U_;
    SessionSettings settings_;
    mutable std::recursive_mutex mu_;
    std::map<std::string, HandlePtr> cache_;
};

inline HandlePtr BuildContext::resolve(NodeId id) {
    auto it = local.find(id);
    HandlePtr h = it != local.end() ? it->second : session.handle(id);
    inputs.push_back(h->key());
    return h;
}

// ---------------------------------------------------------------------------
// Path execution

struct TraceStep {
    std::string edge;
    NodeId node = NodeId::DUF;
    std::vector<std::string> provenance;
    std::optional<Vec> value;
};

struct PathResult {
    HandlePtr handle;
    std::vector<TraceStep> trace;
    std::optional<ErrorInfo> error;
};

/// Runs `path` from the session's handle for its first node, evaluating each
/// step at `pt` when the point carries that node's arguments. The first
/// failure stops the run; the trace up to it is kept.
inline PathResult execute_path(WheelSession& session, const std::vector<const WheelEdge*>& path, const Point& pt,
                               std::optional<NodeId> start = {}) {
    PathResult out;
    try {
        NodeId from = path.empty() ? start.value_or(NodeId::DUF) : path.front()->from;
        if (start && *start != from) throw NoPathError("path does not start at " + std::string(node_name(*start)));
        HandlePtr h = session.handle(from);
        std::map<NodeId, HandlePtr> local{{from, h}};
        out.handle = h;
        for (const WheelEdge* e : path) {
            // an edge may branch from any node already produced on this path
            if (e->from != h->node) {
                auto it = local.find(e->from);
                if (it == local.end())
                    throw NoPathError(std::string(e->name) + " starts at " + std::string(node_name(e->from)) +
                                      ", which this path has not reached");
                h = it->second;
            }
            h = session.apply(*e, h, local);
            local[h->node] = h;
            out.handle = h;
            TraceStep step{std::string(e->name), h->node, h->provenance, std::nullopt};
            out.trace.push_back(step);
            if (h->can_evaluate(pt)) out.trace.back().value = h->evaluate(pt);
        }
    } catch (const Error& e) {
        out.error = ErrorInfo::from(e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transition implementations

namespace detail {

/// Central difference of f along coordinate i; the step never reaches zero
/// when the coordinate must stay positive.
inline double partial(const std::function<double(const Vec&)>& f, const Vec& x, std::size_t i, double rel,
                      bool positive) {
    double h = fd_step(x[i], rel);
    if (positive) h = std::min(h, 0.5 * x[i]);
    if (!(h > 0.0)) throw DomainError("finite-difference step collapsed at a boundary point");
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    return (f(xp) - f(xm)) / (2.0 * h);
}

/// Swallows library errors into NaN, for use inside searches.
template <class F>
double or_nan(F&& f) {
    try {
        return f();
    } catch (const Error&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

template <class F>
Vec vec_or_nan(F&& f, std::size_t n) {
    try {
        return f();
    } catch (const Error&) {
        return Vec(n, std::numeric_limits<double>::quiet_NaN());
    }
}

inline void require_interior(const Vec& q, double floor, const char* what) {
    for (double v : q)
        if (!(v >= floor)) throw DomainError(std::string(what) + " needs an interior bundle (all q_i >= " +
                                             std::to_string(floor) + ")");
}

inline int dual_divisions(const SessionSettings& s, int n) { return s.dual_lattice[std::clamp(n, 2, 4) - 2]; }

/// Minimizes f over the floored simplex: lattice basins then Nelder-Mead.
inline std::pair<Vec, double> simplex_minimum(const std::function<double(const Vec&)>& f, int n, int k,
                                              double floor) {
    auto ident = [](const Vec& s) { return s; };
    auto seeds = lattice_local_minima(n, k, floor, f, ident, 3);
    if (seeds.empty()) throw ConvergenceError("objective undefined on the whole price simplex");
    Vec best_s;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& seed : seeds) {
        auto r = refine_on_simplex(f, seed.shares, floor, 0.5 / k, 1e-11);
        Vec s = r.value <= seed.value ? r.x : seed.shares;
        double v = std::min(r.value, seed.value);
        if (v < best) {
            best = v;
            best_s = s;
        }
    }
    return {best_s, best};
}

/// Finds x with g(x) = 0 for decreasing g on the real line, starting near
/// x0. g may be undefined (NaN) on parts of the line; the search closes in
/// on such regions by bisection.
inline double solve_decreasing_with_gaps(const std::function<double(double)>& g, double x0) {
    double x = x0, gx = g(x);
    for (int k = 0; std::isnan(gx) && k < 60; ++k) {
        double off = std::ldexp(1.0, k / 2);
        x = (k % 2 == 0) ? x0 + off : x0 - off;
        gx = g(x);
    }
    if (std::isnan(gx)) throw BracketError("function undefined around the starting point");
    if (gx == 0.0) return x;
    const double dir = gx > 0 ? 1.0 : -1.0; // decreasing: positive g means move right
    double a = x, ga = gx, step = std::max(1.0, std::abs(x));
    for (int k = 0; k < 200; ++k) {
        double b = a + dir * step;
        double gb = g(b);
        if (std::isnan(gb)) {
            // Narrow towards the edge of the defined region.
            double lo = a, hi = b;
            for (int j = 0; j < 60 && std::isnan(gb); ++j) {
                b = 0.5 * (lo + hi);
                gb = g(b);
                if (std::isnan(gb)) hi = b;
            }
            if (std::isnan(gb) || std::abs(b - a) < 1e-14 * std::max(1.0, std::abs(a)))
                throw BracketError("no sign change before the function becomes undefined");
            step = std::abs(b - a);
        } else {
            step *= 2.0;
        }
        if ((gb > 0) != (ga > 0) || gb == 0.0) {
            double lo = std::min(a, b), hi = std::max(a, b);
            double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
            return brent_solve(g, lo, hi, 1e-14 * scale, 0.0);
        }
        a = b;
        ga = gb;
    }
    throw BracketError("no sign change found");
}

/// Starting utility level for searches in u: the utility of the bundle that
/// splits M equally across goods.
inline double equal_split_utility(const UtilityExpr& U, const Vec& P, double M) {
    Vec q(P.size());
    for (std::size_t i = 0; i < P.size(); ++i) q[i] = M / (double(P.size()) * P[i]);
    double v = U.value_or_nan(q);
    return std::isfinite(v) ? v : 0.0;
}

/// Price vector p with x^M(p, 1) = q, searched on the face p.q = 1.
inline Vec invert_mdf(const FunctionHandle& mdf, const Vec& q, const InversionOptions& opt) {
    const std::size_t n = q.size();
    auto price = [&](const Vec& w) {
        Vec p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = w[i] / q[i];
        return p;
    };
    auto r = [&](const Vec& w) {
        return vec_or_nan(
            [&] {
                Vec x = mdf(price(w), 1.0);
                Vec out(n);
                for (std::size_t i = 0; i < n; ++i) out[i] = x[i] / q[i] - 1.0;
                return out;
            },
            n);
    };
    return price(invert_on_simplex(n, r, "inverse Marshallian demand", opt));
}

/// Price direction w (on the simplex) whose Hicksian bundle at u points
/// along q.
inline Vec invert_hdf_direction(const FunctionHandle& hdf, const Vec& q, double u, const InversionOptions& opt) {
    const std::size_t n = q.size();
    const double qs = sum(q);
    auto r = [&](const Vec& w) {
        return vec_or_nan(
            [&] {
                Vec x = hdf(w, u);
                double xs = sum(x);
                Vec out(n);
                for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] / xs) / (q[i] / qs) - 1.0;
                return out;
            },
            n);
    };
    return invert_on_simplex(n, r, "inverse Hicksian demand", opt);
}

// clang-format off
inline std::map<std::string, TransitionBuilder, std::less<>> make_builders() {
    std::map<std::string, TransitionBuilder, std::less<>> b;

    b["t_primal_solve"] = [](BuildContext& c) -> NumericFn {
        auto U = c.session.utility();
        auto opt = c.session.settings().solver;
        return [U, opt](const Vec& P, double M) { return maximize_on_budget(U, {P, M}, opt).argmin_or_argmax; };
    };
    b["t_mdf_to_iuf"] = [](BuildContext& c) -> NumericFn {
        auto U = c.session.utility();
        auto mdf = c.source;
        return [U, mdf](const Vec& P, double M) { return Vec{eval_utility(U, (*mdf)(P, M))}; };
    };
    b["t_roy"] = [](BuildContext& c) -> NumericFn {
        auto iuf = c.source;
        double rel = c.session.settings().fd_rel;
        return [iuf, rel](const Vec& P, double M) {
            const std::size_t n = P.size();
            Vec x = P;
            x.push_back(M);
            auto V = [&](const Vec& z) { return iuf->scalar(Vec(z.begin(), z.begin() + long(n)), z[n]); };
            double vm = partial(V, x, n, rel, true);
            if (!(std::abs(vm) > 1e-12)) throw DomainError("dV/dM vanishes; indirect utility is degenerate here");
            Vec out(n);
            for (std::size_t i = 0; i < n; ++i) out[i] = -partial(V, x, i, rel, true) / vm;
            return out;
        };
    };
    b["t_norm_roy"] = [](BuildContext& c) -> NumericFn {
        auto iuf = c.source;
        double rel = c.session.settings().fd_rel;
        return [iuf, rel](const Vec& P, double M) {
            Vec p = scaled(P, 1.0 / M);
            auto V = [&](const Vec& z) { return iuf->scalar(z, 1.0); };
            Vec grad(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) grad[i] = partial(V, p, i, rel, true);
            double denom = dot(p, grad);
            if (!(std::abs(denom) > 1e-12)) throw DomainError("sum_j p_j dV/dp_j vanishes");
            return scaled(grad, 1.0 / denom);
        };
    };
    b["t_dual_solve"] = [](BuildContext& c) -> NumericFn {
        auto U = c.session.utility();
        auto opt = c.session.settings().solver;
        return [U, opt](const Vec& P, double u) { return minimize_expenditure(U, P, u, opt).argmin_or_argmax; };
    };
    b["t_eaf_to_hdf"] = b["t_dual_solve"];
    b["t_hdf_to_ef"] = [](BuildContext& c) -> NumericFn {
        auto hdf = c.source;
        return [hdf](const Vec& P, double u) { return Vec{dot(P, (*hdf)(P, u))}; };
    };
    auto shephard = [](BuildContext& c) -> NumericFn {
        auto ef = c.source;
        double rel = c.session.settings().fd_rel;
        return [ef, rel](const Vec& P, double u) {
            auto E = [&](const Vec& z) { return ef->scalar(z, u); };
            Vec out(P.size());
            for (std::size_t i = 0; i < P.size(); ++i) out[i] = partial(E, P, i, rel, true);
            return out;
        };
    };
    b["t_shephard"] = shephard;
    b["t_norm_shephard"] = shephard;
    b["t_hotelling_wold"] = [](BuildContext& c) -> NumericFn {
        auto U = c.session.utility();
        return [U](const Vec& q, double) {
            Vec g = gradient(U, q);
            double denom = dot(g, q);
            if (!(denom > 1e-300) || !std::isfinite(denom))
                throw DomainError("sum_j (dU/dq_j) q_j is not positive; utility is locally satiated");
            return scaled(g, 1.0 / denom);
        };
    };
    b["t_antonelli"] = [](BuildContext& c) -> NumericFn {
        auto df = c.source;
        double rel = c.session.settings().fd_rel;
        return [df, rel](const Vec& q, double u) {
            auto D = [&](const Vec& z) { return df->scalar(z, u); };
            Vec out(q.size());
            for (std::size_t i = 0; i < q.size(); ++i) out[i] = partial(D, q, i, rel, true);
            return out;
        };
    };
    b["t_mdf_to_duf"] = [](BuildContext& c) -> NumericFn {
        auto mdf = c.source;
        auto iuf = c.resolve(NodeId::IUF);
        auto opt = c.session.settings().inversion;
        double floor = c.session.settings().interior_min;
        return [mdf, iuf, opt, floor](const Vec& q, double) {
            require_interior(q, floor, "inverse demand");
            Vec p = invert_mdf(*mdf, q, opt);
            return Vec{iuf->scalar(p, 1.0)};
        };
    };
    b["t_mdf_to_hidf"] = [](BuildContext& c) -> NumericFn {
        auto mdf = c.source;
        auto opt = c.session.settings().inversion;
        double floor = c.session.settings().interior_min;
        return [mdf, opt, floor](const Vec& q, double) {
            require_interior(q, floor, "inverse demand");
            return invert_mdf(*mdf, q, opt);
        };
    };
    b["t_hidf_to_mdf"] = [](BuildContext& c) -> NumericFn {
        auto hidf = c.source;
        auto opt = c.session.settings().inversion;
        return [hidf, opt](const Vec& P, double M) {
            const std::size_t n = P.size();
            Vec p = scaled(P, 1.0 / M);
            auto bundle = [&](const Vec& s) {
                Vec q(n);
                for (std::size_t i = 0; i < n; ++i) q[i] = s[i] / p[i];
                return q;
            };
            auto r = [&](const Vec& s) {
                return vec_or_nan(
                    [&] {
                        Vec phi = (*hidf)(bundle(s), 0.0);
                        Vec out(n);
                        for (std::size_t i = 0; i < n; ++i) out[i] = phi[i] / p[i] - 1.0;
                        return out;
                    },
                    n);
            };
            return bundle(invert_on_simplex(n, r, "inverse Hotelling demand", opt));
        };
    };
    b["t_aidf_to_hdf"] = [](BuildContext& c) -> NumericFn {
        auto aidf = c.source;
        auto df = c.resolve(NodeId::DF);
        auto opt = c.session.settings().inversion;
        return [aidf, df, opt](const Vec& P, double u) {
            const std::size_t n = P.size();
            auto bundle = [&](const Vec& s) {
                Vec d(n);
                for (std::size_t i = 0; i < n; ++i) d[i] = s[i] / P[i];
                return scaled(d, 1.0 / df->scalar(d, u));
            };
            auto r = [&](const Vec& s) {
                return vec_or_nan(
                    [&] {
                        Vec q = bundle(s);
                        Vec psi = (*aidf)(q, u);
                        double E = dot(P, q);
                        Vec out(n);
                        for (std::size_t i = 0; i < n; ++i) out[i] = psi[i] * E / P[i] - 1.0;
                        return out;
                    },
                    n);
            };
            return bundle(invert_on_simplex(n, r, "inverse Antonelli demand", opt));
        };
    };
    b["t_hdf_to_aidf"] = [](BuildContext& c) -> NumericFn {
        auto hdf = c.source;
        auto opt = c.session.settings().inversion;
        double floor = c.session.settings().interior_min;
        return [hdf, opt, floor](const Vec& q, double u) {
            require_interior(q, floor, "inverse Hicksian demand");
            Vec w = invert_hdf_direction(*hdf, q, u, opt);
            return scaled(w, 1.0 / dot(w, (*hdf)(w, u)));
        };
    };
    b["t_hdf_to_eaf"] = [](BuildContext& c) -> NumericFn {
        auto hdf = c.source;
        auto ef = c.resolve(NodeId::EF);
        auto U = c.session.utility();
        auto opt = c.session.settings().inversion;
        double floor = c.session.settings().interior_min;
        const std::size_t n = static_cast<std::size_t>(U.n_goods());
        return [hdf, ef, U, opt, floor, n](const Vec& x, double) {
            Vec P(x.begin(), x.begin() + long(n)), q(x.begin() + long(n), x.end());
            require_interior(q, floor, "inverse Hicksian demand");
            double u = eval_utility(U, q);
            Vec w = invert_hdf_direction(*hdf, q, u, opt);
            return Vec{ef->scalar(scaled(w, sum(P)), u)};
        };
    };
    b["t_iuf_to_mdf_via_hdf"] = [](BuildContext& c) -> NumericFn {
        auto iuf = c.source;
        auto hdf = c.resolve(NodeId::HDF);
        return [iuf, hdf](const Vec& P, double M) { return (*hdf)(P, iuf->scalar(P, M)); };
    };
    b["t_ef_to_hdf_via_mdf"] = [](BuildContext& c) -> NumericFn {
        auto ef = c.source;
        auto mdf = c.resolve(NodeId::MDF);
        return [ef, mdf](const Vec& P, double u) { return (*mdf)(P, ef->scalar(P, u)); };
    };

    b["t_iuf_to_ef"] = [](BuildContext& c) -> NumericFn {
        auto iuf = c.source;
        return [iuf](const Vec& P, double u) {
            auto V = [&](double M) { return or_nan([&] { return iuf->scalar(P, M); }); };
            return Vec{solve_increasing_positive(V, u, sum(P))};
        };
    };
    b["t_ef_to_iuf"] = [](BuildContext& c) -> NumericFn {
        auto ef = c.source;
        auto U = c.session.utility();
        return [ef, U](const Vec& P, double M) {
            auto E = [&](double u) { return or_nan([&] { return ef->scalar(P, u); }); };
            double u0 = equal_split_utility(U, P, M);
            return Vec{solve_increasing_real(E, M, u0, std::max(1e-3, 0.1 * std::abs(u0)))};
        };
    };
    b["t_duf_to_df"] = [](BuildContext& c) -> NumericFn {
        auto U = c.session.utility();
        return [U](const Vec& q, double u) {
            if (!(max_abs(q) > 0.0)) throw DomainError("distance function needs a nonzero bundle");
            double lo = U.value_or_nan(scaled(q, 0.5)), mid = U.value_or_nan(q), hi = U.value_or_nan(scaled(q, 2.0));
            if ((!std::isnan(lo) && !std::isnan(mid) && !(mid > lo)) || (!std::isnan(mid) && !std::isnan(hi) && !(hi > mid)))
                throw MonotonicityError("utility is not increasing along the ray through q");
            auto along = [&](double t) { return U.value_or_nan(scaled(q, t)); };
            double t = solve_increasing_positive(along, u, 1.0);
            if (!(t > 0.0)) throw BracketError("the ray through q stays above u all the way to the origin");
            return Vec{1.0 / t};
        };
    };
    b["t_df_to_duf"] = [](BuildContext& c) -> NumericFn {
        auto df = c.source;
        return [df](const Vec& q, double) {
            auto g = [&](double u) { return or_nan([&] { return df->scalar(q, u) - 1.0; }); };
            return Vec{solve_decreasing_with_gaps(g, 1.0)};
        };
    };

    b["t_mdf_to_hdf"] = [](BuildContext& c) -> NumericFn {
        auto mdf = c.source;
        auto U = c.session.utility();
        return [mdf, U](const Vec& P, double u) {
            auto V = [&](double M) { return or_nan([&] { return eval_utility(U, (*mdf)(P, M)); }); };
            double M = solve_increasing_positive(V, u, sum(P));
            if (M == 0.0) return Vec(P.size(), 0.0);
            return (*mdf)(P, M);
        };
    };
    b["t_hdf_to_mdf"] = [](BuildContext& c) -> NumericFn {
        auto hdf = c.source;
        auto U = c.session.utility();
        return [hdf, U](const Vec& P, double M) {
            auto E = [&](double u) { return or_nan([&] { return dot(P, (*hdf)(P, u)); }); };
            double u0 = equal_split_utility(U, P, M);
            return (*hdf)(P, solve_increasing_real(E, M, u0, std::max(1e-3, 0.1 * std::abs(u0))));
        };
    };
    b["t_hidf_to_aidf"] = [](BuildContext& c) -> NumericFn {
        auto hidf = c.source;
        auto df = c.resolve(NodeId::DF);
        return [hidf, df](const Vec& q, double u) { return (*hidf)(scaled(q, 1.0 / df->scalar(q, u)), 0.0); };
    };
    b["t_aidf_to_hidf"] = [](BuildContext& c) -> NumericFn {
        auto aidf = c.source;
        auto duf = c.resolve(NodeId::DUF);
        return [aidf, duf](const Vec& q, double) { return (*aidf)(q, duf->scalar(q)); };
    };
    b["t_bc_to_eaf"] = [](BuildContext& c) -> NumericFn {
        auto bc = c.source;
        return [bc](const Vec& x, double) { return Vec{-bc->scalar(x, 0.0)}; };
    };
    b["t_eaf_to_bc"] = [](BuildContext& c) -> NumericFn {
        auto eaf = c.source;
        return [eaf](const Vec& x, double M) { return Vec{M - eaf->scalar(x)}; };
    };

    b["t_duf_to_iuf"] = [](BuildContext& c) -> NumericFn {
        auto U = c.session.utility();
        auto opt = c.session.settings().solver;
        return [U, opt](const Vec& P, double M) { return Vec{maximize_on_budget(U, {P, M}, opt).objective_value}; };
    };
    b["t_iuf_to_duf"] = [](BuildContext& c) -> NumericFn {
        auto iuf = c.source;
        const auto& s = c.session.settings();
        double floor = s.interior_min;
        int k = dual_divisions(s, c.session.n_goods());
        return [iuf, floor, k](const Vec& q, double) {
            require_interior(q, floor, "dual recovery of U");
            const std::size_t n = q.size();
            auto value = [&](const Vec& w) {
                Vec p(n);
                for (std::size_t i = 0; i < n; ++i) p[i] = w[i] / q[i];
                return or_nan([&] { return iuf->scalar(p, 1.0); });
            };
            return Vec{simplex_minimum(value, int(n), k, 1e-6).second};
        };
    };
    b["t_ef_to_df"] = [](BuildContext& c) -> NumericFn {
        auto ef = c.source;
        const auto& s = c.session.settings();
        int k = dual_divisions(s, c.session.n_goods());
        return [ef, k](const Vec& q, double u) {
            auto value = [&](const Vec& w) {
                return or_nan([&] {
                    double e = ef->scalar(w, u);
                    if (!(e > 0.0)) throw DomainError("expenditure is not positive");
                    return dot(w, q) / e;
                });
            };
            return Vec{simplex_minimum(value, int(q.size()), k, 1e-6).second};
        };
    };
    b["t_df_to_ef"] = [](BuildContext& c) -> NumericFn {
        auto df = c.source;
        const auto& s = c.session.settings();
        int k = dual_divisions(s, c.session.n_goods());
        return [df, k](const Vec& P, double u) {
            auto value = [&](const Vec& w) {
                return or_nan([&] {
                    Vec d(P.size());
                    for (std::size_t i = 0; i < P.size(); ++i) d[i] = w[i] / P[i];
                    return 1.0 / df->scalar(d, u);
                });
            };
            return Vec{simplex_minimum(value, int(P.size()), k, 0.0).second};
        };
    };
    return b;
}
// clang-format on

} // namespace detail

inline const std::map<std::string, TransitionBuilder, std::less<>>& transition_builders() {
    static const auto builders = detail::make_builders();
    return builders;
}

} // namespace duality
