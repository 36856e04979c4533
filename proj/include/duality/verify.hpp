#pragma once

// Identity residuals over seeded sample points, duality gap, loop closure,
// and the non-convex information-loss demonstration.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "duality/error.hpp"
#include "duality/families.hpp"
#include "duality/session.hpp"

namespace duality {

struct ResidualEntry {
    std::string identity;
    Point point;
    Vec lhs, rhs;
    double residual = NAN;
    double tolerance = 1e-3;
    bool pass = false;
    std::optional<ErrorInfo> error;
};

struct ResidualReport {
    std::vector<ResidualEntry> entries;
    double tolerance = 1e-3;
    std::uint64_t seed = 0;
    int sample_count = 0;

    int failures() const {
        int n = 0;
        for (const auto& e : entries) n += !e.pass;
        return n;
    }
    int passes() const { return int(entries.size()) - failures(); }

    /// Identity names with at least one failing entry, in first-seen order.
    std::vector<std::string> failing_identities() const {
        std::vector<std::string> out;
        for (const auto& e : entries)
            if (!e.pass && std::find(out.begin(), out.end(), e.identity) == out.end()) out.push_back(e.identity);
        return out;
    }

    /// (passed, failed) per identity.
    std::map<std::string, std::pair<int, int>> by_identity() const {
        std::map<std::string, std::pair<int, int>> out;
        for (const auto& e : entries) (e.pass ? out[e.identity].first : out[e.identity].second)++;
        return out;
    }

    void append(const ResidualReport& r) {
        entries.insert(entries.end(), r.entries.begin(), r.entries.end());
        sample_count = std::max(sample_count, r.sample_count);
    }
};

struct GapReport {
    double p_star = NAN; // M
    double d_star = NAN; // E(P, V(P,M))
    double gap = NAN;
    double relative_gap = NAN;
};

struct SlutskyReport {
    std::size_t i = 0, j = 0;
    double total = NAN;        // dx_i^M/dP_j
    double substitution = NAN; // dx_i^c/dP_j at u = V(P,M)
    double income = NAN;       // -(dx_i^M/dM) x_j
    double residual = NAN;
};

struct InfoLossReport {
    std::string utility_text;
    std::vector<Bundle> probes;
    std::vector<bool> interior;
    Vec original_u_values, recovered_u_values;
    std::vector<std::string> methods;
    std::vector<std::optional<ErrorInfo>> errors;
    std::vector<std::pair<std::size_t, std::size_t>> ranking_flips;
    double max_interior_deviation = 0.0;
    double tolerance = 1e-3;
    bool convexified = false;
};

inline const std::vector<std::string>& identity_names() {
    static const std::vector<std::string> names = {
        "roy",          "norm_roy",        "shephard",        "norm_shephard",     "hotelling_wold",
        "antonelli",    "iuf_ef_inverse",  "mdf_hdf_cross_u", "mdf_hdf_cross_M",   "duf_df_inverse",
        "dual_pair_duf_iuf", "dual_pair_df_ef", "slutsky",    "hidf_inversion",    "slutsky_symmetry"};
    return names;
}

inline const std::vector<std::string>& short_loop() {
    static const std::vector<std::string> v = {"t_primal_solve", "t_mdf_to_iuf", "t_mdf_to_duf"};
    return v;
}

inline const std::vector<std::string>& long_loop() {
    static const std::vector<std::string> v = {"t_duf_to_df", "t_antonelli", "t_aidf_to_hdf", "t_hdf_to_ef",
                                               "t_ef_to_iuf", "t_roy",       "t_mdf_to_duf"};
    return v;
}

/// Base tolerance doubled for every solver-backed inversion after the first.
inline double loop_tolerance(const std::vector<std::string>& loop, double base = 1e-3) {
    static const std::vector<std::string> inversions = {"t_mdf_to_duf",  "t_hdf_to_eaf", "t_aidf_to_hdf",
                                                        "t_hidf_to_mdf", "t_ef_to_iuf",  "t_iuf_to_ef",
                                                        "t_duf_to_df",   "t_df_to_duf"};
    int k = 0;
    for (const auto& e : loop) k += std::count(inversions.begin(), inversions.end(), e);
    return base * std::pow(2.0, std::max(0, k - 1));
}

namespace detail {

/// Step for derivatives of solver outputs: large enough that solver noise
/// (~1e-12) stays below truncation error.
inline constexpr double kOuterFd = 1e-4;

struct Sample {
    Vec P;
    double M = 0;
    Bundle x; // Marshallian demand
    double u = 0;
};

inline Vec log_uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> d(std::log(lo), std::log(hi));
    Vec v(n);
    for (double& x : v) x = std::exp(d(rng));
    return v;
}

/// Seeded (P, M) draws whose Marshallian demand is interior (every budget
/// share at least 1%). Draws that fail to solve are skipped.
inline std::vector<Sample> interior_samples(WheelSession& s, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto mdf = s.handle(NodeId::MDF);
    auto iuf = s.handle(NodeId::IUF);
    const std::size_t n = std::size_t(s.n_goods());
    std::vector<Sample> out;
    for (int attempt = 0; int(out.size()) < count && attempt < 40 * count; ++attempt) {
        Sample smp;
        smp.P = log_uniform(rng, n, 0.1, 10.0);
        smp.M = log_uniform(rng, 1, 1.0, 100.0)[0];
        try {
            smp.x = (*mdf)(smp.P, smp.M);
            bool interior = true;
            for (std::size_t i = 0; i < n; ++i) interior &= smp.P[i] * smp.x[i] >= 0.01 * smp.M;
            if (!interior) continue;
            smp.u = iuf->scalar(smp.P, smp.M);
        } catch (const Error&) {
            continue;
        }
        out.push_back(std::move(smp));
    }
    return out;
}

inline std::vector<Bundle> bundle_probes(int n, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Bundle> out;
    for (int k = 0; k < count; ++k) out.push_back(log_uniform(rng, std::size_t(n), 0.2, 5.0));
    return out;
}

inline Point pm_point(const Vec& P, double M) {
    Point p;
    p.P = P;
    p.M = M;
    return p;
}

inline Point pu_point(const Vec& P, double u) {
    Point p;
    p.P = P;
    p.u = u;
    return p;
}

inline Point q_point(const Vec& q, std::optional<double> u = {}) {
    Point p;
    p.q = q;
    p.u = u;
    return p;
}

inline Vec cat(Vec a, const Vec& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

/// Runs `body` and records its (lhs, rhs) as an entry; library errors
/// become failing entries.
inline ResidualEntry make_entry(const std::string& name, Point pt, double tol,
                                const std::function<std::pair<Vec, Vec>()>& body) {
    ResidualEntry e;
    e.identity = name;
    e.point = std::move(pt);
    e.tolerance = tol;
    try {
        auto [l, r] = body();
        e.lhs = std::move(l);
        e.rhs = std::move(r);
        e.residual = relative_residual(e.lhs, e.rhs);
        e.pass = e.residual <= tol;
    } catch (const Error& err) {
        e.error = ErrorInfo::from(err);
        e.pass = false;
    }
    return e;
}

/// dx/dP_j (j < n) or dx/dM (j == n) of a demand handle by central differences.
inline Vec demand_slope(const FunctionHandle& h, const Vec& P, double s, std::size_t j) {
    const std::size_t n = P.size();
    double base = j < n ? P[j] : s;
    double step = std::min(fd_step(base, kOuterFd), 0.5 * base);
    Vec Pp = P, Pm = P;
    double sp = s, sm = s;
    if (j < n) {
        Pp[j] += step;
        Pm[j] -= step;
    } else {
        sp += step;
        sm -= step;
    }
    Vec a = h(Pp, sp), b = h(Pm, sm);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = (a[i] - b[i]) / (2 * step);
    return a;
}

} // namespace detail

inline SlutskyReport check_slutsky(WheelSession& s, const PriceIncome& pi, std::size_t i, std::size_t j) {
    const int n = s.n_goods();
    pi.validate(n);
    if (i >= std::size_t(n) || j >= std::size_t(n)) throw ParamError("Slutsky indices out of range");
    auto mdf = s.handle(NodeId::MDF);
    auto hdf = s.handle(NodeId::HDF);
    double u = s.handle(NodeId::IUF)->scalar(pi.P, pi.M);
    Vec x = (*mdf)(pi.P, pi.M);
    detail::require_interior(x, s.settings().interior_min, "Slutsky decomposition");
    SlutskyReport r;
    r.i = i;
    r.j = j;
    r.total = detail::demand_slope(*mdf, pi.P, pi.M, j)[i];
    r.substitution = detail::demand_slope(*hdf, pi.P, u, j)[i];
    r.income = -detail::demand_slope(*mdf, pi.P, pi.M, std::size_t(n))[i] * x[j];
    r.residual = relative_residual(r.substitution + r.income, r.total);
    return r;
}

inline GapReport duality_gap(WheelSession& s, const PriceIncome& pi) {
    pi.validate(s.n_goods());
    GapReport g;
    g.p_star = pi.M;
    double v = s.handle(NodeId::IUF)->scalar(pi.P, pi.M);
    g.d_star = s.handle(NodeId::EF)->scalar(pi.P, v);
    g.gap = g.p_star - g.d_star;
    g.relative_gap = std::abs(g.gap) / pi.M;
    return g;
}

/// Residuals of one named identity over `samples` seeded points.
inline ResidualReport check_identity(WheelSession& s, const std::string& name, int samples, std::uint64_t seed,
                                     double tol = 1e-3) {
    using namespace detail;
    if (std::find(identity_names().begin(), identity_names().end(), name) == identity_names().end())
        throw NotFoundError("unknown identity '" + name + "'");
    ResidualReport rep;
    rep.tolerance = tol;
    rep.seed = seed;
    const int n = s.n_goods();

    // Identities over sampled bundles rather than prices.
    if (name == "duf_df_inverse" || name == "dual_pair_duf_iuf" || name == "dual_pair_df_ef") {
        auto probes = bundle_probes(n, samples, seed);
        rep.sample_count = int(probes.size());
        auto U = s.handle(NodeId::DUF);
        for (const auto& q : probes) {
            if (name == "duf_df_inverse") {
                auto df = s.handle(NodeId::DF);
                auto back = s.transition("t_df_to_duf");
                rep.entries.push_back(make_entry(name, q_point(q), tol, [&] {
                    double uq = U->scalar(q);
                    return std::pair{Vec{df->scalar(q, uq), back->scalar(q)}, Vec{1.0, uq}};
                }));
            } else if (name == "dual_pair_duf_iuf") {
                auto rec = s.transition("t_iuf_to_duf");
                rep.entries.push_back(make_entry(name, q_point(q), tol, [&] {
                    return std::pair{Vec{rec->scalar(q)}, Vec{U->scalar(q)}};
                }));
            } else {
                auto rec = s.transition("t_ef_to_df");
                auto df = s.handle(NodeId::DF);
                // a utility level below U(q), so D(q,u) > 1 is exercised
                double u = 0.0;
                try {
                    u = 0.7 * U->scalar(q);
                } catch (const Error&) {
                }
                rep.entries.push_back(make_entry(name, q_point(q, u), tol, [&] {
                    return std::pair{Vec{rec->scalar(q, u)}, Vec{df->scalar(q, u)}};
                }));
            }
        }
        return rep;
    }

    if (name == "hidf_inversion") {
        // no interior filter: this is where non-convex demand shows up
        std::mt19937_64 rng(seed);
        auto inv = s.transition("t_hidf_to_mdf");
        auto mdf = s.handle(NodeId::MDF);
        rep.sample_count = samples;
        for (int k = 0; k < samples; ++k) {
            Vec P = log_uniform(rng, std::size_t(n), 0.1, 10.0);
            double M = log_uniform(rng, 1, 1.0, 100.0)[0];
            rep.entries.push_back(make_entry(name, pm_point(P, M), tol, [&] {
                Vec a = (*inv)(P, M), b = (*mdf)(P, M);
                // compare as budget shares so the scale of M drops out
                for (std::size_t i = 0; i < a.size(); ++i) a[i] *= P[i] / M, b[i] *= P[i] / M;
                return std::pair{a, b};
            }));
        }
        return rep;
    }

    auto pts = interior_samples(s, samples, seed);
    rep.sample_count = int(pts.size());
    for (const auto& smp : pts) {
        const Vec& P = smp.P;
        const double M = smp.M, u = smp.u;
        Point at = pm_point(P, M);
        at.u = u;
        std::function<std::pair<Vec, Vec>()> body;
        if (name == "roy") {
            auto h = s.transition("t_roy");
            body = [=, &s] { return std::pair{(*h)(P, M), smp.x}; };
        } else if (name == "norm_roy") {
            auto h = s.transition("t_norm_roy");
            at.p = scaled(P, 1.0 / M);
            body = [=, &s] { return std::pair{(*h)(scaled(P, 1.0 / M), 1.0), smp.x}; };
        } else if (name == "shephard") {
            auto h = s.transition("t_shephard");
            auto hdf = s.handle(NodeId::HDF);
            body = [=, &s] { return std::pair{(*h)(P, u), (*hdf)(P, u)}; };
        } else if (name == "norm_shephard") {
            auto h = s.transition("t_norm_shephard");
            auto hdf = s.handle(NodeId::HDF);
            at.p = scaled(P, 1.0 / M);
            body = [=, &s] { return std::pair{(*h)(scaled(P, 1.0 / M), u), (*hdf)(P, u)}; };
        } else if (name == "hotelling_wold") {
            auto phi = s.handle(NodeId::HIDF);
            body = [=, &s] {
                Vec f = (*phi)(smp.x);
                return std::pair{cat(f, {dot(f, smp.x)}), cat(scaled(P, 1.0 / M), {1.0})};
            };
        } else if (name == "antonelli") {
            auto psi = s.handle(NodeId::AIDF);
            auto hdf = s.handle(NodeId::HDF);
            auto ef = s.handle(NodeId::EF);
            auto df = s.handle(NodeId::DF);
            body = [=, &s] {
                Vec xc = (*hdf)(P, u);
                double E = ef->scalar(P, u);
                Vec q = scaled(xc, 1.7);
                return std::pair{cat((*psi)(xc, u), {dot((*psi)(q, u), q)}),
                                 cat(scaled(P, 1.0 / E), {df->scalar(q, u)})};
            };
        } else if (name == "iuf_ef_inverse") {
            auto iuf = s.handle(NodeId::IUF);
            auto ef = s.handle(NodeId::EF);
            body = [=, &s] {
                double u2 = 0.5 * u;
                return std::pair{Vec{ef->scalar(P, u), iuf->scalar(P, ef->scalar(P, u2))}, Vec{M, u2}};
            };
        } else if (name == "mdf_hdf_cross_u") {
            auto h = s.transition("t_iuf_to_mdf_via_hdf");
            body = [=, &s] { return std::pair{(*h)(P, M), smp.x}; };
        } else if (name == "mdf_hdf_cross_M") {
            auto h = s.transition("t_ef_to_hdf_via_mdf");
            auto hdf = s.handle(NodeId::HDF);
            body = [=, &s] { return std::pair{(*h)(P, u), (*hdf)(P, u)}; };
        } else if (name == "slutsky") {
            body = [=, &s] {
                Vec l, r;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        auto sr = check_slutsky(s, {P, M}, std::size_t(i), std::size_t(j));
                        l.push_back(sr.total);
                        r.push_back(sr.substitution + sr.income);
                    }
                return std::pair{l, r};
            };
        } else if (name == "slutsky_symmetry") {
            auto hdf = s.handle(NodeId::HDF);
            body = [=, &s] {
                std::vector<Vec> S;
                for (int j = 0; j < n; ++j) S.push_back(demand_slope(*hdf, P, u, std::size_t(j)));
                Vec l, r;
                for (int i = 0; i < n; ++i)
                    for (int j = i + 1; j < n; ++j) {
                        l.push_back(S[std::size_t(j)][std::size_t(i)]);
                        r.push_back(S[std::size_t(i)][std::size_t(j)]);
                    }
                return std::pair{l, r};
            };
        }
        rep.entries.push_back(make_entry(name, at, tol, body));
    }
    return rep;
}

/// Runs `loop` from its first node and compares its terminal handle with the
/// session's own handle for that node at each probe.
inline ResidualReport check_loop_closure(WheelSession& s, const std::vector<std::string>& loop,
                                         const std::vector<Point>& probes, double tol,
                                         const std::string& label = "loop_closure") {
    std::vector<const WheelEdge*> path;
    for (const auto& e : loop) path.push_back(&find_edge(e));
    if (loop.empty() || !is_valid_walk(loop, path.front()->from))
        throw NoPathError("loop transitions do not chain");
    ResidualReport rep;
    rep.tolerance = tol;
    rep.sample_count = int(probes.size());
    auto run = execute_path(s, path, Point{});
    for (const auto& pt : probes) {
        if (run.error) {
            ResidualEntry e;
            e.identity = label;
            e.point = pt;
            e.tolerance = tol;
            e.error = run.error;
            rep.entries.push_back(std::move(e));
            continue;
        }
        auto original = s.handle(run.handle->node);
        rep.entries.push_back(detail::make_entry(label, pt, tol, [&] {
            return std::pair{run.handle->evaluate(pt), original->evaluate(pt)};
        }));
    }
    return rep;
}

inline std::vector<Point> loop_probes(int n, int count, std::uint64_t seed) {
    std::vector<Point> out;
    for (auto& q : detail::bundle_probes(n, count, seed + 1)) out.push_back(detail::q_point(q));
    return out;
}

/// Gap entries at the interior samples.
inline ResidualReport check_duality_gap(WheelSession& s, int samples, std::uint64_t seed, double tol = 1e-5) {
    ResidualReport rep;
    rep.tolerance = tol;
    rep.seed = seed;
    std::mt19937_64 rng(seed);
    const auto n = std::size_t(s.n_goods());
    rep.sample_count = samples;
    for (int k = 0; k < samples; ++k) {
        Vec P = detail::log_uniform(rng, n, 0.1, 10.0);
        double M = detail::log_uniform(rng, 1, 1.0, 100.0)[0];
        ResidualEntry e;
        e.identity = "duality_gap";
        e.point = detail::pm_point(P, M);
        e.tolerance = tol;
        try {
            auto g = duality_gap(s, {P, M});
            e.lhs = {g.d_star};
            e.rhs = {g.p_star};
            e.residual = g.relative_gap;
            e.pass = e.residual <= tol;
        } catch (const Error& err) {
            e.error = ErrorInfo::from(err);
        }
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

/// Income never matters for the second good under U = q1 + ln(q2) once
/// the first good is bought.
inline ResidualReport check_quasilinear_coincidence(int samples = 25, std::uint64_t seed = 42, double tol = 1e-5) {
    WheelSession s(parse_utility("q1+ln(q2)"));
    auto mdf = s.handle(NodeId::MDF);
    auto hdf = s.handle(NodeId::HDF);
    auto iuf = s.handle(NodeId::IUF);
    ResidualReport rep;
    rep.tolerance = tol;
    rep.seed = seed;
    std::mt19937_64 rng(seed);
    for (int attempt = 0; rep.sample_count < samples && attempt < 40 * samples; ++attempt) {
        Vec P = detail::log_uniform(rng, 2, 0.1, 10.0);
        double M = detail::log_uniform(rng, 1, 1.0, 100.0)[0];
        if (!(M > 1.05 * P[0])) continue; // corner regime x1 = 0
        ++rep.sample_count;
        auto e = detail::make_entry("quasilinear_coincidence", detail::pm_point(P, M), tol, [&] {
            double x2 = (*mdf)(P, M)[1];
            double x2c = (*hdf)(P, iuf->scalar(P, M))[1];
            double dM = detail::demand_slope(*mdf, P, M, 2)[1];
            return std::pair{Vec{x2, dM}, Vec{x2c, 0.0}};
        });
        if (!e.error) {
            // absolute, not relative: both bounds are stated in units of good 2
            e.residual = std::max(std::abs(e.lhs[0] - e.rhs[0]), std::abs(e.lhs[1]));
            e.pass = e.residual <= tol;
        }
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

/// Everything: each named identity, the gap, and both loops.
inline ResidualReport verify_all(WheelSession& s, int samples, std::uint64_t seed, double tol = 1e-3) {
    ResidualReport rep;
    rep.tolerance = tol;
    rep.seed = seed;
    for (const auto& name : identity_names()) rep.append(check_identity(s, name, samples, seed, tol));
    rep.append(check_duality_gap(s, samples, seed));
    auto probes = loop_probes(s.n_goods(), 10, seed);
    rep.append(check_loop_closure(s, short_loop(), probes, loop_tolerance(short_loop(), tol), "loop_short"));
    rep.append(check_loop_closure(s, long_loop(), probes, loop_tolerance(long_loop(), tol), "loop_long"));
    return rep;
}

/// Checks beyond identity_names() that can be requested by name.
inline const std::vector<std::string>& extra_check_names() {
    static const std::vector<std::string> v = {"duality_gap", "loop_short", "loop_long", "quasilinear_coincidence"};
    return v;
}

/// The named checks, in the order given; empty `names` means verify_all.
inline ResidualReport run_checks(WheelSession& s, const std::vector<std::string>& names, int samples,
                                 std::uint64_t seed, double tol = 1e-3) {
    if (samples < 1 || samples > 1000) throw ParamError("samples must be between 1 and 1000");
    if (!(tol > 0.0)) throw ParamError("tolerance must be positive");
    if (names.empty()) return verify_all(s, samples, seed, tol);
    ResidualReport rep;
    rep.tolerance = tol;
    rep.seed = seed;
    for (const auto& name : names) {
        if (name == "duality_gap") {
            rep.append(check_duality_gap(s, samples, seed));
        } else if (name == "loop_short" || name == "loop_long") {
            const auto& loop = name == "loop_short" ? short_loop() : long_loop();
            rep.append(check_loop_closure(s, loop, loop_probes(s.n_goods(), 10, seed), loop_tolerance(loop, tol), name));
        } else if (name == "quasilinear_coincidence") {
            rep.append(check_quasilinear_coincidence(samples, seed));
        } else {
            rep.append(check_identity(s, name, samples, seed, tol));
        }
    }
    return rep;
}

/// Recovers U from demand alone and compares with the original. Under
/// non-convex preferences demand only sees the quasi-concave hull.
inline InfoLossReport demo_information_loss(WheelSession& s, double tol = 1e-3) {
    InfoLossReport r;
    r.utility_text = format_expr(s.utility());
    r.tolerance = tol;
    r.probes = {{1, 1}, {2, 2}, {0.5, 1.5}, {1.5, 0.5}, {1.6, 0.1}, {0.1, 1.6}};
    r.interior = {true, true, true, true, false, false};
    if (s.n_goods() != 2) throw ParamError("the information-loss demo uses two goods");
    auto U = s.handle(NodeId::DUF);
    auto inv = s.transition("t_mdf_to_duf");
    auto dual = s.transition("t_iuf_to_duf");
    for (const auto& q : r.probes) {
        r.original_u_values.push_back(U->scalar(q));
        std::optional<ErrorInfo> err;
        double v = NAN;
        std::string method = "t_mdf_to_duf";
        try {
            v = inv->scalar(q);
        } catch (const Error& e) {
            err = ErrorInfo::from(e);
        }
        if (err) {
            method = "t_iuf_to_duf";
            try {
                v = dual->scalar(q);
            } catch (const Error& e) {
                err = ErrorInfo::from(e);
            }
        }
        r.recovered_u_values.push_back(v);
        r.methods.push_back(method);
        r.errors.push_back(err);
    }
    const std::size_t m = r.probes.size();
    for (std::size_t k = 0; k < m; ++k)
        if (r.interior[k])
            r.max_interior_deviation = std::max(
                r.max_interior_deviation, relative_residual(r.recovered_u_values[k], r.original_u_values[k]));
    auto order = [&](double a, double b) {
        double scale = std::max({1.0, std::abs(a), std::abs(b)});
        return std::abs(a - b) <= tol * scale ? 0 : (a < b ? -1 : 1);
    };
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) {
            int o = order(r.original_u_values[a], r.original_u_values[b]);
            int c = order(r.recovered_u_values[a], r.recovered_u_values[b]);
            if (o * c < 0) r.ranking_flips.emplace_back(a, b);
        }
    r.convexified = !r.ranking_flips.empty() || !(r.max_interior_deviation <= tol);
    return r;
}

inline InfoLossReport demo_information_loss() {
    WheelSession s(make_family("nonconvex_demo").utility);
    return demo_information_loss(s);
}

} // namespace duality
