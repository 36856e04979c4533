// Command-line front end: parse, solve, derive, verify, demo, serve.
// Exit codes: 0 success, 1 domain/numeric failure (or failing checks), 2 usage.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "duality/families.hpp"
#include "duality/http.hpp"
#include "duality/serialize.hpp"
#include "duality/service.hpp"
#include "duality/verify.hpp"

using namespace duality;
using io::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string utility;
    std::string family;
    std::string format = "text";

    bool as_json() const { return format == "json"; }
};

void add_common(CLI::App* sub, Common& c, bool with_family = true) {
    sub->add_option("--utility,-u", c.utility, "utility expression in q1, q2, ...");
    if (with_family) sub->add_option("--family", c.family, "built-in family, e.g. cobb_douglas:a1=0.3");
    sub->add_option("--format", c.format, "output format")->check(CLI::IsMember({"text", "json"}));
}

UtilityExpr resolve_utility(const Common& c) {
    if (!c.utility.empty() && !c.family.empty()) throw UsageError("give --utility or --family, not both");
    if (!c.family.empty()) return parse_family_spec(c.family).utility;
    if (c.utility.empty()) throw UsageError("--utility or --family is required");
    return parse_utility(c.utility);
}

std::string fmt(double x) {
    if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::string fmt(const Vec& v) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
    return s + ")";
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

int cmd_parse(const Common& c) {
    if (!c.family.empty()) throw UsageError("parse takes --utility only");
    if (c.utility.empty()) throw UsageError("--utility is required");
    auto U = parse_utility(c.utility);
    if (c.as_json()) {
        print_json({{"utility_text", format_expr(U)}, {"n_goods", U.n_goods()}});
    } else {
        std::cout << format_expr(U) << "\n" << "goods: " << U.n_goods() << "\n";
    }
    return 0;
}

int cmd_solve(const Common& c, const std::string& problem, const std::string& prices, std::optional<double> income,
              std::optional<double> ulevel) {
    auto U = resolve_utility(c);
    Vec P = io::parse_numbers(prices, "--prices");
    SolveResult r;
    if (problem == "primal") {
        if (!income || ulevel) throw UsageError("the primal problem takes --income");
        r = maximize_on_budget(U, {P, *income});
    } else {
        if (!ulevel || income) throw UsageError("the dual problem takes --ulevel");
        r = minimize_expenditure(U, P, *ulevel);
    }
    if (c.as_json()) {
        print_json(io::solve_result(problem, r));
    } else {
        std::cout << "bundle: " << fmt(r.argmin_or_argmax) << "\n"
                  << (problem == "primal" ? "utility: " : "expenditure: ") << fmt(r.objective_value) << "\n";
    }
    return 0;
}

int cmd_derive(const Common& c, const std::string& from, const std::string& to, const std::string& at) {
    WheelSession s(resolve_utility(c));
    NodeId a = parse_node(from), b = parse_node(to);
    Point pt = io::parse_point_text(at);
    auto path = plan_path(a, b);
    auto r = execute_path(s, path, pt, a);
    if (c.as_json()) {
        auto j = io::path(path);
        j["execution"] = io::path_result(r, pt);
        print_json(j);
    } else {
        std::cout << "path: " << from;
        for (auto* e : path) std::cout << " -[" << e->name << "]-> " << node_name(e->to);
        std::cout << "\n";
        for (const auto& step : r.trace)
            std::cout << "  " << step.edge << " -> " << node_name(step.node) << ": "
                      << (step.value ? fmt(*step.value) : std::string("(not evaluable at this point)")) << "\n";
        if (r.error) std::cerr << "error: " << kind_name(r.error->kind) << ": " << r.error->message << "\n";
    }
    return r.error ? 1 : 0;
}

int cmd_verify(const Common& c, std::vector<std::string> identities, bool all, int samples, std::uint64_t seed,
               double tol) {
    if (all && !identities.empty()) throw UsageError("give --identity or --all, not both");
    if (!all && identities.empty()) throw UsageError("give --identity NAME or --all");
    WheelSession s(resolve_utility(c));
    auto rep = run_checks(s, identities, samples, seed, tol);
    if (c.as_json()) {
        print_json(io::residual_report(rep));
    } else {
        for (const auto& [name, pf] : rep.by_identity())
            std::cout << (pf.second ? "FAIL " : "ok   ") << name << "  " << pf.first << "/" << pf.first + pf.second
                      << "\n";
        for (const auto& e : rep.entries) {
            if (e.pass) continue;
            std::cout << "  " << e.identity << ": residual " << fmt(e.residual) << " > " << fmt(e.tolerance);
            if (e.error) std::cout << " [" << kind_name(e.error->kind) << ": " << e.error->message << "]";
            std::cout << "\n";
        }
        std::cout << rep.passes() << " passed, " << rep.failures() << " failed\n";
    }
    return rep.failures() ? 1 : 0;
}

void print_info_loss(const InfoLossReport& r) {
    std::cout << "U = " << r.utility_text << "\n";
    for (std::size_t k = 0; k < r.probes.size(); ++k) {
        std::cout << "  q=" << fmt(r.probes[k]) << (r.interior[k] ? " interior" : " near-corner")
                  << "  U=" << fmt(r.original_u_values[k]) << "  recovered=" << fmt(r.recovered_u_values[k]) << " via "
                  << r.methods[k];
        if (r.errors[k]) std::cout << " (" << kind_name(r.errors[k]->kind) << " from t_mdf_to_duf)";
        std::cout << "\n";
    }
    for (auto [a, b] : r.ranking_flips)
        std::cout << "  ranking flip: " << fmt(r.probes[a]) << " vs " << fmt(r.probes[b]) << "\n";
    std::cout << "  convexified: " << (r.convexified ? "true" : "false") << "\n";
}

int cmd_demo(const Common& c) {
    auto nc = demo_information_loss();
    WheelSession control(c.utility.empty() && c.family.empty() ? make_family("cobb_douglas", {{"a1", 0.5}}).utility
                                                                 : resolve_utility(c));
    auto ctl = demo_information_loss(control);
    if (c.as_json()) {
        print_json({{"nonconvex", io::info_loss_report(nc)}, {"control", io::info_loss_report(ctl)}});
    } else {
        std::cout << "non-convex preferences\n";
        print_info_loss(nc);
        std::cout << "control\n";
        print_info_loss(ctl);
    }
    return 0;
}

int cmd_serve(const std::string& host, int port) {
    ServiceCore core;
    httplib::Server server;
    mount(server, core);
    std::cerr << "serving on http://" << host << ":" << port << "\n";
    if (!server.listen(host, port)) {
        std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Consumer-theory duality wheel"};
    app.require_subcommand(1);

    Common common;

    auto* parse = app.add_subcommand("parse", "parse and print a utility expression");
    add_common(parse, common, false);

    std::string problem = "primal", prices;
    std::optional<double> income, ulevel;
    auto* solve = app.add_subcommand("solve", "solve the primal (max U) or dual (min outlay) problem");
    add_common(solve, common);
    solve->add_option("--problem", problem)->check(CLI::IsMember({"primal", "dual"}));
    solve->add_option("--prices", prices, "comma-separated prices")->required();
    solve->add_option("--income", income);
    solve->add_option("--ulevel", ulevel);

    std::string from, to, at;
    auto* derive = app.add_subcommand("derive", "plan and execute a path on the wheel");
    add_common(derive, common);
    derive->add_option("--from", from)->required();
    derive->add_option("--to", to)->required();
    derive->add_option("--at", at, "evaluation point, e.g. \"P=1,1;u=1\"");

    std::vector<std::string> identities;
    bool all = false;
    int samples = 25;
    std::uint64_t seed = 42;
    double tol = 1e-3;
    auto* verify = app.add_subcommand("verify", "residuals of the duality identities at seeded points");
    add_common(verify, common);
    verify->add_option("--identity", identities, "identity name (repeatable)");
    verify->add_flag("--all", all);
    verify->add_option("--samples", samples);
    verify->add_option("--seed", seed);
    verify->add_option("--tolerance", tol);

    auto* demo = app.add_subcommand("demo", "demonstrations");
    demo->require_subcommand(1);
    auto* nonconvex = demo->add_subcommand("nonconvex", "information loss under non-convex preferences");
    add_common(nonconvex, common);

    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "JSON API over HTTP");
    serve->add_option("--port", port);
    serve->add_option("--host", host);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*parse) return cmd_parse(common);
        if (*solve) return cmd_solve(common, problem, prices, income, ulevel);
        if (*derive) return cmd_derive(common, from, to, at);
        if (*verify) return cmd_verify(common, identities, all, samples, seed, tol);
        if (*nonconvex) return cmd_demo(common);
        if (*serve) return cmd_serve(host, port);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        if (common.as_json()) print_json(io::error_envelope(ErrorInfo::from(e)));
        std::cerr << "error: " << kind_name(e.kind()) << ": " << e.what() << "\n";
        return 1;
    }
    return 2;
}
