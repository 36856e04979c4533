// Acceptance criteria AC1-AC11. One PASS/FAIL line per criterion; exit
// status is the number of failures. argv[1] is the path of the CLI binary.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "duality/families.hpp"
#include "duality/http.hpp"
#include "duality/verify.hpp"

using namespace duality;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

int run(int k, const std::string& title, const std::function<Outcome()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "AC" << k << " " << (o.pass ? "PASS" : "FAIL") << "  " << title << "  [" << o.detail << "; "
              << sci(seconds_since(t0)) << " s]" << std::endl;
    return o.pass ? 0 : 1;
}

Vec log_uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> d(std::log(lo), std::log(hi));
    Vec v(n);
    for (double& x : v) x = std::exp(d(rng));
    return v;
}

std::vector<FamilyInstance> quasiconcave_families() {
    return {make_family("cobb_douglas", {{"a1", 0.3}}), make_family("ces", {{"a1", 0.4}, {"rho", -1}}),
            make_family("ces", {{"a1", 0.6}, {"rho", 0.5}}), make_family("quasilinear")};
}

double worst(const ResidualReport& r) {
    double w = 0.0;
    for (const auto& e : r.entries) w = std::max(w, e.error ? INFINITY : e.residual);
    return w;
}

// AC1: solver MDF against x_i = a_i M / P_i.
Outcome ac1() {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    double max_rel = 0.0;
    int count = 0;
    for (int a = 1; a <= 9; ++a) {
        double a1 = a / 10.0;
        WheelSession s(make_family("cobb_douglas", {{"a1", a1}}).utility);
        auto mdf = s.handle(NodeId::MDF);
        for (int k = 0; k < 100; ++k) {
            Vec P = log_uniform(rng, 2, 0.1, 10.0);
            double M = log_uniform(rng, 1, 1.0, 100.0)[0];
            Vec x = (*mdf)(P, M);
            Vec oracle{a1 * M / P[0], (1 - a1) * M / P[1]};
            for (int i = 0; i < 2; ++i) max_rel = std::max(max_rel, std::abs(x[i] - oracle[i]) / oracle[i]);
            ++count;
        }
    }
    double t = seconds_since(t0);
    return {max_rel <= 1e-4 && t < 10.0,
            std::to_string(count) + " points, max rel err " + sci(max_rel) + ", " + sci(t) + " s (limit 10)"};
}

// AC2: solver optimum never below the 10^4-point lattice optimum.
Outcome ac2() {
    std::mt19937_64 rng(7);
    auto fams = quasiconcave_families();
    fams.push_back(make_family("nonconvex_demo"));
    double worst_shortfall = -INFINITY;
    int count = 0;
    for (const auto& f : fams) {
        for (int k = 0; k < 10; ++k) {
            Vec P = log_uniform(rng, 2, 0.1, 10.0);
            double M = log_uniform(rng, 1, 1.0, 100.0)[0];
            auto grid = grid_oracle_budget(f.utility, {P, M}, 10000);
            auto sol = maximize_on_budget(f.utility, {P, M});
            worst_shortfall = std::max(worst_shortfall, grid.objective_value - sol.objective_value);
            ++count;
        }
    }
    return {worst_shortfall <= 1e-6,
            std::to_string(count) + " instances, max (lattice - solver) " + sci(worst_shortfall)};
}

// AC3: identity suite on Cobb-Douglas and CES.
Outcome ac3() {
    auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::string> names = {"roy",          "norm_roy",        "shephard",        "norm_shephard",
                                            "hotelling_wold", "antonelli",     "iuf_ef_inverse", "mdf_hdf_cross_u",
                                            "mdf_hdf_cross_M", "duf_df_inverse"};
    std::vector<FamilyInstance> fams = {make_family("cobb_douglas", {{"a1", 0.3}}),
                                        make_family("ces", {{"a1", 0.4}, {"rho", -1}}),
                                        make_family("ces", {{"a1", 0.6}, {"rho", 0.5}})};
    int failures = 0, total = 0;
    double w = 0.0;
    bool full = true;
    for (const auto& f : fams) {
        WheelSession s(f.utility);
        for (const auto& n : names) {
            auto r = check_identity(s, n, 25, 42, 1e-3);
            full &= r.sample_count == 25;
            failures += r.failures();
            total += int(r.entries.size());
            w = std::max(w, worst(r));
        }
    }
    double t = seconds_since(t0);
    return {failures == 0 && full && t < 60.0, std::to_string(total) + " checks, " + std::to_string(failures) +
                                                   " failed, worst residual " + sci(w) + ", " + sci(t) +
                                                   " s (limit 60)"};
}

// AC4: Slutsky equation per family plus the textbook decomposition.
Outcome ac4() {
    int failures = 0, total = 0;
    double w = 0.0;
    for (const auto& f : quasiconcave_families()) {
        WheelSession s(f.utility);
        auto r = check_identity(s, "slutsky", 25, 42, 1e-3);
        failures += r.failures() + (r.sample_count != 25);
        total += int(r.entries.size());
        w = std::max(w, worst(r));
    }
    WheelSession cd(parse_utility("q1*q2"));
    auto d = check_slutsky(cd, {{1, 1}, 2}, 0, 0);
    bool decomposition = std::abs(d.total + 1) <= 1e-3 && std::abs(d.substitution + 0.5) <= 1e-3 &&
                         std::abs(d.income + 0.5) <= 1e-3;
    return {failures == 0 && decomposition,
            std::to_string(total) + " points, " + std::to_string(failures) + " failed, worst " + sci(w) +
                "; CD total " + sci(d.total) + " = " + sci(d.substitution) + " + " + sci(d.income)};
}

// AC5: duality gap, including the non-convex family.
Outcome ac5() {
    auto fams = quasiconcave_families();
    fams.push_back(make_family("nonconvex_demo"));
    double w = 0.0;
    int failures = 0;
    std::string nonconvex;
    for (const auto& f : fams) {
        WheelSession s(f.utility);
        auto r = check_duality_gap(s, 25, 42, 1e-5);
        failures += r.failures();
        w = std::max(w, worst(r));
        if (f.name == "nonconvex_demo") nonconvex = sci(worst(r));
    }
    return {failures == 0, "max relative gap " + sci(w) + " (non-convex " + nonconvex + "), limit 1e-5"};
}

// AC6: loop closure, short and long.
Outcome ac6() {
    WheelSession s(make_family("cobb_douglas", {{"a1", 0.3}}).utility);
    auto probes = loop_probes(2, 10, 42);
    auto sh = check_loop_closure(s, short_loop(), probes, 1e-3, "loop_short");
    auto lg = check_loop_closure(s, long_loop(), probes, 1e-2, "loop_long");
    return {sh.failures() == 0 && lg.failures() == 0 && sh.entries.size() == 10 && lg.entries.size() == 10,
            "short max dev " + sci(worst(sh)) + " (limit 1e-3), long max dev " + sci(worst(lg)) + " (limit 1e-2)"};
}

// AC7: information loss, deterministic.
Outcome ac7() {
    auto a = demo_information_loss();
    auto b = demo_information_loss();
    WheelSession cd(make_family("cobb_douglas", {{"a1", 0.5}}).utility);
    auto c = demo_information_loss(cd);
    bool same = a.recovered_u_values == b.recovered_u_values && a.ranking_flips == b.ranking_flips &&
                a.convexified == b.convexified;
    return {a.convexified && !a.ranking_flips.empty() && !c.convexified && same,
            "non-convex convexified=" + std::string(a.convexified ? "true" : "false") + " with " +
                std::to_string(a.ranking_flips.size()) + " flips; control convexified=" +
                (c.convexified ? "true" : "false") + "; repeat identical=" + (same ? "yes" : "no")};
}

// AC8: quasi-linear coincidence of x2^M and x2^c.
Outcome ac8() {
    auto r = check_quasilinear_coincidence(25, 42, 1e-5);
    return {r.failures() == 0 && r.sample_count == 25,
            std::to_string(r.entries.size()) + " interior points, max |diff| " + sci(worst(r)) + " (limit 1e-5)"};
}

// AC9: dual-pair recoveries on Cobb-Douglas.
Outcome ac9() {
    WheelSession s(make_family("cobb_douglas", {{"a1", 0.3}}).utility);
    auto a = check_identity(s, "dual_pair_duf_iuf", 10, 42, 1e-3);
    auto b = check_identity(s, "dual_pair_df_ef", 10, 42, 1e-3);
    return {a.failures() == 0 && b.failures() == 0 && a.entries.size() == 10 && b.entries.size() == 10,
            "duf/iuf worst " + sci(worst(a)) + ", df/ef worst " + sci(worst(b)) + " (limit 1e-3)"};
}

// AC10: planner reachability, length, determinism.
Outcome ac10() {
    bool reach = true;
    for (NodeId to : kAllNodes) {
        try {
            auto p = plan_path(NodeId::DUF, to);
            reach &= to == NodeId::DUF || (!p.empty() && p.back()->to == to);
        } catch (const NoPathError&) {
            reach = false;
        }
    }
    auto hdf = plan_path(NodeId::DUF, NodeId::HDF);
    bool deterministic = true;
    for (NodeId a : kAllNodes)
        for (NodeId b : kAllNodes) {
            try {
                deterministic &= plan_path(a, b) == plan_path(a, b);
            } catch (const NoPathError&) {
            }
        }
    return {reach && hdf.size() <= 4 && deterministic,
            std::string("all reachable=") + (reach ? "yes" : "no") + ", |DUF->HDF|=" + std::to_string(hdf.size()) +
                ", deterministic=" + (deterministic ? "yes" : "no")};
}

// Every number in a JSON document, in document order, as serialized text.
void collect_numbers(const json& j, std::string& out) {
    if (j.is_number()) {
        out += j.dump() + ",";
    } else if (j.is_array() || j.is_object()) {
        for (const auto& v : j) collect_numbers(v, out);
    }
}

struct Exchange {
    std::string method, path, body;
};

std::vector<std::pair<int, std::string>> play(const std::vector<Exchange>& transcript) {
    ServiceCore core;
    httplib::Server server;
    mount(server, core);
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(300, 0);
    std::vector<std::pair<int, std::string>> out;
    for (const auto& x : transcript) {
        auto r = x.method == "GET" ? client.Get(x.path) : client.Post(x.path, x.body, "application/json");
        if (!r) {
            out.emplace_back(-1, "");
            continue;
        }
        std::string nums;
        collect_numbers(json::parse(r->body), nums);
        out.emplace_back(r->status, nums);
    }
    server.stop();
    th.join();
    return out;
}

// AC11: CLI verify on CD, then transcript replay against a fresh service.
Outcome ac11(const std::string& cli) {
    std::string cmd = "\"" + cli + "\" verify --family cobb_douglas:a1=0.3 --all --format json";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {false, "cannot run " + cli};
    std::string output;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) output.append(buf, n);
    int status = pclose(pipe);
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    int failed = -1;
    try {
        failed = json::parse(output)["summary"]["failed"].get<int>();
    } catch (const std::exception&) {
    }

    std::vector<Exchange> transcript = {
        {"POST", "/api/session", R"({"utility":"q1^0.3*q2^0.7"})"},
        {"GET", "/api/graph", ""},
        {"POST", "/api/session/s000001/evaluate", R"({"node":"IUF","point":{"P":[1.3,0.7],"M":9}})"},
        {"POST", "/api/session/s000001/transition", R"({"edge":"t_roy","point":{"P":[1.3,0.7],"M":9}})"},
        {"POST", "/api/session/s000001/transition", R"({"edge":"t_antonelli","point":{"q":[2,3],"u":1.5}})"},
        {"POST", "/api/session/s000001/plan", R"({"from":"DUF","to":"EF","point":{"P":[2,1],"u":3}})"},
        {"POST", "/api/session/s000001/slutsky", R"({"P":[1,2],"M":10,"i":1,"j":2})"},
        {"POST", "/api/session/s000001/verify", R"({"identities":["shephard","loop_short"],"samples":4,"seed":9})"},
        {"POST", "/api/session/s000001/demo/nonconvex", ""},
        {"POST", "/api/session/s000001/evaluate", R"({"node":"MDF","point":{"P":"bad"}})"},
    };
    auto first = play(transcript);
    auto second = play(transcript);
    bool identical = first == second;
    bool statuses_ok = first.size() == transcript.size() && first.back().first == 400;
    for (std::size_t k = 0; k + 1 < first.size(); ++k) statuses_ok &= first[k].first == 200 || first[k].first == 201;
    return {code == 0 && failed == 0 && identical && statuses_ok,
            "cli exit " + std::to_string(code) + ", failures " + std::to_string(failed) + "; replay of " +
                std::to_string(transcript.size()) + " requests " + (identical ? "byte-identical" : "DIFFERS") +
                (statuses_ok ? "" : ", unexpected status")};
}

} // namespace

int main(int argc, char** argv) {
    std::string cli = argc > 1 ? argv[1] : "duality";
    int failures = 0;
    failures += run(1, "primal solver matches Cobb-Douglas oracle", ac1);
    failures += run(2, "solver optimum not below lattice optimum", ac2);
    failures += run(3, "identity suite on Cobb-Douglas and CES", ac3);
    failures += run(4, "Slutsky equation", ac4);
    failures += run(5, "duality gap", ac5);
    failures += run(6, "loop closure", ac6);
    failures += run(7, "information loss under non-convexity", ac7);
    failures += run(8, "quasi-linear coincidence", ac8);
    failures += run(9, "dual-pair recoveries", ac9);
    failures += run(10, "path planner", ac10);
    failures += run(11, "shell contract", [&] { return ac11(cli); });
    std::cout << (failures ? "FAILED " : "ALL PASS ") << failures << " of 11 criteria failed" << std::endl;
    return failures;
}
