#pragma once

// JSON payloads shared by the CLI (--format json) and the HTTP service.
// Numbers carry 12 significant digits; NaN and infinities become null.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <json.hpp>

#include "duality/error.hpp"
#include "duality/numkit.hpp"
#include "duality/session.hpp"
#include "duality/verify.hpp"
#include "duality/wheel.hpp"

namespace duality::io {

using json = nlohmann::json;

inline json num(double x) {
    if (!std::isfinite(x)) return nullptr;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    double r = std::strtod(buf, nullptr);
    return r == 0.0 ? 0.0 : r; // no "-0.0"
}

inline json vec(const Vec& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

inline json error_body(const ErrorInfo& e) {
    json j = {{"kind", kind_name(e.kind)}, {"message", e.message}};
    if (e.position) j["position"] = *e.position;
    return j;
}

inline json error_envelope(const ErrorInfo& e) { return {{"error", error_body(e)}}; }

// ---------------------------------------------------------------------------
// Points

inline json point(const Point& p) {
    json j = json::object();
    if (p.P) j["P"] = vec(*p.P);
    if (p.p) j["p"] = vec(*p.p);
    if (p.q) j["q"] = vec(*p.q);
    if (p.M) j["M"] = num(*p.M);
    if (p.u) j["u"] = num(*p.u);
    return j;
}

inline Vec parse_vec(const json& j, const char* key) {
    if (!j.is_array() || j.empty()) throw ParseError(std::string("'") + key + "' must be a non-empty array of numbers");
    Vec v;
    for (const auto& x : j) {
        if (!x.is_number()) throw ParseError(std::string("'") + key + "' must contain only numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

inline double parse_number(const json& j, const char* key) {
    if (!j.is_number()) throw ParseError(std::string("'") + key + "' must be a number");
    return j.get<double>();
}

inline Point parse_point(const json& j) {
    if (!j.is_object()) throw ParseError("point must be an object with fields among P, p, q, M, u");
    Point p;
    for (const auto& [k, v] : j.items()) {
        if (k == "P") p.P = parse_vec(v, "P");
        else if (k == "p") p.p = parse_vec(v, "p");
        else if (k == "q") p.q = parse_vec(v, "q");
        else if (k == "M") p.M = parse_number(v, "M");
        else if (k == "u") p.u = parse_number(v, "u");
        else throw ParseError("unknown point field '" + k + "'");
    }
    return p;
}

/// "1,2.5,3" -> {1, 2.5, 3}
inline Vec parse_numbers(const std::string& text, const std::string& what) {
    Vec vals;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        std::string tok = text.substr(pos, comma - pos);
        char* endp = nullptr;
        double v = std::strtod(tok.c_str(), &endp);
        if (tok.empty() || endp == tok.c_str() || *endp != '\0')
            throw ParseError("bad number '" + tok + "' in " + what);
        vals.push_back(v);
        if (comma == text.size()) break;
        pos = comma + 1;
    }
    return vals;
}

/// CLI form: "P=1,1;M=2" (fields separated by ';', values by ',').
inline Point parse_point_text(const std::string& text) {
    json j = json::object();
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find(';', start);
        if (end == std::string::npos) end = text.size();
        std::string field = text.substr(start, end - start);
        start = end + 1;
        field.erase(0, field.find_first_not_of(" \t"));
        field.erase(field.find_last_not_of(" \t") + 1);
        if (field.empty()) continue;
        auto eq = field.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value, got '" + field + "'");
        std::string key = field.substr(0, eq);
        Vec vals = parse_numbers(field.substr(eq + 1), key);
        if (key == "M" || key == "u") {
            if (vals.size() != 1) throw ParseError(key + " takes a single number");
            j[key] = vals[0];
        } else {
            j[key] = vals;
        }
    }
    return parse_point(j);
}

// ---------------------------------------------------------------------------
// Graph

inline json node(NodeId id) {
    auto s = signature(id);
    json inputs = json::array();
    if (s.P) inputs.push_back("P");
    if (s.q) inputs.push_back("q");
    if (s.M) inputs.push_back("M");
    if (s.u) inputs.push_back("u");
    return {{"id", node_name(id)},   {"long_name", s.long_name}, {"text", s.text},
            {"inputs", inputs},      {"output", s.output},       {"side", is_primal(id) ? "primal" : "dual"}};
}

inline json edge(const WheelEdge& e) {
    return {{"name", e.name},   {"from", node_name(e.from)}, {"to", node_name(e.to)},         {"kind", kind_name(e.kind)},
            {"label", e.label}, {"formula", e.formula},      {"normalized", e.normalized}};
}

inline json graph() {
    json nodes = json::array(), edges = json::array();
    for (NodeId id : kAllNodes) nodes.push_back(node(id));
    for (const auto& e : edge_registry()) edges.push_back(edge(e));
    json kinds = json::array();
    for (auto k : {EdgeKind::dual, EdgeKind::inverse, EdgeKind::counterpart, EdgeKind::derivative})
        kinds.push_back(kind_name(k));
    return {{"nodes", nodes}, {"edges", edges}, {"kinds", kinds}};
}

inline json path(const std::vector<const WheelEdge*>& p) {
    json names = json::array(), edges = json::array();
    for (auto* e : p) {
        names.push_back(e->name);
        edges.push_back(edge(*e));
    }
    return {{"path", names}, {"edges", edges}, {"length", p.size()}};
}

// ---------------------------------------------------------------------------
// Results

inline json strings(const std::vector<std::string>& v) { return json(v); }

inline json trace(const std::vector<TraceStep>& t) {
    json a = json::array();
    for (const auto& s : t) {
        json j = {{"edge", s.edge}, {"node", node_name(s.node)}, {"provenance", strings(s.provenance)}};
        j["value"] = s.value ? vec(*s.value) : json(nullptr);
        a.push_back(j);
    }
    return a;
}

inline json path_result(const PathResult& r, const Point& at) {
    json j;
    if (r.handle) {
        j["node"] = node_name(r.handle->node);
        j["provenance"] = strings(r.handle->provenance);
        j["inputs"] = strings(r.handle->inputs);
    }
    j["point"] = point(at);
    j["trace"] = trace(r.trace);
    j["value"] = (!r.trace.empty() && r.trace.back().value) ? vec(*r.trace.back().value) : json(nullptr);
    if (r.error) j["error"] = error_body(*r.error);
    return j;
}

inline json evaluation(const FunctionHandle& h, const Point& at, const Vec& value) {
    return {{"node", node_name(h.node)},
            {"provenance", strings(h.provenance)},
            {"inputs", strings(h.inputs)},
            {"point", point(at)},
            {"value", vec(value)}};
}

inline json solve_result(const std::string& problem, const SolveResult& r) {
    return {{"problem", problem},
            {"bundle", vec(r.argmin_or_argmax)},
            {"value", num(r.objective_value)},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"active_constraint_residual", num(r.active_constraint_residual)}};
}

inline json residual_entry(const ResidualEntry& e) {
    json j = {{"identity", e.identity}, {"point", point(e.point)}, {"lhs", vec(e.lhs)},      {"rhs", vec(e.rhs)},
              {"residual", num(e.residual)}, {"tolerance", num(e.tolerance)}, {"pass", e.pass}};
    if (e.error) j["error"] = error_body(*e.error);
    return j;
}

inline json residual_report(const ResidualReport& r) {
    json entries = json::array();
    for (const auto& e : r.entries) entries.push_back(residual_entry(e));
    json by = json::object();
    for (const auto& [name, pf] : r.by_identity()) by[name] = {{"passed", pf.first}, {"failed", pf.second}};
    return {{"tolerance", num(r.tolerance)},
            {"seed", r.seed},
            {"sample_count", r.sample_count},
            {"summary",
             {{"total", r.entries.size()},
              {"passed", r.passes()},
              {"failed", r.failures()},
              {"failing", strings(r.failing_identities())},
              {"by_identity", by}}},
            {"entries", entries}};
}

inline json gap_report(const GapReport& g) {
    return {{"p_star", num(g.p_star)}, {"d_star", num(g.d_star)}, {"gap", num(g.gap)}, {"relative_gap", num(g.relative_gap)}};
}

/// Indices are reported 1-based, as goods are named q1, q2, ...
inline json slutsky_report(const SlutskyReport& s) {
    return {{"i", s.i + 1},
            {"j", s.j + 1},
            {"total", num(s.total)},
            {"substitution", num(s.substitution)},
            {"income", num(s.income)},
            {"rhs", num(s.substitution + s.income)},
            {"residual", num(s.residual)}};
}

inline json info_loss_report(const InfoLossReport& r) {
    json probes = json::array(), flips = json::array(), errors = json::array();
    for (const auto& q : r.probes) probes.push_back(vec(q));
    for (auto [a, b] : r.ranking_flips) flips.push_back({vec(r.probes[a]), vec(r.probes[b])});
    for (const auto& e : r.errors) errors.push_back(e ? error_body(*e) : json(nullptr));
    return {{"utility", r.utility_text},
            {"probes", probes},
            {"interior", r.interior},
            {"original_u_values", vec(r.original_u_values)},
            {"recovered_u_values", vec(r.recovered_u_values)},
            {"methods", strings(r.methods)},
            {"errors", errors},
            {"ranking_flips", flips},
            {"max_interior_deviation", num(r.max_interior_deviation)},
            {"tolerance", num(r.tolerance)},
            {"convexified", r.convexified}};
}

} // namespace duality::io
