#pragma once

// Request handling for the JSON API, independent of any HTTP library:
// (method, path, body) in, (status, JSON) out. Sessions live in memory with
// LRU eviction; ids are sequential so a replayed transcript gets the same ids.

#include <cstdio>
#include <ctime>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "duality/families.hpp"
#include "duality/serialize.hpp"
#include "duality/session.hpp"
#include "duality/verify.hpp"

namespace duality {

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

inline int http_status(ErrorKind k) {
    switch (k) {
    case ErrorKind::parse:
    case ErrorKind::param:
    case ErrorKind::domain: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::usage: return 405;
    default: return 422;
    }
}

/// Builds the session for a "utility" text or a "family" spec (string
/// "name:k=v,..." or object {name, params}).
inline std::pair<UtilityExpr, std::string> utility_from_request(const nlohmann::json& body) {
    if (!body.is_object()) throw ParseError("request body must be a JSON object");
    if (body.contains("utility")) {
        if (!body["utility"].is_string()) throw ParseError("'utility' must be a string");
        auto U = parse_utility(body["utility"].get<std::string>());
        return {U, format_expr(U)};
    }
    if (body.contains("family")) {
        const auto& f = body["family"];
        FamilyInstance fam;
        if (f.is_string()) {
            fam = parse_family_spec(f.get<std::string>());
        } else if (f.is_object() && f.contains("name") && f["name"].is_string()) {
            Params params;
            if (f.contains("params")) {
                if (!f["params"].is_object()) throw ParseError("'family.params' must be an object");
                for (const auto& [k, v] : f["params"].items()) params[k] = io::parse_number(v, k.c_str());
            }
            fam = make_family(f["name"].get<std::string>(), params);
        } else {
            throw ParseError("'family' must be a spec string or {name, params}");
        }
        return {fam.utility, fam.utility_text};
    }
    throw ParseError("expected 'utility' or 'family'");
}

class ServiceCore {
public:
    explicit ServiceCore(std::size_t capacity = 256) : capacity_(capacity) {}

    ApiResponse handle(const std::string& method, const std::string& path, const std::string& body) {
        try {
            return route(method, path, body);
        } catch (const Error& e) {
            auto info = ErrorInfo::from(e);
            return {http_status(info.kind), io::error_envelope(info)};
        } catch (const std::exception& e) {
            return {500, {{"error", {{"kind", "InternalError"}, {"message", e.what()}}}}};
        }
    }

    std::size_t session_count() const {
        std::lock_guard lock(mu_);
        return lru_.size();
    }

private:
    struct Entry {
        std::string id;
        std::string utility_text;
        std::string created_at;
        WheelSession session;
        Entry(std::string i, std::string t, std::string c, UtilityExpr U)
            : id(std::move(i)), utility_text(std::move(t)), created_at(std::move(c)), session(std::move(U)) {}
    };
    using EntryPtr = std::shared_ptr<Entry>;

    static std::vector<std::string> split(const std::string& path) {
        std::vector<std::string> out;
        std::size_t i = 0;
        std::string p = path.substr(0, path.find('?'));
        while (i < p.size()) {
            std::size_t j = p.find('/', i);
            if (j == std::string::npos) j = p.size();
            if (j > i) out.push_back(p.substr(i, j - i));
            i = j + 1;
        }
        return out;
    }

    static nlohmann::json parse_body(const std::string& body) {
        if (body.find_first_not_of(" \t\r\n") == std::string::npos) return nlohmann::json::object();
        try {
            return nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(e.byte ? e.byte - 1 : 0, "malformed JSON body");
        }
    }

    static const nlohmann::json& field(const nlohmann::json& j, const char* key) {
        if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
        return j[key];
    }

    static std::string string_field(const nlohmann::json& j, const char* key) {
        const auto& v = field(j, key);
        if (!v.is_string()) throw ParseError(std::string("'") + key + "' must be a string");
        return v.get<std::string>();
    }

    static long long int_field(const nlohmann::json& j, const char* key, long long fallback) {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_number_integer()) throw ParseError(std::string("'") + key + "' must be an integer");
        return j[key].get<long long>();
    }

    static void require_method(const std::string& have, const char* want) {
        if (have != want) throw KindedError<ErrorKind::usage>("method " + have + " not allowed here");
    }

    ApiResponse route(const std::string& method, const std::string& path, const std::string& raw) {
        auto seg = split(path);
        if (seg.size() < 2 || seg[0] != "api") throw NotFoundError("no route for " + path);
        if (seg.size() == 2 && seg[1] == "graph") {
            require_method(method, "GET");
            return {200, io::graph()};
        }
        if (seg[1] != "session") throw NotFoundError("no route for " + path);
        if (seg.size() == 2) {
            require_method(method, "POST");
            return create(parse_body(raw));
        }
        auto entry = find(seg[2]);
        if (seg.size() == 3) {
            require_method(method, "GET");
            return {200, record(*entry)};
        }
        require_method(method, "POST");
        auto body = parse_body(raw);
        const std::string& op = seg[3];
        if (seg.size() == 4 && op == "evaluate") return evaluate(*entry, body);
        if (seg.size() == 4 && op == "transition") return transition(*entry, body);
        if (seg.size() == 4 && op == "plan") return plan(*entry, body);
        if (seg.size() == 4 && op == "verify") return verify(*entry, body);
        if (seg.size() == 4 && op == "slutsky") return slutsky(*entry, body);
        if (seg.size() == 5 && op == "demo" && seg[4] == "nonconvex") return demo(*entry);
        throw NotFoundError("no route for " + path);
    }

    static nlohmann::json record(const Entry& e) {
        return {{"session_id", e.id},
                {"utility_text", e.utility_text},
                {"n_goods", e.session.n_goods()},
                {"created_at", e.created_at},
                {"settings",
                 {{"fd_rel", io::num(e.session.settings().fd_rel)},
                  {"interior_min", io::num(e.session.settings().interior_min)},
                  {"feasibility_tol", io::num(e.session.settings().solver.feasibility_tol)},
                  {"root_tol", io::num(e.session.settings().inversion.root_tol)}}}};
    }

    ApiResponse create(const nlohmann::json& body) {
        auto [U, text] = utility_from_request(body);
        std::lock_guard lock(mu_);
        char id[32];
        std::snprintf(id, sizeof id, "s%06llu", ++counter_);
        auto e = std::make_shared<Entry>(id, text, timestamp(), U);
        lru_.push_front(e);
        index_[e->id] = lru_.begin();
        while (lru_.size() > capacity_) {
            index_.erase(lru_.back()->id);
            lru_.pop_back();
        }
        return {201, record(*e)};
    }

    EntryPtr find(const std::string& id) {
        std::lock_guard lock(mu_);
        auto it = index_.find(id);
        if (it == index_.end()) throw NotFoundError("unknown session '" + id + "'");
        lru_.splice(lru_.begin(), lru_, it->second);
        return *it->second;
    }

    static ApiResponse evaluate(Entry& e, const nlohmann::json& body) {
        NodeId id = parse_node(string_field(body, "node"));
        Point pt = io::parse_point(field(body, "point"));
        auto h = e.session.handle(id);
        return {200, io::evaluation(*h, pt, h->evaluate(pt))};
    }

    /// The edge applied to its source's default route, traced at the point.
    static ApiResponse transition(Entry& e, const nlohmann::json& body) {
        const WheelEdge& edge = find_edge(string_field(body, "edge"));
        Point pt = io::parse_point(field(body, "point"));
        std::vector<const WheelEdge*> path;
        for (const auto& name : WheelSession::default_route(edge.from)) path.push_back(&find_edge(name));
        path.push_back(&edge);
        auto r = execute_path(e.session, path, pt);
        if (r.error) return {http_status(r.error->kind), io::path_result(r, pt)};
        if (!r.trace.back().value) r.trace.back().value = r.handle->evaluate(pt); // reports the missing arguments
        auto j = io::path_result(r, pt);
        j["edge"] = edge.name;
        return {200, j};
    }

    static ApiResponse plan(Entry& e, const nlohmann::json& body) {
        NodeId from = parse_node(string_field(body, "from"));
        NodeId to = parse_node(string_field(body, "to"));
        auto p = plan_path(from, to);
        auto j = io::path(p);
        if (body.contains("point")) {
            Point pt = io::parse_point(body["point"]);
            auto r = execute_path(e.session, p, pt, from);
            j["execution"] = io::path_result(r, pt);
        }
        return {200, j};
    }

    static ApiResponse verify(Entry& e, const nlohmann::json& body) {
        std::vector<std::string> names;
        if (body.contains("identities")) {
            const auto& ids = body["identities"];
            if (!ids.is_array()) throw ParseError("'identities' must be an array of names");
            for (const auto& n : ids) {
                if (!n.is_string()) throw ParseError("'identities' must be an array of names");
                names.push_back(n.get<std::string>());
            }
        }
        int samples = int(int_field(body, "samples", 25));
        auto seed = std::uint64_t(int_field(body, "seed", 42));
        double tol = body.contains("tolerance") ? io::parse_number(body["tolerance"], "tolerance") : 1e-3;
        return {200, io::residual_report(run_checks(e.session, names, samples, seed, tol))};
    }

    static ApiResponse slutsky(Entry& e, const nlohmann::json& body) {
        Vec P = io::parse_vec(field(body, "P"), "P");
        double M = io::parse_number(field(body, "M"), "M");
        long long i = int_field(body, "i", 1), j = int_field(body, "j", 1);
        const int n = e.session.n_goods();
        if (i < 1 || j < 1 || i > n || j > n) throw ParamError("i and j must be between 1 and " + std::to_string(n));
        auto r = check_slutsky(e.session, {P, M}, std::size_t(i - 1), std::size_t(j - 1));
        auto out = io::slutsky_report(r);
        out["P"] = io::vec(P);
        out["M"] = io::num(M);
        return {200, out};
    }

    static ApiResponse demo(Entry& e) {
        nlohmann::json j = {{"nonconvex", io::info_loss_report(demo_information_loss())}};
        if (e.session.n_goods() == 2) j["control"] = io::info_loss_report(demo_information_loss(e.session));
        return {200, j};
    }

    static std::string timestamp() {
        std::time_t t = std::time(nullptr);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
        return buf;
    }

    std::size_t capacity_;
    mutable std::mutex mu_;
    unsigned long long counter_ = 0;
    std::list<EntryPtr> lru_;
    std::unordered_map<std::string, std::list<EntryPtr>::iterator> index_;
};

} // namespace duality
