#pragma once

// Wheel graph: node ids with their signatures, the registry of transitions
// between them, and a breadth-first path planner.

#include <algorithm>
#include <array>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "duality/error.hpp"
#include "duality/vec.hpp"

namespace duality {

enum class NodeId { DUF, IUF, EF, DF, MDF, HDF, HIDF, AIDF, BC, EAF };

inline constexpr std::array<NodeId, 10> kAllNodes = {NodeId::DUF, NodeId::IUF, NodeId::EF,   NodeId::DF,
                                                    NodeId::MDF, NodeId::HDF, NodeId::HIDF, NodeId::AIDF,
                                                    NodeId::BC,  NodeId::EAF};

inline constexpr std::string_view node_name(NodeId id) {
    constexpr std::array<std::string_view, 10> names = {"DUF", "IUF", "EF",   "DF", "MDF",
                                                        "HDF", "HIDF", "AIDF", "BC", "EAF"};
    return names[static_cast<std::size_t>(id)];
}

inline NodeId parse_node(std::string_view s) {
    for (NodeId id : kAllNodes)
        if (node_name(id) == s) return id;
    throw NotFoundError("unknown wheel node '" + std::string(s) + "'");
}

/// Argument roles of a node: which point fields it reads and what it returns.
struct NodeSignature {
    bool P = false, q = false, M = false, u = false;
    std::string_view output; // "scalar", "q" or "p"
    std::string_view long_name;
    std::string_view text;
};

inline NodeSignature signature(NodeId id) {
    switch (id) {
    case NodeId::DUF: return {false, true, false, false, "scalar", "direct utility function", "U(q)"};
    case NodeId::IUF: return {true, false, true, false, "scalar", "indirect utility function", "V(P,M)"};
    case NodeId::EF: return {true, false, false, true, "scalar", "expenditure function", "E(P,u)"};
    case NodeId::DF: return {false, true, false, true, "scalar", "distance function", "D(q,u)"};
    case NodeId::MDF: return {true, false, true, false, "q", "Marshallian demand", "x^M(P,M)"};
    case NodeId::HDF: return {true, false, false, true, "q", "Hicksian demand", "x^c(P,u)"};
    case NodeId::HIDF: return {false, true, false, false, "p", "Hotelling inverse demand", "phi(q)"};
    case NodeId::AIDF: return {false, true, false, true, "p", "Antonelli inverse demand", "psi(q,u)"};
    case NodeId::BC: return {true, true, true, false, "scalar", "budget constraint", "M - P.q"};
    case NodeId::EAF: return {true, true, false, false, "scalar", "expenditure amount function", "P.q"};
    }
    return {};
}

/// Which half of the wheel a node sits on (primal: maximization side).
inline bool is_primal(NodeId id) {
    return id == NodeId::DUF || id == NodeId::IUF || id == NodeId::MDF || id == NodeId::HIDF || id == NodeId::BC;
}

enum class EdgeKind { dual, inverse, counterpart, derivative };

inline constexpr std::string_view kind_name(EdgeKind k) {
    switch (k) {
    case EdgeKind::dual: return "dual";
    case EdgeKind::inverse: return "inverse";
    case EdgeKind::counterpart: return "counterpart";
    case EdgeKind::derivative: return "derivative";
    }
    return "";
}

struct WheelEdge {
    std::string_view name;
    NodeId from;
    NodeId to;
    EdgeKind kind;
    std::string_view label;
    std::string_view formula;
    bool normalized = false;
};

// clang-format off
inline const std::vector<WheelEdge>& edge_registry() {
    using enum NodeId;
    using K = EdgeKind;
    static const std::vector<WheelEdge> edges = {
        {"t_primal_solve", DUF, MDF, K::derivative, "Utility maximization", "x^M(P,M) = argmax { U(q) | P.q <= M }"},
        {"t_mdf_to_iuf", MDF, IUF, K::derivative, "Substitution of MDF into DUF", "V(P,M) = U(x^M(P,M))"},
        {"t_roy", IUF, MDF, K::derivative, "Roy's Identity", "x_i^M = -(dV/dP_i) / (dV/dM)"},
        {"t_norm_roy", IUF, MDF, K::derivative, "Normalized Roy's Identity", "x_i(p) = (dV/dp_i) / sum_j p_j dV/dp_j", true},
        {"t_dual_solve", DF, HDF, K::derivative, "Expenditure minimization", "x^c(P,u) = argmin { P.q | U(q) >= u }"},
        {"t_eaf_to_hdf", EAF, HDF, K::derivative, "Minimum outlay on the utility floor", "x^c(P,u) = argmin { EAF(P,q) | U(q) >= u }"},
        {"t_hdf_to_ef", HDF, EF, K::derivative, "Substitution of HDF into EAF", "E(P,u) = P.x^c(P,u)"},
        {"t_shephard", EF, HDF, K::derivative, "Shephard's Lemma", "x_i^c = dE(P,u)/dP_i"},
        {"t_norm_shephard", EF, HDF, K::derivative, "Normalized Shephard's Lemma", "x_i^c = dE(p,u)/dp_i", true},
        {"t_hotelling_wold", DUF, HIDF, K::derivative, "Hotelling-Wold Identity", "phi_i(q) = (dU/dq_i) / sum_j (dU/dq_j) q_j"},
        {"t_antonelli", DF, AIDF, K::derivative, "Antonelli equation", "psi_i(q,u) = dD(q,u)/dq_i"},
        {"t_mdf_to_duf", MDF, DUF, K::derivative, "Inverse MDF substituted into IUF", "U(q) = V(p(q)),  x^M(p(q)) = q"},
        {"t_hdf_to_eaf", HDF, EAF, K::derivative, "Inverse HDF substituted into EF", "EAF(P,q) = E(P(q), u),  x^c(P(q),u) = q"},
        {"t_iuf_to_mdf_via_hdf", IUF, MDF, K::derivative, "Cross-substitution of IUF into HDF", "x^M(P,M) = x^c(P, V(P,M))"},
        {"t_ef_to_hdf_via_mdf", EF, HDF, K::derivative, "Cross-substitution of EF into MDF", "x^c(P,u) = x^M(P, E(P,u))"},

        {"t_iuf_to_ef", IUF, EF, K::inverse, "IUF inverted in M", "V(P, E(P,u)) = u"},
        {"t_ef_to_iuf", EF, IUF, K::inverse, "EF inverted in u", "E(P, V(P,M)) = M"},
        {"t_hidf_to_mdf", HIDF, MDF, K::inverse, "HIDF inverted, normalization undone", "phi(x^M(P,M)) = P/M"},
        {"t_mdf_to_hidf", MDF, HIDF, K::inverse, "MDF inverted at unit income", "x^M(phi(q), 1) = q"},
        {"t_aidf_to_hdf", AIDF, HDF, K::inverse, "AIDF inverted, normalization undone", "psi(x^c(P,u), u) = P/E(P,u)"},
        {"t_hdf_to_aidf", HDF, AIDF, K::inverse, "HDF inverted on the indifference surface", "x^c(psi(q,u), u) = q/D(q,u)"},
        {"t_duf_to_df", DUF, DF, K::inverse, "DUF inverted along rays", "U(q / D(q,u)) = u"},
        {"t_df_to_duf", DF, DUF, K::inverse, "DF inverted in u", "D(q, U(q)) = 1"},

        {"t_mdf_to_hdf", MDF, HDF, K::counterpart, "Marshallian demand at compensating income", "x^c(P,u) = x^M(P,M*),  U(x^M(P,M*)) = u"},
        {"t_hdf_to_mdf", HDF, MDF, K::counterpart, "Hicksian demand at the affordable utility", "x^M(P,M) = x^c(P,u*),  P.x^c(P,u*) = M"},
        {"t_hidf_to_aidf", HIDF, AIDF, K::counterpart, "HIDF on the deflated bundle", "psi(q,u) = phi(q / D(q,u))"},
        {"t_aidf_to_hidf", AIDF, HIDF, K::counterpart, "AIDF at the bundle's own utility", "phi(q) = psi(q, U(q))"},
        {"t_bc_to_eaf", BC, EAF, K::counterpart, "Budget outlay", "EAF(P,q) = P.q"},
        {"t_eaf_to_bc", EAF, BC, K::counterpart, "Budget slack", "BC(P,q,M) = M - EAF(P,q)"},

        {"t_duf_to_iuf", DUF, IUF, K::dual, "Primal value", "V(p) = max_q { U(q) | p.q <= 1 }"},
        {"t_iuf_to_duf", IUF, DUF, K::dual, "Dual recovery of DUF", "U(q) = min_p { V(p) | p.q = 1 }"},
        {"t_ef_to_df", EF, DF, K::dual, "Dual recovery of DF", "D(q,u) = min_p { p.q | E(p,u) = 1 }"},
        {"t_df_to_ef", DF, EF, K::dual, "Dual value", "E(P,u) = min_q { P.q | D(q,u) = 1 }"},
    };
    return edges;
}
// clang-format on

inline const WheelEdge& find_edge(std::string_view name) {
    for (const auto& e : edge_registry())
        if (e.name == name) return e;
    throw NotFoundError("unknown transition '" + std::string(name) + "'");
}

/// True when the registry also holds the reverse edge with the same kind.
inline bool is_bidirectional(const WheelEdge& e) {
    for (const auto& r : edge_registry())
        if (r.from == e.to && r.to == e.from && r.kind == e.kind) return true;
    return false;
}

/// Unordered node pairs joined by edges of `kind`.
inline std::vector<std::pair<NodeId, NodeId>> relationship_pairs(EdgeKind kind) {
    std::vector<std::pair<NodeId, NodeId>> out;
    for (const auto& e : edge_registry()) {
        if (e.kind != kind) continue;
        auto p = std::minmax(e.from, e.to);
        std::pair<NodeId, NodeId> key{p.first, p.second};
        if (std::find(out.begin(), out.end(), key) == out.end()) out.push_back(key);
    }
    return out;
}

/// Shortest path by edge count. Outgoing edges are expanded in lexical name
/// order, so among equal-length paths the lexically first one wins.
inline std::vector<const WheelEdge*> plan_path(NodeId from, NodeId to) {
    if (from == to) return {};
    std::map<NodeId, std::vector<const WheelEdge*>> out;
    for (const auto& e : edge_registry()) out[e.from].push_back(&e);
    for (auto& [_, v] : out)
        std::sort(v.begin(), v.end(), [](const WheelEdge* a, const WheelEdge* b) { return a->name < b->name; });

    std::map<NodeId, const WheelEdge*> via;
    std::deque<NodeId> frontier{from};
    via[from] = nullptr;
    while (!frontier.empty()) {
        NodeId cur = frontier.front();
        frontier.pop_front();
        for (const WheelEdge* e : out[cur]) {
            if (via.count(e->to)) continue;
            via[e->to] = e;
            if (e->to == to) {
                std::vector<const WheelEdge*> path;
                for (NodeId n = to; n != from; n = via[n]->from) path.push_back(via[n]);
                std::reverse(path.begin(), path.end());
                return path;
            }
            frontier.push_back(e->to);
        }
    }
    throw NoPathError("no path from " + std::string(node_name(from)) + " to " + std::string(node_name(to)));
}

/// True if consecutive edges chain (each starts where the previous ended).
inline bool is_connected_path(const std::vector<std::string>& names, std::optional<NodeId> start = {}) {
    std::optional<NodeId> at = start;
    for (const auto& n : names) {
        const WheelEdge* e = nullptr;
        for (const auto& r : edge_registry())
            if (r.name == n) e = &r;
        if (!e) return false;
        if (at && *at != e->from) return false;
        at = e->to;
    }
    return true;
}

/// Looser than is_connected_path: each edge may start at any node the walk
/// has already reached, so a side branch can feed a later step.
inline bool is_valid_walk(const std::vector<std::string>& names, NodeId start) {
    std::vector<NodeId> reached{start};
    for (const auto& n : names) {
        const WheelEdge* e = nullptr;
        for (const auto& r : edge_registry())
            if (r.name == n) e = &r;
        if (!e || std::find(reached.begin(), reached.end(), e->from) == reached.end()) return false;
        reached.push_back(e->to);
    }
    return true;
}

// ---------------------------------------------------------------------------
// Evaluation points

/// Whatever subset of (P, p, q, M, u) a caller supplies.
struct Point {
    std::optional<Vec> P, p, q;
    std::optional<double> M, u;
};

} // namespace duality
