#include "temnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace temnn {

std::vector<std::array<int, 2>> build_surface_graph(const Mesh& mesh) {
    std::vector<std::array<int, 2>> directed;
    directed.reserve(mesh.edges.size() * 2);
    for (const auto& e : mesh.edges) {
        directed.push_back({e[0], e[1]});
        directed.push_back({e[1], e[0]});
    }
    std::sort(directed.begin(), directed.end());
    return directed;
}

std::vector<double> geodesic_from_gate(const Mesh& mesh, int gate) {
    const int n = mesh.num_vertices();
    if (gate < 0 || gate >= n) throw error("geodesic_from_gate: gate index out of range");

    std::vector<std::vector<std::pair<int, double>>> adj(n);
    for (const auto& e : mesh.edges) {
        double w = norm(mesh.vertices[e[0]] - mesh.vertices[e[1]]);
        adj[e[0]].push_back({e[1], w});
        adj[e[1]].push_back({e[0], w});
    }

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, inf);
    dist[gate] = 0.0;
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    heap.push({0.0, gate});
    while (!heap.empty()) {
        auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[u]) continue;
        for (auto [v, w] : adj[u])
            if (d + w < dist[v]) {
                dist[v] = d + w;
                heap.push({dist[v], v});
            }
    }
    for (int i = 0; i < n; ++i)
        if (dist[i] == inf)
            throw error("geodesic_from_gate: node " + std::to_string(i) +
                        " unreachable from gate (disconnected mesh)");
    return dist;
}

std::vector<double> radius_from_cm(const Mesh& mesh, const Vec3& cm) {
    std::vector<double> out(mesh.num_vertices());
    for (int i = 0; i < mesh.num_vertices(); ++i) out[i] = norm(mesh.vertices[i] - cm);
    return out;
}

std::vector<double> edge_lengths(const Mesh& mesh,
                                 const std::vector<std::array<int, 2>>& directed_edges) {
    std::vector<double> out(directed_edges.size());
    for (size_t e = 0; e < directed_edges.size(); ++e)
        out[e] = norm(mesh.vertices[directed_edges[e][0]] - mesh.vertices[directed_edges[e][1]]);
    return out;
}

GraphSample assemble_sample(const Mesh& mesh, const CanonicalFrame& frame,
                            const ThicknessPairing& pairing, int gate,
                            const std::vector<double>& condition,
                            const std::vector<Vec3>& targets, const SampleOptions& options) {
    const int n = mesh.num_vertices();
    if (pairing.size() != n) throw error("assemble_sample: pairing size mismatch");
    if (!targets.empty() && static_cast<int>(targets.size()) != n)
        throw error("assemble_sample: target count mismatch");

    GraphSample s;
    s.num_nodes = n;
    s.directed_edges = build_surface_graph(mesh);
    s.edge_length = edge_lengths(mesh, s.directed_edges);
    s.gate_dist = geodesic_from_gate(mesh, gate);
    s.cm_radius = radius_from_cm(mesh, frame.center);

    s.thick_partner = pairing.partner;
    s.thick_t = pairing.thickness;
    s.thick_dot = pairing.normal_dot;
    s.thick_valid = pairing.valid;

    switch (options.coord_mode) {
        case CoordMode::invariant:
            s.coords = to_invariant(frame, mesh.vertices);
            break;
        case CoordMode::original:
            s.coords = mesh.vertices;
            break;
        case CoordMode::none:
            break;
    }
    s.positions = mesh.vertices;
    s.condition = condition;
    s.targets = targets;
    s.frame = frame;
    s.gate = gate;
    s.options = options;

    for (double v : s.edge_length)
        if (!std::isfinite(v)) throw error("assemble_sample: non-finite edge length");
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(s.gate_dist[i]) || !std::isfinite(s.cm_radius[i]) ||
            !std::isfinite(s.thick_t[i]) || !std::isfinite(s.thick_dot[i]))
            throw error("assemble_sample: non-finite node feature at " + std::to_string(i));
        if (s.gate_dist[i] < 0.0 || s.cm_radius[i] < 0.0)
            throw error("assemble_sample: negative distance feature at " + std::to_string(i));
    }
    return s;
}

bool samples_bitwise_equal(const GraphSample& a, const GraphSample& b) {
    auto vec3_eq = [](const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
        return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin());
    };
    bool frame_eq = a.frame.center == b.frame.center && a.frame.degenerate == b.frame.degenerate;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) frame_eq = frame_eq && a.frame.rotation(r, c) == b.frame.rotation(r, c);
    return a.num_nodes == b.num_nodes && a.directed_edges == b.directed_edges &&
           a.edge_length == b.edge_length && a.gate_dist == b.gate_dist &&
           a.cm_radius == b.cm_radius && a.thick_partner == b.thick_partner &&
           a.thick_t == b.thick_t && a.thick_dot == b.thick_dot &&
           a.thick_valid == b.thick_valid && vec3_eq(a.coords, b.coords) &&
           vec3_eq(a.positions, b.positions) && a.condition == b.condition &&
           vec3_eq(a.targets, b.targets) && frame_eq && a.gate == b.gate;
}

}  // namespace temnn
