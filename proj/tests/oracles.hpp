#pragma once

// Independent reference routines used only by tests. They deliberately avoid
// the library's implementation paths for the quantities they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "temnn/kernels.hpp"
#include "temnn/mesh.hpp"
#include "temnn/thickness.hpp"

namespace oracles {

// Unordered edge count by direct pair enumeration over faces.
inline int count_edges_bruteforce(const std::vector<std::array<int, 3>>& faces) {
    std::set<std::pair<int, int>> edges;
    for (const auto& f : faces)
        for (int i = 0; i < 3; ++i) {
            int a = f[i], b = f[(i + 1) % 3];
            edges.insert({std::min(a, b), std::max(a, b)});
        }
    return static_cast<int>(edges.size());
}

// Edge -> incident-face counting without the library's edge table.
inline bool watertight_bruteforce(const std::vector<std::array<int, 3>>& faces) {
    std::map<std::pair<int, int>, int> count;
    for (const auto& f : faces)
        for (int i = 0; i < 3; ++i) {
            int a = f[i], b = f[(i + 1) % 3];
            ++count[{std::min(a, b), std::max(a, b)}];
        }
    if (count.empty()) return false;
    for (const auto& [e, c] : count)
        if (c != 2) return false;
    return true;
}

// Closed-form symmetric 3x3 eigenvalues (Cardano) and eigenvectors via
// cross products; independent of the library's Jacobi solver.
struct EigenRef {
    std::array<double, 3> values;   // descending
    std::array<temnn::Vec3, 3> vectors;
};

inline EigenRef eigen_sym3_reference(const temnn::Mat3& a) {
    const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    const double q = (a(0, 0) + a(1, 1) + a(2, 2)) / 3.0;
    const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) +
                      (a(2, 2) - q) * (a(2, 2) - q) + 2.0 * p1;
    const double p = std::sqrt(std::max(p2 / 6.0, 0.0));
    std::array<double, 3> vals;
    if (p < 1e-300) {
        vals = {q, q, q};
    } else {
        temnn::Mat3 b;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) b(r, c) = (a(r, c) - (r == c ? q : 0.0)) / p;
        double r = b.det() / 2.0;
        r = std::clamp(r, -1.0, 1.0);
        const double phi = std::acos(r) / 3.0;
        vals[0] = q + 2.0 * p * std::cos(phi);
        vals[2] = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
        vals[1] = 3.0 * q - vals[0] - vals[2];
    }
    EigenRef out;
    out.values = vals;
    for (int k = 0; k < 3; ++k) {
        // eigenvector from the two best cross products of (A - lambda I) rows
        temnn::Mat3 m = a;
        for (int d = 0; d < 3; ++d) m(d, d) -= vals[k];
        temnn::Vec3 r0{m(0, 0), m(0, 1), m(0, 2)};
        temnn::Vec3 r1{m(1, 0), m(1, 1), m(1, 2)};
        temnn::Vec3 r2{m(2, 0), m(2, 1), m(2, 2)};
        temnn::Vec3 c01 = cross(r0, r1), c02 = cross(r0, r2), c12 = cross(r1, r2);
        temnn::Vec3 best = c01;
        if (norm(c02) > norm(best)) best = c02;
        if (norm(c12) > norm(best)) best = c12;
        out.vectors[k] = norm(best) > 1e-300 ? normalized(best) : temnn::Vec3{1, 0, 0};
    }
    return out;
}

// Bellman-Ford shortest paths over the surface edge graph.
inline std::vector<double> bellman_ford(const temnn::Mesh& mesh, int gate) {
    const int n = mesh.num_vertices();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    dist[gate] = 0.0;
    for (int pass = 0; pass < n; ++pass) {
        bool changed = false;
        for (const auto& e : mesh.edges) {
            double w = norm(mesh.vertices[e[0]] - mesh.vertices[e[1]]);
            if (dist[e[0]] + w < dist[e[1]]) { dist[e[1]] = dist[e[0]] + w; changed = true; }
            if (dist[e[1]] + w < dist[e[0]]) { dist[e[0]] = dist[e[1]] + w; changed = true; }
        }
        if (!changed) break;
    }
    return dist;
}

// Direct evaluation of the opposing-surface pairing over all candidate
// nodes. The projection distance comes from a brute-force first-hit scan of
// every face (no incidence exclusion shortcuts beyond the node itself).
struct PairRef {
    int partner = -1;
    double dist = std::numeric_limits<double>::infinity();  // to the projected point
};

inline PairRef pair_bruteforce(const temnn::Mesh& mesh, const std::vector<temnn::Vec3>& node_normals,
                               int i, double eps_ray) {
    const temnn::Vec3 xi = mesh.vertices[i];
    const temnn::Vec3 dir = node_normals[i] * -1.0;
    double d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < mesh.num_faces(); ++k) {
        const auto& f = mesh.faces[k];
        if (f[0] == i || f[1] == i || f[2] == i) continue;
        double t;
        if (temnn::kernels::ray_triangle(xi, dir, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                         mesh.vertices[f[2]], t) &&
            t > eps_ray && t < d)
            d = t;
    }
    temnn::Vec3 target = std::isfinite(d) ? xi - node_normals[i] * d : xi;
    PairRef best;
    for (int j = 0; j < mesh.num_vertices(); ++j) {
        if (j == i) continue;
        if (dot(mesh.vertices[j] - xi, node_normals[i]) >= 0.0) continue;
        double dj = norm(mesh.vertices[j] - target);
        if (dj < best.dist) best = {j, dj};
    }
    return best;
}

// Accumulation by a naive loop, canonical order.
inline std::vector<double> scatter_add_naive(const std::vector<double>& x, int rows, int cols,
                                             const std::vector<int>& idx, int out_rows) {
    std::vector<double> out(static_cast<size_t>(out_rows) * cols, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<size_t>(idx[r]) * cols + c] += x[static_cast<size_t>(r) * cols + c];
    return out;
}

}  // namespace oracles
