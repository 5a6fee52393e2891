#include "temnn/thickness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "temnn/kernels.hpp"

namespace temnn {

namespace {

struct Candidate {
    double dist = std::numeric_limits<double>::infinity();
    int node = -1;

    bool better_than(const Candidate& o) const {
        if (dist != o.dist) return dist < o.dist;
        return node < o.node && node >= 0;
    }
};

}  // namespace

ThicknessPairing find_thickness_pairs(const Mesh& mesh, const NormalField& normals) {
    const int n = mesh.num_vertices();
    if (static_cast<int>(normals.node.size()) != n)
        throw error("find_thickness_pairs: node normal count does not match mesh");

    const double diag = mesh.bbox_diagonal();
    const double eps_ray = 1e-9 * diag;
    const double tie_tol = 1e-9 * diag;

    ThicknessPairing out;
    out.partner.assign(n, -1);
    out.thickness.assign(n, 0.0);
    out.normal_dot.assign(n, 0.0);
    out.ray_distance.assign(n, 0.0);
    out.valid.assign(n, false);
    out.fallback.assign(n, false);
    out.near_tie.assign(n, false);

    kernels::RaySet rays;
    rays.origins = mesh.vertices;
    rays.directions.resize(n);
    rays.exclude_node.resize(n);
    for (int i = 0; i < n; ++i) {
        rays.directions[i] = normals.node[i] * -1.0;
        rays.exclude_node[i] = i;
    }
    const std::vector<kernels::RayHit> hits = kernels::raycast_first_hit(mesh, rays, eps_ray);

    for (int i = 0; i < n; ++i) {
        const Vec3& xi = mesh.vertices[i];
        const Vec3& ni = normals.node[i];

        Candidate best, runner_up;
        double d = 0.0;
        bool used_fallback = false;

        auto consider = [&](int j, const Vec3& target) {
            if (j == i) return;
            if (dot(mesh.vertices[j] - xi, ni) >= 0.0) return;  // same-side node
            Candidate c{norm(mesh.vertices[j] - target), j};
            if (c.better_than(best)) {
                if (best.node != j) runner_up = best;
                best = c;
            } else if (best.node != j && c.better_than(runner_up)) {
                runner_up = c;
            }
        };

        if (hits[i].hit()) {
            d = hits[i].t;
            const Vec3 projected = xi - ni * d;
            // every face the ray meets at (numerically) the same depth
            // contributes candidates, so shared-edge hits stay stable
            for (int k = 0; k < mesh.num_faces(); ++k) {
                const auto& f = mesh.faces[k];
                if (f[0] == i || f[1] == i || f[2] == i) continue;
                double t;
                if (!kernels::ray_triangle(xi, rays.directions[i], mesh.vertices[f[0]],
                                           mesh.vertices[f[1]], mesh.vertices[f[2]], t))
                    continue;
                if (t <= eps_ray || t > d + tie_tol) continue;
                for (int j : f) consider(j, projected);
            }
        }

        if (best.node < 0) {
            // ray escaped or the hit face had no opposing-side vertex
            used_fallback = true;
            d = 0.0;
            for (int j = 0; j < n; ++j) consider(j, xi);
        }

        if (best.node < 0) continue;  // no admissible candidate anywhere

        out.partner[i] = best.node;
        out.thickness[i] = norm(xi - mesh.vertices[best.node]);
        out.normal_dot[i] = dot(ni, normals.node[best.node]);
        out.ray_distance[i] = d;
        out.valid[i] = true;
        out.fallback[i] = used_fallback;
        out.near_tie[i] = runner_up.node >= 0 && (runner_up.dist - best.dist) <= tie_tol;
    }
    return out;
}

std::vector<std::vector<double>> thickness_edge_features(const ThicknessPairing& pairing,
                                                         const ThicknessFeatureFlags& flags) {
    if (flags.dim() == 0) throw error("thickness_edge_features: all features disabled");
    std::vector<std::vector<double>> out(pairing.size());
    for (int i = 0; i < pairing.size(); ++i) {
        if (!pairing.valid[i]) continue;
        std::vector<double>& f = out[i];
        if (flags.use_thickness) f.push_back(pairing.thickness[i]);
        if (flags.use_normal_dot) f.push_back(pairing.normal_dot[i]);
    }
    return out;
}

double thickness_activation(double t, const ThicknessGate& gate) {
    if (gate.alpha <= 0.0) throw error("thickness_activation: alpha must be positive");
    const double z = gate.alpha * (t - gate.tau);
    double v;
    if (z >= 0.0) {
        const double e = std::exp(-z);
        v = e / (1.0 + e);
    } else {
        v = 1.0 / (1.0 + std::exp(z));
    }
    // keep the open interval even where the exact value rounds to 0 or 1
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    return std::clamp(v, lo, hi);
}

double thickness_activation_dtau(double t, const ThicknessGate& gate) {
    const double v = thickness_activation(t, gate);
    return gate.alpha * v * (1.0 - v);
}

ThicknessHistogram thickness_histogram(const ThicknessPairing& pairing, double tau, int bins) {
    if (bins < 1) throw error("thickness_histogram: need at least one bin");
    ThicknessHistogram h;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < pairing.size(); ++i) {
        if (!pairing.valid[i]) continue;
        ++h.valid_count;
        lo = std::min(lo, pairing.thickness[i]);
        hi = std::max(hi, pairing.thickness[i]);
    }
    if (h.valid_count == 0) {
        h.bin_edges = {0.0, 1.0};
        h.counts = {0};
        return h;
    }
    if (hi <= lo) hi = lo + 1.0;
    h.bin_edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) h.bin_edges[b] = lo + (hi - lo) * b / bins;
    h.counts.assign(bins, 0);
    int above = 0;
    for (int i = 0; i < pairing.size(); ++i) {
        if (!pairing.valid[i]) continue;
        double t = pairing.thickness[i];
        int b = std::min(bins - 1, static_cast<int>((t - lo) / (hi - lo) * bins));
        ++h.counts[b];
        if (t > tau) ++above;
    }
    h.fraction_above_tau = static_cast<double>(above) / h.valid_count;
    return h;
}

std::string pairing_to_csv(const ThicknessPairing& pairing) {
    std::ostringstream out;
    out << "node_id,partner_id,thickness,normal_dot,fallback_flag\n";
    char buf[128];
    for (int i = 0; i < pairing.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%d\n", i, pairing.partner[i],
                      pairing.thickness[i], pairing.normal_dot[i], pairing.fallback[i] ? 1 : 0);
        out << buf;
    }
    return out.str();
}

ThicknessPairing pairing_from_csv(const std::string& text) {
    ThicknessPairing p;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw error("pairing_from_csv: empty input");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        int node, partner, fb;
        double t, nd;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%d", &node, &partner, &t, &nd, &fb) != 5)
            throw error("pairing_from_csv: malformed row '" + line + "'");
        if (node != p.size()) throw error("pairing_from_csv: rows out of order");
        p.partner.push_back(partner);
        p.thickness.push_back(t);
        p.normal_dot.push_back(nd);
        p.ray_distance.push_back(0.0);
        p.valid.push_back(partner >= 0);
        p.fallback.push_back(fb != 0);
        p.near_tie.push_back(false);
    }
    return p;
}

}  // namespace temnn
