#pragma once

#include <optional>
#include <string>
#include <vector>

#include "temnn/mesh.hpp"

namespace temnn {

// Opposing-surface partner data, one entry per node. `partner < 0` marks a
// node with no admissible opposing candidate; such nodes contribute no
// thickness edge.
struct ThicknessPairing {
    std::vector<int> partner;          // -1 when invalid
    std::vector<double> thickness;     // |x_i - x_partner|, 0 when invalid
    std::vector<double> normal_dot;    // n_i . n_partner, 0 when invalid
    std::vector<double> ray_distance;  // projection distance d (0 on fallback)
    std::vector<bool> valid;
    std::vector<bool> fallback;        // no ray hit; constrained nearest-node search used
    std::vector<bool> near_tie;        // runner-up candidate within tolerance of the winner

    int size() const { return static_cast<int>(partner.size()); }
};

// Casts a ray from each node along its inward normal, pairs the node with
// the nearest opposing-side vertex of the first face hit. Nodes whose ray
// escapes the mesh fall back to the nearest node in the opposing half-space.
ThicknessPairing find_thickness_pairs(const Mesh& mesh, const NormalField& normals);

// Per-node thickness edge features for valid nodes: [t, n_i . n_partner],
// trimmed by the ablation flags. At least one flag must be set.
struct ThicknessFeatureFlags {
    bool use_thickness = true;
    bool use_normal_dot = true;
    int dim() const { return (use_thickness ? 1 : 0) + (use_normal_dot ? 1 : 0); }
};

std::vector<std::vector<double>> thickness_edge_features(const ThicknessPairing& pairing,
                                                         const ThicknessFeatureFlags& flags);

struct ThicknessGate {
    double tau = 0.0;    // threshold, length units
    double alpha = 3.0;  // transition sharpness, > 0
};

// Logistic weight 1 / (1 + exp(alpha * (t - tau))), overflow-safe.
double thickness_activation(double t, const ThicknessGate& gate);
// d/dtau of the activation: alpha * I * (1 - I).
double thickness_activation_dtau(double t, const ThicknessGate& gate);

struct ThicknessHistogram {
    std::vector<double> bin_edges;   // bins + 1 edges
    std::vector<int> counts;
    double fraction_above_tau = 0.0;
    int valid_count = 0;
};

ThicknessHistogram thickness_histogram(const ThicknessPairing& pairing, double tau, int bins = 32);

std::string pairing_to_csv(const ThicknessPairing& pairing);
ThicknessPairing pairing_from_csv(const std::string& text);

}  // namespace temnn
