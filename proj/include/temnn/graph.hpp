#pragma once

#include <array>
#include <vector>

#include "temnn/frame.hpp"
#include "temnn/mesh.hpp"
#include "temnn/thickness.hpp"

namespace temnn {

enum class CoordMode { invariant, original, none };

struct SampleOptions {
    CoordMode coord_mode = CoordMode::invariant;
    ThicknessFeatureFlags thickness_flags{};
};

// Fully assembled training sample. Everything the network consumes is
// E(3)-invariant when coord_mode == invariant; targets stay in the original
// frame and are transformed at training time.
struct GraphSample {
    int num_nodes = 0;
    std::vector<std::array<int, 2>> directed_edges;  // sorted by (src, dst)
    std::vector<double> edge_length;                 // per directed edge
    std::vector<double> gate_dist;                   // geodesic from the gate node
    std::vector<double> cm_radius;                   // distance from center of mass

    std::vector<int> thick_partner;   // -1 when no thickness edge
    std::vector<double> thick_t;
    std::vector<double> thick_dot;
    std::vector<bool> thick_valid;

    std::vector<Vec3> coords;      // empty when coord_mode == none
    std::vector<Vec3> positions;   // original vertex positions
    std::vector<double> condition;
    std::vector<Vec3> targets;     // original frame; empty for prediction-only samples
    CanonicalFrame frame;
    int gate = 0;
    SampleOptions options;
};

// Both orientations of every undirected surface edge, sorted by (src, dst).
std::vector<std::array<int, 2>> build_surface_graph(const Mesh& mesh);

// Dijkstra over surface edges weighted by Euclidean length. Throws if any
// node is unreachable from the gate.
std::vector<double> geodesic_from_gate(const Mesh& mesh, int gate);

std::vector<double> radius_from_cm(const Mesh& mesh, const Vec3& cm);

std::vector<double> edge_lengths(const Mesh& mesh,
                                 const std::vector<std::array<int, 2>>& directed_edges);

GraphSample assemble_sample(const Mesh& mesh, const CanonicalFrame& frame,
                            const ThicknessPairing& pairing, int gate,
                            const std::vector<double>& condition,
                            const std::vector<Vec3>& targets, const SampleOptions& options);

bool samples_bitwise_equal(const GraphSample& a, const GraphSample& b);

}  // namespace temnn
