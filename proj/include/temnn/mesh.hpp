#pragma once

#include <array>
#include <string>
#include <vector>

#include "temnn/geom.hpp"

namespace temnn {

// Triangular surface mesh. Edges and vertex->face incidence are derived from
// the face list on construction, never read from files.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    // derived, each unordered pair exactly once, (a, b) with a < b, sorted
    std::vector<std::array<int, 2>> edges;
    // derived, faces incident to each vertex, ascending
    std::vector<std::vector<int>> vertex_faces;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_faces() const { return static_cast<int>(faces.size()); }
    int num_edges() const { return static_cast<int>(edges.size()); }

    Vec3 bbox_min() const;
    Vec3 bbox_max() const;
    double bbox_diagonal() const;
};

enum class MeshFormat { off, obj };

// Validates face indices (3 distinct, in range) and derives edges/incidence.
Mesh make_mesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces);

// Parses ASCII OFF or a v/f-only OBJ subset. Faces must be triangles.
// Errors carry the 1-based line number of the offending record.
Mesh parse_mesh(const std::string& content, MeshFormat format);

MeshFormat format_from_path(const std::string& path);
Mesh load_mesh(const std::string& path);
std::string write_off(const Mesh& mesh);

struct WatertightReport {
    bool watertight = false;
    std::vector<std::array<int, 2>> boundary_edges;      // exactly 1 incident face
    std::vector<std::array<int, 2>> non_manifold_edges;  // 3 or more incident faces
};

// Diagnostic only: watertight iff every edge has exactly two incident faces.
WatertightReport validate_watertight(const Mesh& mesh);

struct NormalField {
    std::vector<Vec3> face;  // unit, orientation from winding
    std::vector<Vec3> node;  // unit, mean of incident face normals renormalized
};

std::vector<Vec3> face_normals(const Mesh& mesh);
std::vector<Vec3> node_normals(const Mesh& mesh, const std::vector<Vec3>& face_normals);
NormalField compute_normals(const Mesh& mesh);

}  // namespace temnn
