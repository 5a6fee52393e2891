#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "temnn/geom.hpp"
#include "temnn/mesh.hpp"

namespace temnn {

// Per-shape data-driven coordinate system: columns of `rotation` are the
// principal basis vectors (eigenvalue-descending), `center` is the vertex
// mean. Reflections are permitted, so det(rotation) may be -1.
struct CanonicalFrame {
    Mat3 rotation = Mat3::identity();
    Vec3 center{};
    std::array<bool, 3> degenerate{false, false, false};

    bool any_degenerate() const { return degenerate[0] || degenerate[1] || degenerate[2]; }
};

// Thrown when no axis sign can be fixed at all (reference vector vanishes on
// a fully symmetric shape). Carries the per-axis degeneracy flags.
struct frame_error : error {
    std::array<bool, 3> degenerate;
    frame_error(const std::string& msg, std::array<bool, 3> flags)
        : error(msg), degenerate(flags) {}
};

Vec3 center_of_mass(const Mesh& mesh);        // unweighted vertex mean
Vec3 bounding_box_center(const Mesh& mesh);   // (min + max) / 2 per axis

CanonicalFrame compute_frame(const Mesh& mesh);

enum class InverseMode { point, vector };

std::vector<Vec3> to_invariant(const CanonicalFrame& frame, std::span<const Vec3> points);
std::vector<Vec3> from_invariant(const CanonicalFrame& frame, std::span<const Vec3> points,
                                 InverseMode mode);

std::string frame_to_json(const CanonicalFrame& frame);
CanonicalFrame frame_from_json(const std::string& text);

// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix. Eigenvalues
// are returned descending; columns of the vector matrix are the matching
// unit eigenvectors.
struct EigenSym3 {
    std::array<double, 3> values{};
    Mat3 vectors;
};
EigenSym3 eigen_sym3(const Mat3& a);

}  // namespace temnn
