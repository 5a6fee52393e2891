#include "temnn/frame.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace temnn {

Vec3 center_of_mass(const Mesh& mesh) {
    if (mesh.vertices.empty()) throw error("center_of_mass: empty vertex list");
    Vec3 sum{};
    for (const Vec3& v : mesh.vertices) sum += v;
    return sum / static_cast<double>(mesh.vertices.size());
}

Vec3 bounding_box_center(const Mesh& mesh) {
    if (mesh.vertices.empty()) throw error("bounding_box_center: empty vertex list");
    return (mesh.bbox_min() + mesh.bbox_max()) * 0.5;
}

EigenSym3 eigen_sym3(const Mat3& input) {
    Mat3 a = input;
    Mat3 v = Mat3::identity();
    // cyclic Jacobi sweeps; a 3x3 converges in a handful of rotations
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = std::abs(a(0, 1)) + std::abs(a(0, 2)) + std::abs(a(1, 2));
        if (off == 0.0) break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                double apq = a(p, q);
                if (apq == 0.0) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                Mat3 r = Mat3::identity();
                r(p, p) = c; r(q, q) = c; r(p, q) = s; r(q, p) = -s;
                a = r.transposed().mul(a).mul(r);
                a(p, q) = a(q, p) = 0.0;
                v = v.mul(r);
            }
    }
    EigenSym3 out;
    std::array<int, 3> order{0, 1, 2};
    std::array<double, 3> vals{a(0, 0), a(1, 1), a(2, 2)};
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return vals[i] > vals[j]; });
    for (int k = 0; k < 3; ++k) {
        out.values[k] = vals[order[k]];
        out.vectors.set_col(k, normalized(v.col(order[k])));
    }
    return out;
}

CanonicalFrame compute_frame(const Mesh& mesh) {
    if (mesh.num_vertices() < 2) throw error("compute_frame: need at least 2 vertices");

    CanonicalFrame frame;
    frame.center = center_of_mass(mesh);

    Mat3 cov;
    for (const Vec3& p : mesh.vertices) {
        Vec3 d = p - frame.center;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cov(r, c) += d[r] * d[c];
    }
    double scale = 1.0 / static_cast<double>(mesh.num_vertices() - 1);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cov(r, c) *= scale;

    EigenSym3 eig = eigen_sym3(cov);

    double lambda_max = std::max({std::abs(eig.values[0]), std::abs(eig.values[1]),
                                  std::abs(eig.values[2])});
    for (int k = 0; k < 2; ++k)
        if (std::abs(eig.values[k] - eig.values[k + 1]) < 1e-9 * lambda_max) {
            frame.degenerate[k] = true;
            frame.degenerate[k + 1] = true;
        }

    // Reference vector from the bounding box center to the center of mass,
    // with the box measured along the principal axes. Projections onto the
    // (sign-ambiguous) eigenvectors are pose-independent, so the sign rule
    // commutes with rigid motions; an axis-aligned box in input coordinates
    // would not.
    std::array<double, 3> ref{};     // center-of-mass offset along each axis
    std::array<double, 3> extent{};  // box half-width along each axis
    for (int k = 0; k < 3; ++k) {
        Vec3 b = eig.vectors.col(k);
        double lo = dot(b, mesh.vertices[0] - frame.center);
        double hi = lo;
        for (const Vec3& p : mesh.vertices) {
            double s = dot(b, p - frame.center);
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        ref[k] = -(lo + hi) / 2.0;  // mean projection is zero by centering
        extent[k] = (hi - lo) / 2.0;
    }

    double ref_norm = std::sqrt(ref[0] * ref[0] + ref[1] * ref[1] + ref[2] * ref[2]);
    double max_extent = std::max({extent[0], extent[1], extent[2]});

    int sign_ties = 0;
    for (int k = 0; k < 3; ++k) {
        Vec3 b = eig.vectors.col(k);
        if (std::abs(ref[k]) <= 1e-9 * std::max(extent[k], 1e-300)) {
            ++sign_ties;
            frame.degenerate[k] = true;
            // fallback: largest-magnitude component positive, ties by lowest axis
            int axis = 0;
            for (int a = 1; a < 3; ++a)
                if (std::abs(b[a]) > std::abs(b[axis])) axis = a;
            if (b[axis] < 0.0) b = b * -1.0;
        } else if (ref[k] < 0.0) {
            b = b * -1.0;
        }
        eig.vectors.set_col(k, b);
    }

    if (ref_norm < 1e-12 * std::max(max_extent, 1e-300) && sign_ties > 0)
        throw frame_error(
            "compute_frame: reference vector vanishes on a symmetric shape; "
            "axis signs are not determinable",
            frame.degenerate);

    frame.rotation = eig.vectors;
    return frame;
}

std::vector<Vec3> to_invariant(const CanonicalFrame& frame, std::span<const Vec3> points) {
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const Vec3& p : points) out.push_back(frame.rotation.tmul(p - frame.center));
    return out;
}

std::vector<Vec3> from_invariant(const CanonicalFrame& frame, std::span<const Vec3> points,
                                 InverseMode mode) {
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const Vec3& p : points) {
        Vec3 r = frame.rotation.mul(p);
        out.push_back(mode == InverseMode::point ? r + frame.center : r);
    }
    return out;
}

std::string frame_to_json(const CanonicalFrame& frame) {
    nlohmann::json j;
    for (int r = 0; r < 3; ++r)
        j["rotation"].push_back({frame.rotation(r, 0), frame.rotation(r, 1), frame.rotation(r, 2)});
    j["center"] = {frame.center.x, frame.center.y, frame.center.z};
    j["degenerate"] = {frame.degenerate[0], frame.degenerate[1], frame.degenerate[2]};
    return j.dump(2);
}

CanonicalFrame frame_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    CanonicalFrame frame;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) frame.rotation(r, c) = j.at("rotation").at(r).at(c).get<double>();
    for (int k = 0; k < 3; ++k) frame.center[k] = j.at("center").at(k).get<double>();
    for (int k = 0; k < 3; ++k) frame.degenerate[k] = j.at("degenerate").at(k).get<bool>();
    return frame;
}

}  // namespace temnn
