#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "temnn/bundle.hpp"
#include "temnn/graph.hpp"

namespace temnn {

enum class ShapeFamily { plate, hollow_box, ribbed_plate };

// All families are closed shells built on shared axis-aligned lattices, so
// opposing wall nodes line up exactly and the generator knows the true
// pairing. Graded lattices and unequal walls keep the shapes asymmetric
// enough for a sign-determinable canonical frame.
struct ShapeSpec {
    ShapeFamily family = ShapeFamily::plate;

    double lx = 24.0, ly = 18.0;      // lateral extents
    double base_thickness = 3.0;      // plate / ribbed_plate slab thickness
    double taper_x = 0.5, taper_y = 0.35;  // plate top-surface rise across extents

    double rib_thickness = 6.0;       // ribbed_plate plateau thickness
    double rib_x0 = 0.25, rib_x1 = 0.55, rib_y0 = 0.3, rib_y1 = 0.7;  // fractions

    double height = 18.0;             // hollow_box outer height
    double wall_x0 = 2.5, wall_x1 = 3.5, wall_y0 = 2.8, wall_y1 = 3.2;
    double floor = 3.0;

    int res_x = 7, res_y = 6, res_z = 4;  // cell counts
    int side_cells = 1;               // vertical cells on slab side walls
    double grading = 1.12;            // successive lattice spacing ratio

    Vec3 gate_anchor{0.0, 0.0, 0.0};
};

struct ShapeOracle {
    std::vector<int> wall_partner;       // -1 unless an interior wall node
    std::vector<double> wall_thickness;  // true wall thickness where wall_partner >= 0
    std::vector<bool> wide;              // nodes known to pair across a lateral extent
    int gate_node = 0;

    int wall_count() const;
};

struct GeneratedShape {
    Mesh mesh;
    ShapeOracle oracle;
};

GeneratedShape gen_shape(const ShapeSpec& spec);

// Analytic deformation field: a thickness-gated push along the node normal
// plus a geodesic-weighted radial term. Built from normals, radial
// directions, and invariant scalars only, so it commutes with rigid motions.
struct FieldSpec {
    double c1 = 1.2;
    double c2 = 0.45;
    double s = 2.0;       // decay scale of the thickness term
    double t_star = 4.0;  // hard cutoff of the thickness term
    double noise = 0.05;  // label noise along the local equivariant basis
    std::vector<double> cond_weights;
    double cond_bias = 1.0;
};

double condition_scale(const FieldSpec& field, const std::vector<double>& condition);

std::vector<Vec3> synth_field(const Mesh& mesh, const NormalField& normals,
                              const ThicknessPairing& pairing,
                              const std::vector<double>& gate_dist, const Vec3& cm,
                              const std::vector<double>& condition, const FieldSpec& field);

struct DatasetSpec {
    int n_shapes = 8;
    int n_conditions = 3;
    int n_unseen = 2;     // shapes withheld entirely for the test split
    int cond_dim = 4;
    double val_fraction = 0.2;
    std::uint64_t seed = 1;
    FieldSpec field;

    void validate() const;
};

nlohmann::json dataset_spec_to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

// Writes bundles + manifest. Returns the manifest (meta carries the field
// spec, per-shape parameters, and the thickness statistics of the dataset).
DatasetManifest gen_dataset(const DatasetSpec& spec, const std::string& out_dir);

// Deterministic shape spec for index `idx` of a dataset.
ShapeSpec dataset_shape_spec(const DatasetSpec& spec, int idx);

}  // namespace temnn
