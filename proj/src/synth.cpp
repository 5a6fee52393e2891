#include "temnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "temnn/random.hpp"

namespace temnn {

int ShapeOracle::wall_count() const {
    int n = 0;
    for (int p : wall_partner)
        if (p >= 0) ++n;
    return n;
}

namespace {

// lattice over [lo, hi] with `cells` spans whose widths grow by `ratio`
std::vector<double> graded_lattice(double lo, double hi, int cells, double ratio) {
    std::vector<double> out(cells + 1);
    double total = 0.0, w = 1.0;
    for (int k = 0; k < cells; ++k) {
        total += w;
        w *= ratio;
    }
    out[0] = lo;
    double acc = 0.0;
    w = 1.0;
    for (int k = 1; k < cells; ++k) {
        acc += w;
        w *= ratio;
        out[k] = lo + (hi - lo) * acc / total;
    }
    out[cells] = hi;
    return out;
}

struct MeshBuilder {
    std::map<std::array<double, 3>, int> index;
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    int vertex(const Vec3& p) {
        std::array<double, 3> key{p.x, p.y, p.z};
        auto it = index.find(key);
        if (it != index.end()) return it->second;
        int id = static_cast<int>(vertices.size());
        index.emplace(key, id);
        vertices.push_back(p);
        return id;
    }

    // corners counter-clockwise as seen from outside
    void quad(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
        int ia = vertex(a), ib = vertex(b), ic = vertex(c), id = vertex(d);
        faces.push_back({ia, ib, ic});
        faces.push_back({ia, ic, id});
    }

    Mesh build() { return make_mesh(std::move(vertices), std::move(faces)); }
};

int nearest_vertex(const Mesh& mesh, const Vec3& p) {
    int best = 0;
    double best_d = norm(mesh.vertices[0] - p);
    for (int i = 1; i < mesh.num_vertices(); ++i) {
        double d = norm(mesh.vertices[i] - p);
        if (d < best_d) {
            best = i;
            best_d = d;
        }
    }
    return best;
}

// --- heightfield slab (plate, ribbed_plate) -------------------------------

GeneratedShape gen_slab(const ShapeSpec& spec) {
    const int nx = spec.res_x, ny = spec.res_y;
    if (nx < 2 || ny < 2) throw error("gen_shape: resolution must be >= 2");
    std::vector<double> xs = graded_lattice(0.0, spec.lx, nx, spec.grading);
    std::vector<double> ys = graded_lattice(0.0, spec.ly, ny, spec.grading);

    auto height = [&](int i, int j) {
        if (spec.family == ShapeFamily::plate)
            return spec.base_thickness + spec.taper_x * (xs[i] / spec.lx) +
                   spec.taper_y * (ys[j] / spec.ly);
        // ribbed_plate: plateau over a lattice-aligned rectangle
        double fx = xs[i] / spec.lx, fy = ys[j] / spec.ly;
        bool in_rib = fx > spec.rib_x0 && fx < spec.rib_x1 && fy > spec.rib_y0 && fy < spec.rib_y1;
        return in_rib ? spec.rib_thickness : spec.base_thickness;
    };

    double max_h = 0.0;
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j <= ny; ++j) max_h = std::max(max_h, height(i, j));
    if (max_h >= std::min(spec.lx, spec.ly))
        throw error("gen_shape: thickness must stay below the smallest lateral extent");

    MeshBuilder mb;
    auto bot = [&](int i, int j) { return Vec3{xs[i], ys[j], 0.0}; };
    auto top = [&](int i, int j) { return Vec3{xs[i], ys[j], height(i, j)}; };
    const int m = std::max(1, spec.side_cells);
    // side-wall lattice point at fraction r/m of the local height
    auto side = [&](int i, int j, int r) {
        return Vec3{xs[i], ys[j], height(i, j) * r / m};
    };

    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j) {
            mb.quad(bot(i, j), bot(i, j + 1), bot(i + 1, j + 1), bot(i + 1, j));
            mb.quad(top(i, j), top(i + 1, j), top(i + 1, j + 1), top(i, j + 1));
        }
    for (int r = 0; r < m; ++r) {
        for (int i = 0; i < nx; ++i) {
            mb.quad(side(i, 0, r), side(i + 1, 0, r), side(i + 1, 0, r + 1),
                    side(i, 0, r + 1));  // y = 0
            mb.quad(side(i, ny, r), side(i, ny, r + 1), side(i + 1, ny, r + 1),
                    side(i + 1, ny, r));  // y = ly
        }
        for (int j = 0; j < ny; ++j) {
            mb.quad(side(0, j, r), side(0, j, r + 1), side(0, j + 1, r + 1),
                    side(0, j + 1, r));  // x = 0
            mb.quad(side(nx, j, r), side(nx, j + 1, r), side(nx, j + 1, r + 1),
                    side(nx, j, r + 1));  // x = lx
        }
    }

    GeneratedShape out;
    out.mesh = mb.build();

    const int n = out.mesh.num_vertices();
    out.oracle.wall_partner.assign(n, -1);
    out.oracle.wall_thickness.assign(n, 0.0);
    out.oracle.wide.assign(n, false);

    auto flat_around = [&](int i, int j) {
        double h = height(i, j);
        for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj)
                if (height(i + di, j + dj) != h) return false;
        return true;
    };
    for (int i = 1; i < nx; ++i)
        for (int j = 1; j < ny; ++j) {
            int b = mb.index.at({xs[i], ys[j], 0.0});
            int t = mb.index.at({xs[i], ys[j], height(i, j)});
            // bottom normals are exactly -z, so the upward ray meets the top
            // vertex on the same lattice line regardless of local slope
            out.oracle.wall_partner[b] = t;
            out.oracle.wall_thickness[b] = height(i, j);
            if (flat_around(i, j)) {
                out.oracle.wall_partner[t] = b;
                out.oracle.wall_thickness[t] = height(i, j);
            }
        }
    out.oracle.gate_node = nearest_vertex(out.mesh, spec.gate_anchor);
    return out;
}

// --- hollow box (open-top basket) -----------------------------------------

struct BasketLattice {
    std::vector<double> xs, ys, zs;
    int wall_cells;                 // cells across each wall band and the floor
    int ix0, ix1, iy0, iy1, izf;    // lattice indices of the cavity boundaries
};

BasketLattice basket_lattice(const ShapeSpec& spec) {
    BasketLattice lat;
    lat.wall_cells = 2;
    auto band = [&](double lo, double hi, int cells, double ratio) {
        return graded_lattice(lo, hi, cells, ratio);
    };
    auto join = [](std::vector<double> a, const std::vector<double>& b) {
        a.insert(a.end(), b.begin() + 1, b.end());
        return a;
    };
    lat.xs = join(join(band(0.0, spec.wall_x0, lat.wall_cells, 1.0),
                       band(spec.wall_x0, spec.lx - spec.wall_x1, spec.res_x, spec.grading)),
                  band(spec.lx - spec.wall_x1, spec.lx, lat.wall_cells, 1.0));
    lat.ys = join(join(band(0.0, spec.wall_y0, lat.wall_cells, 1.0),
                       band(spec.wall_y0, spec.ly - spec.wall_y1, spec.res_y, spec.grading)),
                  band(spec.ly - spec.wall_y1, spec.ly, lat.wall_cells, 1.0));
    lat.zs = join(band(0.0, spec.floor, lat.wall_cells, 1.0),
                  band(spec.floor, spec.height, spec.res_z, spec.grading));
    lat.ix0 = lat.wall_cells;
    lat.ix1 = static_cast<int>(lat.xs.size()) - 1 - lat.wall_cells;
    lat.iy0 = lat.wall_cells;
    lat.iy1 = static_cast<int>(lat.ys.size()) - 1 - lat.wall_cells;
    lat.izf = lat.wall_cells;
    return lat;
}

GeneratedShape gen_basket(const ShapeSpec& spec) {
    double min_extent = std::min(spec.lx, spec.ly);
    for (double w : {spec.wall_x0, spec.wall_x1, spec.wall_y0, spec.wall_y1, spec.floor})
        if (w <= 0.0 || w >= min_extent / 3.0)
            throw error("gen_shape: wall thickness infeasible for the given extents");
    if (spec.res_x < 2 || spec.res_y < 2 || spec.res_z < 2)
        throw error("gen_shape: resolution must be >= 2");

    BasketLattice lat = basket_lattice(spec);
    const auto& xs = lat.xs;
    const auto& ys = lat.ys;
    const auto& zs = lat.zs;
    const int mx = static_cast<int>(xs.size()) - 1;
    const int my = static_cast<int>(ys.size()) - 1;
    const int mz = static_cast<int>(zs.size()) - 1;
    const double H = spec.height;

    auto cavity_cell = [&](int i, int j) {
        return i >= lat.ix0 && i < lat.ix1 && j >= lat.iy0 && j < lat.iy1;
    };

    MeshBuilder mb;
    for (int i = 0; i < mx; ++i)
        for (int j = 0; j < my; ++j) {
            Vec3 a{xs[i], ys[j], 0.0}, b{xs[i], ys[j + 1], 0.0};
            Vec3 c{xs[i + 1], ys[j + 1], 0.0}, d{xs[i + 1], ys[j], 0.0};
            mb.quad(a, b, c, d);  // outer bottom, normal -z
            if (!cavity_cell(i, j)) {
                Vec3 ra{xs[i], ys[j], H}, rb{xs[i + 1], ys[j], H};
                Vec3 rc{xs[i + 1], ys[j + 1], H}, rd{xs[i], ys[j + 1], H};
                mb.quad(ra, rb, rc, rd);  // rim, normal +z
            } else {
                double f = spec.floor;
                Vec3 fa{xs[i], ys[j], f}, fb{xs[i + 1], ys[j], f};
                Vec3 fc{xs[i + 1], ys[j + 1], f}, fd{xs[i], ys[j + 1], f};
                mb.quad(fa, fb, fc, fd);  // cavity floor, normal +z
            }
        }
    for (int k = 0; k < mz; ++k) {
        for (int j = 0; j < my; ++j) {
            mb.quad({0, ys[j], zs[k]}, {0, ys[j], zs[k + 1]}, {0, ys[j + 1], zs[k + 1]},
                    {0, ys[j + 1], zs[k]});  // x = 0, normal -x
            mb.quad({spec.lx, ys[j], zs[k]}, {spec.lx, ys[j + 1], zs[k]},
                    {spec.lx, ys[j + 1], zs[k + 1]}, {spec.lx, ys[j], zs[k + 1]});  // +x
        }
        for (int i = 0; i < mx; ++i) {
            mb.quad({xs[i], 0, zs[k]}, {xs[i + 1], 0, zs[k]}, {xs[i + 1], 0, zs[k + 1]},
                    {xs[i], 0, zs[k + 1]});  // y = 0, normal -y
            mb.quad({xs[i], spec.ly, zs[k]}, {xs[i], spec.ly, zs[k + 1]},
                    {xs[i + 1], spec.ly, zs[k + 1]}, {xs[i + 1], spec.ly, zs[k]});  // +y
        }
    }
    // inner walls, z in [floor, H]
    const double cx0 = xs[lat.ix0], cx1 = xs[lat.ix1];
    const double cy0 = ys[lat.iy0], cy1 = ys[lat.iy1];
    for (int k = lat.izf; k < mz; ++k) {
        for (int j = lat.iy0; j < lat.iy1; ++j) {
            mb.quad({cx0, ys[j], zs[k]}, {cx0, ys[j + 1], zs[k]}, {cx0, ys[j + 1], zs[k + 1]},
                    {cx0, ys[j], zs[k + 1]});  // faces +x (into cavity)
            mb.quad({cx1, ys[j], zs[k]}, {cx1, ys[j], zs[k + 1]}, {cx1, ys[j + 1], zs[k + 1]},
                    {cx1, ys[j + 1], zs[k]});  // faces -x
        }
        for (int i = lat.ix0; i < lat.ix1; ++i) {
            mb.quad({xs[i], cy0, zs[k]}, {xs[i], cy0, zs[k + 1]}, {xs[i + 1], cy0, zs[k + 1]},
                    {xs[i + 1], cy0, zs[k]});  // faces +y
            mb.quad({xs[i], cy1, zs[k]}, {xs[i + 1], cy1, zs[k]}, {xs[i + 1], cy1, zs[k + 1]},
                    {xs[i], cy1, zs[k + 1]});  // faces -y
        }
    }

    GeneratedShape out;
    out.mesh = mb.build();
    const int n = out.mesh.num_vertices();
    out.oracle.wall_partner.assign(n, -1);
    out.oracle.wall_thickness.assign(n, 0.0);
    out.oracle.wide.assign(n, false);

    auto id_of = [&](double x, double y, double z) { return mb.index.at({x, y, z}); };
    auto pair_both = [&](int a, int b, double t) {
        out.oracle.wall_partner[a] = b;
        out.oracle.wall_thickness[a] = t;
        out.oracle.wall_partner[b] = a;
        out.oracle.wall_thickness[b] = t;
    };

    // side walls across the cavity: strict interior in both y (or x) and z
    for (int k = lat.izf + 1; k < mz; ++k) {
        for (int j = lat.iy0 + 1; j < lat.iy1; ++j) {
            pair_both(id_of(0.0, ys[j], zs[k]), id_of(cx0, ys[j], zs[k]), spec.wall_x0);
            pair_both(id_of(spec.lx, ys[j], zs[k]), id_of(cx1, ys[j], zs[k]), spec.wall_x1);
        }
        for (int i = lat.ix0 + 1; i < lat.ix1; ++i) {
            pair_both(id_of(xs[i], 0.0, zs[k]), id_of(xs[i], cy0, zs[k]), spec.wall_y0);
            pair_both(id_of(xs[i], spec.ly, zs[k]), id_of(xs[i], cy1, zs[k]), spec.wall_y1);
        }
    }
    // floor: strict interior of the cavity footprint
    for (int i = lat.ix0 + 1; i < lat.ix1; ++i)
        for (int j = lat.iy0 + 1; j < lat.iy1; ++j)
            pair_both(id_of(xs[i], ys[j], 0.0), id_of(xs[i], ys[j], spec.floor), spec.floor);

    // rim and the bottom below it: flat-interior ring nodes pair across the
    // full height, the desk analog of `width'
    auto ring_interior = [&](int i, int j) {
        if (i <= 0 || i >= mx || j <= 0 || j >= my) return false;
        bool strict_in_cavity =
            i > lat.ix0 && i < lat.ix1 && j > lat.iy0 && j < lat.iy1;
        if (strict_in_cavity) return false;
        // every incident rim cell must exist (node not on the cavity rim edge)
        for (int di = -1; di <= 0; ++di)
            for (int dj = -1; dj <= 0; ++dj)
                if (cavity_cell(i + di, j + dj)) return false;
        return true;
    };
    for (int i = 1; i < mx; ++i)
        for (int j = 1; j < my; ++j)
            if (ring_interior(i, j)) {
                int rt = id_of(xs[i], ys[j], H);
                int rb = id_of(xs[i], ys[j], 0.0);
                out.oracle.wide[rt] = true;
                out.oracle.wide[rb] = true;
            }

    out.oracle.gate_node = nearest_vertex(out.mesh, spec.gate_anchor);
    return out;
}

}  // namespace

GeneratedShape gen_shape(const ShapeSpec& spec) {
    switch (spec.family) {
        case ShapeFamily::plate:
        case ShapeFamily::ribbed_plate:
            return gen_slab(spec);
        case ShapeFamily::hollow_box:
            return gen_basket(spec);
    }
    throw error("gen_shape: unknown family");
}

// fixed reference scales keep every field term a function of node-local
// inputs; per-sample normalizers would leak global context into the labels
constexpr double kGateScale = 20.0;
constexpr double kRadiusScale = 15.0;

double condition_scale(const FieldSpec& field, const std::vector<double>& condition) {
    if (field.cond_weights.size() != condition.size())
        throw error("condition_scale: weight/condition size mismatch");
    double a = field.cond_bias;
    for (size_t k = 0; k < condition.size(); ++k) a += field.cond_weights[k] * condition[k];
    return a;
}

std::vector<Vec3> synth_field(const Mesh& mesh, const NormalField& normals,
                              const ThicknessPairing& pairing,
                              const std::vector<double>& gate_dist, const Vec3& cm,
                              const std::vector<double>& condition, const FieldSpec& field) {
    const int n = mesh.num_vertices();
    if (pairing.size() != n || static_cast<int>(gate_dist.size()) != n)
        throw error("synth_field: input size mismatch");
    const double a = condition_scale(field, condition);

    // noise stream keyed on the condition vector and node index: identical
    // inputs reproduce identical labels, and the directions rotate with the
    // mesh, so the field stays equivariant
    std::uint64_t noise_key = 1469598103934665603ull;
    for (double c : condition)
        for (int b = 0; b < 8; ++b) {
            noise_key ^= static_cast<unsigned char>(
                reinterpret_cast<const unsigned char*>(&c)[b]);
            noise_key *= 1099511628211ull;
        }

    std::vector<Vec3> out(n);
    for (int i = 0; i < n; ++i) {
        Vec3 d{};
        if (pairing.valid[i] && pairing.thickness[i] <= field.t_star) {
            // the opposing-side factors make the partner's state load-bearing:
            // a model can only recover them through the thickness edge; the
            // coupling strength follows the alignment of the two surfaces
            double across = gate_dist[pairing.partner[i]] / kGateScale;
            double facing = std::max(0.0, -pairing.normal_dot[i]);
            d += normals.node[i] *
                 (field.c1 * a * std::exp(-pairing.thickness[i] / field.s) * across * facing);
        }
        Vec3 radial = mesh.vertices[i] - cm;
        double rn = norm(radial);
        if (rn > 1e-12) {
            // condition-phased oscillation along the radius: regions a wall
            // apart stay coherent, regions a width apart do not
            double rho = rn / kRadiusScale;
            double phase0 = 2.0 * M_PI * condition[0];
            double phase1 = condition.size() > 1 ? 2.0 * M_PI * condition[1] : 0.0;
            double ripple = 1.0 + 0.6 * std::sin(2.0 * M_PI * rho + phase0) +
                            0.3 * std::sin(5.0 * M_PI * rho + phase1);
            d += radial * (field.c2 * (gate_dist[i] / kGateScale) * ripple / rn);
        }
        if (field.noise > 0.0 && rn > 1e-12) {
            std::mt19937_64 nrng(rnd::derive(noise_key, "node" + std::to_string(i)));
            d += normals.node[i] * (field.noise * rnd::gaussian(nrng));
            Vec3 tangent = cross(normals.node[i], radial / rn);
            double tn = norm(tangent);
            if (tn > 1e-9) d += tangent * (field.noise * rnd::gaussian(nrng) / tn);
        }
        out[i] = d;
    }
    return out;
}

void DatasetSpec::validate() const {
    if (n_shapes < 1) throw error("dataset spec: n_shapes must be >= 1");
    if (n_conditions < 1) throw error("dataset spec: n_conditions must be >= 1");
    if (n_unseen < 0 || n_unseen >= n_shapes)
        throw error("dataset spec: n_unseen must be in [0, n_shapes)");
    if (cond_dim < 1) throw error("dataset spec: cond_dim must be >= 1");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw error("dataset spec: val_fraction must be in (0, 1)");
    if (field.s <= 0.0 || field.t_star <= 0.0)
        throw error("dataset spec: field scales must be positive");
}

nlohmann::json dataset_spec_to_json(const DatasetSpec& spec) {
    nlohmann::json j;
    j["n_shapes"] = spec.n_shapes;
    j["n_conditions"] = spec.n_conditions;
    j["n_unseen"] = spec.n_unseen;
    j["cond_dim"] = spec.cond_dim;
    j["val_fraction"] = spec.val_fraction;
    j["seed"] = spec.seed;
    j["field"] = {{"c1", spec.field.c1},     {"c2", spec.field.c2},
                  {"s", spec.field.s},       {"t_star", spec.field.t_star},
                  {"noise", spec.field.noise},
                  {"cond_weights", spec.field.cond_weights},
                  {"cond_bias", spec.field.cond_bias}};
    return j;
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
    DatasetSpec spec;
    spec.n_shapes = j.value("n_shapes", spec.n_shapes);
    spec.n_conditions = j.value("n_conditions", spec.n_conditions);
    spec.n_unseen = j.value("n_unseen", spec.n_unseen);
    spec.cond_dim = j.value("cond_dim", spec.cond_dim);
    spec.val_fraction = j.value("val_fraction", spec.val_fraction);
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("field")) {
        const auto& f = j["field"];
        spec.field.c1 = f.value("c1", spec.field.c1);
        spec.field.c2 = f.value("c2", spec.field.c2);
        spec.field.s = f.value("s", spec.field.s);
        spec.field.t_star = f.value("t_star", spec.field.t_star);
        spec.field.noise = f.value("noise", spec.field.noise);
        spec.field.cond_weights = f.value("cond_weights", spec.field.cond_weights);
        spec.field.cond_bias = f.value("cond_bias", spec.field.cond_bias);
    }
    spec.validate();
    return spec;
}

ShapeSpec dataset_shape_spec(const DatasetSpec& spec, int idx) {
    std::mt19937_64 rng(rnd::derive(spec.seed, "shape" + std::to_string(idx)));
    ShapeSpec s;
    // wall thicknesses stay below t_star / sqrt(2) so the diagonal pairs of
    // side and corner nodes also land under the field cutoff; the thickness
    // distribution then splits cleanly into walls (< 4) and widths (>= 16)
    switch (idx % 3) {
        case 0:
            s.family = ShapeFamily::plate;
            s.lx = rnd::uniform(rng, 22, 30);
            s.ly = rnd::uniform(rng, 16, 22);
            s.base_thickness = rnd::uniform(rng, 1.7, 2.0);
            s.taper_x = rnd::uniform(rng, 0.1, 0.2);
            s.taper_y = rnd::uniform(rng, 0.05, 0.15);
            s.res_x = 9;
            s.res_y = 8;
            s.side_cells = 2;
            break;
        case 1:
            s.family = ShapeFamily::hollow_box;
            s.lx = rnd::uniform(rng, 26, 34);
            s.ly = rnd::uniform(rng, 19, 25);
            s.height = rnd::uniform(rng, 17, 22);
            s.wall_x0 = rnd::uniform(rng, 1.7, 2.1);
            s.wall_x1 = rnd::uniform(rng, 1.7, 2.1);
            s.wall_y0 = rnd::uniform(rng, 1.7, 2.1);
            s.wall_y1 = rnd::uniform(rng, 1.7, 2.1);
            s.floor = rnd::uniform(rng, 1.7, 2.1);
            s.res_x = 4;
            s.res_y = 4;
            s.res_z = 4;
            break;
        default:
            s.family = ShapeFamily::ribbed_plate;
            s.lx = rnd::uniform(rng, 22, 30);
            s.ly = rnd::uniform(rng, 16, 22);
            s.base_thickness = rnd::uniform(rng, 1.7, 1.9);
            s.rib_thickness = rnd::uniform(rng, 2.1, 2.4);
            s.rib_x0 = rnd::uniform(rng, 0.15, 0.3);
            s.rib_x1 = s.rib_x0 + rnd::uniform(rng, 0.25, 0.4);
            s.rib_y0 = rnd::uniform(rng, 0.2, 0.35);
            s.rib_y1 = s.rib_y0 + rnd::uniform(rng, 0.3, 0.45);
            s.res_x = 10;
            s.res_y = 8;
            s.side_cells = 2;
            break;
    }
    s.grading = rnd::uniform(rng, 1.08, 1.16);
    double top = s.family == ShapeFamily::hollow_box ? s.height : s.base_thickness;
    s.gate_anchor = {s.lx * rnd::uniform(rng, 0.1, 0.35), s.ly * rnd::uniform(rng, 0.6, 0.9), top};
    return s;
}

DatasetManifest gen_dataset(const DatasetSpec& spec_in, const std::string& out_dir) {
    DatasetSpec spec = spec_in;
    spec.validate();
    if (spec.field.cond_weights.empty()) {
        std::mt19937_64 rng(rnd::derive(spec.seed, "cond_weights"));
        for (int k = 0; k < spec.cond_dim; ++k)
            spec.field.cond_weights.push_back(rnd::uniform(rng, 0.2, 0.6));
    }
    if (static_cast<int>(spec.field.cond_weights.size()) != spec.cond_dim)
        throw error("gen_dataset: cond_weights size does not match cond_dim");

    DatasetManifest manifest;
    manifest.seed = spec.seed;
    manifest.cond_dim = spec.cond_dim;
    manifest.meta["dataset_spec"] = dataset_spec_to_json(spec);

    nlohmann::json shape_meta = nlohmann::json::array();
    long wide_pairs = 0, valid_pairs = 0;
    double lower_sum = 0, upper_sum = 0;
    long lower_n = 0, upper_n = 0;

    int train_val_counter = 0;
    const int val_every = std::max(2, static_cast<int>(std::lround(1.0 / spec.val_fraction)));

    for (int si = 0; si < spec.n_shapes; ++si) {
        const bool unseen = si >= spec.n_shapes - spec.n_unseen;
        ShapeSpec shape_spec = dataset_shape_spec(spec, si);
        GeneratedShape shape = gen_shape(shape_spec);
        const WatertightReport wt = validate_watertight(shape.mesh);
        if (!wt.watertight) throw error("gen_dataset: generated shape is not watertight");

        NormalField normals = compute_normals(shape.mesh);
        CanonicalFrame frame = compute_frame(shape.mesh);
        ThicknessPairing pairing = find_thickness_pairs(shape.mesh, normals);
        std::vector<double> gd = geodesic_from_gate(shape.mesh, shape.oracle.gate_node);

        for (int i = 0; i < pairing.size(); ++i) {
            if (!pairing.valid[i]) continue;
            ++valid_pairs;
            if (pairing.thickness[i] > spec.field.t_star) {
                ++wide_pairs;
                upper_sum += pairing.thickness[i];
                ++upper_n;
            } else {
                lower_sum += pairing.thickness[i];
                ++lower_n;
            }
        }

        shape_meta.push_back({{"index", si},
                              {"family", static_cast<int>(shape_spec.family)},
                              {"unseen", unseen},
                              {"nodes", shape.mesh.num_vertices()},
                              {"gate", shape.oracle.gate_node}});

        for (int ci = 0; ci < spec.n_conditions; ++ci) {
            std::mt19937_64 crng(
                rnd::derive(spec.seed, "cond" + std::to_string(si) + "_" + std::to_string(ci)));
            std::vector<double> condition(spec.cond_dim);
            for (double& c : condition) c = rnd::unit(crng);

            std::vector<Vec3> targets = synth_field(shape.mesh, normals, pairing, gd,
                                                    frame.center, condition, spec.field);

            SampleBundle bundle;
            bundle.mesh = shape.mesh;
            bundle.frame = frame;
            bundle.pairing = pairing;
            bundle.gate = shape.oracle.gate_node;
            bundle.condition = condition;
            bundle.targets = targets;

            char id[32];
            std::snprintf(id, sizeof id, "%s%02d_c%02d", unseen ? "us" : "s", si, ci);
            write_bundle(out_dir + "/" + id, bundle);

            Split split;
            if (unseen || ci == spec.n_conditions - 1) {
                split = Split::test;  // held-out shapes plus the last condition of each
            } else {
                split = (train_val_counter % val_every == val_every - 1) ? Split::val : Split::train;
                ++train_val_counter;
            }
            manifest.samples.push_back({id, id, split});
        }
    }

    // small datasets can round every pooled sample into train; keep the
    // contract that both splits are non-empty
    bool has_val = false, has_train = false;
    for (const auto& s : manifest.samples) {
        has_val = has_val || s.split == Split::val;
        has_train = has_train || s.split == Split::train;
    }
    if (!has_val || !has_train) {
        std::vector<SampleRef*> pool;
        for (auto& s : manifest.samples)
            if (s.split != Split::test) pool.push_back(&s);
        if (pool.size() < 2)
            throw error("gen_dataset: need at least two train/val samples; "
                        "increase n_shapes or n_conditions");
        for (auto* s : pool) s->split = Split::train;
        pool.back()->split = Split::val;
    }

    manifest.meta["shapes"] = shape_meta;
    manifest.meta["stats"] = {
        {"valid_pairs", valid_pairs},
        {"wide_fraction", valid_pairs ? static_cast<double>(wide_pairs) / valid_pairs : 0.0},
        {"lower_mode_mean", lower_n ? lower_sum / lower_n : 0.0},
        {"upper_mode_mean", upper_n ? upper_sum / upper_n : 0.0}};
    write_manifest(out_dir, manifest);
    return manifest;
}

}  // namespace temnn
