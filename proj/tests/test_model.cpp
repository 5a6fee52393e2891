#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "temnn/model.hpp"
#include "temnn/random.hpp"
#include "temnn/synth.hpp"
#include "temnn/train.hpp"

using namespace temnn;

namespace {

GraphSample pipeline_sample(const Mesh& mesh, int gate, const std::vector<double>& condition,
                            const SampleOptions& options, const FieldSpec* field = nullptr) {
    NormalField normals = compute_normals(mesh);
    CanonicalFrame frame = compute_frame(mesh);
    ThicknessPairing pairing = find_thickness_pairs(mesh, normals);
    std::vector<Vec3> targets(mesh.num_vertices(), Vec3{});
    if (field) {
        std::vector<double> gd = geodesic_from_gate(mesh, gate);
        targets = synth_field(mesh, normals, pairing, gd, frame.center, condition, *field);
    }
    return assemble_sample(mesh, frame, pairing, gate, condition, targets, options);
}

GraphSample fixture_sample(const ModelConfig& config) {
    ShapeSpec spec;
    spec.family = ShapeFamily::plate;
    spec.res_x = 4;
    spec.res_y = 3;
    GeneratedShape shape = gen_shape(spec);
    std::vector<double> condition(config.cond_dim, 0.3);
    FieldSpec field;
    field.cond_weights.assign(config.cond_dim, 0.4);
    return pipeline_sample(shape.mesh, shape.oracle.gate_node, condition,
                           config.sample_options(), &field);
}

void zero_all(ModelParams& params) {
    for (ad::Parameter* p : params.all_params())
        if (p->name != "tau") p->value.zero();
}

double max_abs_diff(const ad::Tensor& a, const ad::Tensor& b) {
    double worst = 0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.v[i] - b.v[i]));
    return worst;
}

}  // namespace

TEST_CASE("init is deterministic and honors constant tau") {
    ModelConfig config;
    config.cond_dim = 4;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 2.0;
    ModelParams a = init_params(config, 77);
    ModelParams b = init_params(config, 77);
    auto pa = a.all_params(), pb = b.all_params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.v == pb[i]->value.v);
    CHECK(a.tau_value() == 2.0);

    ModelParams c = init_params(config, 78);
    bool differs = false;
    auto pc = c.all_params();
    for (size_t i = 0; i < pa.size(); ++i) differs = differs || pa[i]->value.v != pc[i]->value.v;
    CHECK(differs);
}

TEST_CASE("parameter count matches hand enumeration") {
    ModelConfig config;  // L=3, d=32, nf=2, ef=1
    config.cond_dim = 4;
    config.tau_init = TauInitPolicy::constant;
    // per 2-layer MLP with hidden 32: in*32+32 + 32*out+out
    // phi_node 1152, phi_edge 1120, phi_coord 1184, phi_cond 1216,
    // phi_thick 1152, 3 layers * (4160 + 3136 + 4160 + 3136) = 43776,
    // combine 3136, decode 2179, tau 1
    CHECK(param_count(config) == 54916);

    ModelParams p = init_params(config, 1);
    std::int64_t total = 0;
    for (ad::Parameter* par : p.all_params()) total += static_cast<std::int64_t>(par->value.size());
    CHECK(total == param_count(config));

    // thickness off removes phi_thick, the per-layer thickness MLPs, and tau
    ModelConfig off = config;
    off.use_thickness = false;
    CHECK(param_count(off) == 54916 - 1152 - 3 * (4160 + 3136) - 1);
}

TEST_CASE("zero features with zero biases produce zero predictions") {
    ModelConfig config;
    config.cond_dim = 2;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 1.0;

    GraphSample s;
    s.num_nodes = 2;
    s.directed_edges = {{0, 1}, {1, 0}};
    s.edge_length = {0.0, 0.0};
    s.gate_dist = {0.0, 0.0};
    s.cm_radius = {0.0, 0.0};
    s.thick_partner = {-1, -1};
    s.thick_t = {0, 0};
    s.thick_dot = {0, 0};
    s.thick_valid = {false, false};
    s.coords = {{0, 0, 0}, {0, 0, 0}};
    s.positions = s.coords;
    s.condition = {0.0, 0.0};
    s.options = config.sample_options();

    ModelParams params = init_params(config, 5);
    ForwardResult fr = model_forward(params, s);
    const ad::Tensor& pred = fr.tape.value(fr.pred_inv);
    CHECK(pred.rows == 2);
    CHECK(pred.cols == 3);
    for (double v : pred.v) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic and shape-correct") {
    ModelConfig config;
    config.cond_dim = 3;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 2.5;
    ShapeSpec spec;
    GeneratedShape shape = gen_shape(spec);
    std::vector<double> condition{0.1, 0.7, 0.4};
    GraphSample s = pipeline_sample(shape.mesh, shape.oracle.gate_node, condition,
                                    config.sample_options());
    ModelParams params = init_params(config, 3);
    ForwardResult a = model_forward(params, s);
    ForwardResult b = model_forward(params, s);
    CHECK(a.tape.value(a.pred_inv).v == b.tape.value(b.pred_inv).v);
    CHECK(a.tape.value(a.pred_inv).rows == s.num_nodes);
}

TEST_CASE("node relabeling permutes outputs") {
    ModelConfig config;
    config.cond_dim = 2;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 2.0;

    ShapeSpec spec;
    spec.family = ShapeFamily::plate;
    spec.res_x = 3;
    spec.res_y = 2;  // 24 nodes
    GeneratedShape shape = gen_shape(spec);
    const int n = shape.mesh.num_vertices();

    std::vector<double> condition{0.2, 0.9};
    GraphSample s0 = pipeline_sample(shape.mesh, 0, condition, config.sample_options());

    std::mt19937_64 rng(13);
    std::vector<int> perm(n);  // perm[old] = new
    std::iota(perm.begin(), perm.end(), 0);
    rnd::shuffle(perm, rng);

    std::vector<Vec3> verts(n);
    for (int i = 0; i < n; ++i) verts[perm[i]] = shape.mesh.vertices[i];
    std::vector<std::array<int, 3>> faces = shape.mesh.faces;
    for (auto& f : faces)
        for (int& v : f) v = perm[v];
    Mesh relabeled = make_mesh(verts, faces);
    GraphSample s1 = pipeline_sample(relabeled, perm[0], condition, config.sample_options());

    ModelParams params = init_params(config, 21);
    ForwardResult fr0 = model_forward(params, s0);
    const ad::Tensor& p0 = fr0.tape.value(fr0.pred_inv);
    ForwardResult fr1 = model_forward(params, s1);
    const ad::Tensor& p1 = fr1.tape.value(fr1.pred_inv);

    double worst = 0;
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            worst = std::max(worst, std::abs(p0.at(i, c) - p1.at(perm[i], c)));
    CHECK(worst < 1e-9);
}

TEST_CASE("thickness gate scales the message by exactly 0.5 at t = tau") {
    ModelConfig config;
    config.layers = 1;
    config.hidden_dim = 1;
    config.cond_dim = 1;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 2.0;

    GraphSample s;
    s.num_nodes = 2;
    s.directed_edges = {{0, 1}, {1, 0}};
    s.edge_length = {0, 0};
    s.gate_dist = {0, 0};
    s.cm_radius = {0, 0};
    s.thick_partner = {1, 0};
    s.thick_t = {2.0, 2.0};  // exactly tau
    s.thick_dot = {-1, -1};
    s.thick_valid = {true, true};
    s.coords = {{0, 0, 0}, {0, 0, 0}};
    s.positions = s.coords;
    s.condition = {0.0};
    s.options = config.sample_options();

    ModelParams params = init_params(config, 1);
    zero_all(params);
    // thick_edge MLP emits constant 1, thick_node forwards the gated edge
    // embedding, combine/decode pass it straight through
    params.thick_edge[0].b1.value.at(0, 0) = 1.0;
    params.thick_edge[0].w2.value.at(0, 0) = 1.0;  // relu(1) * 1 = 1
    params.thick_node[0].w1.value.at(1, 0) = 1.0;  // picks e_thick from [z, e]
    params.thick_node[0].w2.value.at(0, 0) = 1.0;
    params.combine.w1.value.at(0, 0) = 1.0;  // picks z from [z, z_coord]
    params.combine.w2.value.at(0, 0) = 1.0;
    params.decode.w1.value.at(0, 0) = 1.0;  // picks z_final from [z_final, h_c]
    params.decode.w2.value.at(0, 0) = 1.0;  // only the x output

    ForwardResult fr = model_forward(params, s);
    const ad::Tensor& pred = fr.tape.value(fr.pred_inv);
    CHECK(pred.at(0, 0) == 0.5);
    CHECK(pred.at(1, 0) == 0.5);
    CHECK(pred.at(0, 1) == 0.0);
}

TEST_CASE("tau at negative infinity annihilates thickness messages") {
    ModelConfig config;
    config.cond_dim = 2;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = -1e9;
    GraphSample s = fixture_sample(config);
    ModelParams params = init_params(config, 9);

    // reference: same weights, all pairs marked invalid (mask zero)
    GraphSample masked = s;
    for (int i = 0; i < masked.num_nodes; ++i) masked.thick_valid[i] = false;

    ForwardResult a = model_forward(params, s);
    ForwardResult b = model_forward(params, masked);
    CHECK(max_abs_diff(a.tape.value(a.pred_inv), b.tape.value(b.pred_inv)) < 1e-100);
}

TEST_CASE("use_thickness=false is the pure surface path") {
    ModelConfig config;
    config.use_thickness = false;
    config.cond_dim = 2;
    GraphSample s = fixture_sample(config);
    ModelParams params = init_params(config, 4);
    CHECK(params.thick_edge.empty());
    CHECK_FALSE(params.tau.has_value());
    ForwardResult a = model_forward(params, s);
    ForwardResult b = model_forward(params, s);
    CHECK(a.tape.value(a.pred_inv).v == b.tape.value(b.pred_inv).v);
}

TEST_CASE("decode in point mode maps zero predictions to the center of mass") {
    ModelConfig config;
    config.cond_dim = 2;
    config.inverse_mode = InverseMode::point;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 2.0;
    GraphSample s = fixture_sample(config);
    ModelParams params = init_params(config, 6);
    zero_all(params);
    ForwardResult fr = model_forward(params, s);
    std::vector<Vec3> orig = predictions_to_original(fr.tape.value(fr.pred_inv), s, config);
    for (const Vec3& p : orig) CHECK(norm(p - s.frame.center) < 1e-12);

    config.inverse_mode = InverseMode::vector;
    std::vector<Vec3> vec = predictions_to_original(fr.tape.value(fr.pred_inv), s, config);
    for (const Vec3& p : vec) CHECK(norm(p) == 0.0);
}

TEST_CASE("end-to-end equivariance with invariant coordinates") {
    ModelConfig config;
    config.cond_dim = 2;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 3.0;

    ShapeSpec spec;
    spec.family = ShapeFamily::hollow_box;
    spec.res_x = spec.res_y = spec.res_z = 2;
    GeneratedShape shape = gen_shape(spec);
    std::vector<double> condition{0.4, 0.6};
    NormalField normals = compute_normals(shape.mesh);
    CanonicalFrame frame = compute_frame(shape.mesh);
    REQUIRE_FALSE(frame.any_degenerate());
    ThicknessPairing pairing = find_thickness_pairs(shape.mesh, normals);
    std::vector<Vec3> targets(shape.mesh.num_vertices(), Vec3{});
    SampleBundle bundle{shape.mesh, frame, pairing, shape.oracle.gate_node, condition, targets};

    ModelParams params = init_params(config, 15);
    GraphSample base = assemble_from_bundle(bundle, config.sample_options());
    ForwardResult fr = model_forward(params, base);
    std::vector<Vec3> p_orig = predictions_to_original(fr.tape.value(fr.pred_inv), base, config);
    const ad::Tensor p_inv = fr.tape.value(fr.pred_inv);

    std::mt19937_64 rng(33);
    double worst_orig = 0, worst_inv = 0;
    for (int rep = 0; rep < 5; ++rep) {
        Mat3 q = rnd::random_rotation(rng);
        Vec3 g = rnd::random_translation(rng, 8.0);
        GraphSample moved = assemble_reposed(bundle, config.sample_options(), q, g);
        ForwardResult fm = model_forward(params, moved);
        worst_inv = std::max(worst_inv, max_abs_diff(p_inv, fm.tape.value(fm.pred_inv)));
        std::vector<Vec3> pm = predictions_to_original(fm.tape.value(fm.pred_inv), moved, config);
        for (size_t i = 0; i < pm.size(); ++i)
            worst_orig = std::max(worst_orig, norm(pm[i] - q.mul(p_orig[i])));
    }
    CHECK(worst_inv < 1e-6);
    CHECK(worst_orig < 1e-5);
}

TEST_CASE("original coordinates are not equivariant") {
    ModelConfig config;
    config.cond_dim = 2;
    config.coord_mode = CoordMode::original;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 3.0;

    ShapeSpec spec;
    GeneratedShape shape = gen_shape(spec);
    std::vector<double> condition{0.4, 0.6};
    NormalField normals = compute_normals(shape.mesh);
    CanonicalFrame frame = compute_frame(shape.mesh);
    ThicknessPairing pairing = find_thickness_pairs(shape.mesh, normals);
    std::vector<Vec3> targets(shape.mesh.num_vertices(), Vec3{});
    SampleBundle bundle{shape.mesh, frame, pairing, shape.oracle.gate_node, condition, targets};

    ModelParams params = init_params(config, 15);
    GraphSample base = assemble_from_bundle(bundle, config.sample_options());
    ForwardResult fr = model_forward(params, base);
    std::vector<Vec3> p0 = predictions_to_original(fr.tape.value(fr.pred_inv), base, config);

    std::mt19937_64 rng(35);
    Mat3 q = rnd::random_rotation(rng);
    GraphSample moved = assemble_reposed(bundle, config.sample_options(), q, {0, 0, 0});
    ForwardResult fm = model_forward(params, moved);
    std::vector<Vec3> p1 = predictions_to_original(fm.tape.value(fm.pred_inv), moved, config);
    double worst = 0;
    for (size_t i = 0; i < p0.size(); ++i) worst = std::max(worst, norm(p1[i] - q.mul(p0[i])));
    CHECK(worst > 1e-6);
}

TEST_CASE("checkpoint round trip preserves bits and behavior") {
    ModelConfig config;
    config.cond_dim = 3;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 1.5;
    ModelParams params = init_params(config, 44);
    ModelParams loaded = checkpoint_from_json(checkpoint_to_json(params));
    auto pa = params.all_params(), pb = loaded.all_params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->name == pb[i]->name);
        CHECK(pa[i]->value.v == pb[i]->value.v);
        CHECK(pa[i]->group == pb[i]->group);
    }
    CHECK(loaded.config.alpha == config.alpha);
}

TEST_CASE("config and sample mismatches are config errors") {
    ModelConfig config;
    config.cond_dim = 2;
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 1.0;
    GraphSample s = fixture_sample(config);
    ModelParams params = init_params(config, 2);

    GraphSample wrong_mode = s;
    wrong_mode.options.coord_mode = CoordMode::original;
    CHECK_THROWS_AS(model_forward(params, wrong_mode), config_error);

    GraphSample wrong_cond = s;
    wrong_cond.condition = {0.1, 0.2, 0.3};
    CHECK_THROWS_AS(model_forward(params, wrong_cond), config_error);

    ModelConfig bad;
    bad.layers = 0;
    CHECK_THROWS_AS(bad.validate(), config_error);
    ModelConfig bad2;
    bad2.use_thickness = true;
    bad2.thickness_flags = {false, false};
    CHECK_THROWS_AS(bad2.validate(), config_error);
}

TEST_CASE("model config JSON round trip") {
    ModelConfig config;
    config.layers = 2;
    config.hidden_dim = 16;
    config.cond_dim = 5;
    config.coord_mode = CoordMode::none;
    config.inverse_mode = InverseMode::point;
    config.thickness_flags = {true, false};
    config.tau_init = TauInitPolicy::constant;
    config.tau_init_value = 4.5;
    ModelConfig back = model_config_from_json(model_config_to_json(config));
    CHECK(back.layers == 2);
    CHECK(back.hidden_dim == 16);
    CHECK(back.coord_mode == CoordMode::none);
    CHECK(back.inverse_mode == InverseMode::point);
    CHECK(back.thickness_flags.use_thickness);
    CHECK_FALSE(back.thickness_flags.use_normal_dot);
    CHECK(back.tau_init_value == 4.5);
}
