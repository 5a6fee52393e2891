#include "temnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"

namespace temnn {

void ModelConfig::validate() const {
    if (layers < 1) throw config_error("model config: layers must be >= 1");
    if (hidden_dim < 1) throw config_error("model config: hidden_dim must be >= 1");
    if (alpha <= 0.0) throw config_error("model config: alpha must be positive");
    if (use_thickness && thickness_flags.dim() == 0)
        throw config_error("model config: thickness enabled but all thickness features disabled");
    if (cond_dim < 0) throw config_error("model config: cond_dim must be >= 0");
}

namespace {

const char* coord_mode_name(CoordMode m) {
    switch (m) {
        case CoordMode::invariant: return "invariant";
        case CoordMode::original: return "original";
        case CoordMode::none: return "none";
    }
    throw error("bad coord mode");
}

CoordMode coord_mode_from(const std::string& s) {
    if (s == "invariant") return CoordMode::invariant;
    if (s == "original") return CoordMode::original;
    if (s == "none") return CoordMode::none;
    throw config_error("unknown coord_mode '" + s + "'");
}

const char* inverse_mode_name(InverseMode m) {
    return m == InverseMode::point ? "point" : "vector";
}

InverseMode inverse_mode_from(const std::string& s) {
    if (s == "point") return InverseMode::point;
    if (s == "vector") return InverseMode::vector;
    throw config_error("unknown inverse_mode '" + s + "'");
}

}  // namespace

std::string model_config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["layers"] = c.layers;
    j["hidden_dim"] = c.hidden_dim;
    j["alpha"] = c.alpha;
    j["tau_init"] = c.tau_init == TauInitPolicy::median ? "median" : "constant";
    j["tau_init_value"] = c.tau_init_value;
    j["use_thickness"] = c.use_thickness;
    j["coord_mode"] = coord_mode_name(c.coord_mode);
    j["inverse_mode"] = inverse_mode_name(c.inverse_mode);
    j["thickness_features"] = {{"use_thickness", c.thickness_flags.use_thickness},
                               {"use_normal_dot", c.thickness_flags.use_normal_dot}};
    j["cond_dim"] = c.cond_dim;
    return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig c;
    c.layers = j.value("layers", c.layers);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.alpha = j.value("alpha", c.alpha);
    std::string ti = j.value("tau_init", std::string("median"));
    if (ti == "median") c.tau_init = TauInitPolicy::median;
    else if (ti == "constant") c.tau_init = TauInitPolicy::constant;
    else throw config_error("unknown tau_init '" + ti + "'");
    c.tau_init_value = j.value("tau_init_value", 0.0);
    c.use_thickness = j.value("use_thickness", true);
    c.coord_mode = coord_mode_from(j.value("coord_mode", std::string("invariant")));
    c.inverse_mode = inverse_mode_from(j.value("inverse_mode", std::string("vector")));
    if (j.contains("thickness_features")) {
        c.thickness_flags.use_thickness = j["thickness_features"].value("use_thickness", true);
        c.thickness_flags.use_normal_dot = j["thickness_features"].value("use_normal_dot", true);
    }
    c.cond_dim = j.value("cond_dim", 0);
    c.validate();
    return c;
}

namespace {

// uniform in [0, 1), identical on every platform
double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

ad::Parameter make_weight(const std::string& name, int in, int out, std::mt19937_64& rng) {
    ad::Tensor t(in, out);
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : t.v) v = (2.0 * unit_uniform(rng) - 1.0) * bound;
    return ad::Parameter(name, std::move(t));
}

Mlp make_mlp(const std::string& name, int in, int hidden, int out, std::mt19937_64& rng) {
    Mlp m;
    m.w1 = make_weight(name + ".w1", in, hidden, rng);
    m.b1 = ad::Parameter(name + ".b1", ad::Tensor(1, hidden));
    m.w2 = make_weight(name + ".w2", hidden, out, rng);
    m.b2 = ad::Parameter(name + ".b2", ad::Tensor(1, out));
    return m;
}

}  // namespace

std::vector<ad::Parameter*> ModelParams::all_params() {
    std::vector<ad::Parameter*> out;
    auto push = [&](Mlp& m) {
        out.push_back(&m.w1);
        out.push_back(&m.b1);
        out.push_back(&m.w2);
        out.push_back(&m.b2);
    };
    push(phi_node);
    push(phi_edge);
    if (phi_coord) push(*phi_coord);
    push(phi_cond);
    if (phi_thick) push(*phi_thick);
    for (int l = 0; l < config.layers; ++l) {
        push(surf_edge[l]);
        push(surf_node[l]);
        if (config.use_thickness) {
            push(thick_edge[l]);
            push(thick_node[l]);
        }
    }
    push(combine);
    push(decode);
    if (tau) out.push_back(&*tau);
    return out;
}

std::vector<ad::Parameter*> ModelParams::group(ad::ParamGroup g) {
    std::vector<ad::Parameter*> out;
    for (ad::Parameter* p : all_params())
        if (p->group == g) out.push_back(p);
    return out;
}

void ModelParams::zero_grads() {
    for (ad::Parameter* p : all_params()) p->grad.zero();
}

double ModelParams::tau_value() const {
    if (!tau) throw error("model has no thickness threshold");
    return tau->value.at(0, 0);
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed,
                        std::optional<double> tau_override) {
    config.validate();
    ModelParams p;
    p.config = config;
    const int d = config.hidden_dim;
    std::mt19937_64 rng(seed);

    p.phi_node = make_mlp("phi_node", ModelConfig::node_feature_dim, d, d, rng);
    p.phi_edge = make_mlp("phi_edge", ModelConfig::edge_feature_dim, d, d, rng);
    if (config.coord_mode != CoordMode::none) p.phi_coord = make_mlp("phi_coord", 3, d, d, rng);
    p.phi_cond = make_mlp("phi_cond", std::max(config.cond_dim, 1), d, d, rng);
    if (config.use_thickness)
        p.phi_thick = make_mlp("phi_thick", config.thickness_flags.dim(), d, d, rng);
    for (int l = 0; l < config.layers; ++l) {
        std::string suffix = std::to_string(l);
        p.surf_edge.push_back(make_mlp("surf_edge." + suffix, 3 * d, d, d, rng));
        p.surf_node.push_back(make_mlp("surf_node." + suffix, 2 * d, d, d, rng));
        if (config.use_thickness) {
            p.thick_edge.push_back(make_mlp("thick_edge." + suffix, 3 * d, d, d, rng));
            p.thick_node.push_back(make_mlp("thick_node." + suffix, 2 * d, d, d, rng));
        }
    }
    p.combine = make_mlp("combine", 2 * d, d, d, rng);
    p.decode = make_mlp("decode", 2 * d, d, 3, rng);

    if (config.use_thickness) {
        double tau0;
        if (tau_override) tau0 = *tau_override;
        else if (config.tau_init == TauInitPolicy::constant) tau0 = config.tau_init_value;
        else throw config_error("tau_init=median requires a resolved tau value");
        ad::Tensor t(1, 1);
        t.at(0, 0) = tau0;
        p.tau = ad::Parameter("tau", std::move(t), ad::ParamGroup::tau);
    }
    return p;
}

std::int64_t param_count(const ModelConfig& config) {
    config.validate();
    const std::int64_t d = config.hidden_dim;
    auto mlp = [d](std::int64_t in, std::int64_t out) { return in * d + d + d * out + out; };
    std::int64_t n = 0;
    n += mlp(ModelConfig::node_feature_dim, d);
    n += mlp(ModelConfig::edge_feature_dim, d);
    if (config.coord_mode != CoordMode::none) n += mlp(3, d);
    n += mlp(std::max(config.cond_dim, 1), d);
    if (config.use_thickness) n += mlp(config.thickness_flags.dim(), d);
    n += config.layers * (mlp(3 * d, d) + mlp(2 * d, d));
    if (config.use_thickness) n += config.layers * (mlp(3 * d, d) + mlp(2 * d, d));
    n += mlp(2 * d, d);
    n += mlp(2 * d, 3);
    if (config.use_thickness) n += 1;  // tau
    return n;
}

namespace {

using NodeId = ad::Tape::NodeId;

NodeId apply_mlp(ad::Tape& tape, Mlp& m, NodeId x) {
    NodeId h = tape.relu(tape.linear(x, tape.param(m.w1), tape.param(m.b1)));
    return tape.linear(h, tape.param(m.w2), tape.param(m.b2));
}

}  // namespace

ForwardResult model_forward(ModelParams& params, const GraphSample& sample) {
    const ModelConfig& config = params.config;
    const int n = sample.num_nodes;
    const int d = config.hidden_dim;

    if (sample.options.coord_mode != config.coord_mode)
        throw config_error("sample coord_mode does not match model config");
    if (config.use_thickness &&
        (sample.options.thickness_flags.use_thickness != config.thickness_flags.use_thickness ||
         sample.options.thickness_flags.use_normal_dot != config.thickness_flags.use_normal_dot))
        throw config_error("sample thickness features do not match model config");
    if (static_cast<int>(sample.condition.size()) != config.cond_dim)
        throw config_error("condition dimension " + std::to_string(sample.condition.size()) +
                           " does not match model cond_dim " + std::to_string(config.cond_dim));

    ForwardResult fr;
    ad::Tape& tape = fr.tape;

    ad::Tensor node_feat(n, ModelConfig::node_feature_dim);
    for (int i = 0; i < n; ++i) {
        node_feat.at(i, 0) = sample.gate_dist[i];
        node_feat.at(i, 1) = sample.cm_radius[i];
    }
    const int ne = static_cast<int>(sample.directed_edges.size());
    ad::Tensor edge_feat(ne, ModelConfig::edge_feature_dim);
    std::vector<int> src(ne), dst(ne);
    for (int e = 0; e < ne; ++e) {
        edge_feat.at(e, 0) = sample.edge_length[e];
        src[e] = sample.directed_edges[e][0];
        dst[e] = sample.directed_edges[e][1];
    }

    NodeId z = apply_mlp(tape, params.phi_node, tape.constant(std::move(node_feat)));
    NodeId e = apply_mlp(tape, params.phi_edge, tape.constant(std::move(edge_feat)));

    NodeId z_coord = -1;
    if (config.coord_mode != CoordMode::none) {
        ad::Tensor coords(n, 3);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) coords.at(i, k) = sample.coords[i][k];
        z_coord = apply_mlp(tape, *params.phi_coord, tape.constant(std::move(coords)));
    }

    ad::Tensor cond(1, std::max(config.cond_dim, 1));
    for (int k = 0; k < config.cond_dim; ++k) cond.at(0, k) = sample.condition[k];
    NodeId h_cond = apply_mlp(tape, params.phi_cond, tape.constant(std::move(cond)));

    NodeId e_thick = -1;
    NodeId mask_node = -1;
    NodeId t_node = -1;
    std::vector<int> partner(n);
    if (config.use_thickness) {
        const int tf = config.thickness_flags.dim();
        ad::Tensor thick_feat(n, tf);
        ad::Tensor mask(n, 1);
        ad::Tensor tvals(n, 1);
        for (int i = 0; i < n; ++i) {
            partner[i] = sample.thick_valid[i] ? sample.thick_partner[i] : i;
            mask.at(i, 0) = sample.thick_valid[i] ? 1.0 : 0.0;
            tvals.at(i, 0) = sample.thick_valid[i] ? sample.thick_t[i] : 0.0;
            if (sample.thick_valid[i]) {
                int col = 0;
                if (config.thickness_flags.use_thickness) thick_feat.at(i, col++) = sample.thick_t[i];
                if (config.thickness_flags.use_normal_dot) thick_feat.at(i, col++) = sample.thick_dot[i];
            }
        }
        mask_node = tape.constant(std::move(mask));
        t_node = tape.constant(std::move(tvals));
        // invalid nodes carry a zero thickness-edge embedding throughout
        e_thick = tape.row_scale(apply_mlp(tape, *params.phi_thick, tape.constant(std::move(thick_feat))),
                                 mask_node);
    }

    std::vector<int> zeros_n(n, 0);
    for (int l = 0; l < config.layers; ++l) {
        // surface processor: residual edge update, then residual node update
        // over summed incident edge embeddings
        NodeId cat_e = tape.concat_cols(tape.concat_cols(e, tape.gather_rows(z, src)),
                                        tape.gather_rows(z, dst));
        NodeId e_next = tape.add(e, apply_mlp(tape, params.surf_edge[l], cat_e));
        NodeId agg = tape.scatter_add_rows(e_next, src, n);
        NodeId z_surf = tape.add(z, apply_mlp(tape, params.surf_node[l], tape.concat_cols(z, agg)));
        e = e_next;

        if (!config.use_thickness) {
            z = z_surf;
            continue;
        }

        // thickness processor: gate the pair message by the logistic weight
        // sigma(alpha * (tau - t)), masked to valid pairs
        NodeId cat_t = tape.concat_cols(tape.concat_cols(e_thick, z_surf),
                                        tape.gather_rows(z_surf, partner));
        NodeId msg = apply_mlp(tape, params.thick_edge[l], cat_t);
        NodeId tau_rows = tape.gather_rows(tape.param(*params.tau), zeros_n);
        NodeId gate = tape.sigmoid(tape.scale(tape.add(tau_rows, tape.scale(t_node, -1.0)),
                                              config.alpha));
        NodeId e_thick_next = tape.row_scale(msg, tape.row_scale(gate, mask_node));
        z = tape.add(z_surf, apply_mlp(tape, params.thick_node[l],
                                       tape.concat_cols(z_surf, e_thick_next)));
        e_thick = e_thick_next;
    }

    NodeId zc = z_coord >= 0 ? z_coord : tape.constant(ad::Tensor(n, d));
    NodeId z_final = apply_mlp(tape, params.combine, tape.concat_cols(z, zc));
    NodeId h_rows = tape.gather_rows(h_cond, zeros_n);
    fr.pred_inv = apply_mlp(tape, params.decode, tape.concat_cols(z_final, h_rows));
    return fr;
}

std::vector<Vec3> predictions_to_original(const ad::Tensor& pred, const GraphSample& sample,
                                          const ModelConfig& config) {
    std::vector<Vec3> p(pred.rows);
    for (int i = 0; i < pred.rows; ++i) p[i] = {pred.at(i, 0), pred.at(i, 1), pred.at(i, 2)};
    if (config.coord_mode != CoordMode::invariant) return p;
    return from_invariant(sample.frame, p, config.inverse_mode);
}

ad::Tensor targets_in_processing_frame(const GraphSample& sample, const ModelConfig& config) {
    if (sample.targets.empty()) throw error("sample has no targets");
    ad::Tensor t(static_cast<int>(sample.targets.size()), 3);
    if (config.coord_mode != CoordMode::invariant) {
        for (size_t i = 0; i < sample.targets.size(); ++i)
            for (int k = 0; k < 3; ++k) t.at(static_cast<int>(i), k) = sample.targets[i][k];
        return t;
    }
    for (size_t i = 0; i < sample.targets.size(); ++i) {
        Vec3 v = sample.targets[i];
        if (config.inverse_mode == InverseMode::point) v = v - sample.frame.center;
        Vec3 inv = sample.frame.rotation.tmul(v);
        for (int k = 0; k < 3; ++k) t.at(static_cast<int>(i), k) = inv[k];
    }
    return t;
}

std::string checkpoint_to_json(const ModelParams& params) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["config"] = nlohmann::json::parse(model_config_to_json(params.config));
    nlohmann::json vals;
    for (ad::Parameter* p : const_cast<ModelParams&>(params).all_params()) {
        vals[p->name] = {{"shape", {p->value.rows, p->value.cols}}, {"values", p->value.v}};
    }
    j["params"] = std::move(vals);
    return j.dump();
}

ModelParams checkpoint_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != 1)
        throw config_error("unsupported checkpoint format version");
    ModelConfig config = model_config_from_json(j.at("config").dump());
    ModelParams params = init_params(config, 0,
                                     config.use_thickness ? std::optional<double>(0.0) : std::nullopt);
    const nlohmann::json& vals = j.at("params");
    for (ad::Parameter* p : params.all_params()) {
        if (!vals.contains(p->name)) throw config_error("checkpoint missing parameter " + p->name);
        const auto& entry = vals.at(p->name);
        int r = entry.at("shape").at(0).get<int>();
        int c = entry.at("shape").at(1).get<int>();
        if (r != p->value.rows || c != p->value.cols)
            throw config_error("checkpoint shape mismatch for " + p->name);
        p->value.v = entry.at("values").get<std::vector<double>>();
        if (p->value.v.size() != static_cast<size_t>(r) * c)
            throw config_error("checkpoint value count mismatch for " + p->name);
        p->grad = ad::Tensor(r, c);
    }
    return params;
}

}  // namespace temnn
