#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "temnn/bundle.hpp"
#include "temnn/synth.hpp"
#include "temnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitSpecError = 2;
constexpr int kExitNotWatertight = 3;
constexpr int kExitConfigMismatch = 4;
constexpr int kExitNanAbort = 5;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw temnn::config_error("unknown key '" + it.key() + "' in " + where);
}

struct RunConfig {
    temnn::ModelConfig model;
    temnn::TrainConfig train;
    std::string data_dir;
    std::string out_dir;
    json resolved;  // full snapshot written into the run directory
};

json apply_overrides(json config, const std::vector<std::string>& overrides) {
    for (const std::string& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw temnn::config_error("override '" + ov + "' must be key=value");
        std::string path = ov.substr(0, eq);
        std::string value = ov.substr(eq + 1);
        json parsed;
        try {
            parsed = json::parse(value);
        } catch (...) {
            parsed = value;  // bare strings allowed
        }
        json* cursor = &config;
        size_t pos = 0;
        while (true) {
            size_t dot = path.find('.', pos);
            std::string key = path.substr(pos, dot - pos);
            if (dot == std::string::npos) {
                (*cursor)[key] = parsed;
                break;
            }
            cursor = &(*cursor)[key];
            pos = dot + 1;
        }
    }
    return config;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                          const std::string& data_flag, const std::string& out_flag) {
    json j = json::parse(temnn::read_text_file(path));
    j = apply_overrides(j, overrides);
    check_keys(j, {"model", "train", "data", "out"}, "run config");
    if (j.contains("model")) {
        check_keys(j["model"],
                   {"layers", "hidden_dim", "alpha", "tau_init", "tau_init_value", "use_thickness",
                    "coord_mode", "inverse_mode", "thickness_features", "cond_dim"},
                   "model config");
        if (j["model"].contains("thickness_features"))
            check_keys(j["model"]["thickness_features"], {"use_thickness", "use_normal_dot"},
                       "model.thickness_features");
    }
    if (j.contains("train")) {
        check_keys(j["train"],
                   {"epochs", "lr", "tau_lr", "weight_decay", "seed", "tau_scheduler", "fixed_tau"},
                   "train config");
        if (j["train"].contains("tau_scheduler"))
            check_keys(j["train"]["tau_scheduler"], {"patience", "threshold", "factor", "min_lr"},
                       "train.tau_scheduler");
    }

    RunConfig rc;
    rc.model = temnn::model_config_from_json(j.value("model", json::object()).dump());
    rc.train = temnn::train_config_from_json(j.value("train", json::object()).dump());
    rc.data_dir = !data_flag.empty() ? data_flag : j.value("data", std::string());
    rc.out_dir = !out_flag.empty() ? out_flag : j.value("out", std::string());
    if (rc.data_dir.empty()) throw temnn::config_error("no dataset directory given");
    if (rc.out_dir.empty()) throw temnn::config_error("no output directory given");
    if (!fs::exists(rc.data_dir))
        throw temnn::config_error("dataset directory '" + rc.data_dir + "' does not exist");

    rc.resolved = json::object();
    rc.resolved["model"] = json::parse(temnn::model_config_to_json(rc.model));
    rc.resolved["train"] = json::parse(temnn::train_config_to_json(rc.train));
    rc.resolved["data"] = rc.data_dir;
    rc.resolved["out"] = rc.out_dir;
    return rc;
}

// Fills cond_dim from the manifest when the config leaves it unset.
void reconcile_cond_dim(temnn::ModelConfig& model, const temnn::DatasetManifest& manifest) {
    if (model.cond_dim == 0) model.cond_dim = manifest.cond_dim;
    else if (model.cond_dim != manifest.cond_dim)
        throw temnn::config_error("model cond_dim " + std::to_string(model.cond_dim) +
                                  " does not match dataset cond_dim " +
                                  std::to_string(manifest.cond_dim));
}

std::string make_run_dir(const RunConfig& rc) {
    std::string dir = rc.out_dir + "/" + temnn::config_hash(rc.resolved.dump()) + "-s" +
                      std::to_string(rc.train.seed);
    fs::create_directories(dir);
    temnn::write_text_file(dir + "/config.json", rc.resolved.dump(2));
    return dir;
}

std::vector<double> parse_condition(const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        if (part.empty()) continue;
        out.push_back(std::stod(part));
    }
    return out;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, long long seed_flag) {
    temnn::DatasetSpec spec;
    try {
        json j = spec_path.empty() ? json::object() : json::parse(temnn::read_text_file(spec_path));
        check_keys(j, {"n_shapes", "n_conditions", "n_unseen", "cond_dim", "val_fraction", "seed",
                       "field"},
                   "dataset spec");
        spec = temnn::dataset_spec_from_json(j);
        if (seed_flag >= 0) spec.seed = static_cast<std::uint64_t>(seed_flag);
        spec.validate();
    } catch (const std::exception& e) {
        std::cerr << "dataset spec error: " << e.what() << "\n";
        return kExitSpecError;
    }
    temnn::DatasetManifest manifest = temnn::gen_dataset(spec, out_dir);
    std::cout << "wrote " << manifest.samples.size() << " bundles to " << out_dir << "\n";
    std::cout << "wide fraction above t*: "
              << manifest.meta["stats"]["wide_fraction"].get<double>() << "\n";
    return 0;
}

int cmd_preprocess(const std::string& mesh_path, const std::string& out_dir, int gate) {
    temnn::Mesh mesh = temnn::load_mesh(mesh_path);
    temnn::WatertightReport wt = temnn::validate_watertight(mesh);
    if (!wt.watertight) {
        std::cerr << "mesh is not watertight: " << wt.boundary_edges.size()
                  << " boundary edges, " << wt.non_manifold_edges.size() << " non-manifold\n";
        for (const auto& e : wt.boundary_edges)
            std::cerr << "  boundary edge " << e[0] << "-" << e[1] << "\n";
        for (const auto& e : wt.non_manifold_edges)
            std::cerr << "  non-manifold edge " << e[0] << "-" << e[1] << "\n";
        return kExitNotWatertight;
    }
    temnn::NormalField normals = temnn::compute_normals(mesh);
    temnn::CanonicalFrame frame = temnn::compute_frame(mesh);
    temnn::ThicknessPairing pairing = temnn::find_thickness_pairs(mesh, normals);
    std::vector<double> gd = temnn::geodesic_from_gate(mesh, gate);
    std::vector<double> radius = temnn::radius_from_cm(mesh, frame.center);
    std::vector<temnn::Vec3> inv = temnn::to_invariant(frame, mesh.vertices);

    fs::create_directories(out_dir);
    temnn::write_text_file(out_dir + "/frame.json", temnn::frame_to_json(frame));
    temnn::write_text_file(out_dir + "/pairing.csv", temnn::pairing_to_csv(pairing));
    {
        std::ostringstream csv;
        csv << "node_id,x_inv,y_inv,z_inv\n";
        for (size_t i = 0; i < inv.size(); ++i)
            csv << i << "," << temnn::format_double(inv[i].x) << ","
                << temnn::format_double(inv[i].y) << "," << temnn::format_double(inv[i].z) << "\n";
        temnn::write_text_file(out_dir + "/invariant_coords.csv", csv.str());
    }
    {
        std::ostringstream csv;
        csv << "node_id,gate_dist,cm_radius\n";
        for (size_t i = 0; i < gd.size(); ++i)
            csv << i << "," << temnn::format_double(gd[i]) << ","
                << temnn::format_double(radius[i]) << "\n";
        temnn::write_text_file(out_dir + "/node_features.csv", csv.str());
    }
    std::cout << "preprocessed " << mesh.num_vertices() << " nodes, " << mesh.num_faces()
              << " faces -> " << out_dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& rc_in) {
    RunConfig rc = rc_in;
    temnn::DatasetManifest manifest = temnn::read_manifest(rc.data_dir);
    reconcile_cond_dim(rc.model, manifest);
    rc.resolved["model"] = json::parse(temnn::model_config_to_json(rc.model));

    temnn::SampleOptions options = rc.model.sample_options();
    std::vector<temnn::GraphSample> train_set =
        temnn::load_split(rc.data_dir, manifest, temnn::Split::train, options);
    std::vector<temnn::GraphSample> val_set =
        temnn::load_split(rc.data_dir, manifest, temnn::Split::val, options);

    std::string run_dir = make_run_dir(rc);
    temnn::TrainResult tr = temnn::train(train_set, val_set, rc.model, rc.train);
    temnn::write_text_file(run_dir + "/log.csv", temnn::epoch_log_to_csv(tr.log));
    temnn::write_text_file(run_dir + "/checkpoint.json",
                           temnn::checkpoint_to_json(tr.best_params));
    if (tr.aborted_nan) {
        std::cerr << "training aborted on non-finite loss after epoch " << tr.log.size()
                  << "; last good checkpoint kept\n";
        return kExitNanAbort;
    }
    std::cout << "run " << run_dir << ": best val loss " << tr.best_val_loss << " at epoch "
              << tr.best_epoch << "\n";
    if (rc.model.use_thickness)
        std::cout << "final tau " << tr.best_params.tau_value() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& mode_name, const std::string& split_name_arg,
             std::uint64_t seed, const std::string& out_dir) {
    temnn::ModelParams params =
        temnn::checkpoint_from_json(temnn::read_text_file(checkpoint_path));
    temnn::DatasetManifest manifest = temnn::read_manifest(data_dir);
    if (params.config.cond_dim != manifest.cond_dim)
        throw temnn::config_error("checkpoint cond_dim does not match dataset");

    temnn::EvalMode mode;
    if (mode_name == "in_dist") mode = temnn::EvalMode::in_dist;
    else if (mode_name == "ood_rotated") mode = temnn::EvalMode::ood_rotated;
    else throw temnn::config_error("unknown eval mode '" + mode_name + "'");

    std::vector<temnn::EvalInput> inputs =
        temnn::load_eval_split(data_dir, manifest, temnn::split_from_name(split_name_arg));
    if (inputs.empty()) throw temnn::config_error("split has no samples");
    temnn::EvalResult res = temnn::evaluate(params, inputs, mode, seed);

    fs::create_directories(out_dir);
    temnn::write_text_file(out_dir + "/metrics_" + mode_name + ".csv",
                           temnn::eval_result_to_csv(res));
    std::cout << "aggregate rmse " << res.aggregate.rmse << " mae " << res.aggregate.mae;
    if (res.aggregate.r2) std::cout << " r2 " << *res.aggregate.r2;
    std::cout << " over " << res.per_sample.size() << " samples\n";
    return 0;
}

int cmd_tau_sweep(const RunConfig& rc_in, const std::string& grid_text) {
    RunConfig rc = rc_in;
    temnn::DatasetManifest manifest = temnn::read_manifest(rc.data_dir);
    reconcile_cond_dim(rc.model, manifest);
    rc.resolved["model"] = json::parse(temnn::model_config_to_json(rc.model));
    rc.resolved["grid"] = grid_text;

    std::vector<double> grid = parse_condition(grid_text);
    if (grid.empty()) throw temnn::config_error("tau-sweep: empty grid");

    temnn::SampleOptions options = rc.model.sample_options();
    auto train_set = temnn::load_split(rc.data_dir, manifest, temnn::Split::train, options);
    auto val_set = temnn::load_split(rc.data_dir, manifest, temnn::Split::val, options);
    auto test_set = temnn::load_eval_split(rc.data_dir, manifest, temnn::Split::test);

    std::string run_dir = make_run_dir(rc);
    auto rows = temnn::tau_sweep(train_set, val_set, test_set, rc.model, rc.train, grid);
    temnn::write_text_file(run_dir + "/tau_sweep.csv", temnn::tau_sweep_to_csv(rows));
    for (const auto& r : rows) {
        std::cout << "tau " << r.tau << ": rmse " << r.test_metrics.rmse;
        if (r.test_metrics.r2) std::cout << " r2 " << *r.test_metrics.r2;
        std::cout << "\n";
    }
    return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& mesh_path,
                const std::string& condition_text, int gate, const std::string& out_path) {
    temnn::ModelParams params =
        temnn::checkpoint_from_json(temnn::read_text_file(checkpoint_path));
    temnn::Mesh mesh = temnn::load_mesh(mesh_path);
    temnn::WatertightReport wt = temnn::validate_watertight(mesh);
    if (!wt.watertight) {
        std::cerr << "mesh is not watertight (" << wt.boundary_edges.size()
                  << " boundary edges)\n";
        return kExitNotWatertight;
    }
    std::vector<double> condition = parse_condition(condition_text);
    if (static_cast<int>(condition.size()) != params.config.cond_dim)
        throw temnn::config_error("condition has " + std::to_string(condition.size()) +
                                  " entries, checkpoint expects " +
                                  std::to_string(params.config.cond_dim));
    temnn::Prediction pred = temnn::predict_mesh(params, mesh, gate, condition);

    std::ostringstream csv;
    csv << "node_id,dx_inv,dy_inv,dz_inv,dx_orig,dy_orig,dz_orig\n";
    for (size_t i = 0; i < pred.invariant.size(); ++i) {
        csv << i;
        for (int k = 0; k < 3; ++k) csv << "," << temnn::format_double(pred.invariant[i][k]);
        for (int k = 0; k < 3; ++k) csv << "," << temnn::format_double(pred.original[i][k]);
        csv << "\n";
    }
    if (fs::path(out_path).has_parent_path())
        fs::create_directories(fs::path(out_path).parent_path());
    temnn::write_text_file(out_path, csv.str());
    std::cout << "wrote per-node predictions for " << pred.invariant.size() << " nodes to "
              << out_path << "\n";
    return 0;
}

int cmd_inspect(const std::string& data_dir, double tau, const std::string& out_dir) {
    temnn::DatasetManifest manifest = temnn::read_manifest(data_dir);
    temnn::ThicknessPairing pooled;
    for (const auto& ref : manifest.samples) {
        temnn::ThicknessPairing p =
            temnn::pairing_from_csv(temnn::read_text_file(data_dir + "/" + ref.dir + "/pairing.csv"));
        for (int i = 0; i < p.size(); ++i) {
            pooled.partner.push_back(p.partner[i]);
            pooled.thickness.push_back(p.thickness[i]);
            pooled.normal_dot.push_back(p.normal_dot[i]);
            pooled.ray_distance.push_back(p.ray_distance[i]);
            pooled.valid.push_back(p.valid[i]);
            pooled.fallback.push_back(p.fallback[i]);
            pooled.near_tie.push_back(false);
        }
    }
    temnn::ThicknessHistogram h = temnn::thickness_histogram(pooled, tau);
    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "bin_lo,bin_hi,count\n";
    for (size_t b = 0; b < h.counts.size(); ++b)
        csv << temnn::format_double(h.bin_edges[b]) << "," << temnn::format_double(h.bin_edges[b + 1])
            << "," << h.counts[b] << "\n";
    csv << "fraction_above_tau," << temnn::format_double(h.fraction_above_tau) << ",\n";
    temnn::write_text_file(out_dir + "/thickness_histogram.csv", csv.str());
    std::cout << "valid pairs " << h.valid_count << ", fraction above tau "
              << h.fraction_above_tau << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"thickness-aware equivariant mesh network toolkit"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, mesh_path, config_path, data_dir, checkpoint_path;
    std::string mode_name = "in_dist", split_arg = "test", grid_text, condition_text, out_path;
    long long seed_flag = -1;
    std::uint64_t eval_seed = 0;
    int gate = 0;
    double tau = 0.0;
    std::vector<std::string> overrides;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--spec", spec_path, "dataset spec JSON");
    gen->add_option("--out", out_dir, "output dataset directory")->required();
    gen->add_option("--seed", seed_flag, "seed override");

    CLI::App* pre = app.add_subcommand("preprocess", "canonical frame + thickness for one mesh");
    pre->add_option("--mesh", mesh_path, "mesh file (.off/.obj)")->required();
    pre->add_option("--out", out_dir, "output directory")->required();
    pre->add_option("--gate", gate, "gate node index (default 0)");

    CLI::App* trn = app.add_subcommand("train", "train a model");
    trn->add_option("--config", config_path, "run config JSON")->required();
    trn->add_option("--data", data_dir, "dataset directory");
    trn->add_option("--out", out_dir, "output directory");
    trn->add_option("--set", overrides, "config override key=value (repeatable)");

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--mode", mode_name, "in_dist or ood_rotated");
    ev->add_option("--split", split_arg, "train, val, or test (default test)");
    ev->add_option("--seed", eval_seed, "pose seed for ood_rotated");
    ev->add_option("--out", out_dir, "output directory")->required();

    CLI::App* sweep = app.add_subcommand("tau-sweep", "train with fixed thresholds");
    sweep->add_option("--config", config_path, "run config JSON")->required();
    sweep->add_option("--data", data_dir, "dataset directory");
    sweep->add_option("--out", out_dir, "output directory");
    sweep->add_option("--grid", grid_text, "comma-separated tau values")->required();
    sweep->add_option("--set", overrides, "config override key=value (repeatable)");

    CLI::App* prd = app.add_subcommand("predict", "predict deformations for a mesh");
    prd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
    prd->add_option("--mesh", mesh_path, "mesh file")->required();
    prd->add_option("--condition", condition_text, "comma-separated condition vector")->required();
    prd->add_option("--gate", gate, "gate node index (default 0)");
    prd->add_option("--out", out_path, "output CSV path")->required();

    CLI::App* ins = app.add_subcommand("inspect", "dataset thickness histogram");
    ins->add_option("--data", data_dir, "dataset directory")->required();
    ins->add_option("--tau", tau, "threshold for the above-fraction")->required();
    ins->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(spec_path, out_dir, seed_flag);
        if (pre->parsed()) return cmd_preprocess(mesh_path, out_dir, gate);
        if (trn->parsed())
            return cmd_train(load_run_config(config_path, overrides, data_dir, out_dir));
        if (ev->parsed())
            return cmd_eval(checkpoint_path, data_dir, mode_name, split_arg, eval_seed, out_dir);
        if (sweep->parsed())
            return cmd_tau_sweep(load_run_config(config_path, overrides, data_dir, out_dir),
                                 grid_text);
        if (prd->parsed())
            return cmd_predict(checkpoint_path, mesh_path, condition_text, gate, out_path);
        if (ins->parsed()) return cmd_inspect(data_dir, tau, out_dir);
    } catch (const temnn::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigMismatch;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
