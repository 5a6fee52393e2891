// End-to-end checks of the command-line tool. The binary path arrives as
// argv[1] from CTest.
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <string>

#include "temnn/bundle.hpp"
#include "temnn/synth.hpp"
#include "temnn/thickness.hpp"
#include "temnn/train.hpp"

namespace fs = std::filesystem;

static std::string g_binary;
static std::string g_root;

namespace {

int run(const std::string& args) {
    std::string cmd = g_binary + " " + args + " >" + g_root + "/stdout.txt 2>" + g_root +
                      "/stderr.txt";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) { return temnn::read_text_file(path); }

bool trees_identical(const std::string& a, const std::string& b) {
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        fs::path rel = fs::relative(entry.path(), a);
        if (!fs::exists(fs::path(b) / rel)) return false;
        if (slurp(entry.path().string()) != slurp((fs::path(b) / rel).string())) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("gen-data: determinism, spec errors") {
    std::string spec_path = g_root + "/spec.json";
    temnn::write_text_file(spec_path,
                           R"({"n_shapes":3,"n_conditions":3,"n_unseen":1,"cond_dim":2,"seed":5})");
    REQUIRE(run("gen-data --spec " + spec_path + " --out " + g_root + "/ds") == 0);
    REQUIRE(fs::exists(g_root + "/ds/manifest.json"));
    REQUIRE(run("gen-data --spec " + spec_path + " --out " + g_root + "/ds2") == 0);
    CHECK(trees_identical(g_root + "/ds", g_root + "/ds2"));

    temnn::write_text_file(g_root + "/bad.json", R"({"n_shapes":0})");
    CHECK(run("gen-data --spec " + g_root + "/bad.json --out " + g_root + "/never") == 2);
    temnn::write_text_file(g_root + "/bad2.json", R"({"mystery_key":1})");
    CHECK(run("gen-data --spec " + g_root + "/bad2.json --out " + g_root + "/never") == 2);
}

TEST_CASE("preprocess: artifacts, invariance, watertight gate") {
    // watertight plate fixture straight from the generator
    temnn::ShapeSpec spec;
    spec.family = temnn::ShapeFamily::plate;
    temnn::GeneratedShape shape = temnn::gen_shape(spec);
    temnn::write_text_file(g_root + "/plate.off", temnn::write_off(shape.mesh));
    REQUIRE(run("preprocess --mesh " + g_root + "/plate.off --out " + g_root + "/pre --gate 0") == 0);
    CHECK(fs::exists(g_root + "/pre/frame.json"));
    CHECK(fs::exists(g_root + "/pre/pairing.csv"));
    CHECK(fs::exists(g_root + "/pre/invariant_coords.csv"));
    CHECK(fs::exists(g_root + "/pre/node_features.csv"));

    // a rotated copy produces near-identical invariant coordinates
    temnn::Mat3 q;  // quarter turn around z plus a flip-free tilt
    q.m = {{{0.36, -0.48, 0.8}, {0.8, 0.6, 0.0}, {-0.48, 0.64, 0.6}}};
    std::vector<temnn::Vec3> rot(shape.mesh.vertices.size());
    for (size_t i = 0; i < rot.size(); ++i)
        rot[i] = q.mul(shape.mesh.vertices[i]) + temnn::Vec3{3, -2, 7};
    temnn::write_text_file(g_root + "/plate_rot.off",
                           temnn::write_off(temnn::make_mesh(rot, shape.mesh.faces)));
    REQUIRE(run("preprocess --mesh " + g_root + "/plate_rot.off --out " + g_root +
                "/pre_rot --gate 0") == 0);
    std::istringstream a(slurp(g_root + "/pre/invariant_coords.csv"));
    std::istringstream b(slurp(g_root + "/pre_rot/invariant_coords.csv"));
    std::string la, lb;
    std::getline(a, la);
    std::getline(b, lb);
    while (std::getline(a, la) && std::getline(b, lb)) {
        long ia, ib;
        double xa, ya, za, xb, yb, zb;
        REQUIRE(std::sscanf(la.c_str(), "%ld,%lf,%lf,%lf", &ia, &xa, &ya, &za) == 4);
        REQUIRE(std::sscanf(lb.c_str(), "%ld,%lf,%lf,%lf", &ib, &xb, &yb, &zb) == 4);
        CHECK(std::abs(xa - xb) < 1e-7);
        CHECK(std::abs(ya - yb) < 1e-7);
        CHECK(std::abs(za - zb) < 1e-7);
    }

    temnn::write_text_file(g_root + "/open.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
    CHECK(run("preprocess --mesh " + g_root + "/open.off --out " + g_root + "/pre_open") == 3);
}

TEST_CASE("train, eval, predict, inspect, tau-sweep") {
    std::string config_path = g_root + "/run.json";
    temnn::write_text_file(config_path, R"({
      "model": {"hidden_dim": 8, "layers": 2, "tau_init": "median"},
      "train": {"epochs": 3, "seed": 7}
    })");
    REQUIRE(run("train --config " + config_path + " --data " + g_root + "/ds --out " + g_root +
                "/runs") == 0);

    std::string run_dir;
    for (const auto& e : fs::directory_iterator(g_root + "/runs")) run_dir = e.path().string();
    REQUIRE(!run_dir.empty());
    CHECK(fs::exists(run_dir + "/config.json"));
    CHECK(fs::exists(run_dir + "/log.csv"));
    CHECK(fs::exists(run_dir + "/checkpoint.json"));
    std::string log_first = slurp(run_dir + "/log.csv");
    std::string ckpt_first = slurp(run_dir + "/checkpoint.json");

    // identical config + seed reproduce the artifacts byte for byte
    fs::remove_all(g_root + "/runs");
    REQUIRE(run("train --config " + config_path + " --data " + g_root + "/ds --out " + g_root +
                "/runs") == 0);
    for (const auto& e : fs::directory_iterator(g_root + "/runs")) run_dir = e.path().string();
    CHECK(slurp(run_dir + "/log.csv") == log_first);
    CHECK(slurp(run_dir + "/checkpoint.json") == ckpt_first);

    std::string ckpt = run_dir + "/checkpoint.json";
    REQUIRE(run("eval --checkpoint " + ckpt + " --data " + g_root + "/ds --mode in_dist --out " +
                g_root + "/eval") == 0);
    CHECK(fs::exists(g_root + "/eval/metrics_in_dist.csv"));
    REQUIRE(run("eval --checkpoint " + ckpt + " --data " + g_root +
                "/ds --mode ood_rotated --seed 7 --out " + g_root + "/eval") == 0);
    std::string ood = slurp(g_root + "/eval/metrics_ood_rotated.csv");
    REQUIRE(run("eval --checkpoint " + ckpt + " --data " + g_root +
                "/ds --mode ood_rotated --seed 7 --out " + g_root + "/eval2") == 0);
    CHECK(slurp(g_root + "/eval2/metrics_ood_rotated.csv") == ood);

    REQUIRE(run("predict --checkpoint " + ckpt + " --mesh " + g_root +
                "/plate.off --condition 0.5,0.5 --gate 0 --out " + g_root + "/pred.csv") == 0);
    std::string pred = slurp(g_root + "/pred.csv");
    CHECK(pred.find("node_id,dx_inv") == 0);
    CHECK(run("predict --checkpoint " + ckpt + " --mesh " + g_root +
              "/plate.off --condition 0.5,0.5,0.9 --gate 0 --out " + g_root + "/pred2.csv") == 4);

    REQUIRE(run("inspect --data " + g_root + "/ds --tau 4.0 --out " + g_root + "/ins") == 0);
    std::string hist = slurp(g_root + "/ins/thickness_histogram.csv");
    CHECK(hist.find("fraction_above_tau") != std::string::npos);

    // one-point sweep emits a row per tau
    REQUIRE(run("tau-sweep --config " + config_path + " --data " + g_root + "/ds --out " + g_root +
                "/sweep --grid 4.0") == 0);
    std::string sweep_dir;
    for (const auto& e : fs::directory_iterator(g_root + "/sweep")) sweep_dir = e.path().string();
    std::string sweep = slurp(sweep_dir + "/tau_sweep.csv");
    CHECK(sweep.find("tau,rmse,mae,r2") == 0);
    CHECK(sweep.find("\n4,") != std::string::npos);

    // unknown config keys are a config error
    temnn::write_text_file(g_root + "/bad_run.json", R"({"model": {"uh_oh": 3}})");
    CHECK(run("train --config " + g_root + "/bad_run.json --data " + g_root + "/ds --out " +
              g_root + "/runs_bad") == 4);
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-temnn-binary>\n");
        return 2;
    }
    g_binary = argv[1];
    g_root = (fs::temp_directory_path() / "temnn_cli_test").string();
    fs::remove_all(g_root);
    fs::create_directories(g_root);
    doctest::Context ctx;
    int res = ctx.run();
    fs::remove_all(g_root);
    return res;
}
