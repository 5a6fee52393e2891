#include "temnn/bundle.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace temnn {

namespace fs = std::filesystem;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot write '" + path + "'");
    out << content;
}

namespace {

std::string targets_to_csv(const std::vector<Vec3>& targets) {
    std::ostringstream out;
    out << "node_id,dx,dy,dz\n";
    char buf[128];
    for (size_t i = 0; i < targets.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i, targets[i].x, targets[i].y,
                      targets[i].z);
        out << buf;
    }
    return out.str();
}

std::vector<Vec3> targets_from_csv(const std::string& text) {
    std::vector<Vec3> out;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw error("targets.csv: empty");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        long id;
        Vec3 v;
        if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf", &id, &v.x, &v.y, &v.z) != 4)
            throw error("targets.csv: malformed row '" + line + "'");
        if (id != static_cast<long>(out.size())) throw error("targets.csv: rows out of order");
        out.push_back(v);
    }
    return out;
}

}  // namespace

void write_bundle(const std::string& dir, const SampleBundle& bundle) {
    fs::create_directories(dir);
    write_text_file(dir + "/mesh.off", write_off(bundle.mesh));
    write_text_file(dir + "/frame.json", frame_to_json(bundle.frame));
    write_text_file(dir + "/pairing.csv", pairing_to_csv(bundle.pairing));
    nlohmann::json feat;
    feat["gate"] = bundle.gate;
    feat["condition"] = bundle.condition;
    write_text_file(dir + "/features.json", feat.dump(2));
    write_text_file(dir + "/targets.csv", targets_to_csv(bundle.targets));
}

SampleBundle read_bundle(const std::string& dir) {
    SampleBundle b;
    b.mesh = parse_mesh(read_text_file(dir + "/mesh.off"), MeshFormat::off);
    b.frame = frame_from_json(read_text_file(dir + "/frame.json"));
    b.pairing = pairing_from_csv(read_text_file(dir + "/pairing.csv"));
    nlohmann::json feat = nlohmann::json::parse(read_text_file(dir + "/features.json"));
    b.gate = feat.at("gate").get<int>();
    b.condition = feat.at("condition").get<std::vector<double>>();
    b.targets = targets_from_csv(read_text_file(dir + "/targets.csv"));
    return b;
}

GraphSample assemble_from_bundle(const SampleBundle& bundle, const SampleOptions& options) {
    return assemble_sample(bundle.mesh, bundle.frame, bundle.pairing, bundle.gate,
                           bundle.condition, bundle.targets, options);
}

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw error("split_name: bad split");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw error("unknown split '" + name + "'");
}

void write_manifest(const std::string& dataset_dir, const DatasetManifest& manifest) {
    nlohmann::json j;
    j["format_version"] = manifest.format_version;
    j["seed"] = manifest.seed;
    j["cond_dim"] = manifest.cond_dim;
    j["meta"] = manifest.meta;
    for (const auto& s : manifest.samples)
        j["samples"].push_back({{"id", s.id}, {"dir", s.dir}, {"split", split_name(s.split)}});
    write_text_file(dataset_dir + "/manifest.json", j.dump(2));
}

DatasetManifest read_manifest(const std::string& dataset_dir) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(dataset_dir + "/manifest.json"));
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.cond_dim = j.at("cond_dim").get<int>();
    m.meta = j.value("meta", nlohmann::json::object());
    for (const auto& s : j.at("samples"))
        m.samples.push_back({s.at("id").get<std::string>(), s.at("dir").get<std::string>(),
                             split_from_name(s.at("split").get<std::string>())});
    return m;
}

std::vector<SampleRef> refs_for_split(const DatasetManifest& manifest, Split split) {
    std::vector<SampleRef> out;
    for (const auto& s : manifest.samples)
        if (s.split == split) out.push_back(s);
    return out;
}

std::vector<GraphSample> load_split(const std::string& dataset_dir, const DatasetManifest& manifest,
                                    Split split, const SampleOptions& options) {
    std::vector<GraphSample> out;
    for (const auto& ref : refs_for_split(manifest, split))
        out.push_back(assemble_from_bundle(read_bundle(dataset_dir + "/" + ref.dir), options));
    return out;
}

}  // namespace temnn
