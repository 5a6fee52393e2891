#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "temnn/graph.hpp"

namespace temnn {

// On-disk form of one sample: mesh.off, frame.json, pairing.csv,
// features.json (gate + condition), targets.csv.
struct SampleBundle {
    Mesh mesh;
    CanonicalFrame frame;
    ThicknessPairing pairing;
    int gate = 0;
    std::vector<double> condition;
    std::vector<Vec3> targets;
};

void write_bundle(const std::string& dir, const SampleBundle& bundle);
SampleBundle read_bundle(const std::string& dir);
GraphSample assemble_from_bundle(const SampleBundle& bundle, const SampleOptions& options);

enum class Split { train, val, test };
std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct SampleRef {
    std::string id;
    std::string dir;  // relative to the dataset root
    Split split = Split::train;
};

struct DatasetManifest {
    int format_version = 1;
    std::uint64_t seed = 0;
    int cond_dim = 0;
    nlohmann::json meta;  // generator parameters and per-dataset statistics
    std::vector<SampleRef> samples;
};

void write_manifest(const std::string& dataset_dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& dataset_dir);

std::vector<SampleRef> refs_for_split(const DatasetManifest& manifest, Split split);

// Loads and assembles every sample of a split, manifest order.
std::vector<GraphSample> load_split(const std::string& dataset_dir, const DatasetManifest& manifest,
                                    Split split, const SampleOptions& options);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace temnn
