#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "temnn/graph.hpp"
#include "temnn/tape.hpp"

namespace temnn {

// Configuration or checkpoint does not match the data it is applied to.
struct config_error : error {
    using error::error;
};

enum class TauInitPolicy { median, constant };

struct ModelConfig {
    int layers = 3;
    int hidden_dim = 32;
    double alpha = 3.0;
    TauInitPolicy tau_init = TauInitPolicy::median;
    double tau_init_value = 0.0;  // used when tau_init == constant
    bool use_thickness = true;
    CoordMode coord_mode = CoordMode::invariant;
    InverseMode inverse_mode = InverseMode::vector;
    ThicknessFeatureFlags thickness_flags{};
    int cond_dim = 0;

    static constexpr int node_feature_dim = 2;  // [gate distance, cm radius]
    static constexpr int edge_feature_dim = 1;  // [edge length]

    void validate() const;
    SampleOptions sample_options() const { return {coord_mode, thickness_flags}; }
};

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

struct Mlp {
    ad::Parameter w1, b1, w2, b2;
};

struct ModelParams {
    ModelConfig config;
    Mlp phi_node, phi_edge, phi_cond;
    std::optional<Mlp> phi_coord;  // absent when coord_mode == none
    std::optional<Mlp> phi_thick;  // absent when !use_thickness
    std::vector<Mlp> surf_edge, surf_node;   // per layer
    std::vector<Mlp> thick_edge, thick_node; // per layer, empty when !use_thickness
    Mlp combine, decode;
    std::optional<ad::Parameter> tau;  // 1x1, group tau

    std::vector<ad::Parameter*> all_params();
    std::vector<ad::Parameter*> group(ad::ParamGroup g);
    void zero_grads();
    double tau_value() const;
};

// tau_override resolves the median policy (computed by the caller over the
// training split); without it the config must use a constant tau.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed,
                        std::optional<double> tau_override = {});

std::int64_t param_count(const ModelConfig& config);

struct ForwardResult {
    ad::Tape tape;
    ad::Tape::NodeId pred_inv = -1;  // N x 3 prediction in the processing frame
};

ForwardResult model_forward(ModelParams& params, const GraphSample& sample);

// Maps N x 3 predictions out of the processing frame. Identity when the
// model works in original coordinates (coord_mode original or none).
std::vector<Vec3> predictions_to_original(const ad::Tensor& pred, const GraphSample& sample,
                                          const ModelConfig& config);

// Targets transformed into the processing frame (what the loss compares
// against). Identity when coord_mode is original or none.
ad::Tensor targets_in_processing_frame(const GraphSample& sample, const ModelConfig& config);

std::string checkpoint_to_json(const ModelParams& params);
ModelParams checkpoint_from_json(const std::string& text);

}  // namespace temnn
