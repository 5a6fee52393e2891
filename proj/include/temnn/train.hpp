#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "temnn/bundle.hpp"
#include "temnn/model.hpp"

namespace temnn {

struct TauSchedulerConfig {
    int patience = 5;
    double threshold = 1.0;  // absolute improvement required on the monitored loss
    double factor = 0.5;
    double min_lr = 0.0;
};

struct TrainConfig {
    int epochs = 200;
    double lr = 1e-3;
    double tau_lr = 0.0;  // 0: use lr; the threshold group usually wants a
                          // larger step at desk scale since it moves alone
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    TauSchedulerConfig tau_scheduler;
    std::optional<double> fixed_tau;  // set: tau frozen at this value, never optimized

    double effective_tau_lr() const { return tau_lr > 0.0 ? tau_lr : lr; }
    void validate() const;
};

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

// Adam with decoupled weight decay on the `weights` group only; the tau
// group has its own learning rate and never decays.
class Adam {
public:
    Adam(std::vector<ad::Parameter*> params, double lr_weights, double lr_tau,
         double weight_decay);

    void step();
    void set_tau_lr(double lr) { lr_tau_ = lr; }
    double tau_lr() const { return lr_tau_; }

private:
    std::vector<ad::Parameter*> params_;
    std::vector<ad::Tensor> m_, v_;
    double lr_weights_, lr_tau_, weight_decay_;
    long t_ = 0;
};

// Reduce-on-plateau with absolute threshold: after `patience` consecutive
// epochs without an improvement larger than `threshold`, multiply the
// learning rate by `factor` and reset the counter.
class PlateauScheduler {
public:
    PlateauScheduler(const TauSchedulerConfig& config, double initial_lr);
    double step(double monitored);  // returns the lr in effect afterwards
    double lr() const { return lr_; }

private:
    TauSchedulerConfig config_;
    double lr_;
    double best_;
    int num_bad_ = 0;
};

struct Metrics {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> r2;  // missing when the target variance is zero
};

// All metrics over the flattened N*3 residual components.
Metrics compute_metrics(const std::vector<Vec3>& pred, const std::vector<Vec3>& target);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double tau = 0.0;
    double tau_lr = 0.0;
};

struct TrainResult {
    ModelParams best_params;
    double best_val_loss = 0.0;
    int best_epoch = -1;
    std::vector<EpochLog> log;
    bool aborted_nan = false;
};

TrainResult train(const std::vector<GraphSample>& train_set,
                  const std::vector<GraphSample>& val_set, const ModelConfig& model_config,
                  const TrainConfig& train_config);

double median_thickness(const std::vector<GraphSample>& samples);

enum class EvalMode { in_dist, ood_rotated };

struct EvalInput {
    std::string id;
    SampleBundle bundle;
};

struct SampleMetrics {
    std::string id;
    Metrics metrics;
};

struct EvalResult {
    std::vector<SampleMetrics> per_sample;
    Metrics aggregate;  // pooled over every residual component of the split
};

// Applies a rigid motion to the bundle geometry and rebuilds the sample:
// normals, frame, pairing, and features are all recomputed on the re-posed
// mesh; targets follow the vector law (q * target).
GraphSample assemble_reposed(const SampleBundle& bundle, const SampleOptions& options,
                             const Mat3& q, const Vec3& g);

// ood_rotated re-poses each sample with a fresh seeded rotation+translation
// and scores in the transformed frame; in_dist scores the bundle as stored.
EvalResult evaluate(ModelParams& params, const std::vector<EvalInput>& inputs, EvalMode mode,
                    std::uint64_t seed);

std::vector<EvalInput> load_eval_split(const std::string& dataset_dir,
                                       const DatasetManifest& manifest, Split split);

struct TauSweepRow {
    double tau = 0.0;
    Metrics test_metrics;
    double best_val_loss = 0.0;
};

std::vector<TauSweepRow> tau_sweep(const std::vector<GraphSample>& train_set,
                                   const std::vector<GraphSample>& val_set,
                                   const std::vector<EvalInput>& test_set,
                                   const ModelConfig& model_config,
                                   const TrainConfig& train_config,
                                   const std::vector<double>& grid);

// Prediction for a standalone mesh: preprocess + forward with a checkpoint.
struct Prediction {
    std::vector<Vec3> invariant;
    std::vector<Vec3> original;
};
Prediction predict_mesh(ModelParams& params, const Mesh& mesh, int gate,
                        const std::vector<double>& condition);

// CSV emission; doubles printed with %.17g so artifacts are byte-stable.
std::string format_double(double v);
std::string epoch_log_to_csv(const std::vector<EpochLog>& log);
std::string eval_result_to_csv(const EvalResult& result);
std::string tau_sweep_to_csv(const std::vector<TauSweepRow>& rows);
std::string config_hash(const std::string& canonical_config_text);

}  // namespace temnn
