#include "temnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "temnn/random.hpp"

namespace temnn {

void TrainConfig::validate() const {
    if (epochs < 1) throw config_error("train config: epochs must be >= 1");
    if (lr <= 0.0) throw config_error("train config: lr must be positive");
    if (tau_lr < 0.0) throw config_error("train config: tau_lr must be >= 0");
    if (weight_decay < 0.0) throw config_error("train config: weight_decay must be >= 0");
    if (tau_scheduler.patience < 1) throw config_error("train config: patience must be >= 1");
    if (tau_scheduler.factor <= 0.0 || tau_scheduler.factor >= 1.0)
        throw config_error("train config: factor must be in (0, 1)");
}

std::string train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["epochs"] = c.epochs;
    j["lr"] = c.lr;
    j["tau_lr"] = c.tau_lr;
    j["weight_decay"] = c.weight_decay;
    j["seed"] = c.seed;
    j["tau_scheduler"] = {{"patience", c.tau_scheduler.patience},
                          {"threshold", c.tau_scheduler.threshold},
                          {"factor", c.tau_scheduler.factor},
                          {"min_lr", c.tau_scheduler.min_lr}};
    if (c.fixed_tau) j["fixed_tau"] = *c.fixed_tau;
    else j["fixed_tau"] = nullptr;
    return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.tau_lr = j.value("tau_lr", c.tau_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    if (j.contains("tau_scheduler")) {
        const auto& s = j["tau_scheduler"];
        c.tau_scheduler.patience = s.value("patience", c.tau_scheduler.patience);
        c.tau_scheduler.threshold = s.value("threshold", c.tau_scheduler.threshold);
        c.tau_scheduler.factor = s.value("factor", c.tau_scheduler.factor);
        c.tau_scheduler.min_lr = s.value("min_lr", c.tau_scheduler.min_lr);
    }
    if (j.contains("fixed_tau") && !j["fixed_tau"].is_null())
        c.fixed_tau = j["fixed_tau"].get<double>();
    c.validate();
    return c;
}

Adam::Adam(std::vector<ad::Parameter*> params, double lr_weights, double lr_tau,
           double weight_decay)
    : params_(std::move(params)), lr_weights_(lr_weights), lr_tau_(lr_tau),
      weight_decay_(weight_decay) {
    for (ad::Parameter* p : params_) {
        m_.emplace_back(p->value.rows, p->value.cols);
        v_.emplace_back(p->value.rows, p->value.cols);
    }
}

void Adam::step() {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        ad::Parameter& p = *params_[pi];
        const bool is_tau = p.group == ad::ParamGroup::tau;
        const double lr = is_tau ? lr_tau_ : lr_weights_;
        for (size_t i = 0; i < p.value.size(); ++i) {
            double g = p.grad.v[i];
            m_[pi].v[i] = beta1 * m_[pi].v[i] + (1.0 - beta1) * g;
            v_[pi].v[i] = beta2 * v_[pi].v[i] + (1.0 - beta2) * g * g;
            double m_hat = m_[pi].v[i] / bc1;
            double v_hat = v_[pi].v[i] / bc2;
            double update = m_hat / (std::sqrt(v_hat) + eps);
            if (!is_tau && weight_decay_ > 0.0) update += weight_decay_ * p.value.v[i];
            p.value.v[i] -= lr * update;
        }
    }
}

PlateauScheduler::PlateauScheduler(const TauSchedulerConfig& config, double initial_lr)
    : config_(config), lr_(initial_lr), best_(std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::step(double monitored) {
    if (monitored < best_ - config_.threshold) {
        best_ = monitored;
        num_bad_ = 0;
    } else {
        ++num_bad_;
    }
    if (num_bad_ > config_.patience) {
        lr_ = std::max(lr_ * config_.factor, config_.min_lr);
        num_bad_ = 0;
    }
    return lr_;
}

Metrics compute_metrics(const std::vector<Vec3>& pred, const std::vector<Vec3>& target) {
    if (pred.size() != target.size() || pred.empty())
        throw error("compute_metrics: shape mismatch or empty input");
    const double n = 3.0 * static_cast<double>(pred.size());
    double se = 0.0, ae = 0.0, tsum = 0.0, tsq = 0.0;
    for (size_t i = 0; i < pred.size(); ++i)
        for (int k = 0; k < 3; ++k) {
            double e = pred[i][k] - target[i][k];
            se += e * e;
            ae += std::abs(e);
            tsum += target[i][k];
            tsq += target[i][k] * target[i][k];
        }
    Metrics m;
    m.rmse = std::sqrt(se / n);
    m.mae = ae / n;
    const double sst = tsq - tsum * tsum / n;
    if (sst > 0.0) m.r2 = 1.0 - se / sst;
    return m;
}

double median_thickness(const std::vector<GraphSample>& samples) {
    std::vector<double> t;
    for (const GraphSample& s : samples)
        for (int i = 0; i < s.num_nodes; ++i)
            if (s.thick_valid[i]) t.push_back(s.thick_t[i]);
    if (t.empty()) throw error("median_thickness: no valid thickness pairs in the split");
    std::sort(t.begin(), t.end());
    size_t n = t.size();
    return n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

namespace {

double sample_loss(ModelParams& params, const GraphSample& sample, const ad::Tensor& target,
                   bool with_grad) {
    ForwardResult fr = model_forward(params, sample);
    ad::Tape::NodeId loss = fr.tape.mse(fr.pred_inv, fr.tape.constant(target));
    double value = fr.tape.value(loss).at(0, 0);
    if (with_grad) fr.tape.backward(loss);
    return value;
}

}  // namespace

TrainResult train(const std::vector<GraphSample>& train_set,
                  const std::vector<GraphSample>& val_set, const ModelConfig& model_config,
                  const TrainConfig& train_config) {
    model_config.validate();
    train_config.validate();
    if (train_set.empty()) throw error("train: empty training set");
    if (val_set.empty()) throw error("train: empty validation set");

    std::optional<double> tau0;
    if (model_config.use_thickness) {
        if (train_config.fixed_tau) tau0 = *train_config.fixed_tau;
        else if (model_config.tau_init == TauInitPolicy::median)
            tau0 = median_thickness(train_set);
        else tau0 = model_config.tau_init_value;
    }
    ModelParams params = init_params(model_config, train_config.seed, tau0);

    const bool learn_tau = model_config.use_thickness && !train_config.fixed_tau;
    std::vector<ad::Parameter*> optimized = params.group(ad::ParamGroup::weights);
    if (learn_tau) {
        auto tau_group = params.group(ad::ParamGroup::tau);
        optimized.insert(optimized.end(), tau_group.begin(), tau_group.end());
    }
    Adam opt(optimized, train_config.lr, train_config.effective_tau_lr(),
             train_config.weight_decay);
    PlateauScheduler scheduler(train_config.tau_scheduler, train_config.effective_tau_lr());

    std::vector<ad::Tensor> train_targets, val_targets;
    for (const GraphSample& s : train_set)
        train_targets.push_back(targets_in_processing_frame(s, model_config));
    for (const GraphSample& s : val_set)
        val_targets.push_back(targets_in_processing_frame(s, model_config));

    std::mt19937_64 order_rng(rnd::derive(train_config.seed, "epoch_order"));

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
        rnd::shuffle(order, order_rng);
        double train_loss_sum = 0.0;
        for (int si : order) {
            params.zero_grads();
            train_loss_sum += sample_loss(params, train_set[si], train_targets[si], true);
            opt.step();
        }
        double train_loss = train_loss_sum / static_cast<double>(train_set.size());

        double val_loss_sum = 0.0;
        for (size_t vi = 0; vi < val_set.size(); ++vi)
            val_loss_sum += sample_loss(params, val_set[vi], val_targets[vi], false);
        double val_loss = val_loss_sum / static_cast<double>(val_set.size());

        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            result.aborted_nan = true;
            break;
        }

        double tau_lr = learn_tau ? scheduler.step(val_loss) : 0.0;
        if (learn_tau) opt.set_tau_lr(tau_lr);

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = train_loss;
        entry.val_loss = val_loss;
        entry.tau = model_config.use_thickness ? params.tau_value() : 0.0;
        entry.tau_lr = tau_lr;
        result.log.push_back(entry);

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.best_params = params;
        }
    }
    if (result.best_epoch < 0) {
        // NaN on the very first epoch: keep the initial parameters
        result.best_params = params;
    }
    return result;
}

GraphSample assemble_reposed(const SampleBundle& bundle, const SampleOptions& options,
                             const Mat3& q, const Vec3& g) {
    std::vector<Vec3> verts(bundle.mesh.vertices.size());
    for (size_t i = 0; i < verts.size(); ++i) verts[i] = q.mul(bundle.mesh.vertices[i]) + g;
    Mesh mesh = make_mesh(std::move(verts), bundle.mesh.faces);

    NormalField normals = compute_normals(mesh);
    CanonicalFrame frame = compute_frame(mesh);
    ThicknessPairing pairing = find_thickness_pairs(mesh, normals);

    std::vector<Vec3> targets(bundle.targets.size());
    for (size_t i = 0; i < targets.size(); ++i) targets[i] = q.mul(bundle.targets[i]);

    return assemble_sample(mesh, frame, pairing, bundle.gate, bundle.condition, targets, options);
}

EvalResult evaluate(ModelParams& params, const std::vector<EvalInput>& inputs, EvalMode mode,
                    std::uint64_t seed) {
    EvalResult result;
    double se = 0.0, ae = 0.0, tsum = 0.0, tsq = 0.0;
    long n_comp = 0;

    for (size_t k = 0; k < inputs.size(); ++k) {
        const SampleOptions options = params.config.sample_options();
        GraphSample posed;
        if (mode == EvalMode::ood_rotated) {
            std::mt19937_64 rng(rnd::derive(seed, "ood_pose_" + inputs[k].id));
            Mat3 q = rnd::random_rotation(rng);
            Vec3 g = rnd::random_translation(rng, 10.0);
            posed = assemble_reposed(inputs[k].bundle, options, q, g);
        } else {
            posed = assemble_from_bundle(inputs[k].bundle, options);
        }
        ForwardResult fr = model_forward(params, posed);
        std::vector<Vec3> pred = predictions_to_original(fr.tape.value(fr.pred_inv), posed,
                                                         params.config);
        SampleMetrics sm;
        sm.id = inputs[k].id;
        sm.metrics = compute_metrics(pred, posed.targets);
        result.per_sample.push_back(sm);

        for (size_t i = 0; i < pred.size(); ++i)
            for (int c = 0; c < 3; ++c) {
                double e = pred[i][c] - posed.targets[i][c];
                se += e * e;
                ae += std::abs(e);
                tsum += posed.targets[i][c];
                tsq += posed.targets[i][c] * posed.targets[i][c];
                ++n_comp;
            }
    }
    if (n_comp > 0) {
        result.aggregate.rmse = std::sqrt(se / n_comp);
        result.aggregate.mae = ae / n_comp;
        double sst = tsq - tsum * tsum / n_comp;
        if (sst > 0.0) result.aggregate.r2 = 1.0 - se / sst;
    }
    return result;
}

std::vector<EvalInput> load_eval_split(const std::string& dataset_dir,
                                       const DatasetManifest& manifest, Split split) {
    std::vector<EvalInput> out;
    for (const SampleRef& ref : refs_for_split(manifest, split))
        out.push_back({ref.id, read_bundle(dataset_dir + "/" + ref.dir)});
    return out;
}

Prediction predict_mesh(ModelParams& params, const Mesh& mesh, int gate,
                        const std::vector<double>& condition) {
    NormalField normals = compute_normals(mesh);
    CanonicalFrame frame = compute_frame(mesh);
    ThicknessPairing pairing = find_thickness_pairs(mesh, normals);
    GraphSample sample = assemble_sample(mesh, frame, pairing, gate, condition, {},
                                         params.config.sample_options());
    ForwardResult fr = model_forward(params, sample);
    const ad::Tensor& p = fr.tape.value(fr.pred_inv);
    Prediction out;
    out.invariant.resize(p.rows);
    for (int i = 0; i < p.rows; ++i) out.invariant[i] = {p.at(i, 0), p.at(i, 1), p.at(i, 2)};
    out.original = predictions_to_original(p, sample, params.config);
    return out;
}

std::vector<TauSweepRow> tau_sweep(const std::vector<GraphSample>& train_set,
                                   const std::vector<GraphSample>& val_set,
                                   const std::vector<EvalInput>& test_set,
                                   const ModelConfig& model_config,
                                   const TrainConfig& train_config,
                                   const std::vector<double>& grid) {
    if (grid.empty()) throw error("tau_sweep: empty grid");
    std::vector<TauSweepRow> rows;
    for (double tau : grid) {
        TrainConfig tc = train_config;
        tc.fixed_tau = tau;
        TrainResult tr = train(train_set, val_set, model_config, tc);
        TauSweepRow row;
        row.tau = tau;
        row.best_val_loss = tr.best_val_loss;
        row.test_metrics = evaluate(tr.best_params, test_set, EvalMode::in_dist, tc.seed).aggregate;
        rows.push_back(row);
    }
    return rows;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string epoch_log_to_csv(const std::vector<EpochLog>& log) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss,tau,tau_lr\n";
    for (const EpochLog& e : log)
        out << e.epoch << "," << format_double(e.train_loss) << "," << format_double(e.val_loss)
            << "," << format_double(e.tau) << "," << format_double(e.tau_lr) << "\n";
    return out.str();
}

namespace {

std::string metrics_fields(const Metrics& m) {
    std::string r2 = m.r2 ? format_double(*m.r2) : "nan";
    return format_double(m.rmse) + "," + format_double(m.mae) + "," + r2;
}

}  // namespace

std::string eval_result_to_csv(const EvalResult& result) {
    std::ostringstream out;
    out << "sample_id,rmse,mae,r2\n";
    for (const SampleMetrics& s : result.per_sample)
        out << s.id << "," << metrics_fields(s.metrics) << "\n";
    out << "aggregate," << metrics_fields(result.aggregate) << "\n";
    return out.str();
}

std::string tau_sweep_to_csv(const std::vector<TauSweepRow>& rows) {
    std::ostringstream out;
    out << "tau,rmse,mae,r2,best_val_loss\n";
    for (const TauSweepRow& r : rows)
        out << format_double(r.tau) << "," << metrics_fields(r.test_metrics) << ","
            << format_double(r.best_val_loss) << "\n";
    return out.str();
}

std::string config_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace temnn
