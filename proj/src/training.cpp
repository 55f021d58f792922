#include "masa/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "masa/metrics.hpp"

namespace masa {

std::string to_string(TaskKind t) { return t == TaskKind::cer ? "cer" : "dec"; }
TaskKind task_from_string(const std::string& s) {
    if (s == "cer") return TaskKind::cer;
    if (s == "dec") return TaskKind::dec;
    throw ConfigError("unknown task '" + s + "' (expected cer or dec)");
}

TrainConfig TrainConfig::cer_defaults() {
    TrainConfig c;
    c.task = TaskKind::cer;
    c.lr = 1e-4;
    c.weight_decay = 1e-4;
    c.batch_size = 2;
    c.max_epochs = 15;
    c.early_stop_patience = 10;
    c.stage2.enabled = false;
    return c;
}

TrainConfig TrainConfig::dec_defaults() {
    TrainConfig c;
    c.task = TaskKind::dec;
    c.lr = 1e-3;
    c.weight_decay = 1e-4;
    c.batch_size = 32;
    c.max_epochs = 100;
    c.early_stop_patience = 10;
    c.label_smoothing = 0.1;
    c.stage2.enabled = true;
    c.stage2.max_epochs = 50;
    return c;
}

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw ConfigError("label smoothing factor must lie in [0, 1)");
    if (scheduler.patience < 1 || early_stop_patience < 1)
        throw ConfigError("patience values must be at least 1");
    if (batch_size < 1 || max_epochs < 1) throw ConfigError("batch size and epochs must be positive");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"task", to_string(task)},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"early_stop_patience", early_stop_patience},
            {"scheduler", {{"patience", scheduler.patience}, {"factor", scheduler.factor}}},
            {"label_smoothing", label_smoothing},
            {"stage2", {{"enabled", stage2.enabled}, {"max_epochs", stage2.max_epochs}}},
            {"seed", seed}};
}

nlohmann::json RunRecord::to_json() const {
    nlohmann::json ep = nlohmann::json::array();
    for (const EpochStats& e : epochs)
        ep.push_back({{"train_loss", e.train_loss}, {"val_metric", e.val_metric}, {"lr", e.lr}});
    return {{"epochs", ep},
            {"best_epoch", best_epoch},
            {"best_val_metric", best_val_metric},
            {"stage2_criterion", stage2_criterion},
            {"stage2_losses", stage2_losses},
            {"stage2_epochs_run", stage2_epochs_run},
            {"seed", seed},
            {"config", config_snapshot},
            {"weights_path", weights_path}};
}

std::string RunRecord::trace_csv() const {
    std::string out = "epoch,train_loss,val_metric,lr\n";
    char buf[128];
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", i, epochs[i].train_loss,
                      epochs[i].val_metric, epochs[i].lr);
        out += buf;
    }
    return out;
}

double PlateauScheduler::step(double metric) {
    if (metric > best_) {
        best_ = metric;
        stale_ = 0;
    } else if (++stale_ > cfg_.patience) {
        lr_ *= cfg_.factor;
        stale_ = 0;
    }
    return lr_;
}

int ccc_loss(Tape& tape, const std::vector<int>& pred_ids,
             const std::vector<const std::vector<double>*>& targets) {
    if (pred_ids.size() != targets.size())
        throw DimensionError("ccc_loss: batch size mismatch");
    std::vector<int> per_sample;
    per_sample.reserve(pred_ids.size());
    for (std::size_t i = 0; i < pred_ids.size(); ++i)
        per_sample.push_back(tape.ccc_loss_vs(pred_ids[i], *targets[i]));
    return tape.mean_scalars(per_sample);
}

int cross_entropy_smoothed(Tape& tape, const std::vector<int>& logit_ids,
                           const std::vector<int>& labels, double eps) {
    if (logit_ids.size() != labels.size())
        throw DimensionError("cross_entropy_smoothed: batch size mismatch");
    std::vector<int> per_sample;
    per_sample.reserve(logit_ids.size());
    for (std::size_t i = 0; i < logit_ids.size(); ++i)
        per_sample.push_back(tape.cross_entropy_smoothed(logit_ids[i], labels[i], eps));
    return tape.mean_scalars(per_sample);
}

namespace {

bool has_label_variance(const std::vector<double>& y) {
    for (std::size_t i = 1; i < y.size(); ++i)
        if (y[i] != y[0]) return true;
    return false;
}

std::vector<Tensor*> param_pointers(ModelParams& params) {
    std::vector<Tensor*> out;
    out.reserve(params.order.size());
    for (const std::string& name : params.order) out.push_back(&params.at(name));
    return out;
}

void shuffle_indices(std::vector<std::size_t>& idx, Pcg32& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
}

struct Snapshot {
    std::vector<std::vector<double>> values;
    void take(const ModelParams& params) {
        values.clear();
        for (const std::string& name : params.order) values.push_back(params.at(name).values);
    }
    void restore(ModelParams& params) const {
        std::size_t i = 0;
        for (const std::string& name : params.order) params.at(name).values = values[i++];
    }
};

// Shared epoch driver: one pass over `order`, batched, returning the mean
// batch loss. `training` toggles dropout and whether updates are applied.
double run_epoch(const std::vector<TrainSample>& data, const std::vector<std::size_t>& order,
                 const ModelConfig& mcfg, ModelParams& params, const TrainConfig& cfg,
                 AdamState* adam, double lr, std::uint64_t epoch_seed, bool training) {
    std::vector<Tensor*> ptrs = param_pointers(params);
    double loss_acc = 0.0;
    int batches = 0;
    const std::size_t n = order.size();
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
        Tape tape;
        ModelRun run = bind_params(tape, mcfg, params);
        run.training = training;
        run.dropout_seed = derive_seed(epoch_seed, {static_cast<std::uint64_t>(batches)});

        std::vector<int> outputs;
        std::vector<const std::vector<double>*> targets;
        std::vector<int> class_labels;
        for (std::size_t i = start; i < stop; ++i) {
            const TrainSample& sample = data[order[i]];
            if (cfg.task == TaskKind::cer && !has_label_variance(sample.labels)) {
                static bool warned = false;
                if (!warned) {
                    std::cerr << "warning: skipping sample(s) with constant label sequence\n";
                    warned = true;
                }
                continue;
            }
            const int x = tape.push(sample.x);
            if (cfg.task == TaskKind::cer) {
                outputs.push_back(model_regression(run, x));
                targets.push_back(&sample.labels);
            } else {
                outputs.push_back(model_logits(run, x));
                class_labels.push_back(sample.class_label);
            }
        }
        if (outputs.empty()) continue;
        const int loss = cfg.task == TaskKind::cer
                             ? ccc_loss(tape, outputs, targets)
                             : cross_entropy_smoothed(tape, outputs, class_labels, cfg.label_smoothing);
        loss_acc += tape.val(loss).values[0];
        ++batches;
        if (adam != nullptr) {
            tape.backward(loss);
            std::vector<const std::vector<double>*> grads;
            grads.reserve(params.order.size());
            for (const std::string& name : params.order) grads.push_back(&tape.grad(run.leaf.at(name)));
            AdamConfig acfg;
            acfg.lr = lr;
            acfg.weight_decay = cfg.weight_decay;
            adam_step(ptrs, grads, *adam, acfg);
        }
    }
    return batches == 0 ? 0.0 : loss_acc / batches;
}

double validation_metric(const std::vector<TrainSample>& val, const ModelConfig& mcfg,
                         const ModelParams& params, TaskKind task) {
    return task == TaskKind::cer ? mean_sample_ccc(mcfg, params, val)
                                 : sample_accuracy(mcfg, params, val);
}

RunRecord train_loop(const std::vector<TrainSample>& train, const std::vector<TrainSample>& val,
                     const ModelConfig& mcfg, ModelParams& params, const TrainConfig& cfg) {
    if (train.empty()) throw ConfigError("training set is empty");
    if (val.empty()) throw ConfigError("validation set is empty");
    cfg.validate();

    RunRecord rec;
    rec.seed = cfg.seed;
    rec.config_snapshot = {{"train", cfg.to_json()}, {"model", mcfg.to_json()}};

    std::vector<Tensor*> ptrs = param_pointers(params);
    AdamState adam = make_adam_state(ptrs);
    PlateauScheduler sched(cfg.lr, cfg.scheduler);
    Snapshot best;
    best.take(params);
    int stale = 0;

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Pcg32 shuffle_rng(derive_seed(cfg.seed, {seed_tag::shuffle, static_cast<std::uint64_t>(epoch)}));
        shuffle_indices(order, shuffle_rng);
        const double lr = sched.lr();
        const std::uint64_t epoch_seed =
            derive_seed(cfg.seed, {seed_tag::dropout, static_cast<std::uint64_t>(epoch)});
        const double train_loss = run_epoch(train, order, mcfg, params, cfg, &adam, lr, epoch_seed, true);
        const double val_metric = validation_metric(val, mcfg, params, cfg.task);
        rec.epochs.push_back({train_loss, val_metric, lr});
        sched.step(val_metric);
        if (rec.best_epoch < 0 || val_metric > rec.best_val_metric) {
            rec.best_epoch = epoch;
            rec.best_val_metric = val_metric;
            best.take(params);
            stale = 0;
        } else if (++stale >= cfg.early_stop_patience) {
            break;
        }
    }
    best.restore(params);
    rec.stage2_criterion = rec.epochs[static_cast<std::size_t>(rec.best_epoch)].train_loss;
    return rec;
}

}  // namespace

std::vector<double> predict_regression(const ModelConfig& cfg, const ModelParams& params,
                                       const Tensor& x) {
    Tape tape;
    ModelRun run = bind_params(tape, cfg, params);
    const int y = model_regression(run, tape.push(x));
    return tape.val(y).values;
}

int predict_class(const ModelConfig& cfg, const ModelParams& params, const Tensor& x) {
    Tape tape;
    ModelRun run = bind_params(tape, cfg, params);
    const int logits = model_logits(run, tape.push(x));
    const auto& v = tape.val(logits).values;
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double mean_sample_ccc(const ModelConfig& cfg, const ModelParams& params,
                       const std::vector<TrainSample>& samples) {
    if (samples.empty()) throw ConfigError("no samples to evaluate");
    double acc = 0.0;
    for (const TrainSample& s : samples) {
        const std::vector<double> pred = predict_regression(cfg, params, s.x);
        acc += ccc(pred, s.labels);
    }
    return acc / static_cast<double>(samples.size());
}

double sample_accuracy(const ModelConfig& cfg, const ModelParams& params,
                       const std::vector<TrainSample>& samples) {
    if (samples.empty()) throw ConfigError("no samples to evaluate");
    std::size_t hits = 0;
    for (const TrainSample& s : samples)
        if (predict_class(cfg, params, s.x) == s.class_label) ++hits;
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

RunRecord train_cer(const std::vector<TrainSample>& train, const std::vector<TrainSample>& val,
                    const ModelConfig& mcfg, ModelParams& params, const TrainConfig& cfg) {
    if (cfg.task != TaskKind::cer) throw ConfigError("train_cer called with a non-CER config");
    return train_loop(train, val, mcfg, params, cfg);
}

RunRecord train_dec(const std::vector<TrainSample>& train, const std::vector<TrainSample>& val,
                    const ModelConfig& mcfg, ModelParams& params, const TrainConfig& cfg) {
    if (cfg.task != TaskKind::dec) throw ConfigError("train_dec called with a non-DEC config");
    RunRecord rec = train_loop(train, val, mcfg, params, cfg);
    if (!cfg.stage2.enabled) return rec;

    // Stage II: retrain the retained weights on train+val until the training
    // loss reaches the criterion recorded at the best validation epoch.
    std::vector<TrainSample> combined = train;
    combined.insert(combined.end(), val.begin(), val.end());
    std::vector<std::size_t> order(combined.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<Tensor*> ptrs = param_pointers(params);
    AdamState adam = make_adam_state(ptrs);

    // Epoch 0 is a pure evaluation: if the combined set already meets the
    // criterion, no update is applied at all.
    double loss = run_epoch(combined, order, mcfg, params, cfg, nullptr, 0.0, 0, false);
    rec.stage2_losses.push_back(loss);
    if (loss <= rec.stage2_criterion) return rec;

    for (int epoch = 0; epoch < cfg.stage2.max_epochs; ++epoch) {
        Pcg32 shuffle_rng(derive_seed(cfg.seed, {seed_tag::stage2, static_cast<std::uint64_t>(epoch)}));
        shuffle_indices(order, shuffle_rng);
        const std::uint64_t epoch_seed = derive_seed(
            cfg.seed, {seed_tag::stage2, seed_tag::dropout, static_cast<std::uint64_t>(epoch)});
        loss = run_epoch(combined, order, mcfg, params, cfg, &adam, cfg.lr, epoch_seed, true);
        rec.stage2_losses.push_back(loss);
        rec.stage2_epochs_run = epoch + 1;
        if (loss <= rec.stage2_criterion) break;
    }
    return rec;
}

}  // namespace masa
