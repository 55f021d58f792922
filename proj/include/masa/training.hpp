#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "masa/adam.hpp"
#include "masa/model.hpp"

namespace masa {

enum class TaskKind { cer, dec };
std::string to_string(TaskKind t);
TaskKind task_from_string(const std::string& s);

struct SchedulerConfig {
    int patience = 5;
    double factor = 0.5;
};

struct Stage2Config {
    bool enabled = true;
    int max_epochs = 50;
};

struct TrainConfig {
    TaskKind task = TaskKind::cer;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    int batch_size = 2;
    int max_epochs = 15;
    int early_stop_patience = 10;
    SchedulerConfig scheduler;
    double label_smoothing = 0.1;  // DEC only
    Stage2Config stage2;           // DEC only
    std::uint64_t seed = 0;

    static TrainConfig cer_defaults();
    static TrainConfig dec_defaults();
    void validate() const;
    nlohmann::json to_json() const;
};

// One prepared training sample: rPSD sequence plus either the aligned label
// slice (continuous) or the trial's class id (discrete).
struct TrainSample {
    Tensor x;  // (1, C*f, t)
    std::vector<double> labels;
    int class_label = -1;
    std::string subject_id;
    std::string trial_id;
    int start_index = 0;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_metric = 0.0;
    double lr = 0.0;
};

struct RunRecord {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_metric = 0.0;
    double stage2_criterion = 0.0;  // best epoch's training loss (DEC)
    std::vector<double> stage2_losses;
    int stage2_epochs_run = 0;
    std::uint64_t seed = 0;
    nlohmann::json config_snapshot;
    std::string weights_path;

    nlohmann::json to_json() const;
    std::string trace_csv() const;
};

// Plateau scheduler: the learning rate shrinks by `factor` once the monitored
// metric has failed to improve (strict >) for more than `patience` epochs.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, const SchedulerConfig& cfg) : lr_(lr), cfg_(cfg) {}
    double step(double metric);
    double lr() const { return lr_; }

private:
    double lr_;
    SchedulerConfig cfg_;
    double best_ = -1e300;
    int stale_ = 0;
};

// Batched 1-CCC over tape predictions, averaged across the batch. Samples
// with a zero-variance label sequence are skipped (the mask says which).
int ccc_loss(Tape& tape, const std::vector<int>& pred_ids,
             const std::vector<const std::vector<double>*>& targets);

int cross_entropy_smoothed(Tape& tape, const std::vector<int>& logit_ids,
                           const std::vector<int>& labels, double eps);

// Evaluation helpers (eval mode, no tape retained by the caller).
std::vector<double> predict_regression(const ModelConfig& cfg, const ModelParams& params,
                                       const Tensor& x);
int predict_class(const ModelConfig& cfg, const ModelParams& params, const Tensor& x);
double mean_sample_ccc(const ModelConfig& cfg, const ModelParams& params,
                       const std::vector<TrainSample>& samples);
double sample_accuracy(const ModelConfig& cfg, const ModelParams& params,
                       const std::vector<TrainSample>& samples);

// Full CER training loop: Adam with coupled weight decay, plateau scheduler
// and early stopping on validation CCC; the best-validation weights are
// retained in `params` on return.
RunRecord train_cer(const std::vector<TrainSample>& train, const std::vector<TrainSample>& val,
                    const ModelConfig& mcfg, ModelParams& params, const TrainConfig& cfg);

// Two-stage DEC training: stage I selects the best-validation-ACC weights and
// records that epoch's training loss; stage II retrains on train+val until
// the loss reaches the recorded criterion.
RunRecord train_dec(const std::vector<TrainSample>& train, const std::vector<TrainSample>& val,
                    const ModelConfig& mcfg, ModelParams& params, const TrainConfig& cfg);

}  // namespace masa
