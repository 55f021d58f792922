#pragma once

#include <string>
#include <vector>

#include "masa/data.hpp"
#include "masa/metrics.hpp"

namespace masa {

enum class SplitStrategy { loso, kfold };
std::string to_string(SplitStrategy s);
SplitStrategy split_from_string(const std::string& s);

struct ExperimentConfig {
    TaskKind task = TaskKind::cer;
    SplitStrategy split = SplitStrategy::loso;
    int kfold_k = 10;
    double val_fraction = 0.2;
    ValGranularity val_granularity = ValGranularity::segment;
    ModelConfig model;
    TrainConfig train;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out_dir;  // empty: keep everything in memory

    nlohmann::json to_json() const;
};

struct FoldOutcome {
    std::string id;
    RunRecord record;
    MetricRow row;
};

struct ExperimentResult {
    MetricsReport report;
    std::vector<FoldOutcome> folds;
};

// Stitched per-index prediction over one trial: every test sequence votes on
// the label indices it covers and overlaps are averaged.
struct TrialPrediction {
    std::vector<double> prediction;
    std::vector<double> label;
};
TrialPrediction stitch_trial_prediction(const ModelConfig& cfg, const ModelParams& params,
                                        const TrialFeatures& trial, int seq_len, int seq_step);

// Runs every fold of the chosen protocol. Folds execute as independent
// workers bounded by `jobs`; per-fold seeds derive from (seed, fold index),
// so results are identical for any worker count.
ExperimentResult run_experiment(const FeatureStore& store, const ExperimentConfig& cfg);

struct PreprocessConfig {
    BandSet band_set;
    double window_s = 2.0;
    double step_s = 0.25;
    int seq_len = 96;
    int seq_step = 32;
    WelchConfig welch;
    bool average_ref = true;
};

// Ingest every manifest trial, apply the reference/segmentation/Welch/rPSD
// pipeline, and assemble the in-memory feature store.
FeatureStore preprocess_dataset(const DatasetManifest& manifest, const std::string& base_dir,
                                const PreprocessConfig& cfg);

}  // namespace masa
