#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "masa/signal.hpp"
#include "masa/training.hpp"

#include <json.hpp>

namespace masa {

struct TrialEntry {
    std::string subject_id;
    std::string trial_id;
    std::string path;  // relative to the manifest directory unless absolute
    double fs = 0.0;
    int channels = 0;
    std::int64_t samples = 0;
    LabelKind label_kind = LabelKind::continuous;
};

struct DatasetManifest {
    std::string name;
    BandSet band_set;
    double label_rate = 0.0;
    std::vector<TrialEntry> trials;

    void validate() const;
    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

// Trial container: magic, fixed header (fs, channels, samples, label kind,
// label rate, label count, class id, payload hash), float32 samples
// channel-major, then float32 labels. Everything little-endian.
void save_trial(const EegTrial& trial, const std::string& path);
EegTrial load_trial(const TrialEntry& entry, const std::string& base_dir);

// ---- split planning -------------------------------------------------------

enum class ValGranularity { segment, trial };

struct FoldPlan {
    std::string id;
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

struct SplitPlan {
    std::string strategy;
    std::uint64_t seed = 0;
    std::vector<FoldPlan> folds;
};

// Leave-one-subject-out over a sample table: one fold per subject, the
// remaining subjects' samples shuffled and split (1-val_fraction)/val_fraction.
// Trial granularity keeps whole trials on one side of the train/val split.
SplitPlan loso_splits(const std::vector<std::string>& sample_subject,
                      const std::vector<std::string>& sample_trial, double val_fraction,
                      std::uint64_t seed, ValGranularity granularity = ValGranularity::segment);

// Subject-specific trial-wise k-fold: per subject, trials are partitioned
// into k folds; segments inherit their trial's assignment, so no trial ever
// straddles the train/test boundary. Train/val split is trial-level.
SplitPlan trialwise_kfold(const std::vector<std::string>& sample_subject,
                          const std::vector<std::string>& sample_trial, int k,
                          double val_fraction, std::uint64_t seed);

// ---- synthetic data -------------------------------------------------------

struct SynthConfig {
    int num_subjects = 8;
    int trials_per_subject = 10;
    std::uint64_t seed = 0;
    int channels = 32;
    double fs = 256.0;
    double duration_s = 60.0;
    double label_rate = 4.0;
};

// Continuous-task generator: a smooth latent valence signal in [-1, 1]
// modulates the alpha-band amplitude of a fixed channel subset on top of
// pink noise; labels are the latent sampled at label_rate.
DatasetManifest synth_cer(const SynthConfig& cfg, const std::string& out_dir);

// Discrete-task generator: class 1 trials carry elevated alpha power on
// frontal channels, class 0 elevated beta power on posterior channels.
DatasetManifest synth_dec(const SynthConfig& cfg, const std::string& out_dir);

// Channel groups the generators use; exposed so oracles can check them.
const std::vector<int>& synth_cer_modulated_channels();
const std::vector<int>& synth_dec_frontal_channels();
const std::vector<int>& synth_dec_posterior_channels();

// ---- preprocessed feature store --------------------------------------------

struct FeatureStore {
    std::string dataset_name;
    BandSet band_set;
    double window_s = 2.0;
    double step_s = 0.25;
    int seq_len = 96;
    int seq_step = 32;
    WelchConfig welch;
    std::vector<TrialFeatures> trials;
};

void save_feature_store(const FeatureStore& store, const std::string& dir);
FeatureStore load_feature_store(const std::string& dir);

// Slices every trial into training samples per the store's sequence plan.
std::vector<TrainSample> build_samples(const FeatureStore& store);

}  // namespace masa
