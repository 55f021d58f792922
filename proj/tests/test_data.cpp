#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "masa/binio.hpp"
#include "masa/data.hpp"
#include "masa/harness.hpp"
#include "masa/manifest.hpp"

using namespace masa;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

EegTrial tiny_trial() {
    EegTrial t;
    t.subject_id = "s0";
    t.trial_id = "s0_t0";
    t.fs = 8.0;
    t.channels = 2;
    t.samples = 16;
    t.data.resize(32);
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = 0.125 * static_cast<double>(i);
    t.label_kind = LabelKind::continuous;
    t.label_rate = 4.0;
    t.cont_label = {0, 1, 2, 3, 4, 5, 6, 7};
    return t;
}

}  // namespace

TEST_CASE("trial file round-trip and corruption detection") {
    TempDir dir("masa_trial_io");
    const EegTrial t = tiny_trial();
    const std::string p1 = (dir.path / "a.trl").string();
    save_trial(t, p1);

    TrialEntry entry{"s0", "s0_t0", "a.trl", 8.0, 2, 16, LabelKind::continuous};
    const EegTrial back = load_trial(entry, dir.path.string());
    CHECK(back.data == t.data);  // float32-exact payload survives unchanged
    CHECK(back.cont_label == t.cont_label);

    // Writing the loaded trial again reproduces the file byte-for-byte.
    const std::string p2 = (dir.path / "b.trl").string();
    save_trial(back, p2);
    CHECK(binio::file_hash(p1) == binio::file_hash(p2));

    // Truncated file.
    std::ofstream trunc(dir.path / "c.trl", std::ios::binary);
    std::ifstream src(p1, std::ios::binary);
    std::vector<char> head(64);
    src.read(head.data(), 64);
    trunc.write(head.data(), 64);
    trunc.close();
    TrialEntry bad_entry = entry;
    bad_entry.path = "c.trl";
    CHECK_THROWS_AS((void)load_trial(bad_entry, dir.path.string()), IngestionError);

    // Manifest disagreement names the trial.
    TrialEntry wrong = entry;
    wrong.channels = 30;
    CHECK_THROWS_WITH_AS((void)load_trial(wrong, dir.path.string()),
                         doctest::Contains("s0_t0"), IngestionError);
}

TEST_CASE("loso split plan properties") {
    std::vector<std::string> subject, trial;
    for (int s = 0; s < 24; ++s)
        for (int t = 0; t < 3; ++t)
            for (int seg = 0; seg < 4; ++seg) {
                subject.push_back("s" + std::to_string(s));
                trial.push_back("s" + std::to_string(s) + "_t" + std::to_string(t));
            }

    const SplitPlan plan = loso_splits(subject, trial, 0.2, 42);
    CHECK(plan.folds.size() == 24);

    std::set<int> tested;
    for (const FoldPlan& f : plan.folds) {
        // Disjointness and no subject leakage.
        std::set<int> seen;
        for (int i : f.train) CHECK(seen.insert(i).second);
        for (int i : f.val) CHECK(seen.insert(i).second);
        for (int i : f.test) {
            CHECK(seen.insert(i).second);
            CHECK(subject[static_cast<std::size_t>(i)] == f.id);
            tested.insert(i);
        }
        for (int i : f.train) CHECK(subject[static_cast<std::size_t>(i)] != f.id);
        for (int i : f.val) CHECK(subject[static_cast<std::size_t>(i)] != f.id);
        // 80/20 split of the remaining samples.
        CHECK(f.train.size() == 221);  // round(0.8 * 276)
        CHECK(f.val.size() == 55);
    }
    // Coverage: every sample is tested exactly once across folds.
    CHECK(tested.size() == subject.size());

    const SplitPlan again = loso_splits(subject, trial, 0.2, 42);
    for (std::size_t i = 0; i < plan.folds.size(); ++i) {
        CHECK(plan.folds[i].train == again.folds[i].train);
        CHECK(plan.folds[i].val == again.folds[i].val);
    }

    // Trial-granularity validation keeps trials intact.
    const SplitPlan tplan = loso_splits(subject, trial, 0.2, 43, ValGranularity::trial);
    for (const FoldPlan& f : tplan.folds) {
        std::set<std::string> val_trials, train_trials;
        for (int i : f.val) val_trials.insert(trial[static_cast<std::size_t>(i)]);
        for (int i : f.train) train_trials.insert(trial[static_cast<std::size_t>(i)]);
        for (const std::string& t : val_trials) CHECK(train_trials.count(t) == 0);
    }

    std::vector<std::string> one(8, "s0");
    CHECK_THROWS_AS((void)loso_splits(one, one, 0.2, 1), ConfigError);
}

TEST_CASE("trial-wise k-fold split plan properties") {
    std::vector<std::string> subject, trial;
    for (int t = 0; t < 40; ++t)
        for (int seg = 0; seg < 5; ++seg) {
            subject.push_back("s0");
            trial.push_back("t" + std::to_string(t));
        }

    const SplitPlan plan = trialwise_kfold(subject, trial, 10, 0.2, 7);
    CHECK(plan.folds.size() == 10);

    std::set<std::string> tested_trials;
    for (const FoldPlan& f : plan.folds) {
        std::set<std::string> test_trials, rest_trials;
        for (int i : f.test) test_trials.insert(trial[static_cast<std::size_t>(i)]);
        for (int i : f.train) rest_trials.insert(trial[static_cast<std::size_t>(i)]);
        for (int i : f.val) rest_trials.insert(trial[static_cast<std::size_t>(i)]);
        CHECK(test_trials.size() == 4);  // 40 trials over 10 folds
        for (const std::string& t : test_trials) {
            CHECK(rest_trials.count(t) == 0);  // no segment leakage
            tested_trials.insert(t);
        }
        CHECK(f.train.size() + f.val.size() + f.test.size() == 200);
    }
    CHECK(tested_trials.size() == 40);

    std::vector<std::string> few_subject(6, "s0"), few_trial;
    for (int i = 0; i < 6; ++i) few_trial.push_back("t" + std::to_string(i));
    CHECK_THROWS_AS((void)trialwise_kfold(few_subject, few_trial, 10, 0.2, 1), ConfigError);
}

TEST_CASE("synthetic continuous dataset") {
    TempDir dir("masa_synth_cer");
    SynthConfig cfg;
    cfg.num_subjects = 2;
    cfg.trials_per_subject = 2;
    cfg.duration_s = 20.0;
    cfg.seed = 99;
    const DatasetManifest m = synth_cer(cfg, dir.path.string());
    CHECK(m.trials.size() == 4);

    // Labels stay inside [-1, 1].
    for (const TrialEntry& e : m.trials) {
        const EegTrial t = load_trial(e, dir.path.string());
        for (double v : t.cont_label) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }

    // The alpha-band rPSD of a modulated channel tracks the latent label.
    PreprocessConfig pcfg;
    pcfg.band_set = m.band_set;
    const FeatureStore store = preprocess_dataset(m, dir.path.string(), pcfg);
    const int ch = synth_cer_modulated_channels().front();
    const TrialFeatures& f = store.trials.front();
    std::vector<double> alpha_series(static_cast<std::size_t>(f.n_vectors));
    for (int i = 0; i < f.n_vectors; ++i)
        alpha_series[static_cast<std::size_t>(i)] = f.vec(i)[ch * f.bands + 2];  // (8,12) band
    const double corr = pcc(alpha_series, f.labels);
    INFO("alpha/label pcc = ", corr);
    CHECK(std::abs(corr) > 0.5);

    // Regeneration under the same seed is file-identical.
    TempDir dir2("masa_synth_cer2");
    (void)synth_cer(cfg, dir2.path.string());
    for (const TrialEntry& e : m.trials)
        CHECK(binio::file_hash((dir.path / e.path).string()) ==
              binio::file_hash((dir2.path / e.path).string()));
}

TEST_CASE("synthetic discrete dataset") {
    TempDir dir("masa_synth_dec");
    SynthConfig cfg;
    cfg.num_subjects = 2;
    cfg.trials_per_subject = 10;
    cfg.duration_s = 12.0;
    cfg.seed = 123;
    const DatasetManifest m = synth_dec(cfg, dir.path.string());

    // Exact class balance.
    int ones = 0;
    std::vector<EegTrial> trials;
    for (const TrialEntry& e : m.trials) {
        trials.push_back(load_trial(e, dir.path.string()));
        ones += trials.back().class_label;
    }
    CHECK(ones * 2 == static_cast<int>(m.trials.size()));

    // Band-power threshold oracle: frontal alpha mass vs posterior beta mass.
    PreprocessConfig pcfg;
    pcfg.band_set = m.band_set;
    pcfg.seq_len = 25;
    pcfg.seq_step = 16;
    const FeatureStore store = preprocess_dataset(m, dir.path.string(), pcfg);
    int correct = 0;
    for (std::size_t i = 0; i < store.trials.size(); ++i) {
        const TrialFeatures& f = store.trials[i];
        double frontal_alpha = 0.0, posterior_beta = 0.0;
        for (int v = 0; v < f.n_vectors; ++v) {
            for (int c : synth_dec_frontal_channels()) frontal_alpha += f.vec(v)[c * f.bands + 1];
            for (int c : synth_dec_posterior_channels()) posterior_beta += f.vec(v)[c * f.bands + 3];
        }
        const int predicted = frontal_alpha > posterior_beta ? 1 : 0;
        if (predicted == trials[i].class_label) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(store.trials.size()) >= 0.9);

    // Determinism under seed.
    TempDir dir2("masa_synth_dec2");
    (void)synth_dec(cfg, dir2.path.string());
    CHECK(binio::file_hash((dir.path / m.trials[0].path).string()) ==
          binio::file_hash((dir2.path / m.trials[0].path).string()));
}

TEST_CASE("feature store round-trip and sample construction") {
    TempDir dir("masa_store");
    SynthConfig cfg;
    cfg.num_subjects = 1;
    cfg.trials_per_subject = 2;
    cfg.duration_s = 20.0;
    cfg.seed = 5;
    const DatasetManifest m = synth_cer(cfg, dir.path.string());
    PreprocessConfig pcfg;
    pcfg.band_set = m.band_set;
    pcfg.seq_len = 24;
    pcfg.seq_step = 8;
    const FeatureStore store = preprocess_dataset(m, dir.path.string(), pcfg);
    CHECK(store.trials.size() == 2);
    CHECK(store.trials[0].n_vectors == 73);  // (20 - 2) / 0.25 + 1

    const std::string sdir = (dir.path / "features").string();
    save_feature_store(store, sdir);
    const FeatureStore back = load_feature_store(sdir);
    REQUIRE(back.trials.size() == store.trials.size());
    for (std::size_t i = 0; i < back.trials.size(); ++i) {
        CHECK(back.trials[i].features == store.trials[i].features);
        CHECK(back.trials[i].labels == store.trials[i].labels);
    }

    const std::vector<TrainSample> samples = build_samples(back);
    CHECK(samples.size() == 2 * 7);  // (73 - 24) / 8 + 1 per trial
    // The label slice shares the feature indices exactly.
    const TrainSample& s = samples[1];
    const TrialFeatures& tf = back.trials[0];
    for (int j = 0; j < 24; ++j) {
        CHECK(s.labels[static_cast<std::size_t>(j)] ==
              tf.labels[static_cast<std::size_t>(s.start_index + j)]);
        for (int d = 0; d < tf.channels * tf.bands; ++d)
            CHECK(s.x.values[static_cast<std::size_t>(d) * 24 + j] ==
                  tf.vec(s.start_index + j)[d]);
    }
}
