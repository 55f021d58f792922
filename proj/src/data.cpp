#include "masa/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "masa/binio.hpp"

namespace fs = std::filesystem;

namespace masa {

void DatasetManifest::validate() const {
    band_set.validate();
    std::set<std::pair<std::string, std::string>> seen;
    for (const TrialEntry& t : trials) {
        if (!seen.insert({t.subject_id, t.trial_id}).second)
            throw IngestionError("duplicate (subject, trial) pair " + t.subject_id + "/" + t.trial_id);
        if (t.channels != trials.front().channels)
            throw IngestionError("trial " + t.trial_id + " channel count differs from the rest");
    }
}

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json bands = nlohmann::json::array();
    for (const Band& b : band_set.bands) bands.push_back({b.low_hz, b.high_hz});
    nlohmann::json trials_json = nlohmann::json::array();
    for (const TrialEntry& t : trials) {
        trials_json.push_back({{"subject_id", t.subject_id},
                               {"trial_id", t.trial_id},
                               {"path", t.path},
                               {"fs", t.fs},
                               {"channels", t.channels},
                               {"samples", t.samples},
                               {"label_kind", t.label_kind == LabelKind::continuous ? "continuous" : "discrete"}});
    }
    return {{"name", name}, {"band_set", bands}, {"label_rate", label_rate}, {"trials", trials_json}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    for (const auto& b : j.at("band_set"))
        m.band_set.bands.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    m.label_rate = j.at("label_rate").get<double>();
    for (const auto& t : j.at("trials")) {
        TrialEntry e;
        e.subject_id = t.at("subject_id").get<std::string>();
        e.trial_id = t.at("trial_id").get<std::string>();
        e.path = t.at("path").get<std::string>();
        e.fs = t.at("fs").get<double>();
        e.channels = t.at("channels").get<int>();
        e.samples = t.at("samples").get<std::int64_t>();
        e.label_kind = t.at("label_kind").get<std::string>() == "discrete" ? LabelKind::discrete
                                                                           : LabelKind::continuous;
        m.trials.push_back(std::move(e));
    }
    m.validate();
    return m;
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IngestionError("cannot open manifest '" + path + "'");
    nlohmann::json j;
    is >> j;
    return DatasetManifest::from_json(j);
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IngestionError("cannot write manifest '" + path + "'");
    os << m.to_json().dump(2) << "\n";
}

namespace {
constexpr char kTrialMagic[9] = "MASATRL1";
constexpr char kFeatureMagic[9] = "MASAFTR1";
}  // namespace

void save_trial(const EegTrial& trial, const std::string& path) {
    std::vector<float> data(trial.data.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(trial.data[i]);
    std::vector<float> labels(trial.cont_label.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = static_cast<float>(trial.cont_label[i]);

    std::uint64_t hash = binio::fnv1a(data.data(), data.size() * sizeof(float));
    hash = binio::fnv1a(labels.data(), labels.size() * sizeof(float), hash);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IngestionError("cannot open '" + path + "' for writing");
    binio::write_magic(os, kTrialMagic);
    binio::write_scalar<std::uint32_t>(os, 1);  // version
    binio::write_scalar<double>(os, trial.fs);
    binio::write_scalar<std::uint32_t>(os, static_cast<std::uint32_t>(trial.channels));
    binio::write_scalar<std::uint64_t>(os, static_cast<std::uint64_t>(trial.samples));
    binio::write_scalar<std::uint8_t>(os, trial.label_kind == LabelKind::discrete ? 1 : 0);
    binio::write_scalar<double>(os, trial.label_rate);
    binio::write_scalar<std::uint64_t>(os, labels.size());
    binio::write_scalar<std::int32_t>(os, trial.class_label);
    binio::write_scalar<std::uint64_t>(os, hash);
    binio::write_array(os, data.data(), data.size());
    binio::write_array(os, labels.data(), labels.size());
    if (!os) throw IngestionError("short write to '" + path + "'");
}

EegTrial load_trial(const TrialEntry& entry, const std::string& base_dir) {
    fs::path p(entry.path);
    if (p.is_relative()) p = fs::path(base_dir) / p;
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IngestionError("trial " + entry.trial_id + ": cannot open '" + p.string() + "'");
    binio::expect_magic(is, kTrialMagic, "trial " + entry.trial_id);
    const auto version = binio::read_scalar<std::uint32_t>(is, "version");
    if (version != 1) throw IngestionError("trial " + entry.trial_id + ": unsupported version");

    EegTrial t;
    t.subject_id = entry.subject_id;
    t.trial_id = entry.trial_id;
    t.fs = binio::read_scalar<double>(is, "fs");
    t.channels = static_cast<int>(binio::read_scalar<std::uint32_t>(is, "channels"));
    t.samples = static_cast<std::int64_t>(binio::read_scalar<std::uint64_t>(is, "samples"));
    t.label_kind = binio::read_scalar<std::uint8_t>(is, "label kind") == 1 ? LabelKind::discrete
                                                                           : LabelKind::continuous;
    t.label_rate = binio::read_scalar<double>(is, "label rate");
    const auto n_labels = binio::read_scalar<std::uint64_t>(is, "label count");
    t.class_label = binio::read_scalar<std::int32_t>(is, "class label");
    const auto stored_hash = binio::read_scalar<std::uint64_t>(is, "payload hash");

    if (t.fs != entry.fs)
        throw IngestionError("trial " + entry.trial_id + ": sampling rate mismatch vs manifest");
    if (t.channels != entry.channels)
        throw IngestionError("trial " + entry.trial_id + ": channel count " +
                             std::to_string(t.channels) + " does not match manifest " +
                             std::to_string(entry.channels));
    if (t.samples != entry.samples)
        throw IngestionError("trial " + entry.trial_id + ": sample count mismatch vs manifest");
    if (t.label_kind != entry.label_kind)
        throw IngestionError("trial " + entry.trial_id + ": label kind mismatch vs manifest");

    std::vector<float> data(static_cast<std::size_t>(t.channels) * t.samples);
    binio::read_array(is, data.data(), data.size(), "trial samples");
    std::vector<float> labels(n_labels);
    binio::read_array(is, labels.data(), labels.size(), "trial labels");

    std::uint64_t hash = binio::fnv1a(data.data(), data.size() * sizeof(float));
    hash = binio::fnv1a(labels.data(), labels.size() * sizeof(float), hash);
    if (hash != stored_hash)
        throw IngestionError("trial " + entry.trial_id + ": payload checksum mismatch");

    t.data.assign(data.begin(), data.end());
    t.cont_label.assign(labels.begin(), labels.end());
    t.validate();
    return t;
}

// ---- split planning -------------------------------------------------------

namespace {

std::vector<std::string> unique_in_order(const std::vector<std::string>& xs) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const std::string& x : xs)
        if (seen.insert(x).second) out.push_back(x);
    return out;
}

void shuffle_ints(std::vector<int>& v, Pcg32& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
}

}  // namespace

SplitPlan loso_splits(const std::vector<std::string>& sample_subject,
                      const std::vector<std::string>& sample_trial, double val_fraction,
                      std::uint64_t seed, ValGranularity granularity) {
    if (sample_subject.size() != sample_trial.size())
        throw DimensionError("loso_splits: sample table arrays differ in length");
    const std::vector<std::string> subjects = unique_in_order(sample_subject);
    if (subjects.size() < 2) throw ConfigError("leave-one-subject-out needs at least 2 subjects");

    SplitPlan plan;
    plan.strategy = "loso";
    plan.seed = seed;
    for (std::size_t fold_idx = 0; fold_idx < subjects.size(); ++fold_idx) {
        const std::string& held_out = subjects[fold_idx];
        FoldPlan fold;
        fold.id = held_out;
        std::vector<int> rest;
        for (std::size_t i = 0; i < sample_subject.size(); ++i) {
            if (sample_subject[i] == held_out)
                fold.test.push_back(static_cast<int>(i));
            else
                rest.push_back(static_cast<int>(i));
        }
        Pcg32 rng(derive_seed(seed, {seed_tag::split, static_cast<std::uint64_t>(fold_idx)}));
        if (granularity == ValGranularity::segment) {
            shuffle_ints(rest, rng);
            const auto n_train = static_cast<std::size_t>(
                std::llround((1.0 - val_fraction) * static_cast<double>(rest.size())));
            fold.train.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_train));
            fold.val.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_train), rest.end());
        } else {
            // Keep whole trials on one side of the train/val boundary.
            std::vector<std::string> rest_trials;
            for (int i : rest) rest_trials.push_back(sample_trial[static_cast<std::size_t>(i)]);
            std::vector<std::string> trials = unique_in_order(rest_trials);
            std::vector<int> trial_idx(trials.size());
            for (std::size_t i = 0; i < trials.size(); ++i) trial_idx[i] = static_cast<int>(i);
            shuffle_ints(trial_idx, rng);
            const auto n_train = static_cast<std::size_t>(
                std::llround((1.0 - val_fraction) * static_cast<double>(trials.size())));
            std::set<std::string> val_trials;
            for (std::size_t i = n_train; i < trial_idx.size(); ++i)
                val_trials.insert(trials[static_cast<std::size_t>(trial_idx[i])]);
            for (int i : rest) {
                if (val_trials.count(sample_trial[static_cast<std::size_t>(i)]))
                    fold.val.push_back(i);
                else
                    fold.train.push_back(i);
            }
        }
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

SplitPlan trialwise_kfold(const std::vector<std::string>& sample_subject,
                          const std::vector<std::string>& sample_trial, int k,
                          double val_fraction, std::uint64_t seed) {
    if (sample_subject.size() != sample_trial.size())
        throw DimensionError("trialwise_kfold: sample table arrays differ in length");
    if (k < 2) throw ConfigError("k-fold needs k >= 2");
    const std::vector<std::string> subjects = unique_in_order(sample_subject);

    SplitPlan plan;
    plan.strategy = "trialwise-kfold(" + std::to_string(k) + ")";
    plan.seed = seed;
    for (std::size_t sdx = 0; sdx < subjects.size(); ++sdx) {
        const std::string& subject = subjects[sdx];
        std::vector<std::string> subject_trials;
        std::vector<int> subject_samples;
        for (std::size_t i = 0; i < sample_subject.size(); ++i) {
            if (sample_subject[i] != subject) continue;
            subject_samples.push_back(static_cast<int>(i));
            subject_trials.push_back(sample_trial[i]);
        }
        const std::vector<std::string> trials = unique_in_order(subject_trials);
        if (static_cast<int>(trials.size()) < k)
            throw ConfigError("subject " + subject + " has " + std::to_string(trials.size()) +
                              " trials, fewer than k=" + std::to_string(k));

        std::vector<int> order(trials.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Pcg32 rng(derive_seed(seed, {seed_tag::split, static_cast<std::uint64_t>(sdx)}));
        shuffle_ints(order, rng);

        // Contiguous slices of the shuffled trial list, sizes differing by
        // at most one.
        std::vector<std::vector<std::string>> fold_trials(static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < order.size(); ++i)
            fold_trials[i % static_cast<std::size_t>(k)].push_back(
                trials[static_cast<std::size_t>(order[i])]);

        for (int f = 0; f < k; ++f) {
            FoldPlan fold;
            fold.id = subject + "/f" + std::to_string(f);
            std::set<std::string> test_set(fold_trials[static_cast<std::size_t>(f)].begin(),
                                           fold_trials[static_cast<std::size_t>(f)].end());
            std::vector<std::string> remaining;
            for (int g = 0; g < k; ++g) {
                if (g == f) continue;
                for (const std::string& t : fold_trials[static_cast<std::size_t>(g)])
                    remaining.push_back(t);
            }
            std::vector<int> rem_idx(remaining.size());
            for (std::size_t i = 0; i < rem_idx.size(); ++i) rem_idx[i] = static_cast<int>(i);
            Pcg32 vrng(derive_seed(seed, {seed_tag::split, static_cast<std::uint64_t>(sdx),
                                          static_cast<std::uint64_t>(f)}));
            shuffle_ints(rem_idx, vrng);
            const auto n_train = static_cast<std::size_t>(
                std::llround((1.0 - val_fraction) * static_cast<double>(remaining.size())));
            std::set<std::string> val_set;
            for (std::size_t i = n_train; i < rem_idx.size(); ++i)
                val_set.insert(remaining[static_cast<std::size_t>(rem_idx[i])]);

            for (int i : subject_samples) {
                const std::string& t = sample_trial[static_cast<std::size_t>(i)];
                if (test_set.count(t))
                    fold.test.push_back(i);
                else if (val_set.count(t))
                    fold.val.push_back(i);
                else
                    fold.train.push_back(i);
            }
            plan.folds.push_back(std::move(fold));
        }
    }
    return plan;
}

// ---- synthetic data -------------------------------------------------------

namespace {

// Voss-McCartney pink noise: octave-rate rows of held Gaussian values.
class PinkNoise {
public:
    explicit PinkNoise(Pcg32 rng) : rng_(rng), rows_(12, 0.0) {
        for (double& r : rows_) r = rng_.normal();
    }
    double next() {
        ++counter_;
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            if (counter_ % (1ULL << r) == 0) rows_[r] = rng_.normal();
        }
        double acc = 0.0;
        for (double r : rows_) acc += r;
        return acc / std::sqrt(static_cast<double>(rows_.size()));
    }

private:
    Pcg32 rng_;
    std::vector<double> rows_;
    std::uint64_t counter_ = 0;
};

const std::vector<int> kCerModulated = {2, 6, 10, 14, 18, 22, 26, 30};
const std::vector<int> kDecFrontal = {0, 1, 2, 3, 4, 5, 6, 7};
const std::vector<int> kDecPosterior = {24, 25, 26, 27, 28, 29, 30, 31};

struct Latent {
    std::vector<double> freq, phase, amp;
    double norm = 1.0;
    double unnormalized(double t) const {
        double v = 0.0;
        for (std::size_t i = 0; i < freq.size(); ++i)
            v += amp[i] * std::sin(2.0 * std::numbers::pi * freq[i] * t + phase[i]);
        return v;
    }
    double operator()(double t) const { return 0.95 * unnormalized(t) / norm; }
};

Latent make_latent(Pcg32& rng) {
    Latent l;
    for (int i = 0; i < 4; ++i) {
        l.freq.push_back(rng.uniform(0.02, 0.09));
        l.phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
        l.amp.push_back(rng.uniform(0.5, 1.0));
    }
    double maxabs = 0.0;
    for (double t = 0.0; t < 120.0; t += 0.05) maxabs = std::max(maxabs, std::abs(l.unnormalized(t)));
    l.norm = maxabs > 0.0 ? maxabs : 1.0;
    return l;
}

}  // namespace

const std::vector<int>& synth_cer_modulated_channels() { return kCerModulated; }
const std::vector<int>& synth_dec_frontal_channels() { return kDecFrontal; }
const std::vector<int>& synth_dec_posterior_channels() { return kDecPosterior; }

DatasetManifest synth_cer(const SynthConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    DatasetManifest m;
    m.name = "synth-cer";
    m.band_set = BandSet::named("mahnob6");
    m.label_rate = cfg.label_rate;

    const auto samples = static_cast<std::int64_t>(std::llround(cfg.duration_s * cfg.fs));
    const auto n_labels = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.label_rate));

    for (int s = 0; s < cfg.num_subjects; ++s) {
        for (int j = 0; j < cfg.trials_per_subject; ++j) {
            const std::uint64_t trial_seed =
                derive_seed(cfg.seed, {seed_tag::trial, static_cast<std::uint64_t>(s),
                                       static_cast<std::uint64_t>(j)});
            Pcg32 trial_rng(trial_seed);
            const Latent latent = make_latent(trial_rng);

            EegTrial t;
            t.subject_id = "s" + std::to_string(s);
            t.trial_id = t.subject_id + "_t" + std::to_string(j);
            t.fs = cfg.fs;
            t.channels = cfg.channels;
            t.samples = samples;
            t.label_kind = LabelKind::continuous;
            t.label_rate = cfg.label_rate;
            t.data.assign(static_cast<std::size_t>(cfg.channels) * samples, 0.0);

            for (int c = 0; c < cfg.channels; ++c) {
                Pcg32 crng(derive_seed(trial_seed, {static_cast<std::uint64_t>(c)}));
                const double carrier_phase = crng.uniform(0.0, 2.0 * std::numbers::pi);
                PinkNoise pink(crng);
                const bool modulated =
                    std::find(kCerModulated.begin(), kCerModulated.end(), c) != kCerModulated.end();
                double* row = t.row(c);
                for (std::int64_t i = 0; i < samples; ++i) {
                    const double tt = static_cast<double>(i) / cfg.fs;
                    double v = pink.next();
                    if (modulated) {
                        const double amp = 2.0 * std::sqrt(std::max(0.0, 1.0 + 0.8 * latent(tt)));
                        v += amp * std::sin(2.0 * std::numbers::pi * 10.0 * tt + carrier_phase);
                    }
                    row[static_cast<std::size_t>(i)] = v;
                }
            }
            // Labels follow the latent at the center of the standard 2 s
            // analysis window, so feature index i and label index i describe
            // the same stretch of signal.
            t.cont_label.resize(n_labels);
            for (std::size_t i = 0; i < n_labels; ++i)
                t.cont_label[i] = latent(static_cast<double>(i) / cfg.label_rate + 1.0);

            const std::string fname = t.trial_id + ".trl";
            save_trial(t, (fs::path(out_dir) / fname).string());
            m.trials.push_back({t.subject_id, t.trial_id, fname, t.fs, t.channels, t.samples,
                                LabelKind::continuous});
        }
    }
    save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
    return m;
}

DatasetManifest synth_dec(const SynthConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    DatasetManifest m;
    m.name = "synth-dec";
    m.band_set = BandSet::named("deap5");
    m.label_rate = 0.0;

    const auto samples = static_cast<std::int64_t>(std::llround(cfg.duration_s * cfg.fs));

    for (int s = 0; s < cfg.num_subjects; ++s) {
        for (int j = 0; j < cfg.trials_per_subject; ++j) {
            const int label = j % 2;  // exact 50/50 balance for even trial counts
            const std::uint64_t trial_seed =
                derive_seed(cfg.seed, {seed_tag::trial, static_cast<std::uint64_t>(s),
                                       static_cast<std::uint64_t>(j)});
            Pcg32 trial_rng(trial_seed);
            const double amp = 2.0 * trial_rng.uniform(0.9, 1.1);
            const double carrier_hz = label == 1 ? 10.0 : 24.0;
            const std::vector<int>& active = label == 1 ? kDecFrontal : kDecPosterior;

            EegTrial t;
            t.subject_id = "s" + std::to_string(s);
            t.trial_id = t.subject_id + "_t" + std::to_string(j);
            t.fs = cfg.fs;
            t.channels = cfg.channels;
            t.samples = samples;
            t.label_kind = LabelKind::discrete;
            t.class_label = label;
            t.data.assign(static_cast<std::size_t>(cfg.channels) * samples, 0.0);

            for (int c = 0; c < cfg.channels; ++c) {
                Pcg32 crng(derive_seed(trial_seed, {static_cast<std::uint64_t>(c)}));
                const double carrier_phase = crng.uniform(0.0, 2.0 * std::numbers::pi);
                PinkNoise pink(crng);
                const bool on = std::find(active.begin(), active.end(), c) != active.end();
                double* row = t.row(c);
                for (std::int64_t i = 0; i < samples; ++i) {
                    const double tt = static_cast<double>(i) / cfg.fs;
                    double v = pink.next();
                    if (on) v += amp * std::sin(2.0 * std::numbers::pi * carrier_hz * tt + carrier_phase);
                    row[static_cast<std::size_t>(i)] = v;
                }
            }
            const std::string fname = t.trial_id + ".trl";
            save_trial(t, (fs::path(out_dir) / fname).string());
            m.trials.push_back({t.subject_id, t.trial_id, fname, t.fs, t.channels, t.samples,
                                LabelKind::discrete});
        }
    }
    save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
    return m;
}

// ---- feature store ---------------------------------------------------------

void save_feature_store(const FeatureStore& store, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json bands = nlohmann::json::array();
    for (const Band& b : store.band_set.bands) bands.push_back({b.low_hz, b.high_hz});
    nlohmann::json index;
    index["dataset_name"] = store.dataset_name;
    index["band_set"] = bands;
    index["window_s"] = store.window_s;
    index["step_s"] = store.step_s;
    index["seq_len"] = store.seq_len;
    index["seq_step"] = store.seq_step;
    index["welch"] = {{"window_s", store.welch.window_s}, {"overlap", store.welch.overlap}};
    nlohmann::json files = nlohmann::json::array();

    for (const TrialFeatures& tf : store.trials) {
        const std::string fname = tf.subject_id + "_" + tf.trial_id + ".ftr";
        nlohmann::json header = {{"subject_id", tf.subject_id},
                                 {"trial_id", tf.trial_id},
                                 {"channels", tf.channels},
                                 {"bands", tf.bands},
                                 {"n_vectors", tf.n_vectors},
                                 {"label_kind", tf.label_kind == LabelKind::discrete ? "discrete" : "continuous"},
                                 {"label_rate", tf.label_rate},
                                 {"n_labels", tf.labels.size()},
                                 {"class_label", tf.class_label}};
        const std::string hs = header.dump();
        std::ofstream os(fs::path(dir) / fname, std::ios::binary);
        if (!os) throw IngestionError("cannot write feature file for trial " + tf.trial_id);
        binio::write_magic(os, kFeatureMagic);
        binio::write_scalar<std::uint64_t>(os, hs.size());
        os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        binio::write_array(os, tf.features.data(), tf.features.size());
        binio::write_array(os, tf.labels.data(), tf.labels.size());
        files.push_back(fname);
    }
    index["files"] = files;
    std::ofstream os(fs::path(dir) / "features_manifest.json");
    os << index.dump(2) << "\n";
}

FeatureStore load_feature_store(const std::string& dir) {
    std::ifstream idx(fs::path(dir) / "features_manifest.json");
    if (!idx) throw IngestionError("no features_manifest.json under '" + dir + "'");
    nlohmann::json index;
    idx >> index;

    FeatureStore store;
    store.dataset_name = index.at("dataset_name").get<std::string>();
    for (const auto& b : index.at("band_set"))
        store.band_set.bands.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    store.window_s = index.at("window_s").get<double>();
    store.step_s = index.at("step_s").get<double>();
    store.seq_len = index.at("seq_len").get<int>();
    store.seq_step = index.at("seq_step").get<int>();
    store.welch.window_s = index.at("welch").at("window_s").get<double>();
    store.welch.overlap = index.at("welch").at("overlap").get<double>();

    for (const auto& f : index.at("files")) {
        const fs::path p = fs::path(dir) / f.get<std::string>();
        std::ifstream is(p, std::ios::binary);
        if (!is) throw IngestionError("cannot open feature file '" + p.string() + "'");
        binio::expect_magic(is, kFeatureMagic, "feature file " + p.string());
        const auto hlen = binio::read_scalar<std::uint64_t>(is, "feature header length");
        std::string hs(hlen, '\0');
        is.read(hs.data(), static_cast<std::streamsize>(hlen));
        if (!is) throw IngestionError("truncated feature header in '" + p.string() + "'");
        nlohmann::json header = nlohmann::json::parse(hs);

        TrialFeatures tf;
        tf.subject_id = header.at("subject_id").get<std::string>();
        tf.trial_id = header.at("trial_id").get<std::string>();
        tf.channels = header.at("channels").get<int>();
        tf.bands = header.at("bands").get<int>();
        tf.n_vectors = header.at("n_vectors").get<int>();
        tf.label_kind = header.at("label_kind").get<std::string>() == "discrete"
                            ? LabelKind::discrete
                            : LabelKind::continuous;
        tf.label_rate = header.at("label_rate").get<double>();
        tf.class_label = header.at("class_label").get<int>();
        tf.features.resize(static_cast<std::size_t>(tf.n_vectors) * tf.channels * tf.bands);
        binio::read_array(is, tf.features.data(), tf.features.size(), "features");
        tf.labels.resize(header.at("n_labels").get<std::size_t>());
        binio::read_array(is, tf.labels.data(), tf.labels.size(), "feature labels");
        store.trials.push_back(std::move(tf));
    }
    return store;
}

std::vector<TrainSample> build_samples(const FeatureStore& store) {
    std::vector<TrainSample> out;
    const int t = store.seq_len;
    for (const TrialFeatures& tf : store.trials) {
        const int dim = tf.channels * tf.bands;
        for (const SequenceSample& seq : plan_sequences(tf, store.seq_len, store.seq_step)) {
            TrainSample s;
            s.subject_id = tf.subject_id;
            s.trial_id = tf.trial_id;
            s.start_index = seq.start_index;
            s.class_label = tf.class_label;
            s.x = Tensor::zeros({1, dim, t});
            // Transpose the time-major slice into the (feature, time) plane.
            for (int j = 0; j < t; ++j) {
                const double* v = tf.vec(seq.start_index + j);
                for (int d = 0; d < dim; ++d)
                    s.x.values[static_cast<std::size_t>(d) * t + j] = v[d];
            }
            if (tf.label_kind == LabelKind::continuous)
                s.labels.assign(tf.labels.begin() + seq.start_index,
                                tf.labels.begin() + seq.start_index + t);
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace masa
