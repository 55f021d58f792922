#include "masa/harness.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "masa/serialize.hpp"

namespace fs = std::filesystem;

namespace masa {

std::string to_string(SplitStrategy s) { return s == SplitStrategy::loso ? "loso" : "kfold"; }
SplitStrategy split_from_string(const std::string& s) {
    if (s == "loso") return SplitStrategy::loso;
    if (s == "kfold") return SplitStrategy::kfold;
    throw ConfigError("unknown split strategy '" + s + "' (expected loso or kfold)");
}

nlohmann::json ExperimentConfig::to_json() const {
    return {{"task", to_string(task)},
            {"split", to_string(split)},
            {"kfold_k", kfold_k},
            {"val_fraction", val_fraction},
            {"val_granularity", val_granularity == ValGranularity::segment ? "segment" : "trial"},
            {"model", model.to_json()},
            {"train", train.to_json()},
            {"seed", seed},
            {"jobs", jobs}};
}

TrialPrediction stitch_trial_prediction(const ModelConfig& cfg, const ModelParams& params,
                                        const TrialFeatures& trial, int seq_len, int seq_step) {
    TrialPrediction out;
    const auto plans = plan_sequences(trial, seq_len, seq_step);
    if (plans.empty()) return out;
    const int covered = plans.back().start_index + seq_len;
    std::vector<double> sums(static_cast<std::size_t>(covered), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(covered), 0);
    const int dim = trial.channels * trial.bands;
    for (const SequenceSample& seq : plans) {
        Tensor x = Tensor::zeros({1, dim, seq_len});
        for (int j = 0; j < seq_len; ++j) {
            const double* v = trial.vec(seq.start_index + j);
            for (int d = 0; d < dim; ++d)
                x.values[static_cast<std::size_t>(d) * seq_len + j] = v[d];
        }
        const std::vector<double> pred = predict_regression(cfg, params, x);
        for (int j = 0; j < seq_len; ++j) {
            sums[static_cast<std::size_t>(seq.start_index + j)] += pred[static_cast<std::size_t>(j)];
            counts[static_cast<std::size_t>(seq.start_index + j)] += 1;
        }
    }
    out.prediction.resize(static_cast<std::size_t>(covered));
    for (int i = 0; i < covered; ++i)
        out.prediction[static_cast<std::size_t>(i)] =
            sums[static_cast<std::size_t>(i)] / counts[static_cast<std::size_t>(i)];
    out.label.assign(trial.labels.begin(), trial.labels.begin() + covered);
    return out;
}

namespace {

std::vector<TrainSample> gather(const std::vector<TrainSample>& all, const std::vector<int>& idx) {
    std::vector<TrainSample> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(all[static_cast<std::size_t>(i)]);
    return out;
}

MetricRow evaluate_cer_fold(const FeatureStore& store, const ExperimentConfig& cfg,
                            const ModelParams& params, const FoldPlan& fold,
                            const std::vector<TrainSample>& samples) {
    // Metrics are computed per test trial on the stitched prediction, then
    // averaged across the fold's trials. An undefined PCC is excluded.
    std::vector<std::string> test_trials;
    for (int i : fold.test) {
        const std::string& t = samples[static_cast<std::size_t>(i)].trial_id;
        if (std::find(test_trials.begin(), test_trials.end(), t) == test_trials.end())
            test_trials.push_back(t);
    }
    double rmse_acc = 0.0, pcc_acc = 0.0, ccc_acc = 0.0;
    int n = 0, n_pcc = 0;
    for (const TrialFeatures& tf : store.trials) {
        if (std::find(test_trials.begin(), test_trials.end(), tf.trial_id) == test_trials.end())
            continue;
        const TrialPrediction tp =
            stitch_trial_prediction(cfg.model, params, tf, store.seq_len, store.seq_step);
        if (tp.prediction.empty()) continue;
        rmse_acc += rmse(tp.prediction, tp.label);
        ccc_acc += ccc(tp.prediction, tp.label);
        try {
            pcc_acc += pcc(tp.prediction, tp.label);
            ++n_pcc;
        } catch (const NumericalError&) {
            std::cerr << "warning: PCC undefined for trial " << tf.trial_id
                      << ", excluded from the fold aggregate\n";
        }
        ++n;
    }
    MetricRow row;
    row.unit = fold.id;
    row.values["RMSE"] = n > 0 ? rmse_acc / n : std::nan("");
    row.values["PCC"] = n_pcc > 0 ? pcc_acc / n_pcc : std::nan("");
    row.values["CCC"] = n > 0 ? ccc_acc / n : std::nan("");
    return row;
}

MetricRow evaluate_dec_fold(const ExperimentConfig& cfg, const ModelParams& params,
                            const FoldPlan& fold, const std::vector<TrainSample>& samples) {
    std::vector<int> pred, label;
    for (int i : fold.test) {
        const TrainSample& s = samples[static_cast<std::size_t>(i)];
        pred.push_back(predict_class(cfg.model, params, s.x));
        label.push_back(s.class_label);
    }
    MetricRow row;
    row.unit = fold.id;
    row.values["ACC"] = accuracy(pred, label);
    row.values["F1"] = f1_binary(pred, label, 1);
    return row;
}

FoldOutcome run_fold(const FeatureStore& store, const ExperimentConfig& cfg,
                     const std::vector<TrainSample>& samples, const FoldPlan& fold,
                     std::size_t fold_index) {
    const std::uint64_t fold_seed =
        derive_seed(cfg.seed, {seed_tag::fold, static_cast<std::uint64_t>(fold_index)});
    ModelParams params = init_params(cfg.model, derive_seed(fold_seed, {seed_tag::init}));
    TrainConfig tcfg = cfg.train;
    tcfg.seed = fold_seed;

    const std::vector<TrainSample> train_set = gather(samples, fold.train);
    const std::vector<TrainSample> val_set = gather(samples, fold.val);

    FoldOutcome out;
    out.id = fold.id;
    out.record = cfg.task == TaskKind::cer ? train_cer(train_set, val_set, cfg.model, params, tcfg)
                                           : train_dec(train_set, val_set, cfg.model, params, tcfg);
    out.row = cfg.task == TaskKind::cer
                  ? evaluate_cer_fold(store, cfg, params, fold, samples)
                  : evaluate_dec_fold(cfg, params, fold, samples);

    if (!cfg.out_dir.empty()) {
        std::string fold_name = fold.id;
        for (char& c : fold_name)
            if (c == '/') c = '_';
        const fs::path dir = fs::path(cfg.out_dir) / ("fold_" + fold_name);
        fs::create_directories(dir);
        save_weights((dir / "weights.bin").string(), cfg.model, params);
        out.record.weights_path = (dir / "weights.bin").string();
        std::ofstream rec(dir / "record.json");
        rec << out.record.to_json().dump(2) << "\n";
        std::ofstream trace(dir / "trace.csv");
        trace << out.record.trace_csv();
    }
    return out;
}

}  // namespace

ExperimentResult run_experiment(const FeatureStore& store, const ExperimentConfig& cfg) {
    cfg.model.validate();
    if (store.trials.empty()) throw IngestionError("feature store contains no trials");
    const bool continuous = store.trials.front().label_kind == LabelKind::continuous;
    if (cfg.task == TaskKind::cer && !continuous)
        throw ConfigError("cer task requires continuous labels, store has discrete ones");
    if (cfg.task == TaskKind::dec && continuous)
        throw ConfigError("dec task requires discrete labels, store has continuous ones");
    if (cfg.split == SplitStrategy::kfold && continuous)
        throw ConfigError("trial-wise k-fold is defined for discrete labels; use loso for cer");

    const std::vector<TrainSample> samples = build_samples(store);
    if (samples.empty()) throw IngestionError("no training samples; trials shorter than seq_len?");
    std::vector<std::string> sample_subject, sample_trial;
    sample_subject.reserve(samples.size());
    sample_trial.reserve(samples.size());
    for (const TrainSample& s : samples) {
        sample_subject.push_back(s.subject_id);
        sample_trial.push_back(s.trial_id);
    }

    const SplitPlan plan =
        cfg.split == SplitStrategy::loso
            ? loso_splits(sample_subject, sample_trial, cfg.val_fraction, cfg.seed,
                          cfg.val_granularity)
            : trialwise_kfold(sample_subject, sample_trial, cfg.kfold_k, cfg.val_fraction, cfg.seed);

    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

    ExperimentResult result;
    result.folds.resize(plan.folds.size());
    const int jobs = std::max(1, cfg.jobs);

    // Kernel-level threading is ceded to the fold workers when several run
    // at once; per-fold results do not depend on this switch.
    const bool kernels_before = parallel::kernels_enabled();
    parallel::set_kernels_enabled(jobs == 1);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= plan.folds.size()) break;
            result.folds[i] = run_fold(store, cfg, samples, plan.folds[i], i);
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    parallel::set_kernels_enabled(kernels_before);

    result.report.task = cfg.task == TaskKind::cer ? "CER" : "DEC";
    result.report.metric_names = cfg.task == TaskKind::cer
                                     ? std::vector<std::string>{"RMSE", "PCC", "CCC"}
                                     : std::vector<std::string>{"ACC", "F1"};
    for (const FoldOutcome& f : result.folds) result.report.rows.push_back(f.row);

    if (!cfg.out_dir.empty()) {
        std::ofstream csv(fs::path(cfg.out_dir) / "metrics.csv");
        csv << result.report.to_csv();
        std::ofstream table(fs::path(cfg.out_dir) / "metrics.txt");
        table << result.report.to_table();
    }
    return result;
}

FeatureStore preprocess_dataset(const DatasetManifest& manifest, const std::string& base_dir,
                                const PreprocessConfig& cfg) {
    manifest.validate();
    if (manifest.trials.empty()) throw IngestionError("manifest lists no trials");
    FeatureStore store;
    store.dataset_name = manifest.name;
    store.band_set = cfg.band_set;
    store.window_s = cfg.window_s;
    store.step_s = cfg.step_s;
    store.seq_len = cfg.seq_len;
    store.seq_step = cfg.seq_step;
    store.welch = cfg.welch;
    store.trials.resize(manifest.trials.size());

    // Exceptions may not unwind out of the parallel region; capture the first
    // one and rethrow after the loop.
    std::exception_ptr failure = nullptr;
    const int n = static_cast<int>(manifest.trials.size());
#pragma omp parallel for schedule(dynamic) if (parallel::kernels_enabled() && n > 1)
    for (int i = 0; i < n; ++i) {
        try {
            EegTrial trial = load_trial(manifest.trials[static_cast<std::size_t>(i)], base_dir);
            if (cfg.average_ref && trial.channels >= 2) trial = average_reference(std::move(trial));
            store.trials[static_cast<std::size_t>(i)] =
                extract_features(trial, cfg.band_set, cfg.window_s, cfg.step_s, cfg.welch);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return store;
}

}  // namespace masa
