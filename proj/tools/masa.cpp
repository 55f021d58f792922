// Command-line front end: synth, preprocess, train, predict, verify.
//
// Exit codes: 0 success, 2 configuration error, 3 ingestion error,
// 4 verification failure, 1 anything else.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>

#include <CLI11.hpp>

#include "masa/binio.hpp"
#include "masa/harness.hpp"
#include "masa/manifest.hpp"
#include "masa/serialize.hpp"

namespace fs = std::filesystem;
using namespace masa;

namespace {

struct VerificationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// MASA_DATA_DIR is the dataset root for relative paths.
std::string resolve_input(const std::string& path) {
    if (fs::exists(path)) return path;
    if (fs::path(path).is_relative()) {
        if (const char* root = std::getenv("MASA_DATA_DIR")) {
            const fs::path alt = fs::path(root) / path;
            if (fs::exists(alt)) return alt.string();
        }
    }
    return path;
}

int run_synth(const std::string& task, const SynthConfig& cfg, const std::string& out_dir,
              Clock::time_point start) {
    const DatasetManifest m = task == "cer" ? synth_cer(cfg, out_dir) : synth_dec(cfg, out_dir);
    RunManifest rm;
    rm.command = "synth";
    rm.config = {{"task", task},
                 {"num_subjects", cfg.num_subjects},
                 {"trials_per_subject", cfg.trials_per_subject},
                 {"channels", cfg.channels},
                 {"fs", cfg.fs},
                 {"duration_s", cfg.duration_s},
                 {"label_rate", cfg.label_rate},
                 {"out", out_dir}};
    rm.seed = cfg.seed;
    rm.build_id = build_id();
    for (const TrialEntry& e : m.trials) rm.outputs.push_back(e.path);
    rm.outputs.push_back("manifest.json");
    rm.wall_clock_s = seconds_since(start);
    write_run_manifest((fs::path(out_dir) / "run_manifest.json").string(), rm);
    std::cout << "wrote " << m.trials.size() << " trials under " << out_dir << "\n";
    return 0;
}

int run_preprocess(const std::string& manifest_path, const std::string& out_dir,
                   PreprocessConfig pcfg, const std::string& bands_name, bool seq_given,
                   Clock::time_point start) {
    const std::string resolved = resolve_input(manifest_path);
    const DatasetManifest manifest = load_manifest(resolved);
    if (manifest.trials.empty()) throw IngestionError("manifest lists no trials");
    if (!bands_name.empty())
        pcfg.band_set = BandSet::named(bands_name);
    else
        pcfg.band_set = manifest.band_set;
    const bool discrete = manifest.trials.front().label_kind == LabelKind::discrete;
    if (!seq_given && discrete) {
        // Discrete-task default: 8 s context windows advancing by 4 s at the
        // 4 Hz feature rate.
        pcfg.seq_len = 25;
        pcfg.seq_step = 16;
    }

    const std::string base_dir = fs::path(resolved).parent_path().string();
    const FeatureStore store = preprocess_dataset(manifest, base_dir, pcfg);
    save_feature_store(store, out_dir);

    // Alignment report: per-trial vector and sequence counts.
    std::ofstream report(fs::path(out_dir) / "alignment_report.csv");
    report << "subject_id,trial_id,n_vectors,n_labels,n_sequences\n";
    for (const TrialFeatures& tf : store.trials)
        report << tf.subject_id << "," << tf.trial_id << "," << tf.n_vectors << ","
               << tf.labels.size() << "," << plan_sequences(tf, pcfg.seq_len, pcfg.seq_step).size()
               << "\n";

    RunManifest rm;
    rm.command = "preprocess";
    rm.config = {{"manifest", resolved},
                 {"bands", pcfg.band_set.describe()},
                 {"window_s", pcfg.window_s},
                 {"step_s", pcfg.step_s},
                 {"seq_len", pcfg.seq_len},
                 {"seq_step", pcfg.seq_step},
                 {"welch_window_s", pcfg.welch.window_s},
                 {"welch_overlap", pcfg.welch.overlap},
                 {"average_ref", pcfg.average_ref},
                 {"out", out_dir}};
    rm.build_id = build_id();
    rm.input_hashes[resolved] = hash_hex(binio::file_hash(resolved));
    for (const TrialEntry& e : manifest.trials) {
        const std::string p = (fs::path(base_dir) / e.path).string();
        rm.input_hashes[p] = hash_hex(binio::file_hash(p));
    }
    for (const TrialFeatures& tf : store.trials)
        rm.outputs.push_back(tf.subject_id + "_" + tf.trial_id + ".ftr");
    rm.wall_clock_s = seconds_since(start);
    write_run_manifest((fs::path(out_dir) / "run_manifest.json").string(), rm);
    std::cout << "preprocessed " << store.trials.size() << " trials into " << out_dir << "\n";
    return 0;
}

int run_train(const std::string& features_dir, ExperimentConfig cfg, Clock::time_point start) {
    const FeatureStore store = load_feature_store(resolve_input(features_dir));
    cfg.model.num_channels = store.trials.front().channels;
    cfg.model.num_bands = store.trials.front().bands;
    cfg.model.head = cfg.task == TaskKind::cer ? HeadKind::regression : HeadKind::classification;
    cfg.train.task = cfg.task;

    std::cout << "effective config:\n" << cfg.to_json().dump(2) << "\n";
    const ExperimentResult result = run_experiment(store, cfg);
    std::cout << result.report.to_table();

    if (!cfg.out_dir.empty()) {
        RunManifest rm;
        rm.command = "train";
        rm.config = cfg.to_json();
        rm.seed = cfg.seed;
        rm.build_id = build_id();
        const fs::path fm = fs::path(resolve_input(features_dir)) / "features_manifest.json";
        rm.input_hashes[fm.string()] = hash_hex(binio::file_hash(fm.string()));
        rm.outputs.push_back("metrics.csv");
        rm.outputs.push_back("metrics.txt");
        for (const FoldOutcome& f : result.folds) rm.outputs.push_back("fold_" + f.id);
        rm.wall_clock_s = seconds_since(start);
        write_run_manifest((fs::path(cfg.out_dir) / "run_manifest.json").string(), rm);
    }
    return 0;
}

int run_predict(const std::string& checkpoint, const std::string& features_dir,
                const std::string& trial_id, const std::string& out_csv, Clock::time_point start) {
    const Checkpoint ck = load_weights(resolve_input(checkpoint));
    if (ck.config.head != HeadKind::regression)
        throw ConfigError("predict exports continuous traces; checkpoint has a classification head");
    const FeatureStore store = load_feature_store(resolve_input(features_dir));
    const TrialFeatures* trial = nullptr;
    for (const TrialFeatures& tf : store.trials)
        if (tf.trial_id == trial_id) trial = &tf;
    if (trial == nullptr) throw IngestionError("trial '" + trial_id + "' not found in feature store");
    if (trial->channels * trial->bands != ck.config.feature_dim())
        throw DimensionError("checkpoint expects " + std::to_string(ck.config.feature_dim()) +
                             "-dim features, store provides " +
                             std::to_string(trial->channels * trial->bands));

    const TrialPrediction tp =
        stitch_trial_prediction(ck.config, ck.params, *trial, store.seq_len, store.seq_step);
    if (tp.prediction.empty()) throw IngestionError("trial shorter than one sequence");

    std::ofstream os(out_csv);
    if (!os) throw IngestionError("cannot write '" + out_csv + "'");
    os << "index,prediction,label\n";
    char buf[96];
    for (std::size_t i = 0; i < tp.prediction.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, tp.prediction[i], tp.label[i]);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "# RMSE,%.17g\n", rmse(tp.prediction, tp.label));
    os << buf;
    double p = std::nan("");
    try {
        p = pcc(tp.prediction, tp.label);
    } catch (const NumericalError&) {
    }
    std::snprintf(buf, sizeof(buf), "# PCC,%.17g\n", p);
    os << buf;
    std::snprintf(buf, sizeof(buf), "# CCC,%.17g\n", ccc(tp.prediction, tp.label));
    os << buf;

    RunManifest rm;
    rm.command = "predict";
    rm.config = {{"checkpoint", checkpoint}, {"features", features_dir}, {"trial", trial_id}};
    rm.build_id = build_id();
    rm.input_hashes[checkpoint] = hash_hex(binio::file_hash(resolve_input(checkpoint)));
    rm.outputs.push_back(out_csv);
    rm.wall_clock_s = seconds_since(start);
    write_run_manifest(out_csv + ".run_manifest.json", rm);
    std::cout << "wrote " << out_csv << "\n";
    return 0;
}

// Self-contained health checks; independent two-pass references live here on
// purpose.
int run_verify() {
    bool ok = true;
    auto report = [&](const std::string& name, bool pass, const std::string& detail) {
        std::cout << (pass ? "[ok]   " : "[FAIL] ") << name << " - " << detail << "\n";
        ok = ok && pass;
    };

    {  // Gradient check on a small full model with the concordance loss.
        ModelConfig mcfg;
        mcfg.num_channels = 4;
        mcfg.num_bands = 3;
        mcfg.anchor_lengths = {3, 5};
        mcfg.width = 6;
        mcfg.num_tcn_blocks = 1;
        ModelParams params = init_params(mcfg, 1);
        Pcg32 rng(2);
        Tensor x = Tensor::zeros({1, mcfg.feature_dim(), 16});
        for (double& v : x.values) v = rng.uniform(-1, 1);
        std::vector<double> target(16);
        for (double& v : target) v = rng.uniform(-1, 1);

        auto loss_of = [&]() {
            Tape tape;
            ModelRun run = bind_params(tape, mcfg, params);
            return tape.val(tape.ccc_loss_vs(model_regression(run, tape.push(x)), target)).values[0];
        };
        Tape tape;
        ModelRun run = bind_params(tape, mcfg, params);
        tape.backward(tape.ccc_loss_vs(model_regression(run, tape.push(x)), target));

        double max_rel = 0.0;
        int checked = 0;
        Pcg32 pick(3);
        for (const std::string& name : params.order) {
            Tensor& t = params.at(name);
            const auto& g = tape.grad(run.leaf.at(name));
            for (int probe = 0; probe < 3; ++probe) {
                const auto idx = static_cast<std::size_t>(pick.uniform_int(static_cast<int>(t.values.size())));
                const double saved = t.values[idx];
                const double eps = 1e-5;
                t.values[idx] = saved + eps;
                const double up = loss_of();
                t.values[idx] = saved - eps;
                const double dn = loss_of();
                t.values[idx] = saved;
                const double fd = (up - dn) / (2 * eps);
                const double rel = std::abs(g[idx] - fd) / std::max({std::abs(g[idx]), std::abs(fd), 1e-6});
                max_rel = std::max(max_rel, rel);
                ++checked;
            }
        }
        report("gradient-check", max_rel < 1e-4,
               "max rel err " + std::to_string(max_rel) + " over " + std::to_string(checked) +
                   " parameters (budget 1e-4)");
    }

    {  // Causality probes.
        ModelConfig mcfg;
        mcfg.num_channels = 6;
        mcfg.num_bands = 4;
        mcfg.width = 8;
        mcfg.num_tcn_blocks = 1;
        ModelParams params = init_params(mcfg, 4);
        Pcg32 rng(5);
        const int t = 48;
        int violations = 0;
        for (int probe = 0; probe < 20; ++probe) {
            Tensor x = Tensor::zeros({1, mcfg.feature_dim(), t});
            for (double& v : x.values) v = rng.uniform(-1, 1);
            Tape ta;
            ModelRun ra = bind_params(ta, mcfg, params);
            const Tensor ya = ta.val(model_regression(ra, ta.push(x)));
            const int t0 = 1 + rng.uniform_int(t - 1);
            for (int d = 0; d < mcfg.feature_dim(); ++d)
                for (int col = t0; col < t; ++col)
                    x.values[static_cast<std::size_t>(d) * t + col] = rng.uniform(-3, 3);
            Tape tb;
            ModelRun rb = bind_params(tb, mcfg, params);
            const Tensor yb = tb.val(model_regression(rb, tb.push(x)));
            for (int col = 0; col < t0; ++col)
                if (ya.values[static_cast<std::size_t>(col)] != yb.values[static_cast<std::size_t>(col)])
                    ++violations;
        }
        report("causality", violations == 0,
               std::to_string(violations) + " prefix mismatches over 20 perturbation trials (zero tolerance)");
    }

    {  // Receptive-field oracle.
        Pcg32 rng(6);
        const std::vector<std::vector<int>> anchor_sets = {{3}, {5}, {15}, {3, 5}, {3, 5, 15}};
        bool all_match = true;
        std::string detail;
        for (int i = 0; i < 5; ++i) {
            ModelConfig mcfg;
            mcfg.num_channels = 4;
            mcfg.num_bands = 2;
            mcfg.width = 4;
            mcfg.anchor_lengths = anchor_sets[static_cast<std::size_t>(rng.uniform_int(5))];
            mcfg.num_tcn_blocks = rng.uniform_int(3);
            ModelParams params = init_params(mcfg, 7 + static_cast<std::uint64_t>(i));
            const int analytic = receptive_field(mcfg);
            const int margin = mcfg.block_dilation(std::max(1, mcfg.num_tcn_blocks));
            const RfProbeResult probed =
                empirical_receptive_field(mcfg, params, analytic + margin + 2, 8 + static_cast<std::uint64_t>(i));
            const int eq12 = receptive_field_closed_form(mcfg);
            all_match = all_match && !probed.lower_bound && probed.field == analytic;
            detail += "[analytic " + std::to_string(analytic) + " probe " + std::to_string(probed.field) +
                      " closed-form " + std::to_string(eq12) + " delta " +
                      std::to_string(analytic - eq12) + "] ";
        }
        report("receptive-field", all_match, detail);
    }

    {  // Metric oracles against local two-pass references.
        Pcg32 rng(9);
        double max_err = 0.0;
        bool attenuation = true;
        for (int i = 0; i < 200; ++i) {
            const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(50));
            std::vector<double> a(n), b(n);
            for (double& v : a) v = rng.uniform(-2, 2);
            for (double& v : b) v = rng.uniform(-2, 2);
            double ma = 0, mb = 0;
            for (std::size_t j = 0; j < n; ++j) {
                ma += a[j];
                mb += b[j];
            }
            ma /= static_cast<double>(n);
            mb /= static_cast<double>(n);
            double va = 0, vb = 0, cov = 0, se = 0;
            for (std::size_t j = 0; j < n; ++j) {
                va += (a[j] - ma) * (a[j] - ma);
                vb += (b[j] - mb) * (b[j] - mb);
                cov += (a[j] - ma) * (b[j] - mb);
                se += (a[j] - b[j]) * (a[j] - b[j]);
            }
            va /= static_cast<double>(n);
            vb /= static_cast<double>(n);
            cov /= static_cast<double>(n);
            const double rmse_ref = std::sqrt(se / static_cast<double>(n));
            const double pcc_ref = cov / std::sqrt(va * vb);
            const double ccc_ref = 2 * cov / (va + vb + (ma - mb) * (ma - mb));
            max_err = std::max(max_err, std::abs(rmse(a, b) - rmse_ref));
            max_err = std::max(max_err, std::abs(pcc(a, b) - pcc_ref));
            max_err = std::max(max_err, std::abs(ccc(a, b) - ccc_ref));
            attenuation = attenuation && std::abs(ccc(a, b)) <= std::abs(pcc(a, b)) + 1e-12;
            if (i == 0) max_err = std::max(max_err, std::abs(ccc(a, a) - 1.0));
        }
        report("metric-oracles", max_err < 1e-12 && attenuation,
               "max abs deviation " + std::to_string(max_err) + " (budget 1e-12), attenuation " +
                   (attenuation ? "holds" : "violated"));
    }

    {  // Signal oracle: band placement of a pure tone and rPSD normalization.
        const double fs = 256.0;
        std::vector<double> x(512);
        for (int i = 0; i < 512; ++i)
            x[static_cast<std::size_t>(i)] = std::sin(2.0 * std::numbers::pi * 10.0 * i / fs);
        const PsdResult psd = welch_psd(x.data(), 1, 512, fs, WelchConfig{});
        const std::vector<double> r = rpsd(psd, 1, BandSet::named("mahnob6"));
        Pcg32 rng(10);
        std::vector<double> noise(3 * 512);
        for (double& v : noise) v = rng.normal();
        const PsdResult npsd = welch_psd(noise.data(), 3, 512, fs, WelchConfig{});
        const std::vector<double> nr = rpsd(npsd, 3, BandSet::named("mahnob6"));
        double worst_sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            double sum = 0.0;
            for (int b = 0; b < 6; ++b) sum += nr[static_cast<std::size_t>(c) * 6 + b];
            worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        }
        report("signal-oracle", r[2] > 0.95 && worst_sum < 1e-9,
               "alpha mass " + std::to_string(r[2]) + " (needs > 0.95), worst rPSD sum error " +
                   std::to_string(worst_sum));
    }

    if (!ok) throw VerificationFailure("one or more verification checks failed");
    std::cout << "all checks passed\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    const auto start = Clock::now();
    CLI::App app{"masa-tcn: space-aware temporal convolutional networks for EEG emotion "
                 "regression and classification"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_task = "cer";
    SynthConfig scfg;
    std::string synth_out = "data";
    synth->add_option("--task", synth_task, "cer or dec")->check(CLI::IsMember({"cer", "dec"}));
    synth->add_option("--subjects", scfg.num_subjects, "number of subjects");
    synth->add_option("--trials", scfg.trials_per_subject, "trials per subject");
    synth->add_option("--seed", scfg.seed, "generator seed");
    synth->add_option("--channels", scfg.channels, "electrode count");
    synth->add_option("--fs", scfg.fs, "sampling rate in Hz");
    synth->add_option("--duration", scfg.duration_s, "trial length in seconds");
    synth->add_option("--out", synth_out, "output directory")->required();

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "extract rPSD feature sequences");
    std::string prep_manifest, prep_out, prep_bands;
    PreprocessConfig pcfg;
    bool no_avg_ref = false;
    prep->add_option("--manifest", prep_manifest, "dataset manifest path")->required();
    prep->add_option("--out", prep_out, "output directory")->required();
    prep->add_option("--bands", prep_bands, "band set name (mahnob6 or deap5)");
    prep->add_option("--window", pcfg.window_s, "sub-segment window in seconds");
    prep->add_option("--step", pcfg.step_s, "sub-segment step in seconds");
    auto* seq_len_opt = prep->add_option("--seq-len", pcfg.seq_len, "sequence length in vectors");
    prep->add_option("--seq-step", pcfg.seq_step, "sequence step in vectors");
    prep->add_option("--welch-window", pcfg.welch.window_s, "internal Welch window in seconds");
    prep->add_option("--welch-overlap", pcfg.welch.overlap, "internal Welch overlap fraction");
    prep->add_flag("--no-average-ref", no_avg_ref, "skip the average reference");

    // train
    auto* train = app.add_subcommand("train", "run a cross-validation experiment");
    std::string train_features, train_task = "cer", train_split = "loso", train_out = "run";
    std::string fusion = "attentive", spatial = "early", mean_fusion_head = "on";
    std::string val_granularity = "segment", config_path, anchors = "3,5,15", stage2 = "on";
    ExperimentConfig ecfg;
    int depth = 0;
    train->add_option("--features", train_features, "preprocessed feature directory")->required();
    train->add_option("--task", train_task, "cer or dec")->check(CLI::IsMember({"cer", "dec"}));
    train->add_option("--split", train_split, "loso or kfold")->check(CLI::IsMember({"loso", "kfold"}));
    train->add_option("--out", train_out, "output directory");
    train->add_option("--seed", ecfg.seed, "experiment seed");
    train->add_option("--jobs", ecfg.jobs, "parallel fold workers");
    train->add_option("--width", ecfg.model.width, "kernels per layer");
    auto* depth_opt = train->add_option(
        "--depth", depth, "layer-pair count: 2 is the space-aware stage alone, each residual block adds 2");
    train->add_option("--anchors", anchors, "comma-separated anchor kernel lengths");
    train->add_option("--dilation", ecfg.model.sat_dilation, "starting temporal dilation");
    train->add_option("--fusion", fusion, "attentive, concat or mean")
        ->check(CLI::IsMember({"attentive", "concat", "mean"}));
    train->add_option("--spatial", spatial, "early or late spatial learning")
        ->check(CLI::IsMember({"early", "late"}));
    train->add_option("--mean-fusion-head", mean_fusion_head, "on or off")
        ->check(CLI::IsMember({"on", "off"}));
    train->add_option("--tcn-kernel", ecfg.model.tcn_kernel_len, "residual-block kernel length");
    train->add_option("--dropout", ecfg.model.dropout_rate, "dropout rate");
    auto* lr_opt = train->add_option("--lr", ecfg.train.lr, "learning rate");
    auto* wd_opt = train->add_option("--weight-decay", ecfg.train.weight_decay, "L2 strength");
    auto* batch_opt = train->add_option("--batch", ecfg.train.batch_size, "batch size");
    auto* epochs_opt = train->add_option("--epochs", ecfg.train.max_epochs, "max training epochs");
    auto* patience_opt = train->add_option("--early-stop", ecfg.train.early_stop_patience,
                                           "early stopping patience");
    auto* smooth_opt = train->add_option("--label-smoothing", ecfg.train.label_smoothing,
                                         "label smoothing factor (dec)");
    train->add_option("--stage2", stage2, "two-stage retraining on or off (dec)")
        ->check(CLI::IsMember({"on", "off"}));
    train->add_option("--val-fraction", ecfg.val_fraction, "validation fraction");
    train->add_option("--val-granularity", val_granularity, "segment or trial")
        ->check(CLI::IsMember({"segment", "trial"}));
    train->add_option("--kfold-k", ecfg.kfold_k, "fold count for kfold");
    train->add_option("--config", config_path, "JSON config file (defaults < file < flags)");

    // predict
    auto* predict = app.add_subcommand("predict", "export per-index predictions for one trial");
    std::string pd_checkpoint, pd_features, pd_trial, pd_out = "prediction.csv";
    predict->add_option("--checkpoint", pd_checkpoint, "weights file")->required();
    predict->add_option("--features", pd_features, "preprocessed feature directory")->required();
    predict->add_option("--trial", pd_trial, "trial id")->required();
    predict->add_option("--out", pd_out, "output CSV path");

    // verify
    app.add_subcommand("verify", "run numeric health checks");

    try {
        app.parse(argc, argv);

        if (synth->parsed()) return run_synth(synth_task, scfg, synth_out, start);
        if (prep->parsed()) {
            pcfg.average_ref = !no_avg_ref;
            return run_preprocess(prep_manifest, prep_out, pcfg, prep_bands,
                                  seq_len_opt->count() > 0, start);
        }
        if (train->parsed()) {
            // Precedence: built-in defaults, then the config file, then flags.
            if (!config_path.empty()) {
                std::ifstream is(resolve_input(config_path));
                if (!is) throw ConfigError("cannot open config file '" + config_path + "'");
                nlohmann::json file_cfg;
                is >> file_cfg;
                if (file_cfg.contains("model")) ecfg.model = ModelConfig::from_json(file_cfg.at("model"));
                if (file_cfg.contains("seed") && app.count("--seed") == 0)
                    ecfg.seed = file_cfg.at("seed").get<std::uint64_t>();
                if (file_cfg.contains("train")) {
                    const auto& t = file_cfg.at("train");
                    if (t.contains("lr") && lr_opt->count() == 0) ecfg.train.lr = t.at("lr").get<double>();
                    if (t.contains("batch_size") && batch_opt->count() == 0)
                        ecfg.train.batch_size = t.at("batch_size").get<int>();
                    if (t.contains("max_epochs") && epochs_opt->count() == 0)
                        ecfg.train.max_epochs = t.at("max_epochs").get<int>();
                }
            }
            ecfg.task = task_from_string(train_task);
            ecfg.split = split_from_string(train_split);
            ecfg.out_dir = train_out;
            ecfg.model.fusion = fusion_from_string(fusion);
            ecfg.model.spatial = spatial_from_string(spatial);
            ecfg.model.mean_fusion_head = mean_fusion_head == "on";
            ecfg.val_granularity = val_granularity == "segment" ? ValGranularity::segment
                                                                : ValGranularity::trial;
            ecfg.model.anchor_lengths.clear();
            for (const std::string& part : CLI::detail::split(anchors, ','))
                ecfg.model.anchor_lengths.push_back(std::stoi(part));
            if (depth_opt->count() > 0) {
                if (depth < 2 || depth % 2 != 0)
                    throw ConfigError("--depth counts layer pairs: it must be an even number >= 2");
                ecfg.model.num_tcn_blocks = (depth - 2) / 2;
            }
            // Task-dependent training defaults unless given explicitly.
            if (ecfg.task == TaskKind::dec) {
                TrainConfig dec = TrainConfig::dec_defaults();
                if (lr_opt->count() == 0) ecfg.train.lr = dec.lr;
                if (batch_opt->count() == 0) ecfg.train.batch_size = dec.batch_size;
                if (epochs_opt->count() == 0) ecfg.train.max_epochs = dec.max_epochs;
                if (patience_opt->count() == 0) ecfg.train.early_stop_patience = dec.early_stop_patience;
                if (smooth_opt->count() == 0) ecfg.train.label_smoothing = dec.label_smoothing;
                if (wd_opt->count() == 0) ecfg.train.weight_decay = dec.weight_decay;
            }
            ecfg.train.stage2.enabled = ecfg.task == TaskKind::dec && stage2 == "on";
            return run_train(train_features, ecfg, start);
        }
        if (predict->parsed()) return run_predict(pd_checkpoint, pd_features, pd_trial, pd_out, start);
        return run_verify();
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IngestionError& e) {
        std::cerr << "ingestion error: " << e.what() << "\n";
        return 3;
    } catch (const VerificationFailure& e) {
        std::cerr << "verification failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
