#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "masa/binio.hpp"
#include "masa/harness.hpp"
#include "masa/manifest.hpp"
#include "masa/serialize.hpp"
#include "reference_ops.hpp"

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

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

FeatureStore tiny_cer_store(const fs::path& dir, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.num_subjects = 2;
    cfg.trials_per_subject = 2;
    cfg.duration_s = 20.0;
    cfg.seed = seed;
    const DatasetManifest m = synth_cer(cfg, dir.string());
    PreprocessConfig pcfg;
    pcfg.band_set = m.band_set;
    pcfg.seq_len = 24;
    pcfg.seq_step = 8;
    return preprocess_dataset(m, dir.string(), pcfg);
}

ExperimentConfig tiny_cer_experiment() {
    ExperimentConfig cfg;
    cfg.task = TaskKind::cer;
    cfg.split = SplitStrategy::loso;
    cfg.model.num_channels = 32;
    cfg.model.num_bands = 6;
    cfg.model.width = 6;
    cfg.model.anchor_lengths = {3, 5};
    cfg.model.num_tcn_blocks = 1;
    cfg.train = TrainConfig::cer_defaults();
    cfg.train.max_epochs = 2;
    cfg.seed = 21;
    return cfg;
}

}  // namespace

TEST_CASE("cer experiment end-to-end, worker-count independence") {
    TempDir dir("masa_pipe_cer");
    const FeatureStore store = tiny_cer_store(dir.path, 77);

    ExperimentConfig cfg = tiny_cer_experiment();
    cfg.out_dir = (dir.path / "run1").string();
    const ExperimentResult r1 = run_experiment(store, cfg);
    CHECK(r1.report.rows.size() == 2);  // one fold per subject
    for (const MetricRow& row : r1.report.rows) {
        CHECK(row.values.at("RMSE") >= 0.0);
        CHECK(row.values.at("CCC") >= -1.0);
        CHECK(row.values.at("CCC") <= 1.0);
    }
    CHECK(fs::exists(dir.path / "run1" / "metrics.csv"));
    CHECK(fs::exists(dir.path / "run1" / "metrics.txt"));
    for (const FoldOutcome& f : r1.folds) {
        CHECK(fs::exists(dir.path / "run1" / ("fold_" + f.id) / "weights.bin"));
        CHECK(fs::exists(dir.path / "run1" / ("fold_" + f.id) / "record.json"));
        CHECK(fs::exists(dir.path / "run1" / ("fold_" + f.id) / "trace.csv"));
    }

    // Two workers, same seeds: byte-identical reports and records.
    ExperimentConfig cfg2 = cfg;
    cfg2.jobs = 2;
    cfg2.out_dir = (dir.path / "run2").string();
    const ExperimentResult r2 = run_experiment(store, cfg2);
    CHECK(slurp(dir.path / "run1" / "metrics.csv") == slurp(dir.path / "run2" / "metrics.csv"));
    for (std::size_t i = 0; i < r1.folds.size(); ++i) {
        nlohmann::json a = r1.folds[i].record.to_json();
        nlohmann::json b = r2.folds[i].record.to_json();
        a.erase("weights_path");  // differs by output directory only
        b.erase("weights_path");
        CHECK(a.dump() == b.dump());
    }
}

TEST_CASE("dec experiment with trial-wise folds") {
    TempDir dir("masa_pipe_dec");
    SynthConfig scfg;
    scfg.num_subjects = 1;
    scfg.trials_per_subject = 10;
    scfg.duration_s = 12.0;
    scfg.seed = 31;
    const DatasetManifest m = synth_dec(scfg, dir.path.string());
    PreprocessConfig pcfg;
    pcfg.band_set = m.band_set;
    pcfg.seq_len = 25;
    pcfg.seq_step = 16;
    const FeatureStore store = preprocess_dataset(m, dir.path.string(), pcfg);

    ExperimentConfig cfg;
    cfg.task = TaskKind::dec;
    cfg.split = SplitStrategy::kfold;
    cfg.kfold_k = 10;
    cfg.model.num_channels = 32;
    cfg.model.num_bands = 5;
    cfg.model.width = 4;
    cfg.model.anchor_lengths = {3};
    cfg.model.num_tcn_blocks = 1;
    cfg.model.head = HeadKind::classification;
    cfg.train = TrainConfig::dec_defaults();
    cfg.train.max_epochs = 3;
    cfg.train.stage2.max_epochs = 2;
    cfg.seed = 5;
    const ExperimentResult r = run_experiment(store, cfg);
    CHECK(r.report.rows.size() == 10);
    for (const MetricRow& row : r.report.rows) {
        CHECK(row.values.at("ACC") >= 0.0);
        CHECK(row.values.at("ACC") <= 1.0);
        CHECK(row.values.at("F1") >= 0.0);
        CHECK(row.values.at("F1") <= 1.0);
    }
}

TEST_CASE("config conflicts are rejected up front") {
    TempDir dir("masa_pipe_conflict");
    const FeatureStore store = tiny_cer_store(dir.path, 78);

    ExperimentConfig cfg = tiny_cer_experiment();
    cfg.split = SplitStrategy::kfold;
    CHECK_THROWS_AS((void)run_experiment(store, cfg), ConfigError);  // kfold + continuous labels

    ExperimentConfig dec_cfg = tiny_cer_experiment();
    dec_cfg.task = TaskKind::dec;
    dec_cfg.model.head = HeadKind::classification;
    CHECK_THROWS_AS((void)run_experiment(store, dec_cfg), ConfigError);
}

TEST_CASE("prediction stitching covers the sequence plan") {
    TempDir dir("masa_pipe_stitch");
    const FeatureStore store = tiny_cer_store(dir.path, 79);
    ModelConfig mcfg;
    mcfg.num_channels = 32;
    mcfg.num_bands = 6;
    mcfg.width = 4;
    mcfg.anchor_lengths = {3};
    mcfg.num_tcn_blocks = 0;
    ModelParams params = init_params(mcfg, 1);
    for (double& v : params.at("head.weight").values) v = 0.0;
    params.at("head.bias").values[0] = 0.75;

    const TrialFeatures& tf = store.trials.front();
    const TrialPrediction tp = stitch_trial_prediction(mcfg, params, tf, store.seq_len, store.seq_step);
    // 73 vectors, seq 24 step 8 -> last window starts at 48, covers 72.
    CHECK(tp.prediction.size() == 72);
    CHECK(tp.label.size() == 72);
    for (double v : tp.prediction) CHECK(v == 0.75);
}

TEST_CASE("fault injection: the gradient checker flags a corrupted backward rule") {
    Pcg32 rng(3);
    Tensor x = Tensor::zeros({8});
    for (double& v : x.values) v = rng.uniform(-1, 1);
    auto eval = [&]() {
        double acc = 0.0;
        for (double v : x.values) acc += v * v;
        return acc;
    };
    std::vector<double> corrupted(8);
    for (std::size_t i = 0; i < 8; ++i) corrupted[i] = -2.0 * x.values[i];  // sign flipped
    std::vector<std::size_t> probes(8);
    std::iota(probes.begin(), probes.end(), 0);
    const auto res = reference::finite_difference_check(x.values, eval, corrupted, probes);
    CHECK(res.max_rel_err > 1e-4);
}

TEST_CASE("run manifest round-trips") {
    TempDir dir("masa_pipe_manifest");
    RunManifest m;
    m.command = "train";
    m.config = {{"width", 64}};
    m.seed = 9;
    m.build_id = build_id();
    m.input_hashes["a"] = "00ff";
    m.outputs = {"metrics.csv"};
    m.wall_clock_s = 1.5;
    const std::string p = (dir.path / "run_manifest.json").string();
    write_run_manifest(p, m);
    const RunManifest back = load_run_manifest(p);
    CHECK(back.command == "train");
    CHECK(back.config.at("width").get<int>() == 64);
    CHECK(back.seed == 9);
    CHECK(back.input_hashes.at("a") == "00ff");
}

#ifdef MASA_CLI_PATH
namespace {
int run_cli(const std::string& args) {
    const std::string cmd = std::string(MASA_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}
}  // namespace

TEST_CASE("cli end-to-end walkthrough with exit codes") {
    TempDir dir("masa_cli");
    const std::string data = (dir.path / "data").string();
    const std::string feats = (dir.path / "features").string();
    const std::string run = (dir.path / "run").string();

    CHECK(run_cli("synth --task cer --subjects 2 --trials 2 --duration 20 --seed 3 --out " + data) == 0);
    CHECK(run_cli("preprocess --manifest " + data + "/manifest.json --out " + feats +
                  " --seq-len 24 --seq-step 8") == 0);
    CHECK(fs::exists(fs::path(feats) / "alignment_report.csv"));
    CHECK(fs::exists(fs::path(feats) / "run_manifest.json"));

    // Idempotent rerun: identical feature files.
    const std::string feats2 = (dir.path / "features2").string();
    CHECK(run_cli("preprocess --manifest " + data + "/manifest.json --out " + feats2 +
                  " --seq-len 24 --seq-step 8") == 0);
    const FeatureStore a = load_feature_store(feats);
    for (const TrialFeatures& tf : a.trials) {
        const std::string name = tf.subject_id + "_" + tf.trial_id + ".ftr";
        CHECK(binio::file_hash((fs::path(feats) / name).string()) ==
              binio::file_hash((fs::path(feats2) / name).string()));
    }

    CHECK(run_cli("train --features " + feats +
                  " --task cer --split loso --width 6 --anchors 3,5 --epochs 2 --seed 4 --out " +
                  run) == 0);
    CHECK(fs::exists(fs::path(run) / "metrics.csv"));
    CHECK(fs::exists(fs::path(run) / "run_manifest.json"));

    const std::string csv = (dir.path / "pred.csv").string();
    CHECK(run_cli("predict --checkpoint " + run + "/fold_s0/weights.bin --features " + feats +
                  " --trial s0_t0 --out " + csv) == 0);
    const std::string pred = slurp(csv);
    CHECK(pred.find("index,prediction,label") == 0);
    CHECK(pred.find("# CCC,") != std::string::npos);

    // Distinct exit codes: config (2), ingestion (3).
    CHECK(run_cli("train --features " + feats + " --task cer --split kfold --out " +
                  (dir.path / "bad").string()) == 2);
    CHECK(run_cli("preprocess --manifest " + (dir.path / "missing.json").string() + " --out " +
                  (dir.path / "x").string()) == 3);

    // Empty manifest is an explicit ingestion error.
    {
        std::ofstream os(dir.path / "empty.json");
        os << R"({"name":"empty","band_set":[[0.3,5],[5,8]],"label_rate":4,"trials":[]})";
    }
    CHECK(run_cli("preprocess --manifest " + (dir.path / "empty.json").string() + " --out " +
                  (dir.path / "y").string()) == 3);
}

TEST_CASE("cli verify passes on a pristine build") {
    CHECK(run_cli("verify") == 0);
}
#endif
