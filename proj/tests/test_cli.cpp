#include <gtest/gtest.h>

#include <sstream>

#include "polyminer/cli.hpp"

using namespace polyminer;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "polyminer");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("polyminer_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write(const fs::path& path, const std::string& text) {
    io::atomic_write(path, text);
    return path;
}

const char* small_config =
    "[sim]\ndim = 20\nn_combinations = 300\nn_patterns = 3\npattern_drug_prob = 0.2\ncombo_drug_prob = 0.2\n"
    "preset = protective\nseed = 2\n"
    "[miner]\nhorizon = 60\nwarmup = 20\nretrain_every = 10\nlambda = 0.01\nl2_lambda = 0.01\nhidden_layers = 8\n"
    "epochs = 5\nseeds = 0-1\n"
    "[de]\npopulation = 6\nsteps = 2\n"
    "[eval]\nevery = 20\n";

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Dataset of singletons {k} with RR 2.5 for even k, 0.5 for odd k.
HistoricalDataset singleton_data(std::size_t d) {
    std::vector<DatasetEntry> e;
    for (std::size_t k = 0; k < d; ++k) e.push_back({DrugCombination(d, {static_cast<drug_index>(k)}), k % 2 == 0 ? 2.5 : 0.5});
    return HistoricalDataset(d, std::move(e));
}

// One affine member scoring 2.5 on even drugs and 0.5 on odd ones, with negligible std.
EnsembleModel oracle_ensemble(std::size_t d, std::size_t step) {
    std::vector<double> theta(d + 1, 0.0);
    for (std::size_t k = 0; k < d; k += 2) theta[k] = 2.0;
    theta[d] = 0.5;
    EnsembleModel e;
    e.rr_threshold = 1.1;
    e.lcb_multiplier = 3.0;
    e.members.push_back({NetworkState({d, 1}, theta), DesignMatrixDiag(1e-12, std::vector<double>(d + 1, 1.0)), step});
    return e;
}

} // namespace

TEST(Cli, NoSubcommandIsAUsageError) {
    EXPECT_EQ(run_cli({}).code, cli::config_failure);
    EXPECT_EQ(run_cli({"frobnicate"}).code, cli::config_failure);
    EXPECT_EQ(run_cli({"--help"}).code, cli::ok);
}

TEST(Cli, GenerateHistogramModeFollowsPreset) {
    const auto dir = scratch("generate");
    for (const auto& [preset, lo, hi] : {std::tuple{"neutral", 0.95, 1.05}, std::tuple{"protective", 0.0, 0.5}}) {
        const auto cfg = write(dir / "c.ini", "[sim]\ndim = 50\nn_combinations = 5000\nn_patterns = 5\npattern_drug_prob = 0.02\n"
                                              "combo_drug_prob = 0.1\n");
        const auto out = dir / preset;
        const auto r = run_cli({"generate", "--config", cfg.string(), "--out", out.string(), "--preset", preset});
        ASSERT_EQ(r.code, cli::ok) << r.err;
        const auto m = nlohmann::json::parse(io::read_file(out / "manifest.json"));
        const double mode = m.at("dataset").at("histogram_mode").get<double>();
        EXPECT_GE(mode, lo) << preset;
        EXPECT_LT(mode, hi) << preset;
        EXPECT_EQ(m.at("dataset").at("size").get<std::size_t>(), 5000u);
        for (const char* f : {"dataset.txt", "patterns.txt", "histogram.csv"}) EXPECT_TRUE(fs::exists(out / f)) << f;
        EXPECT_EQ(io::read_file(out / "histogram.csv").rfind("bucket_center,count\n", 0), 0u);
    }
}

TEST(Cli, MissingRequiredFieldNamesIt) {
    const auto dir = scratch("missing");
    const auto cfg = write(dir / "c.ini", "[sim]\ndim = 10\nn_combinations = 50\n");
    const auto r = run_cli({"generate", "--config", cfg.string(), "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, cli::config_failure);
    EXPECT_NE(r.err.find("sim.n_patterns"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "out" / "dataset.txt"));
}

TEST(Cli, MineIsDeterministicAndTracesEveryStep) {
    const auto dir = scratch("mine");
    const auto cfg = write(dir / "c.ini", small_config);
    ASSERT_EQ(run_cli({"generate", "--config", cfg.string(), "--out", (dir / "gen").string()}).code, cli::ok);
    const auto dataset = (dir / "gen" / "dataset.txt").string();
    for (const char* out : {"a", "b"}) {
        const auto r = run_cli({"mine", "--config", cfg.string(), "--dataset", dataset, "--out", (dir / out).string()});
        ASSERT_EQ(r.code, cli::ok) << r.err;
    }
    for (const char* seed : {"seed_0", "seed_1"}) {
        const auto trace = io::read_file(dir / "a" / seed / "trace.csv");
        EXPECT_EQ(trace.rfind("step,recommended_combo,played_combo,reward\n", 0), 0u);
        EXPECT_EQ(line_count(trace), 61u);
        EXPECT_EQ(trace, io::read_file(dir / "b" / seed / "trace.csv"));
        EXPECT_EQ(io::read_file(dir / "a" / seed / "mined.txt"), io::read_file(dir / "b" / seed / "mined.txt"));
        EXPECT_EQ(io::read_file(dir / "a" / seed / "ensemble" / "ensemble.json"),
                  io::read_file(dir / "b" / seed / "ensemble" / "ensemble.json"));
        // warm-up snapshot, retrains at 30..60
        EXPECT_EQ(io::load_ensemble(dir / "a" / seed / "ensemble").size(), 5u);
    }
    EXPECT_NE(io::read_file(dir / "a" / "seed_0" / "trace.csv"), io::read_file(dir / "a" / "seed_1" / "trace.csv"));

    const auto eval = [&](const char* out) {
        return run_cli({"evaluate", "--config", cfg.string(), "--dataset", dataset, "--patterns",
                        (dir / "gen" / "patterns.txt").string(), "--runs", (dir / "a").string(), "--out", (dir / out).string()});
    };
    ASSERT_EQ(eval("e1").code, cli::ok);
    ASSERT_EQ(eval("e2").code, cli::ok);
    const auto metrics = io::read_file(dir / "e1" / "metrics.csv");
    EXPECT_EQ(metrics, io::read_file(dir / "e2" / "metrics.csv"));
    EXPECT_EQ(line_count(metrics), 1u + 2u * 2u);  // steps 40 and 60 for two seeds
    for (const char* f : {"aggregate.csv", "metrics_latest.csv", "aggregate_latest.csv", "plots/precision.svg"})
        EXPECT_TRUE(fs::exists(dir / "e1" / f)) << f;
    EXPECT_EQ(io::read_file(dir / "e1" / "plots" / "recall.svg"), io::read_file(dir / "e2" / "plots" / "recall.svg"));
}

TEST(Cli, CorruptDatasetFailsWithoutArtifacts) {
    const auto dir = scratch("corrupt");
    const auto cfg = write(dir / "c.ini", small_config);
    const auto bad = write(dir / "dataset.txt", "dimension: 20\n1,2;1.0\n");
    const auto r = run_cli({"mine", "--config", cfg.string(), "--dataset", bad.string(), "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, cli::data_failure);
    EXPECT_NE(r.err.find("dim="), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "out"));
    const auto missing = run_cli({"mine", "--config", (dir / "nope.ini").string(), "--dataset", bad.string(), "--out",
                                  (dir / "out").string()});
    EXPECT_EQ(missing.code, cli::config_failure);
}

TEST(Cli, EvaluateSingleEnsembleDirectory) {
    const auto dir = scratch("oracle");
    const std::size_t d = 6;
    const auto data = singleton_data(d);
    io::atomic_write_with(dir / "dataset.txt", [&](std::ostream& s) { io::write_dataset(s, data); });
    const std::vector<DangerousPattern> ps{{DrugCombination(d, {0, 2}), 3.0}, {DrugCombination(d, {1, 3}), 2.0}};
    io::atomic_write_with(dir / "patterns.txt", [&](std::ostream& s) { io::write_patterns(s, d, ps); });
    io::save_ensemble(dir / "run" / "ensemble", oracle_ensemble(d, 10));
    const auto cfg = write(dir / "c.ini", "[miner]\nhorizon = 10\nwarmup = 5\n");
    const auto r = run_cli({"evaluate", "--config", cfg.string(), "--dataset", (dir / "dataset.txt").string(), "--patterns",
                            (dir / "patterns.txt").string(), "--runs", (dir / "run" / "ensemble").string(), "--out",
                            (dir / "eval").string()});
    ASSERT_EQ(r.code, cli::ok) << r.err;
    const auto metrics = io::read_file(dir / "eval" / "metrics.csv");
    EXPECT_EQ(metrics,
              "seed,step,tp,fp,fn,precision,recall,ratio_patterns,ratio_unseen,no_predictions\n"
              "0,10,3,0,0,1,1,0.5,1,0\n");

    // Report alone re-renders byte-identical plots.
    const auto first = io::read_file(dir / "eval" / "plots" / "precision.svg");
    ASSERT_EQ(run_cli({"report", "--in", (dir / "eval").string()}).code, cli::ok);
    EXPECT_EQ(io::read_file(dir / "eval" / "plots" / "precision.svg"), first);
}

TEST(Cli, DimensionMismatchNamesBothValues) {
    const auto dir = scratch("mismatch");
    io::atomic_write_with(dir / "dataset.txt", [&](std::ostream& s) { io::write_dataset(s, singleton_data(5)); });
    io::atomic_write(dir / "patterns.txt", "dim=5\n0,1;3\n");
    io::save_ensemble(dir / "ensemble", oracle_ensemble(4, 10));
    const auto cfg = write(dir / "c.ini", "[miner]\nhorizon = 10\nwarmup = 5\n");
    const auto r = run_cli({"evaluate", "--config", cfg.string(), "--dataset", (dir / "dataset.txt").string(), "--patterns",
                            (dir / "patterns.txt").string(), "--runs", (dir / "ensemble").string(), "--out",
                            (dir / "eval").string()});
    EXPECT_EQ(r.code, cli::data_failure);
    EXPECT_NE(r.err.find("expected dimension 5, got 4"), std::string::npos) << r.err;
}
