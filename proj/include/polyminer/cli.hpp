#pragma once

// Command-line front end: generate, mine, evaluate, report.
//
//   generate --config C --out DIR [--preset P] [--seed N]
//   mine     --config C --dataset FILE --out DIR [--seed N] [--workers N]
//   evaluate --config C --dataset FILE --patterns FILE --runs DIR --out DIR [--seed N] [--workers N]
//   report   --in DIR [--out DIR]
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 runtime error.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "polyminer/config.hpp"
#include "polyminer/evalkit.hpp"
#include "polyminer/io.hpp"
#include "polyminer/miner.hpp"
#include "polyminer/plot.hpp"
#include "polyminer/simgen.hpp"

namespace polyminer::cli {

namespace fs = std::filesystem;

enum exit_code : int { ok = 0, config_failure = 2, data_failure = 3, runtime_failure = 4 };

struct Options {
    fs::path config;
    fs::path out;
    fs::path dataset;
    fs::path patterns;
    fs::path runs;
    fs::path in;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::string> preset;
};

namespace detail {

using clock = std::chrono::steady_clock;

inline double seconds_since(clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); }

inline nlohmann::json manifest(const std::string& command, const RunConfig& cfg) {
    nlohmann::json m;
    m["tool"] = "polyminer";
    m["version"] = tool_version;
    m["command"] = command;
    m["config"] = to_json(cfg);
    if (cfg.preset) m["preset"] = to_string(*cfg.preset);
    m["seeds"] = cfg.seeds;
    m["artifacts"] = nlohmann::json::array();
    return m;
}

inline void write_manifest(const fs::path& dir, const nlohmann::json& m) { io::atomic_write(dir / "manifest.json", m.dump(2) + "\n"); }

inline std::size_t workers_for(const RunConfig& cfg, const Options& o) {
    if (o.workers) return std::max<std::size_t>(1, *o.workers);
    return cfg.workers > 0 ? cfg.workers : default_workers();
}

inline std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

inline std::vector<std::uint64_t> seed_dirs_in(const fs::path& runs) {
    std::vector<std::uint64_t> seeds;
    if (!fs::is_directory(runs)) throw data_error("run directory '" + runs.string() + "' does not exist");
    for (const auto& e : fs::directory_iterator(runs)) {
        const auto name = e.path().filename().string();
        if (e.is_directory() && name.rfind("seed_", 0) == 0) seeds.push_back(io::parse_index(name.substr(5), "seed directory"));
    }
    std::sort(seeds.begin(), seeds.end());
    return seeds;
}

} // namespace detail

inline int cmd_generate(const Options& o, std::ostream& log) {
    const auto t0 = detail::clock::now();
    auto cfg = load_config(o.config, {"sim.dim", "sim.n_combinations", "sim.n_patterns"});
    if (o.preset) {
        cfg.preset = parse_preset(*o.preset);
        apply_preset(cfg.sim, *cfg.preset);
    }
    if (o.seed) cfg.sim.seed = *o.seed;
    cfg.sim.validate();

    const auto sim = generate_dataset(cfg.sim);
    const auto hist = rr_histogram(sim.dataset);
    io::atomic_write_with(o.out / "dataset.txt", [&](std::ostream& s) { io::write_dataset(s, sim.dataset); });
    io::atomic_write_with(o.out / "patterns.txt", [&](std::ostream& s) {
        io::write_patterns(s, sim.dataset.dim(), std::span<const DangerousPattern>{sim.patterns});
    });
    io::atomic_write_with(o.out / "histogram.csv", [&](std::ostream& s) { io::write_histogram_csv(s, hist); });

    const std::size_t dangerous = sim.dataset.count_above(cfg.miner.rr_threshold);
    auto m = detail::manifest("generate", cfg);
    m["artifacts"] = {"dataset.txt", "patterns.txt", "histogram.csv"};
    m["dataset"] = {{"size", sim.dataset.size()}, {"dim", sim.dataset.dim()}, {"dangerous", dangerous},
                    {"histogram_mode", hist.center(hist.mode())}};
    m["timings"] = {{"total_seconds", detail::seconds_since(t0)}};
    detail::write_manifest(o.out, m);
    log << "generated " << sim.dataset.size() << " combinations (" << dangerous << " with RR > " << cfg.miner.rr_threshold
        << "), " << sim.patterns.size() << " patterns, histogram mode " << hist.center(hist.mode()) << '\n';
    return ok;
}

inline int cmd_mine(const Options& o, std::ostream& log) {
    const auto t0 = detail::clock::now();
    auto cfg = load_config(o.config, {"miner.horizon", "miner.warmup"});
    if (o.seed) cfg.seeds = {*o.seed};
    cfg.miner.validate();
    // Read every input before any artifact is written.
    const auto data = io::load_dataset(o.dataset);
    if (cfg.seeds.empty()) throw config_error("no seeds to run");

    std::vector<MiningResult> results(cfg.seeds.size());
    std::vector<double> seconds(cfg.seeds.size(), 0.0);
    parallel_for(cfg.seeds.size(), detail::workers_for(cfg, o), [&](std::size_t k) {
        const auto ts = detail::clock::now();
        MinerConfig mc = cfg.miner;
        mc.seed = cfg.seeds[k];
        results[k] = run(data, mc);
        seconds[k] = detail::seconds_since(ts);
    });

    auto m = detail::manifest("mine", cfg);
    m["inputs"] = {{"dataset", fs::absolute(o.dataset).string()}};
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
        const auto dir = o.out / detail::seed_dir(cfg.seeds[k]);
        const auto& r = results[k];
        io::atomic_write_with(dir / "mined.txt", [&](std::ostream& s) {
            io::write_samples(s, data.dim(), std::span<const MiningSample>{r.dataset});
        });
        io::atomic_write_with(dir / "trace.csv", [&](std::ostream& s) { io::write_trace_csv(s, std::span<const TraceRow>{r.trace}); });
        io::save_ensemble(dir / "ensemble", r.ensemble);
        for (const char* name : {"mined.txt", "trace.csv", "ensemble"}) m["artifacts"].push_back(detail::seed_dir(cfg.seeds[k]) + "/" + name);
        m["timings"]["seed_seconds"][std::to_string(cfg.seeds[k])] = seconds[k];
        log << "seed " << cfg.seeds[k] << ": " << r.trace.size() << " plays, " << r.ensemble.size() << " ensemble members, "
            << distinct_positives(data, r.dataset, cfg.miner.rr_threshold) << " distinct dangerous combinations mined\n";
    }
    m["timings"]["total_seconds"] = detail::seconds_since(t0);
    detail::write_manifest(o.out, m);
    return ok;
}

inline int cmd_evaluate(const Options& o, std::ostream& log) {
    const auto t0 = detail::clock::now();
    auto cfg = load_config(o.config, {"miner.horizon", "miner.warmup"});
    const auto data = io::load_dataset(o.dataset);
    const auto patterns = io::load_patterns(o.patterns, data.dim());

    // --runs is either a mine output directory (seed_<n>/ subdirectories) or one ensemble directory.
    struct Job {
        std::uint64_t seed;
        fs::path ensemble_dir;
        std::optional<fs::path> mined;
    };
    std::vector<Job> jobs;
    if (fs::exists(o.runs / "ensemble.json")) {
        const auto sibling = o.runs.parent_path() / "mined.txt";
        jobs.push_back({o.seed.value_or(cfg.seeds.front()), o.runs,
                        fs::exists(sibling) ? std::optional<fs::path>{sibling} : std::nullopt});
    } else {
        auto seeds = detail::seed_dirs_in(o.runs);
        if (o.seed) {
            if (std::find(seeds.begin(), seeds.end(), *o.seed) == seeds.end())
                throw data_error("no seed_" + std::to_string(*o.seed) + " directory in '" + o.runs.string() + "'");
            seeds = {*o.seed};
        }
        if (seeds.empty()) throw data_error("no seed_<n> run directories in '" + o.runs.string() + "'");
        for (auto s : seeds) {
            const auto dir = o.runs / detail::seed_dir(s);
            jobs.push_back({s, dir / "ensemble", dir / "mined.txt"});
        }
    }

    std::vector<MiningResult> loaded(jobs.size());
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        loaded[k].ensemble = io::load_ensemble(jobs[k].ensemble_dir);
        if (loaded[k].ensemble.empty()) throw data_error(jobs[k].ensemble_dir.string() + ": ensemble has no members");
        const std::size_t ensemble_dim = loaded[k].ensemble.members.front().net.input_dim();
        if (ensemble_dim != data.dim())
            throw dimension_error("ensemble input dimension (" + jobs[k].ensemble_dir.string() + ") vs dataset dim", data.dim(),
                                  ensemble_dim);
        if (jobs[k].mined) {
            std::istringstream in(io::read_file(*jobs[k].mined));
            try {
                loaded[k].dataset = io::read_samples(in, data);
            } catch (const data_error& e) {
                throw data_error(jobs[k].mined->string() + ": " + e.what());
            }
        } else {
            log << "warning: no mined.txt next to " << jobs[k].ensemble_dir.string() << "; ratio_unseen treats D_T as empty\n";
        }
    }

    std::vector<SeedRun> runs(jobs.size());
    parallel_for(jobs.size(), detail::workers_for(cfg, o), [&](std::size_t k) {
        const auto ts = detail::clock::now();
        MinerConfig mc = cfg.miner;
        // Evaluate up to the last snapshot when the ensemble stops before the configured horizon.
        mc.horizon = std::max(loaded[k].ensemble.members.back().step, mc.warmup);
        runs[k] = evaluate_run(data, std::span<const DangerousPattern>{patterns}, loaded[k], mc, cfg.eval, jobs[k].seed);
        runs[k].seconds = detail::seconds_since(ts);
    });

    std::vector<std::vector<EvalReport>> ens, latest;
    for (const auto& r : runs) {
        ens.push_back(r.ensemble);
        latest.push_back(r.latest);
    }
    const auto ens_agg = aggregate(std::span<const std::vector<EvalReport>>{ens});
    io::atomic_write_with(o.out / "metrics.csv", [&](std::ostream& s) {
        io::write_metrics_header(s);
        for (const auto& r : runs) io::write_metrics_rows(s, r.seed, r.ensemble);
    });
    io::atomic_write_with(o.out / "aggregate.csv", [&](std::ostream& s) { io::write_aggregate_csv(s, ens_agg); });
    auto m = detail::manifest("evaluate", cfg);
    m["inputs"] = {{"dataset", fs::absolute(o.dataset).string()},
                   {"patterns", fs::absolute(o.patterns).string()},
                   {"runs", fs::absolute(o.runs).string()}};
    m["artifacts"] = {"metrics.csv", "aggregate.csv"};
    if (cfg.eval.latest_model) {
        const auto latest_agg = aggregate(std::span<const std::vector<EvalReport>>{latest});
        io::atomic_write_with(o.out / "metrics_latest.csv", [&](std::ostream& s) {
            io::write_metrics_header(s);
            for (const auto& r : runs) io::write_metrics_rows(s, r.seed, r.latest);
        });
        io::atomic_write_with(o.out / "aggregate_latest.csv", [&](std::ostream& s) { io::write_aggregate_csv(s, latest_agg); });
        m["artifacts"].push_back("metrics_latest.csv");
        m["artifacts"].push_back("aggregate_latest.csv");
    }

    nlohmann::json summary = nlohmann::json::array();
    for (const auto& r : runs) {
        const auto& last = r.ensemble.back();
        summary.push_back({{"seed", r.seed},
                           {"mined_positives", r.mined_positives},
                           {"random_positives", r.random_positives},
                           {"final_precision", last.precision},
                           {"final_recall", last.recall}});
        log << "seed " << r.seed << ": precision " << last.precision << ", recall " << last.recall << ", ratio_patterns "
            << last.ratio_patterns << ", ratio_unseen " << last.ratio_unseen << ", mined/random positives " << r.mined_positives
            << "/" << r.random_positives << '\n';
    }
    m["summary"] = summary;
    m["timings"]["total_seconds"] = detail::seconds_since(t0);
    detail::write_manifest(o.out, m);
    return ok;
}

// Re-renders plots from the aggregate CSVs of an evaluate output directory.
namespace detail {

inline std::vector<AggregateRow> read_aggregate_csv(const fs::path& path) {
    std::istringstream in(io::read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "step,metric,mean,std") throw data_error(path.string() + ": unexpected header");
    std::vector<AggregateRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = io::detail::split(line, ',');
        if (f.size() != 4) throw data_error(path.string() + ": line " + std::to_string(lineno) + ": expected 4 fields");
        const std::size_t step = io::parse_index(f[0], "step");
        if (rows.empty() || rows.back().step != step) rows.push_back({step, {}});
        MetricSummary s;
        s.mean = io::parse_double(f[2], "mean");
        s.std = io::parse_double(f[3], "std");
        rows.back().metrics[std::string(f[1])] = s;
    }
    return rows;
}

} // namespace detail

inline int cmd_report(const Options& o, std::ostream& log) {
    const fs::path out = o.out.empty() ? o.in / "plots" : o.out;
    const auto ens = detail::read_aggregate_csv(o.in / "aggregate.csv");
    std::vector<AggregateRow> latest;
    if (fs::exists(o.in / "aggregate_latest.csv")) latest = detail::read_aggregate_csv(o.in / "aggregate_latest.csv");
    std::size_t written = 0;
    for (const auto& metric : metric_names()) {
        if (ens.empty() || !ens.front().metrics.contains(metric)) continue;
        std::vector<plot::Series> series{plot::series_from(ens, metric, "ensemble", "#1f77b4")};
        if (!latest.empty() && latest.front().metrics.contains(metric))
            series.push_back(plot::series_from(latest, metric, "latest model", "#d62728"));
        io::atomic_write(out / (metric + ".svg"), plot::render_svg(metric + " (mean +/- std)", metric, series));
        ++written;
    }
    log << "wrote " << written << " plots to " << out.string() << '\n';
    return ok;
}

inline int main(int argc, char** argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Mine dangerous drug combinations with neural Thompson sampling over a historical dataset"};
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
    std::string preset;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "seed override");
        sub->add_option("--workers", workers, "parallel seed workers (default: logical cores)")->check(CLI::PositiveNumber);
    };
    auto* gen = app.add_subcommand("generate", "simulate a dataset, its dangerous patterns and the RR histogram");
    gen->add_option("--config", o.config, "config file (INI or JSON manifest)")->required();
    gen->add_option("--out", o.out, "output directory")->required();
    gen->add_option("--preset", preset, "neutral or protective")->check(CLI::IsMember({"neutral", "protective"}));
    add_common(gen);

    auto* mine = app.add_subcommand("mine", "run the miner for each seed");
    mine->add_option("--config", o.config)->required();
    mine->add_option("--dataset", o.dataset, "dataset file from generate")->required();
    mine->add_option("--out", o.out)->required();
    mine->add_option("--preset", preset)->check(CLI::IsMember({"neutral", "protective"}));
    add_common(mine);

    auto* eval = app.add_subcommand("evaluate", "score mined ensembles against the ground truth");
    eval->add_option("--config", o.config)->required();
    eval->add_option("--dataset", o.dataset)->required();
    eval->add_option("--patterns", o.patterns)->required();
    eval->add_option("--runs", o.runs, "mine output directory or a single ensemble directory")->required();
    eval->add_option("--out", o.out)->required();
    add_common(eval);

    auto* report = app.add_subcommand("report", "render metric plots from evaluate output");
    report->add_option("--in", o.in, "evaluate output directory")->required();
    report->add_option("--out", o.out, "plot directory (default: <in>/plots)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, log, err);
        return rc == 0 ? ok : config_failure;
    }
    for (auto* sub : {gen, mine, eval})
        if (sub->parsed()) {
            if (sub->count("--seed")) o.seed = seed;
            if (sub->count("--workers")) o.workers = workers;
        }
    if (!preset.empty()) o.preset = preset;

    try {
        if (gen->parsed()) return cmd_generate(o, log);
        if (mine->parsed()) return cmd_mine(o, log);
        if (eval->parsed()) {
            const int rc = cmd_evaluate(o, log);
            Options r;
            r.in = o.out;
            return rc == ok ? cmd_report(r, log) : rc;
        }
        return cmd_report(o, log);
    } catch (const config_error& e) {
        err << "config error: " << e.what() << '\n';
        return config_failure;
    } catch (const data_error& e) {
        err << "data error: " << e.what() << '\n';
        return data_failure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return runtime_failure;
    }
}

} // namespace polyminer::cli
