#pragma once

// Detection metrics for mined ensembles, the random-sampling baseline and a multi-seed
// experiment harness.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "polyminer/claims.hpp"
#include "polyminer/miner.hpp"
#include "polyminer/simgen.hpp"

namespace polyminer {

struct EvalReport {
    std::size_t step = 0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    double precision = 1.0;  // 1.0 when nothing is flagged, see no_predictions
    double recall = 0.0;
    double ratio_patterns = 0.0;
    double ratio_unseen = 0.0;
    bool no_predictions = true;
    std::size_t patterns_flagged = 0;
    std::size_t unseen_true_positives = 0;
};

// Ground truth positive <=> true_rr > threshold. `flags` classifies the dataset entries and
// `pattern_flags` the dangerous patterns; `mined` is D_t.
inline EvalReport score_flags(const HistoricalDataset& data, std::span<const std::uint8_t> flags,
                              std::span<const std::uint8_t> pattern_flags, std::span<const MiningSample> mined,
                              double threshold) {
    if (flags.size() != data.size()) throw dimension_error("score_flags dataset flags", data.size(), flags.size());
    std::vector<std::uint8_t> in_mined(data.size(), 0);
    for (const auto& s : mined) in_mined[s.entry] = 1;

    EvalReport r;
    r.step = mined.size();
    for (std::size_t k = 0; k < data.size(); ++k) {
        const bool positive = data[k].true_rr > threshold;
        if (flags[k]) {
            if (positive) {
                ++r.true_positives;
                if (!in_mined[k]) ++r.unseen_true_positives;
            } else {
                ++r.false_positives;
            }
        } else if (positive) {
            ++r.false_negatives;
        }
    }
    const std::size_t predicted = r.true_positives + r.false_positives;
    r.no_predictions = predicted == 0;
    r.precision = predicted == 0 ? 1.0 : static_cast<double>(r.true_positives) / static_cast<double>(predicted);
    const std::size_t actual = r.true_positives + r.false_negatives;
    r.recall = actual == 0 ? 0.0 : static_cast<double>(r.true_positives) / static_cast<double>(actual);
    r.patterns_flagged = static_cast<std::size_t>(std::count(pattern_flags.begin(), pattern_flags.end(), std::uint8_t{1}));
    r.ratio_patterns = pattern_flags.empty() ? 0.0 : static_cast<double>(r.patterns_flagged) / static_cast<double>(pattern_flags.size());
    r.ratio_unseen = r.true_positives == 0 ? 0.0 : static_cast<double>(r.unseen_true_positives) / static_cast<double>(r.true_positives);
    return r;
}

inline std::vector<DrugCombination> combinations_of(const HistoricalDataset& data) {
    std::vector<DrugCombination> out;
    out.reserve(data.size());
    for (const auto& e : data.entries()) out.push_back(e.combination);
    return out;
}

inline std::vector<DrugCombination> combinations_of(std::span<const DangerousPattern> patterns) {
    std::vector<DrugCombination> out;
    out.reserve(patterns.size());
    for (const auto& p : patterns) out.push_back(p.combination);
    return out;
}

inline EvalReport evaluate(const EnsembleModel& ensemble, const HistoricalDataset& data,
                           std::span<const DangerousPattern> patterns, std::span<const MiningSample> mined,
                           double threshold) {
    if (ensemble.empty()) throw data_error("evaluate: empty ensemble");
    const auto combos = combinations_of(data);
    const auto pattern_combos = combinations_of(patterns);
    const auto flags = classify_all(ensemble, std::span<const DrugCombination>{combos});
    const auto pflags = classify_all(ensemble, std::span<const DrugCombination>{pattern_combos});
    return score_flags(data, flags, pflags, mined, threshold);
}

// Evaluates the growing ensemble of one mining run at increasing steps. Votes are accumulated
// member by member, so each member classifies the dataset at most once.
class PrefixEvaluator {
public:
    PrefixEvaluator(const HistoricalDataset& data, std::span<const DangerousPattern> patterns, const MiningResult& run,
                    double threshold, std::size_t subsample = 0)
        : data_(&data), run_(&run), threshold_(threshold), combos_(combinations_of(data)),
          pattern_combos_(combinations_of(patterns)) {
        if (subsample > 0 && subsample < data.size()) {
            // Evenly strided subset of the dataset entries.
            std::vector<DatasetEntry> kept;
            for (std::size_t k = 0; k < subsample; ++k) kept.push_back(data[k * data.size() / subsample]);
            owned_ = HistoricalDataset(data.dim(), std::move(kept));
            remap_.assign(data.size(), npos);
            for (std::size_t k = 0; k < subsample; ++k) remap_[k * data.size() / subsample] = k;
            data_ = &owned_;
            combos_ = combinations_of(owned_);
        }
    }

    // Ensemble made of every member snapshotted at or before `step`.
    EvalReport ensemble_at(std::size_t step) {
        const auto& members = run_->ensemble.members;
        while (next_member_ < members.size() && members[next_member_].step <= step) ++next_member_;
        if (next_member_ == 0) throw data_error("no ensemble member exists at step " + std::to_string(step));
        const std::span<const EnsembleMember> fresh{members.data() + fed_, next_member_ - fed_};
        accumulate_votes(fresh, run_->ensemble.lcb_multiplier, threshold_, std::span<const DrugCombination>{combos_}, flags_);
        accumulate_votes(fresh, run_->ensemble.lcb_multiplier, threshold_, std::span<const DrugCombination>{pattern_combos_},
                         pattern_flags_);
        fed_ = next_member_;
        return score(step);
    }

    // The single most recent member at `step`.
    EvalReport latest_at(std::size_t step) {
        const auto single = run_->ensemble.latest_at(step);
        if (single.empty()) throw data_error("no ensemble member exists at step " + std::to_string(step));
        std::vector<std::uint8_t> flags, pflags;
        accumulate_votes(std::span<const EnsembleMember>{single.members}, single.lcb_multiplier, threshold_,
                         std::span<const DrugCombination>{combos_}, flags);
        accumulate_votes(std::span<const EnsembleMember>{single.members}, single.lcb_multiplier, threshold_,
                         std::span<const DrugCombination>{pattern_combos_}, pflags);
        return score_with(step, flags, pflags);
    }

private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    EvalReport score(std::size_t step) const { return score_with(step, flags_, pattern_flags_); }

    EvalReport score_with(std::size_t step, const std::vector<std::uint8_t>& flags,
                          const std::vector<std::uint8_t>& pflags) const {
        const std::size_t n = std::min(step, run_->dataset.size());
        std::span<const MiningSample> mined{run_->dataset.data(), n};
        std::vector<MiningSample> remapped;
        if (!remap_.empty()) {
            for (const auto& s : mined)
                if (remap_[s.entry] != npos) remapped.push_back({s.combination, remap_[s.entry], s.observed_reward});
            mined = remapped;
        }
        auto r = score_flags(*data_, flags, pflags, mined, threshold_);
        r.step = step;
        return r;
    }

    const HistoricalDataset* data_;
    const MiningResult* run_;
    double threshold_;
    HistoricalDataset owned_;
    std::vector<std::size_t> remap_;
    std::vector<DrugCombination> combos_;
    std::vector<DrugCombination> pattern_combos_;
    std::vector<std::uint8_t> flags_;
    std::vector<std::uint8_t> pattern_flags_;
    std::size_t next_member_ = 0;
    std::size_t fed_ = 0;
};

// Number of distinct positive entries in `budget` uniform draws with replacement.
template <typename Rng>
std::size_t random_baseline(const HistoricalDataset& data, std::size_t budget, double threshold, Rng& rng) {
    if (data.empty() || budget == 0) return 0;
    std::unordered_set<std::size_t> hit;
    for (std::size_t t = 0; t < budget; ++t) {
        const std::size_t k = uniform_index(rng, data.size());
        if (data[k].true_rr > threshold) hit.insert(k);
    }
    return hit.size();
}

// E[distinct positives] = P * (1 - (1 - 1/|D|)^T).
inline double random_baseline_expectation(std::size_t positives, std::size_t dataset_size, std::size_t budget) {
    if (dataset_size == 0) return 0.0;
    return static_cast<double>(positives)
           * (1.0 - std::pow(1.0 - 1.0 / static_cast<double>(dataset_size), static_cast<double>(budget)));
}

inline std::size_t distinct_positives(const HistoricalDataset& data, std::span<const MiningSample> mined, double threshold) {
    std::unordered_set<std::size_t> hit;
    for (const auto& s : mined)
        if (data[s.entry].true_rr > threshold) hit.insert(s.entry);
    return hit.size();
}

// Evaluation steps: warmup + k * every for k >= 1 up to the horizon, plus the horizon itself.
inline std::vector<std::size_t> evaluation_steps(std::size_t warmup, std::size_t horizon, std::size_t every) {
    if (every == 0) throw config_error("eval.every must be positive");
    std::vector<std::size_t> steps;
    for (std::size_t t = warmup + every; t <= horizon; t += every) steps.push_back(t);
    if (steps.empty() || steps.back() != horizon) steps.push_back(horizon);
    return steps;
}

struct SeedRun {
    std::uint64_t seed = 0;
    std::vector<EvalReport> ensemble;  // one report per evaluation step
    std::vector<EvalReport> latest;    // single most recent model at the same steps
    std::size_t mined_positives = 0;   // distinct true positives in D_T
    std::size_t random_positives = 0;  // same budget, uniform sampling
    double seconds = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation across seeds
    double min = 0.0;
    double max = 0.0;
};

struct AggregateRow {
    std::size_t step = 0;
    std::map<std::string, MetricSummary> metrics;
};

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"precision", "recall", "ratio_patterns", "ratio_unseen", "tp", "fp", "fn"};
    return names;
}

inline double metric_value(const EvalReport& r, const std::string& name) {
    if (name == "precision") return r.precision;
    if (name == "recall") return r.recall;
    if (name == "ratio_patterns") return r.ratio_patterns;
    if (name == "ratio_unseen") return r.ratio_unseen;
    if (name == "tp") return static_cast<double>(r.true_positives);
    if (name == "fp") return static_cast<double>(r.false_positives);
    if (name == "fn") return static_cast<double>(r.false_negatives);
    throw config_error("unknown metric '" + name + "'");
}

inline MetricSummary summarize(std::span<const double> values) {
    MetricSummary s;
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size()));
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    // The mean of identical values can round away from them; keep it inside [min, max].
    s.mean = std::clamp(s.mean, s.min, s.max);
    return s;
}

// Aggregates per-seed series that share the same evaluation steps.
inline std::vector<AggregateRow> aggregate(std::span<const std::vector<EvalReport>> series) {
    std::vector<AggregateRow> rows;
    if (series.empty()) return rows;
    const std::size_t n_steps = series.front().size();
    for (const auto& s : series)
        if (s.size() != n_steps) throw data_error("aggregate: seeds disagree on the number of evaluation steps");
    for (std::size_t k = 0; k < n_steps; ++k) {
        AggregateRow row;
        row.step = series.front()[k].step;
        for (const auto& name : metric_names()) {
            std::vector<double> values;
            for (const auto& s : series) values.push_back(metric_value(s[k], name));
            row.metrics[name] = summarize(values);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

struct EvalConfig {
    std::size_t every = 200;
    std::size_t subsample = 0;  // 0 = classify the whole dataset
    bool latest_model = true;   // also score the single most recent model
};

inline SeedRun evaluate_run(const HistoricalDataset& data, std::span<const DangerousPattern> patterns, const MiningResult& run,
                            const MinerConfig& cfg, const EvalConfig& eval, std::uint64_t seed) {
    SeedRun out;
    out.seed = seed;
    PrefixEvaluator ev(data, patterns, run, cfg.rr_threshold, eval.subsample);
    for (auto step : evaluation_steps(cfg.warmup, cfg.horizon, eval.every)) {
        out.ensemble.push_back(ev.ensemble_at(step));
        if (eval.latest_model) out.latest.push_back(ev.latest_at(step));
    }
    out.mined_positives = distinct_positives(data, run.dataset, cfg.rr_threshold);
    rng_type rng(seed ^ 0x5bd1e995ULL);
    out.random_positives = random_baseline(data, cfg.horizon, cfg.rr_threshold, rng);
    return out;
}

// Runs `fn(k)` for k in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < n; k = next++) {
                try {
                    fn(k);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

inline std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

struct ExperimentResult {
    SimulatedData sim;
    std::vector<SeedRun> runs;
    std::vector<AggregateRow> ensemble_aggregate;
    std::vector<AggregateRow> latest_aggregate;
};

// One simulated dataset (from sim_cfg.seed), n_seeds mining runs with seeds
// miner_cfg.seed, miner_cfg.seed + 1, ...
inline ExperimentResult run_experiment(const SimConfig& sim_cfg, const MinerConfig& miner_cfg, const EvalConfig& eval,
                                       std::size_t n_seeds, std::size_t workers = 1) {
    if (n_seeds < 1) throw config_error("run_experiment: n_seeds must be >= 1");
    ExperimentResult result;
    result.sim = generate_dataset(sim_cfg);
    result.runs.resize(n_seeds);
    parallel_for(n_seeds, workers, [&](std::size_t k) {
        MinerConfig cfg = miner_cfg;
        cfg.seed = miner_cfg.seed + k;
        const auto t0 = std::chrono::steady_clock::now();
        const auto mined = run(result.sim.dataset, cfg);
        result.runs[k] = evaluate_run(result.sim.dataset, result.sim.patterns, mined, cfg, eval, cfg.seed);
        result.runs[k].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
    std::vector<std::vector<EvalReport>> ens, latest;
    for (const auto& r : result.runs) {
        ens.push_back(r.ensemble);
        latest.push_back(r.latest);
    }
    result.ensemble_aggregate = aggregate(std::span<const std::vector<EvalReport>>{ens});
    if (eval.latest_model) result.latest_aggregate = aggregate(std::span<const std::vector<EvalReport>>{latest});
    return result;
}

} // namespace polyminer
