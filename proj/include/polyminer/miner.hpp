#pragma once

// The mining loop: random warm-up, then per step a DE search over Thompson samples of the
// network posterior, projection of the recommendation onto the dataset (Hamming 1-NN),
// a noisy reward observation and periodic retraining. Every retrained model is kept,
// together with the design matrix at that step, as a member of the ensemble predictor.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "polyminer/bandit.hpp"
#include "polyminer/claims.hpp"
#include "polyminer/devolution.hpp"
#include "polyminer/error.hpp"
#include "polyminer/neuralnet.hpp"
#include "polyminer/random.hpp"

namespace polyminer {

struct MinerConfig {
    std::size_t horizon = 30000;  // T, total plays including warm-up
    std::size_t warmup = 10000;   // tau
    double lambda = 1.0;          // design matrix regulariser
    double nu = 1.0;              // exploration factor
    std::size_t retrain_every = 10;
    double noise_sigma = 0.1;
    double rr_threshold = 1.1;
    double lcb_multiplier = 3.0;
    std::vector<std::size_t> hidden_layers{64};
    TrainConfig train;
    DEConfig de;
    // When true the DE initial population uses the dataset's mean drug density instead of de.init_prob.
    bool de_init_from_data = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (warmup == 0) throw config_error("miner.warmup must be positive");
        if (warmup > horizon) throw config_error("miner.warmup must not exceed miner.horizon");
        if (retrain_every < 1) throw config_error("miner.retrain_every must be >= 1");
        if (!(rr_threshold > 0.0)) throw config_error("miner.rr_threshold must be positive");
        if (!(lambda > 0.0)) throw config_error("miner.lambda must be positive");
        if (nu < 0.0) throw config_error("miner.nu must be non-negative");
        if (noise_sigma < 0.0) throw config_error("miner.noise_sigma must be non-negative");
        if (lcb_multiplier < 0.0) throw config_error("miner.lcb_multiplier must be non-negative");
        for (auto h : hidden_layers)
            if (h == 0) throw config_error("miner.hidden_layers widths must be positive");
        train.validate();
        de.validate();
    }

    std::vector<std::size_t> layer_dims(std::size_t dim) const {
        std::vector<std::size_t> dims{dim};
        dims.insert(dims.end(), hidden_layers.begin(), hidden_layers.end());
        dims.push_back(1);
        return dims;
    }
};

struct EnsembleMember {
    NetworkState net;
    DesignMatrixDiag design;
    std::size_t step = 0;  // time step at which the snapshot was taken

    friend bool operator==(const EnsembleMember&, const EnsembleMember&) = default;
};

// Single-vote ensemble: a combination is flagged when any member's lower confidence bound
// mean - k * std exceeds the RR threshold.
struct EnsembleModel {
    std::vector<EnsembleMember> members;
    double rr_threshold = 1.1;
    double lcb_multiplier = 3.0;

    bool empty() const noexcept { return members.empty(); }
    std::size_t size() const noexcept { return members.size(); }

    // Members snapshotted at or before `step`.
    EnsembleModel up_to(std::size_t step) const {
        EnsembleModel e{{}, rr_threshold, lcb_multiplier};
        for (const auto& m : members)
            if (m.step <= step) e.members.push_back(m);
        return e;
    }

    // Only the most recent member snapshotted at or before `step`.
    EnsembleModel latest_at(std::size_t step) const {
        EnsembleModel e{{}, rr_threshold, lcb_multiplier};
        for (const auto& m : members)
            if (m.step <= step) e.members.assign(1, m);
        return e;
    }
};

template <typename Input>
bool classify(const EnsembleModel& ensemble, const Input& x) {
    if (ensemble.empty()) throw data_error("classify: empty ensemble");
    for (const auto& m : ensemble.members) {
        PosteriorEvaluator post(m.net, m.design);
        if (lower_bound(post(x), ensemble.lcb_multiplier) > ensemble.rr_threshold) return true;
    }
    return false;
}

// ORs the votes of `members` into `flags` (one flag per input). Inputs already flagged are
// skipped, so feeding members incrementally yields prefix-ensemble classifications.
template <typename Input>
void accumulate_votes(std::span<const EnsembleMember> members, double k, double threshold, std::span<const Input> inputs,
                      std::vector<std::uint8_t>& flags) {
    flags.resize(inputs.size(), 0);
    for (const auto& m : members) {
        PosteriorEvaluator post(m.net, m.design);
        for (std::size_t i = 0; i < inputs.size(); ++i)
            if (!flags[i] && lower_bound(post(inputs[i]), k) > threshold) flags[i] = 1;
    }
}

template <typename Input>
std::vector<std::uint8_t> classify_all(const EnsembleModel& ensemble, std::span<const Input> inputs) {
    if (ensemble.empty()) throw data_error("classify: empty ensemble");
    std::vector<std::uint8_t> flags(inputs.size(), 0);
    accumulate_votes(std::span<const EnsembleMember>{ensemble.members}, ensemble.lcb_multiplier, ensemble.rr_threshold,
                     inputs, flags);
    return flags;
}

struct TraceRow {
    std::size_t step = 0;  // 1-based
    DrugCombination recommended;
    DrugCombination played;
    double reward = 0.0;
};

struct MinerState {
    NetworkState net;
    DesignMatrixDiag design;
    std::vector<MiningSample> samples;
    std::vector<DrugCombination> inputs;  // samples[k].combination, kept contiguous for training
    std::vector<double> targets;
    std::vector<TraceRow> trace;
    EnsembleModel ensemble;
    std::size_t step = 0;
    double de_init_prob = 0.5;
};

struct MiningResult {
    std::vector<MiningSample> dataset;
    EnsembleModel ensemble;
    std::vector<TraceRow> trace;
};

namespace detail {

inline double mean_density(const HistoricalDataset& data) {
    if (data.empty() || data.dim() == 0) return 0.5;
    double total = 0.0;
    for (const auto& e : data.entries()) total += static_cast<double>(e.combination.size());
    return total / static_cast<double>(data.size()) / static_cast<double>(data.dim());
}

inline void record(MinerState& s, const HistoricalDataset& data, DrugCombination recommended, std::size_t entry,
                   double reward) {
    const auto& played = data[entry].combination;
    s.samples.push_back({played, entry, reward});
    s.inputs.push_back(played);
    s.targets.push_back(reward);
    s.trace.push_back({s.step, std::move(recommended), played, reward});
}

template <typename Rng>
void retrain(MinerState& s, const MinerConfig& cfg, Rng& rng) {
    auto trained = train(s.net, std::span<const DrugCombination>{s.inputs}, std::span<const double>{s.targets}, cfg.train, rng);
    s.net = std::move(trained.net);
    s.ensemble.members.push_back({s.net, s.design, s.step});
}

} // namespace detail

// Plays cfg.warmup uniformly random dataset entries (with replacement), accumulating the design
// matrix with gradients at the initial parameters, then trains the network once.
template <typename Rng>
MinerState warmup(const HistoricalDataset& data, const MinerConfig& cfg, Rng& rng) {
    cfg.validate();
    if (data.empty()) throw data_error("warmup: empty dataset");
    MinerState s;
    s.net = NetworkState::random(cfg.layer_dims(data.dim()), rng);
    s.design = DesignMatrixDiag(s.net.param_count(), cfg.lambda);
    s.ensemble.rr_threshold = cfg.rr_threshold;
    s.ensemble.lcb_multiplier = cfg.lcb_multiplier;
    s.de_init_prob = cfg.de_init_from_data ? detail::mean_density(data) : cfg.de.init_prob;

    auto ws = s.net.make_workspace();
    std::vector<double> grad(s.net.param_count(), 0.0);
    for (std::size_t t = 1; t <= cfg.warmup; ++t) {
        s.step = t;
        const std::size_t entry = uniform_index(rng, data.size());
        const double reward = observe_reward(entry, data, cfg.noise_sigma, rng);
        s.net.param_gradient(data[entry].combination, std::span<double>{grad}, ws);
        s.design.update(grad);
        detail::record(s, data, data[entry].combination, entry, reward);
    }
    detail::retrain(s, cfg, rng);
    return s;
}

// One bandit step t = s.step + 1.
template <typename Rng>
void mining_step(MinerState& s, const HistoricalDataset& data, const MinerConfig& cfg, Rng& rng) {
    if (s.step < cfg.warmup || s.ensemble.empty()) throw error("mining_step called before warm-up completed");
    if (s.step >= cfg.horizon) throw error("mining_step called past the horizon");
    ++s.step;

    PosteriorEvaluator posterior(s.net, s.design, cfg.nu);
    const Objective q = [&](std::span<const std::uint8_t> x) { return sample_value(posterior(x), rng); };
    DEConfig de = cfg.de;
    de.init_prob = s.de_init_prob;
    const BinaryVector recommended_mask = de_optimize(de, data.dim(), q, rng);
    const auto recommended = DrugCombination::from_mask(std::span<const std::uint8_t>{recommended_mask});

    // The design matrix learns from the recommended action, not the projected one.
    s.design.update(posterior.gradient(recommended_mask));

    const std::size_t entry = data.nearest_index(recommended);
    const double reward = observe_reward(entry, data, cfg.noise_sigma, rng);
    detail::record(s, data, recommended, entry, reward);

    if ((s.step - cfg.warmup) % cfg.retrain_every == 0 || s.step == cfg.horizon) detail::retrain(s, cfg, rng);
}

template <typename Rng>
MiningResult run(const HistoricalDataset& data, const MinerConfig& cfg, Rng& rng) {
    auto s = warmup(data, cfg, rng);
    while (s.step < cfg.horizon) mining_step(s, data, cfg, rng);
    return {std::move(s.samples), std::move(s.ensemble), std::move(s.trace)};
}

inline MiningResult run(const HistoricalDataset& data, const MinerConfig& cfg) {
    rng_type rng(cfg.seed);
    return run(data, cfg, rng);
}

} // namespace polyminer
