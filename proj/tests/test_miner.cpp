#include <gtest/gtest.h>

#include "polyminer/evalkit.hpp"
#include "polyminer/miner.hpp"
#include "polyminer/simgen.hpp"

using namespace polyminer;

namespace {

const SimulatedData& small_data() {
    static const SimulatedData sim = [] {
        auto cfg = desk_config(SimPreset::protective, 3);
        cfg.dim = 20;
        cfg.n_combinations = 400;
        cfg.combo_drug_prob = cfg.pattern_drug_prob = 0.2;
        return generate_dataset(cfg);
    }();
    return sim;
}

MinerConfig small_miner(std::size_t horizon = 60, std::size_t warmup = 20) {
    MinerConfig cfg;
    cfg.horizon = horizon;
    cfg.warmup = warmup;
    cfg.lambda = 0.01;
    cfg.hidden_layers = {8};
    cfg.train.epochs = 10;
    cfg.train.l2_lambda = 0.01;
    cfg.de.population = 8;
    cfg.de.steps = 3;
    return cfg;
}

// A one-layer network whose output is w.x + b, paired with a design matrix chosen so the
// predictive std is a fixed value for inputs in the same direction.
EnsembleMember constant_member(std::size_t dim, double mean, double lambda, std::size_t step) {
    std::vector<double> theta(dim + 1, 0.0);
    theta[dim] = mean;
    return {NetworkState({dim, 1}, theta), DesignMatrixDiag(dim + 1, lambda), step};
}

} // namespace

TEST(MinerConfig, Validation) {
    auto cfg = small_miner();
    EXPECT_NO_THROW(cfg.validate());
    cfg.warmup = 0;
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = small_miner();
    cfg.warmup = cfg.horizon + 1;
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = small_miner();
    cfg.retrain_every = 0;
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = small_miner();
    cfg.rr_threshold = 0.0;
    EXPECT_THROW(cfg.validate(), config_error);
}

TEST(Warmup, PlaysDatasetMembersAndTrainsOnce) {
    const auto& data = small_data().dataset;
    auto cfg = small_miner(200, 100);
    rng_type a(4), b(4);
    const auto s = warmup(data, cfg, a);
    ASSERT_EQ(s.samples.size(), 100u);
    for (const auto& smp : s.samples) EXPECT_EQ(data[smp.entry].combination, smp.combination);
    EXPECT_EQ(s.ensemble.size(), 1u);
    EXPECT_EQ(s.ensemble.members.front().step, 100u);
    const auto s2 = warmup(data, cfg, b);
    for (std::size_t k = 0; k < 100; ++k) EXPECT_EQ(s.samples[k].entry, s2.samples[k].entry);
    EXPECT_THROW(warmup(HistoricalDataset(20, {}), cfg, a), data_error);
}

TEST(Warmup, DesignMatrixUsesInitialParameters) {
    const auto& data = small_data().dataset;
    auto cfg = small_miner(30, 30);
    rng_type rng(2);
    const auto s = warmup(data, cfg, rng);
    // Replay: the design matrix is lambda*I plus squared gradients at theta_0.
    rng_type replay(2);
    const auto net0 = NetworkState::random(cfg.layer_dims(data.dim()), replay);
    DesignMatrixDiag u(net0.param_count(), cfg.lambda);
    for (const auto& smp : s.samples) u.update(net0.param_gradient(smp.combination));
    EXPECT_EQ(s.design, u);
}

TEST(Run, TraceAndEnsembleBookkeeping) {
    const auto& data = small_data().dataset;
    auto cfg = small_miner(120, 20);
    const auto r = run(data, cfg);
    ASSERT_EQ(r.dataset.size(), 120u);
    ASSERT_EQ(r.trace.size(), 120u);
    for (std::size_t k = 0; k < r.trace.size(); ++k) {
        EXPECT_EQ(r.trace[k].step, k + 1);
        EXPECT_TRUE(data.contains(r.trace[k].played));
        EXPECT_EQ(r.trace[k].played, nearest_in_dataset(r.trace[k].recommended, data));
    }
    // One warm-up model plus one per 10 bandit steps.
    EXPECT_EQ(r.ensemble.size(), 1u + 10u);
    for (std::size_t k = 1; k < r.ensemble.size(); ++k) EXPECT_LT(r.ensemble.members[k - 1].step, r.ensemble.members[k].step);
}

TEST(Run, EnsembleCountRoundsUpAndDesignGrows) {
    const auto& data = small_data().dataset;
    auto cfg = small_miner(45, 20);
    cfg.retrain_every = 10;
    const auto r = run(data, cfg);
    EXPECT_EQ(r.ensemble.size(), 1u + 3u);  // steps 30, 40, 45
    EXPECT_EQ(r.ensemble.members.back().step, 45u);
    for (std::size_t k = 1; k < r.ensemble.size(); ++k) {
        const auto a = r.ensemble.members[k - 1].design.diag(), b = r.ensemble.members[k].design.diag();
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_GE(b[i], a[i]);
    }
}

TEST(Run, HorizonEqualToWarmup) {
    const auto& data = small_data().dataset;
    const auto r = run(data, small_miner(25, 25));
    EXPECT_EQ(r.dataset.size(), 25u);
    EXPECT_EQ(r.ensemble.size(), 1u);
}

TEST(Run, SameSeedIsBitIdentical) {
    const auto& data = small_data().dataset;
    auto cfg = small_miner(50, 20);
    cfg.seed = 99;
    const auto a = run(data, cfg), b = run(data, cfg);
    ASSERT_EQ(a.dataset.size(), b.dataset.size());
    for (std::size_t k = 0; k < a.dataset.size(); ++k) {
        EXPECT_EQ(a.dataset[k].entry, b.dataset[k].entry);
        EXPECT_EQ(a.dataset[k].observed_reward, b.dataset[k].observed_reward);
    }
    EXPECT_EQ(a.ensemble.members, b.ensemble.members);
}

TEST(MiningStep, RecommendationInDatasetIsPlayedAsIs) {
    // A dataset containing every non-empty subset of 4 drugs: any recommendation except the
    // empty vector is a member.
    std::vector<DatasetEntry> entries;
    for (unsigned mask = 1; mask < 16; ++mask) {
        std::vector<drug_index> drugs;
        for (drug_index i = 0; i < 4; ++i)
            if (mask >> i & 1u) drugs.push_back(i);
        entries.push_back({DrugCombination(4, drugs), 1.0 + 0.1 * mask});
    }
    const HistoricalDataset data(4, entries);
    const auto r = run(data, small_miner(40, 10));
    for (const auto& row : r.trace)
        if (!row.recommended.empty()) EXPECT_EQ(row.recommended, row.played);
}

TEST(MiningStep, ZeroExplorationIsDeterministicGivenState) {
    const auto& data = small_data().dataset;
    auto cfg = small_miner(40, 20);
    cfg.nu = 0.0;
    rng_type rng(1);
    const auto s = warmup(data, cfg, rng);
    auto a = s, b = s;
    rng_type ra(7), rb(7);
    mining_step(a, data, cfg, ra);
    mining_step(b, data, cfg, rb);
    EXPECT_EQ(a.trace.back().recommended, b.trace.back().recommended);
}

TEST(MiningStep, RefusesToRunPastTheHorizon) {
    const auto& data = small_data().dataset;
    const auto cfg = small_miner(20, 20);
    rng_type rng(1);
    auto s = warmup(data, cfg, rng);
    EXPECT_THROW(mining_step(s, data, cfg, rng), error);
}

TEST(Classify, LowerBoundArithmetic) {
    // Affine member with zero weights: mean = bias, and with U = lambda*I the std is
    // sqrt(|x| + 1) for a combination x.
    EnsembleModel e{{constant_member(3, 2.0, 1.0, 1)}, 1.1, 3.0};
    const DrugCombination empty(3, {});
    // Empty input: only the bias gradient (1) is non-zero, std = 1, LCB = 2 - 3 = -1.
    EXPECT_FALSE(classify(e, empty));
    e.lcb_multiplier = 0.8;  // 2 - 0.8 = 1.2 > 1.1
    EXPECT_TRUE(classify(e, empty));
    EXPECT_THROW(classify(EnsembleModel{}, empty), data_error);
}

TEST(Classify, MeanOneIsNeverFlagged) {
    EnsembleModel e{{constant_member(3, 1.0, 1.0, 1), constant_member(3, 1.0, 0.1, 2)}, 1.1, 3.0};
    for (drug_index i = 0; i < 3; ++i) EXPECT_FALSE(classify(e, DrugCombination(3, {i})));
}

TEST(Classify, AddingMembersNeverUnflags) {
    const auto& data = small_data().dataset;
    auto cfg = small_miner(80, 20);
    cfg.rr_threshold = 0.5;
    const auto r = run(data, cfg);
    std::vector<DrugCombination> combos;
    for (const auto& e : data.entries()) combos.push_back(e.combination);
    std::vector<std::uint8_t> prev;
    for (std::size_t n = 1; n <= r.ensemble.size(); ++n) {
        EnsembleModel prefix{{r.ensemble.members.begin(), r.ensemble.members.begin() + static_cast<std::ptrdiff_t>(n)}, 0.5, 3.0};
        const auto flags = classify_all(prefix, std::span<const DrugCombination>{combos});
        for (std::size_t k = 0; k < prev.size(); ++k)
            if (prev[k]) EXPECT_TRUE(flags[k]);
        prev = flags;
    }
}

TEST(Run, DeskScaleMinesMorePositivesThanRandomFraction) {
    // Fraction of D_T with true RR > 1.1 versus uniform sampling, over 20 seeds.
    auto sim_cfg = desk_config(SimPreset::protective, 0);
    MinerConfig cfg;
    cfg.horizon = 2000;
    cfg.warmup = 500;
    cfg.lambda = 0.01;
    cfg.train.l2_lambda = 0.01;
    double mined = 0, random = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        sim_cfg.seed = seed;
        const auto sim = generate_dataset(sim_cfg);
        cfg.seed = seed;
        const auto r = run(sim.dataset, cfg);
        for (const auto& s : r.dataset) mined += sim.dataset[s.entry].true_rr > 1.1;
        rng_type rng(seed + 1000);
        for (std::size_t t = 0; t < cfg.horizon; ++t) random += sim.dataset[uniform_index(rng, sim.dataset.size())].true_rr > 1.1;
    }
    EXPECT_GT(mined, random);
}
