#include <gtest/gtest.h>

#include <cmath>

#include "polyminer/neuralnet.hpp"

using namespace polyminer;

namespace {

std::vector<double> random_input(std::size_t d, rng_type& rng) {
    std::vector<double> x(d);
    for (auto& v : x) v = uniform01(rng) * 2.0 - 1.0;
    return x;
}

double norm(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

TEST(Network, ParameterCountAndZeroNetwork) {
    const NetworkState net({5, 4, 3, 1});
    EXPECT_EQ(net.param_count(), 5u * 4 + 4 + 4 * 3 + 3 + 3 * 1 + 1);
    rng_type rng(0);
    EXPECT_EQ(net.forward(random_input(5, rng)), 0.0);
    EXPECT_THROW(NetworkState({5, 2}), config_error);
    EXPECT_THROW(NetworkState({5, 0, 1}), config_error);
}

TEST(Network, AffineLayerIsDotProductPlusBias) {
    const NetworkState net({3, 1}, {0.5, -1.0, 2.0, 0.25});
    const std::vector<double> x{1.0, 2.0, 3.0};
    EXPECT_DOUBLE_EQ(net.forward(x), 0.5 - 2.0 + 6.0 + 0.25);
    const auto g = net.param_gradient(x);
    EXPECT_EQ(g, (std::vector<double>{1.0, 2.0, 3.0, 1.0}));
}

TEST(Network, DimensionMismatchThrows) {
    const NetworkState net({3, 2, 1});
    EXPECT_THROW(net.forward(std::vector<double>{1.0, 2.0}), dimension_error);
    EXPECT_THROW(net.param_gradient(std::vector<double>{1.0}), dimension_error);
}

TEST(Network, ForwardIsDeterministicAndPure) {
    rng_type rng(4);
    const auto net = NetworkState::random({6, 5, 1}, rng);
    const auto before = net;
    const auto x = random_input(6, rng);
    const double y = net.forward(x);
    EXPECT_EQ(net.forward(x), y);
    net.param_gradient(x);
    EXPECT_EQ(net, before);
}

TEST(Network, ZeroInputHasZeroFirstLayerWeightGradient) {
    rng_type rng(1);
    const auto net = NetworkState::random({4, 3, 1}, rng);
    const auto g = net.param_gradient(std::vector<double>(4, 0.0));
    for (std::size_t k = 0; k < 4 * 3; ++k) EXPECT_EQ(g[k], 0.0);
}

TEST(Network, GradientMatchesCentralDifferences) {
    rng_type rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 1 + uniform_index(rng, 10);
        const std::size_t h = 1 + uniform_index(rng, 8);
        auto net = NetworkState::random({d, h, 1}, rng);
        const auto x = random_input(d, rng);
        const auto g = net.param_gradient(x);
        const double step = 1e-4;
        for (std::size_t k = 0; k < net.param_count(); ++k) {
            const double orig = net.params()[k];
            net.params()[k] = orig + step;
            const double up = net.forward(x);
            net.params()[k] = orig - step;
            const double down = net.forward(x);
            net.params()[k] = orig;
            const double fd = (up - down) / (2 * step);
            EXPECT_LE(std::abs(fd - g[k]), 1e-4 * std::max(1.0, std::abs(g[k]))) << "trial " << trial << " k " << k;
        }
    }
}

TEST(Network, SparseAndDenseInputsAgree) {
    rng_type rng(2);
    const auto net = NetworkState::random({12, 6, 4, 1}, rng);
    const DrugCombination c(12, {0, 3, 11});
    const auto dense = c.to_dense();
    const auto mask = c.to_mask();
    EXPECT_DOUBLE_EQ(net.forward(c), net.forward(dense));
    EXPECT_DOUBLE_EQ(net.forward(mask), net.forward(dense));
    const auto gs = net.param_gradient(c), gd = net.param_gradient(dense);
    for (std::size_t k = 0; k < gs.size(); ++k) EXPECT_DOUBLE_EQ(gs[k], gd[k]);
}

TEST(Network, GradientQuadraticMatchesExplicitGradient) {
    rng_type rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto net = NetworkState::random({10, 7, 5, 1}, rng);
        std::vector<double> w(net.param_count());
        for (auto& v : w) v = uniform01(rng);
        const DrugCombination c(10, {1, 4, 8});
        auto ws = net.make_workspace();
        const auto r = net.gradient_quadratic(c, w, ws);
        const auto g = net.param_gradient(c);
        double q = 0;
        for (std::size_t k = 0; k < g.size(); ++k) q += w[k] * g[k] * g[k];
        EXPECT_NEAR(r.quadratic, q, 1e-12 * std::max(1.0, q));
        EXPECT_DOUBLE_EQ(r.value, net.forward(c));
    }
}

TEST(Train, FitsSingleAffineUnit) {
    TrainConfig cfg;
    cfg.l2_lambda = 0.0;
    cfg.epochs = 2000;
    cfg.learning_rate = 0.05;
    rng_type rng(0);
    const std::vector<std::vector<double>> inputs{{1.0}};
    const std::vector<double> targets{2.0};
    const auto r = train(NetworkState({1, 1}), std::span<const std::vector<double>>{inputs}, std::span<const double>{targets}, cfg, rng);
    EXPECT_LT(r.best_loss, 1e-4);
    EXPECT_LT(training_loss(r.net, std::span<const std::vector<double>>{inputs}, std::span<const double>{targets}, 0.0), 1e-4);
}

TEST(Train, HeavyRegularisationShrinksParameters) {
    rng_type rng(3);
    const auto init = NetworkState::random({4, 6, 1}, rng);
    std::vector<std::vector<double>> inputs;
    std::vector<double> targets;
    for (int k = 0; k < 32; ++k) {
        inputs.push_back(random_input(4, rng));
        targets.push_back(uniform01(rng));
    }
    TrainConfig cfg;
    cfg.l2_lambda = 1e6;
    const auto r = train(init, std::span<const std::vector<double>>{inputs}, std::span<const double>{targets}, cfg, rng);
    EXPECT_LT(norm(r.net.params()), norm(init.params()));
}

TEST(Train, ReturnsBestCheckpointNeverWorseThanStartOrEnd) {
    rng_type rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const auto init = NetworkState::random({5, 8, 1}, rng);
        std::vector<std::vector<double>> inputs;
        std::vector<double> targets;
        for (int k = 0; k < 40; ++k) {
            inputs.push_back(random_input(5, rng));
            targets.push_back(inputs.back()[0] * inputs.back()[1]);
        }
        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.learning_rate = 0.5;  // large steps make the loss curve non-monotone
        const std::span<const std::vector<double>> in{inputs};
        const std::span<const double> tg{targets};
        const double l2 = effective_l2(cfg, inputs.size());
        const auto r = train(init, in, tg, cfg, rng);
        EXPECT_DOUBLE_EQ(training_loss(r.net, in, tg, l2), r.best_loss);
        EXPECT_LE(r.best_loss, r.final_loss);
        EXPECT_LE(r.best_loss, training_loss(init, in, tg, l2));
    }
}

TEST(Train, PlateauDecayIsFloored) {
    rng_type rng(0);
    const std::vector<std::vector<double>> inputs{{1.0}};
    const std::vector<double> targets{1.0};
    TrainConfig cfg;
    cfg.epochs = 400;
    cfg.l2_lambda = 0.0;
    // Starting at the optimum: no epoch improves, so the rate halves every patience epochs.
    const auto r = train(NetworkState({1, 1}, {1.0, 0.0}), std::span<const std::vector<double>>{inputs},
                         std::span<const double>{targets}, cfg, rng);
    EXPECT_EQ(r.final_learning_rate, cfg.min_learning_rate);
    EXPECT_EQ(r.best_epoch, 0u);
}

TEST(Train, MiniBatchesForLargeSets) {
    rng_type rng(5);
    std::vector<std::vector<double>> inputs;
    std::vector<double> targets;
    for (int k = 0; k < 300; ++k) {
        inputs.push_back(random_input(3, rng));
        targets.push_back(2.0 * inputs.back()[0] - inputs.back()[2] + 0.5);
    }
    TrainConfig cfg;
    cfg.batch_size = 64;
    cfg.l2_lambda = 0.0;
    cfg.epochs = 200;
    const auto r = train(NetworkState({3, 1}), std::span<const std::vector<double>>{inputs}, std::span<const double>{targets}, cfg, rng);
    EXPECT_LT(r.best_loss, 1e-4);
    EXPECT_NEAR(r.net.params()[0], 2.0, 1e-2);
}

TEST(Train, RejectsEmptyData) {
    rng_type rng(0);
    const std::vector<std::vector<double>> none;
    EXPECT_THROW(train(NetworkState({1, 1}), std::span<const std::vector<double>>{none}, std::span<const double>{}, TrainConfig{}, rng),
                 data_error);
}
