#pragma once

// Differential evolution, best/1/bin, over binary vectors {0,1}^d.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "polyminer/error.hpp"
#include "polyminer/random.hpp"

namespace polyminer {

using BinaryVector = std::vector<std::uint8_t>;

struct DEConfig {
    std::size_t population = 32;
    double crossover_rate = 0.9;
    double differential_weight = 1.0;
    std::size_t steps = 16;
    double init_prob = 0.5;  // per-component probability of a 1 in the initial population
    std::uint64_t seed = 0;

    void validate() const {
        if (population < 4) throw config_error("de.population must be >= 4");
        if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) throw config_error("de.crossover_rate must lie in [0, 1]");
        if (!(differential_weight > 0.0)) throw config_error("de.differential_weight must be positive");
        if (steps < 1) throw config_error("de.steps must be >= 1");
        if (!(init_prob >= 0.0 && init_prob <= 1.0)) throw config_error("de.init_prob must lie in [0, 1]");
    }
};

using Objective = std::function<double(std::span<const std::uint8_t>)>;

struct DEResult {
    BinaryVector best;
    double best_score = 0.0;
    std::size_t evaluations = 0;
    std::vector<double> best_score_history;  // best stored score after init and after each step
};

// Higher objective is better. Each member's score is evaluated once, when the member enters
// the population, so a run costs exactly population * (steps + 1) objective calls. A trial
// replaces its target only when it scores strictly higher.
template <typename Rng>
DEResult de_optimize_detailed(const DEConfig& cfg, std::size_t dim, const Objective& q, Rng& rng) {
    cfg.validate();
    if (dim == 0) throw config_error("de_optimize: dimension must be >= 1");
    const std::size_t n = cfg.population;

    DEResult result;
    std::vector<BinaryVector> pop(n, BinaryVector(dim, 0));
    std::vector<double> score(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dim; ++j) pop[i][j] = bernoulli_draw(rng, cfg.init_prob) ? 1 : 0;
        score[i] = q(pop[i]);
        ++result.evaluations;
    }
    auto argmax = [&] { return static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin()); };
    result.best_score_history.push_back(score[argmax()]);

    BinaryVector trial(dim, 0);
    for (std::size_t s = 0; s < cfg.steps; ++s) {
        const BinaryVector best = pop[argmax()];
        for (std::size_t i = 0; i < n; ++i) {
            // r1, r2 distinct from each other and from i.
            std::size_t r1, r2;
            do r1 = uniform_index(rng, n); while (r1 == i);
            do r2 = uniform_index(rng, n); while (r2 == i || r2 == r1);
            const std::size_t forced = uniform_index(rng, dim);
            for (std::size_t j = 0; j < dim; ++j) {
                const bool take_mutant = j == forced || uniform01(rng) <= cfg.crossover_rate;
                if (take_mutant) {
                    const double m = static_cast<double>(best[j])
                                     + cfg.differential_weight * (static_cast<double>(pop[r1][j]) - static_cast<double>(pop[r2][j]));
                    trial[j] = std::clamp(std::round(m), 0.0, 1.0) > 0.5 ? 1 : 0;
                } else {
                    trial[j] = pop[i][j];
                }
            }
            const double trial_score = q(trial);
            ++result.evaluations;
            if (trial_score > score[i]) {
                pop[i] = trial;
                score[i] = trial_score;
            }
        }
        result.best_score_history.push_back(score[argmax()]);
    }
    const std::size_t b = argmax();
    result.best = std::move(pop[b]);
    result.best_score = score[b];
    return result;
}

template <typename Rng>
BinaryVector de_optimize(const DEConfig& cfg, std::size_t dim, const Objective& q, Rng& rng) {
    return de_optimize_detailed(cfg, dim, q, rng).best;
}

// Seeds a fresh generator from cfg.seed.
inline BinaryVector de_optimize(const DEConfig& cfg, std::size_t dim, const Objective& q) {
    rng_type rng(cfg.seed);
    return de_optimize(cfg, dim, q, rng);
}

} // namespace polyminer
