#pragma once

#include <cstdint>
#include <random>

namespace polyminer {

using rng_type = std::mt19937_64;

// mean + sd * z with z ~ N(0, 1). Unlike std::normal_distribution this accepts sd == 0
// and yields exactly `mean` in that case.
template <typename Rng>
double normal_draw(Rng& rng, double mean, double sd) {
    std::normal_distribution<double> z{0.0, 1.0};
    return mean + sd * z(rng);
}

template <typename Rng>
double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>{0.0, 1.0}(rng);
}

template <typename Rng>
bool bernoulli_draw(Rng& rng, double p) {
    return uniform01(rng) < p;
}

template <typename Rng>
std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>{0, n - 1}(rng);
}

} // namespace polyminer
