#pragma once

// Synthetic polypharmacy data: hidden "dangerous patterns" with a high RR, and a pool of
// distinct combinations whose RR depends on how similar they are to their nearest pattern.

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "polyminer/claims.hpp"
#include "polyminer/error.hpp"
#include "polyminer/random.hpp"

namespace polyminer {

struct SimConfig {
    std::size_t dim = 500;
    std::size_t n_combinations = 100000;
    std::size_t n_patterns = 10;
    double pattern_drug_prob = 0.01;
    double combo_drug_prob = 0.01;  // 5 / dim: five drugs on average
    double pattern_rr_low = 2.0;
    double pattern_rr_high = 4.0;
    double sigma_inter = 0.1;
    double sigma_disjoint = 0.05;
    double mu_disjoint = 1.0;
    std::uint64_t seed = 0;
    std::size_t max_attempts_per_item = 1000;

    void validate() const {
        if (dim == 0) throw config_error("sim.dim must be positive");
        if (!(pattern_drug_prob > 0.0 && pattern_drug_prob < 1.0))
            throw config_error("sim.pattern_drug_prob must lie in (0, 1)");
        if (!(combo_drug_prob > 0.0 && combo_drug_prob < 1.0))
            throw config_error("sim.combo_drug_prob must lie in (0, 1)");
        if (!(pattern_rr_low > 1.1)) throw config_error("sim.pattern_rr_low must exceed 1.1");
        if (pattern_rr_high < pattern_rr_low) throw config_error("sim.pattern_rr_high must be >= sim.pattern_rr_low");
        if (!(sigma_inter > 0.0)) throw config_error("sim.sigma_inter must be positive");
        if (!(sigma_disjoint > 0.0)) throw config_error("sim.sigma_disjoint must be positive");
        if (max_attempts_per_item == 0) throw config_error("sim.max_attempts_per_item must be positive");
    }
};

enum class SimPreset { neutral, protective };

inline SimPreset parse_preset(const std::string& name) {
    if (name == "neutral") return SimPreset::neutral;
    if (name == "protective") return SimPreset::protective;
    throw config_error("unknown preset '" + name + "' (expected neutral or protective)");
}

inline std::string to_string(SimPreset p) { return p == SimPreset::neutral ? "neutral" : "protective"; }

// Neutral: non-dangerous RRs centred on 1. Protective: centred well below 1.
inline void apply_preset(SimConfig& cfg, SimPreset p) {
    if (p == SimPreset::neutral) {
        cfg.mu_disjoint = 1.0;
        cfg.sigma_disjoint = 0.05;
    } else {
        cfg.mu_disjoint = 0.3;
        cfg.sigma_disjoint = 0.15;
    }
}

// d = 50, 5000 combinations, 5 patterns; combinations average 5 drugs. Patterns are kept to
// about one drug so that most combinations are disjoint from their nearest pattern, as at full
// scale; with 5-drug patterns the histogram mode moves off mu_disjoint.
inline SimConfig desk_config(SimPreset p, std::uint64_t seed = 0) {
    SimConfig cfg;
    cfg.dim = 50;
    cfg.n_combinations = 5000;
    cfg.n_patterns = 5;
    cfg.pattern_drug_prob = 0.02;
    cfg.combo_drug_prob = 0.1;
    cfg.seed = seed;
    apply_preset(cfg, p);
    return cfg;
}

inline SimConfig paper_scale_config(SimPreset p, std::uint64_t seed = 0) {
    SimConfig cfg;
    cfg.seed = seed;
    apply_preset(cfg, p);
    return cfg;
}

struct DangerousPattern {
    DrugCombination combination;
    double pattern_rr = 0.0;
};

namespace detail {

template <typename Rng>
DrugCombination sample_nonempty(std::size_t dim, double p, std::size_t max_attempts, Rng& rng) {
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        std::vector<drug_index> drugs;
        for (std::size_t i = 0; i < dim; ++i)
            if (bernoulli_draw(rng, p)) drugs.push_back(static_cast<drug_index>(i));
        if (!drugs.empty()) return DrugCombination(dim, std::move(drugs));
    }
    throw error("retry cap exceeded while sampling a non-empty combination");
}

} // namespace detail

template <typename Rng>
std::vector<DangerousPattern> generate_patterns(const SimConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<DangerousPattern> patterns;
    patterns.reserve(cfg.n_patterns);
    std::uniform_real_distribution<double> rr_dist(cfg.pattern_rr_low, cfg.pattern_rr_high);
    for (std::size_t k = 0; k < cfg.n_patterns; ++k) {
        auto combo = detail::sample_nonempty(cfg.dim, cfg.pattern_drug_prob, cfg.max_attempts_per_item, rng);
        const double rr = cfg.pattern_rr_low == cfg.pattern_rr_high ? cfg.pattern_rr_low : rr_dist(rng);
        patterns.push_back({std::move(combo), rr});
    }
    return patterns;
}

// Index of the pattern closest to `combo` in Hamming distance; ties go to the lowest index.
inline std::size_t nearest_pattern(const DrugCombination& combo, std::span<const DangerousPattern> patterns) {
    if (patterns.empty()) throw data_error("nearest_pattern: empty pattern list");
    std::size_t best = 0;
    std::size_t best_dist = hamming_distance(combo, patterns[0].combination);
    for (std::size_t k = 1; k < patterns.size(); ++k) {
        const auto dist = hamming_distance(combo, patterns[k].combination);
        if (dist < best_dist) {
            best_dist = dist;
            best = k;
        }
    }
    return best;
}

// Disjoint from the nearest pattern: max(0, N(mu_disjoint, sigma_disjoint)).
// Otherwise: max(0, N(mu_disjoint + (pattern_rr - mu_disjoint) * J, sigma_inter)) with J the
// Jaccard similarity to the nearest pattern.
template <typename Rng>
double assign_rr(const DrugCombination& combo, std::span<const DangerousPattern> patterns, const SimConfig& cfg, Rng& rng) {
    const auto& p = patterns[nearest_pattern(combo, patterns)];
    const std::size_t shared = intersection_size(combo, p.combination);
    if (shared == 0) return std::max(0.0, normal_draw(rng, cfg.mu_disjoint, cfg.sigma_disjoint));
    const double jaccard = static_cast<double>(shared) / static_cast<double>(combo.size() + p.combination.size() - shared);
    const double mean = cfg.mu_disjoint + (p.pattern_rr - cfg.mu_disjoint) * jaccard;
    return std::max(0.0, normal_draw(rng, mean, cfg.sigma_inter));
}

struct SimulatedData {
    HistoricalDataset dataset;
    std::vector<DangerousPattern> patterns;
};

template <typename Rng>
SimulatedData generate_dataset(const SimConfig& cfg, Rng& rng) {
    cfg.validate();
    auto patterns = generate_patterns(cfg, rng);

    std::unordered_set<DrugCombination, DrugCombinationHash> seen;
    for (const auto& p : patterns) seen.insert(p.combination);

    std::vector<DatasetEntry> entries;
    entries.reserve(cfg.n_combinations);
    const std::size_t budget = cfg.max_attempts_per_item * std::max<std::size_t>(cfg.n_combinations, 1);
    std::size_t attempts = 0;
    while (entries.size() < cfg.n_combinations) {
        if (++attempts > budget)
            throw error("retry cap exceeded: could only draw " + std::to_string(entries.size()) + " of "
                        + std::to_string(cfg.n_combinations) + " distinct combinations");
        auto combo = detail::sample_nonempty(cfg.dim, cfg.combo_drug_prob, cfg.max_attempts_per_item, rng);
        if (!seen.insert(combo).second) continue;
        const double rr = assign_rr(combo, std::span<const DangerousPattern>{patterns}, cfg, rng);
        entries.push_back({std::move(combo), rr});
    }
    return {HistoricalDataset(cfg.dim, std::move(entries)), std::move(patterns)};
}

template <typename Rng>
SimulatedData generate_dataset(const SimConfig& cfg) {
    Rng rng(cfg.seed);
    return generate_dataset(cfg, rng);
}

inline SimulatedData generate_dataset(const SimConfig& cfg) { return generate_dataset<rng_type>(cfg); }

// Histogram with buckets of `width` centred on multiples of `width`; bucket k covers
// [k*width - width/2, k*width + width/2).
struct RrHistogram {
    double width = 0.1;
    std::vector<std::size_t> counts;

    double center(std::size_t k) const { return static_cast<double>(k) * width; }

    std::size_t mode() const {
        return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
};

inline RrHistogram rr_histogram(const HistoricalDataset& data, double width = 0.1) {
    RrHistogram h;
    h.width = width;
    for (const auto& e : data.entries()) {
        const auto k = static_cast<std::size_t>(std::floor(e.true_rr / width + 0.5));
        if (k >= h.counts.size()) h.counts.resize(k + 1, 0);
        ++h.counts[k];
    }
    return h;
}

} // namespace polyminer
