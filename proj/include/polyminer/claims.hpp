#pragma once

// Drug combinations, the historical claims dataset and the relative-risk oracle.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "polyminer/error.hpp"
#include "polyminer/random.hpp"

namespace polyminer {

using drug_index = std::uint32_t;
using bit_word = std::uint64_t;

inline constexpr std::size_t word_bits = 64;

inline std::size_t words_for(std::size_t dim) { return (dim + word_bits - 1) / word_bits; }

// A set of drugs out of `dim` possible ones. Stored sparse (sorted indices); the
// multi-hot and bit-packed renderings are produced on demand.
class DrugCombination {
public:
    DrugCombination() = default;

    DrugCombination(std::size_t dim, std::vector<drug_index> drugs) : dim_(dim), drugs_(std::move(drugs)) {
        std::sort(drugs_.begin(), drugs_.end());
        if (std::adjacent_find(drugs_.begin(), drugs_.end()) != drugs_.end())
            throw data_error("drug combination has duplicate indices");
        if (!drugs_.empty() && drugs_.back() >= dim_)
            throw data_error("drug index " + std::to_string(drugs_.back()) + " out of range for dimension "
                             + std::to_string(dim_));
    }

    // From a 0/1 membership mask; any non-zero entry counts as present.
    template <typename T>
    static DrugCombination from_mask(std::span<const T> mask) {
        std::vector<drug_index> drugs;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i] != T{}) drugs.push_back(static_cast<drug_index>(i));
        DrugCombination c;
        c.dim_ = mask.size();
        c.drugs_ = std::move(drugs);
        return c;
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return drugs_.size(); }
    bool empty() const noexcept { return drugs_.empty(); }
    std::span<const drug_index> drugs() const noexcept { return drugs_; }

    bool contains(drug_index i) const { return std::binary_search(drugs_.begin(), drugs_.end(), i); }

    // True when every drug of `other` is also in *this.
    bool includes(const DrugCombination& other) const {
        return std::includes(drugs_.begin(), drugs_.end(), other.drugs_.begin(), other.drugs_.end());
    }

    std::vector<double> to_dense() const {
        std::vector<double> x(dim_, 0.0);
        for (auto i : drugs_) x[i] = 1.0;
        return x;
    }

    std::vector<std::uint8_t> to_mask() const {
        std::vector<std::uint8_t> m(dim_, 0);
        for (auto i : drugs_) m[i] = 1;
        return m;
    }

    std::vector<bit_word> to_bits() const {
        std::vector<bit_word> w(words_for(dim_), 0);
        for (auto i : drugs_) w[i / word_bits] |= bit_word{1} << (i % word_bits);
        return w;
    }

    friend bool operator==(const DrugCombination&, const DrugCombination&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<drug_index> drugs_;
};

struct DrugCombinationHash {
    std::size_t operator()(const DrugCombination& c) const noexcept {
        std::size_t h = std::hash<std::size_t>{}(c.dim());
        for (auto i : c.drugs()) h ^= std::hash<drug_index>{}(i) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }
};

inline std::size_t intersection_size(const DrugCombination& x, const DrugCombination& y) {
    auto a = x.drugs();
    auto b = y.drugs();
    std::size_t n = 0;
    for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

// Size of the symmetric difference.
inline std::size_t hamming_distance(const DrugCombination& x, const DrugCombination& y) {
    if (x.dim() != y.dim()) throw dimension_error("hamming_distance", x.dim(), y.dim());
    return x.size() + y.size() - 2 * intersection_size(x, y);
}

inline std::size_t hamming_distance(std::span<const bit_word> x, std::span<const bit_word> y) {
    std::size_t n = 0;
    for (std::size_t w = 0; w < x.size(); ++w) n += static_cast<std::size_t>(std::popcount(x[w] ^ y[w]));
    return n;
}

// 2x2 exposure/outcome table:
//              outcome  no outcome
//   exposed       a         b
//   unexposed     c         d
struct ContingencyTable {
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    std::uint64_t c = 0;
    std::uint64_t d = 0;
};

// RR = a(c + d) / (c(a + b)).
inline double relative_risk(const ContingencyTable& t) {
    if (t.c == 0) throw undefined_ratio_error("relative risk undefined: no unexposed patient has the outcome (c = 0)");
    if (t.a + t.b == 0) throw undefined_ratio_error("relative risk undefined: nobody is exposed (a + b = 0)");
    const double exposed_rate = static_cast<double>(t.a) / static_cast<double>(t.a + t.b);
    const double unexposed_rate = static_cast<double>(t.c) / static_cast<double>(t.c + t.d);
    return exposed_rate / unexposed_rate;
}

// One patient-level claims row: the drugs taken and whether the outcome occurred.
struct ExposureRow {
    DrugCombination drugs;
    bool outcome = false;
};

// A row is exposed to `combo` when it takes every drug of the combination.
inline ContingencyTable contingency_from_rows(std::span<const ExposureRow> rows, const DrugCombination& combo) {
    ContingencyTable t;
    for (const auto& row : rows) {
        if (row.drugs.dim() != combo.dim()) throw dimension_error("contingency_from_rows", combo.dim(), row.drugs.dim());
        const bool exposed = row.drugs.includes(combo);
        if (exposed)
            ++(row.outcome ? t.a : t.b);
        else
            ++(row.outcome ? t.c : t.d);
    }
    return t;
}

struct DatasetEntry {
    DrugCombination combination;
    double true_rr = 0.0;
};

// The pool of distinct drug combinations the miner may play, each with its ground-truth RR.
// Immutable once built.
class HistoricalDataset {
public:
    HistoricalDataset() = default;

    HistoricalDataset(std::size_t dim, std::vector<DatasetEntry> entries, std::vector<ExposureRow> rows = {})
        : dim_(dim), words_per_entry_(words_for(dim)), entries_(std::move(entries)), rows_(std::move(rows)) {
        bits_.assign(entries_.size() * words_per_entry_, 0);
        index_.reserve(entries_.size());
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            const auto& c = entries_[k].combination;
            if (c.dim() != dim_) throw dimension_error("dataset entry " + std::to_string(k), dim_, c.dim());
            if (!index_.emplace(c, k).second)
                throw data_error("dataset entry " + std::to_string(k) + " duplicates an earlier combination");
            for (auto i : c.drugs()) bits_[k * words_per_entry_ + i / word_bits] |= bit_word{1} << (i % word_bits);
        }
        for (const auto& r : rows_)
            if (r.drugs.dim() != dim_) throw dimension_error("exposure row", dim_, r.drugs.dim());
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    const DatasetEntry& operator[](std::size_t k) const { return entries_[k]; }
    std::span<const DatasetEntry> entries() const noexcept { return entries_; }
    std::span<const ExposureRow> rows() const noexcept { return rows_; }

    std::span<const bit_word> bits(std::size_t k) const {
        return {bits_.data() + k * words_per_entry_, words_per_entry_};
    }

    std::optional<std::size_t> find(const DrugCombination& c) const {
        auto it = index_.find(c);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    bool contains(const DrugCombination& c) const { return index_.contains(c); }

    std::size_t index_of(const DrugCombination& c) const {
        auto k = find(c);
        if (!k) throw data_error("combination not found in dataset");
        return *k;
    }

    // Linear popcount scan; ties resolve to the lowest entry index.
    std::size_t nearest_index(std::span<const bit_word> query) const {
        if (entries_.empty()) throw data_error("nearest neighbour lookup in an empty dataset");
        if (query.size() != words_per_entry_) throw dimension_error("nearest_index query words", words_per_entry_, query.size());
        std::size_t best = 0;
        std::size_t best_dist = std::numeric_limits<std::size_t>::max();
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            const std::size_t dist = hamming_distance(query, bits(k));
            if (dist < best_dist) {
                best_dist = dist;
                best = k;
                if (dist == 0) break;
            }
        }
        return best;
    }

    std::size_t nearest_index(const DrugCombination& query) const {
        if (query.dim() != dim_) throw dimension_error("nearest_in_dataset", dim_, query.dim());
        const auto q = query.to_bits();
        return nearest_index(std::span<const bit_word>{q});
    }

    // RR recomputed from the raw exposure rows (oracle mode).
    double relative_risk_from_rows(const DrugCombination& c) const {
        if (rows_.empty()) throw data_error("dataset carries no exposure rows");
        return relative_risk(contingency_from_rows(rows_, c));
    }

    std::size_t count_above(double threshold) const {
        return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(),
                                                      [&](const DatasetEntry& e) { return e.true_rr > threshold; }));
    }

private:
    std::size_t dim_ = 0;
    std::size_t words_per_entry_ = 0;
    std::vector<DatasetEntry> entries_;
    std::vector<bit_word> bits_;
    std::vector<ExposureRow> rows_;
    std::unordered_map<DrugCombination, std::size_t, DrugCombinationHash> index_;
};

inline const DrugCombination& nearest_in_dataset(const DrugCombination& query, const HistoricalDataset& data) {
    return data[data.nearest_index(query)].combination;
}

// One observed (combination, reward) pair of a mined training set.
struct MiningSample {
    DrugCombination combination;
    std::size_t entry = 0;  // index into the HistoricalDataset
    double observed_reward = 0.0;
};

template <typename Rng>
double observe_reward(std::size_t entry, const HistoricalDataset& data, double noise_sigma, Rng& rng) {
    if (entry >= data.size()) throw data_error("dataset entry out of range");
    return normal_draw(rng, data[entry].true_rr, noise_sigma);
}

// True RR plus N(0, noise_sigma) noise. The result is not clamped and may be negative.
template <typename Rng>
double observe_reward(const DrugCombination& combo, const HistoricalDataset& data, double noise_sigma, Rng& rng) {
    return observe_reward(data.index_of(combo), data, noise_sigma, rng);
}

} // namespace polyminer
