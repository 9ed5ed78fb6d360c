#pragma once

// Text and binary artifact formats.
//
// Dataset / patterns / mined samples (text):
//   dim=<d>
//   <i,j,k>;<value>            one line per combination, 0-based sorted drug indices
// Mined samples use the same layout with the observed reward in place of the true RR.
// Reals use the shortest representation that round-trips.
//
// Ensemble: a directory with ensemble.json and one binary snapshot per member.

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "polyminer/claims.hpp"
#include "polyminer/error.hpp"
#include "polyminer/evalkit.hpp"
#include "polyminer/miner.hpp"
#include "polyminer/simgen.hpp"

namespace polyminer::io {

namespace fs = std::filesystem;

inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

inline double parse_double(std::string_view s, std::string_view what) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw data_error("malformed " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

inline std::size_t parse_index(std::string_view s, std::string_view what) {
    std::size_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || s.empty())
        throw data_error("malformed " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

inline std::string format_combination(const DrugCombination& c, char sep = ',') {
    std::string out;
    for (auto i : c.drugs()) {
        if (!out.empty()) out += sep;
        out += std::to_string(i);
    }
    return out;
}

inline DrugCombination parse_combination(std::string_view s, std::size_t dim, char sep = ',') {
    std::vector<drug_index> drugs;
    while (!s.empty()) {
        const auto cut = s.find(sep);
        drugs.push_back(static_cast<drug_index>(parse_index(s.substr(0, cut), "drug index")));
        if (cut == std::string_view::npos) break;
        s.remove_prefix(cut + 1);
    }
    return DrugCombination(dim, std::move(drugs));
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    while (true) {
        const auto cut = s.find(sep);
        parts.push_back(s.substr(0, cut));
        if (cut == std::string_view::npos) return parts;
        s.remove_prefix(cut + 1);
    }
}

inline std::size_t read_header(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) throw data_error("missing 'dim=' header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("dim=", 0) != 0) throw data_error("expected 'dim=<d>' header, got '" + line + "'");
    return parse_index(std::string_view{line}.substr(4), "dim header");
}

// Calls fn(line_number, fields) for each non-empty line after the header.
template <typename Fn>
std::size_t for_each_record(std::istream& in, Fn&& fn) {
    std::string line;
    const std::size_t dim = read_header(in, line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            fn(dim, split(line, ';'));
        } catch (const data_error& e) {
            throw data_error("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return dim;
}

} // namespace detail

inline void write_dataset(std::ostream& out, const HistoricalDataset& data) {
    out << "dim=" << data.dim() << '\n';
    for (const auto& e : data.entries()) out << format_combination(e.combination) << ';' << format_double(e.true_rr) << '\n';
}

inline HistoricalDataset read_dataset(std::istream& in) {
    std::vector<DatasetEntry> entries;
    const std::size_t dim = detail::for_each_record(in, [&](std::size_t d, const std::vector<std::string_view>& f) {
        if (f.size() != 2) throw data_error("expected '<drugs>;<rr>'");
        entries.push_back({parse_combination(f[0], d), parse_double(f[1], "relative risk")});
    });
    return HistoricalDataset(dim, std::move(entries));
}

inline void write_patterns(std::ostream& out, std::size_t dim, std::span<const DangerousPattern> patterns) {
    out << "dim=" << dim << '\n';
    for (const auto& p : patterns) out << format_combination(p.combination) << ';' << format_double(p.pattern_rr) << '\n';
}

inline std::vector<DangerousPattern> read_patterns(std::istream& in, std::size_t expected_dim) {
    std::vector<DangerousPattern> patterns;
    const std::size_t dim = detail::for_each_record(in, [&](std::size_t d, const std::vector<std::string_view>& f) {
        if (f.size() != 2) throw data_error("expected '<drugs>;<rr>'");
        patterns.push_back({parse_combination(f[0], d), parse_double(f[1], "pattern RR")});
    });
    if (dim != expected_dim) throw dimension_error("patterns file dim", expected_dim, dim);
    return patterns;
}

inline void write_samples(std::ostream& out, std::size_t dim, std::span<const MiningSample> samples) {
    out << "dim=" << dim << '\n';
    for (const auto& s : samples) out << format_combination(s.combination) << ';' << format_double(s.observed_reward) << '\n';
}

// Each sample is resolved to its entry in `data`; samples outside the dataset are rejected.
inline std::vector<MiningSample> read_samples(std::istream& in, const HistoricalDataset& data) {
    std::vector<MiningSample> samples;
    const std::size_t dim = detail::for_each_record(in, [&](std::size_t d, const std::vector<std::string_view>& f) {
        if (f.size() != 2) throw data_error("expected '<drugs>;<reward>'");
        if (d != data.dim()) throw dimension_error("mined samples dim", data.dim(), d);
        auto combo = parse_combination(f[0], d);
        const std::size_t entry = data.index_of(combo);
        samples.push_back({std::move(combo), entry, parse_double(f[1], "reward")});
    });
    if (dim != data.dim()) throw dimension_error("mined samples dim", data.dim(), dim);
    return samples;
}

inline void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace) {
    out << "step,recommended_combo,played_combo,reward\n";
    for (const auto& r : trace)
        out << r.step << ',' << format_combination(r.recommended, ' ') << ',' << format_combination(r.played, ' ') << ','
            << format_double(r.reward) << '\n';
}

inline void write_histogram_csv(std::ostream& out, const RrHistogram& h) {
    out << "bucket_center,count\n";
    for (std::size_t k = 0; k < h.counts.size(); ++k) out << format_double(h.center(k)) << ',' << h.counts[k] << '\n';
}

inline void write_metrics_header(std::ostream& out) {
    out << "seed,step,tp,fp,fn,precision,recall,ratio_patterns,ratio_unseen,no_predictions\n";
}

inline void write_metrics_rows(std::ostream& out, std::uint64_t seed, std::span<const EvalReport> series) {
    for (const auto& r : series)
        out << seed << ',' << r.step << ',' << r.true_positives << ',' << r.false_positives << ',' << r.false_negatives << ','
            << format_double(r.precision) << ',' << format_double(r.recall) << ',' << format_double(r.ratio_patterns) << ','
            << format_double(r.ratio_unseen) << ',' << (r.no_predictions ? 1 : 0) << '\n';
}

inline void write_aggregate_csv(std::ostream& out, std::span<const AggregateRow> rows) {
    out << "step,metric,mean,std\n";
    for (const auto& row : rows)
        for (const auto& name : metric_names()) {
            const auto& m = row.metrics.at(name);
            out << row.step << ',' << name << ',' << format_double(m.mean) << ',' << format_double(m.std) << '\n';
        }
}

// Writes to a sibling temporary file, then renames over `path`.
inline void atomic_write(const fs::path& path, std::string_view content, bool binary = false) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
        if (!out) throw error("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

template <typename Writer>
void atomic_write_with(const fs::path& path, Writer&& writer, bool binary = false) {
    std::ostringstream buf(binary ? std::ios::out | std::ios::binary : std::ios::out);
    writer(buf);
    atomic_write(path, buf.str(), binary);
}

inline std::string read_file(const fs::path& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::in | std::ios::binary : std::ios::in);
    if (!in) throw data_error("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline HistoricalDataset load_dataset(const fs::path& path) {
    std::istringstream in(read_file(path));
    try {
        return read_dataset(in);
    } catch (const data_error& e) {
        throw data_error(path.string() + ": " + e.what());
    }
}

inline std::vector<DangerousPattern> load_patterns(const fs::path& path, std::size_t dim) {
    std::istringstream in(read_file(path));
    try {
        return read_patterns(in, dim);
    } catch (const data_error& e) {
        throw data_error(path.string() + ": " + e.what());
    }
}

// Member snapshot layout (host byte order):
//   "PMSNAP01" | step u64 | layer count u64 | widths u64... | parameter count u64 |
//   theta f64... | lambda f64 | design diagonal f64...
namespace detail {

inline constexpr char snapshot_magic[8] = {'P', 'M', 'S', 'N', 'A', 'P', '0', '1'};

inline void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); }
inline void put_f64(std::string& out, double v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); }

struct Reader {
    std::string_view buf;
    std::size_t pos = 0;

    template <typename T>
    T get() {
        if (buf.size() - pos < sizeof(T)) throw data_error("truncated snapshot");
        T v;
        std::memcpy(&v, buf.data() + pos, sizeof v);
        pos += sizeof v;
        return v;
    }
};

} // namespace detail

inline std::string encode_member(const EnsembleMember& m) {
    std::string out(detail::snapshot_magic, sizeof detail::snapshot_magic);
    detail::put_u64(out, m.step);
    const auto& dims = m.net.layer_dims();
    detail::put_u64(out, dims.size());
    for (auto w : dims) detail::put_u64(out, w);
    detail::put_u64(out, m.net.param_count());
    for (double v : m.net.params()) detail::put_f64(out, v);
    detail::put_f64(out, m.design.lambda());
    for (double v : m.design.diag()) detail::put_f64(out, v);
    return out;
}

inline EnsembleMember decode_member(std::string_view bytes) {
    if (bytes.size() < sizeof detail::snapshot_magic
        || std::memcmp(bytes.data(), detail::snapshot_magic, sizeof detail::snapshot_magic) != 0)
        throw data_error("not a model snapshot");
    detail::Reader r{bytes, sizeof detail::snapshot_magic};
    EnsembleMember m;
    m.step = r.get<std::uint64_t>();
    const auto n_layers = r.get<std::uint64_t>();
    if (n_layers < 2 || n_layers > 64) throw data_error("snapshot: implausible layer count");
    std::vector<std::size_t> dims(n_layers);
    for (auto& w : dims) w = r.get<std::uint64_t>();
    const auto m_params = r.get<std::uint64_t>();
    if (m_params > (bytes.size() - r.pos) / sizeof(double)) throw data_error("truncated snapshot");
    std::vector<double> theta(m_params);
    for (auto& v : theta) v = r.get<double>();
    const double lambda = r.get<double>();
    std::vector<double> diag(m_params);
    for (auto& v : diag) v = r.get<double>();
    if (r.pos != bytes.size()) throw data_error("trailing bytes in snapshot");
    m.net = NetworkState(std::move(dims), std::move(theta));
    m.design = DesignMatrixDiag(lambda, std::move(diag));
    return m;
}

inline std::string member_file_name(std::size_t k) {
    std::ostringstream s;
    s << "member_" << std::setw(5) << std::setfill('0') << k << ".bin";
    return s.str();
}

inline void save_ensemble(const fs::path& dir, const EnsembleModel& ensemble) {
    fs::create_directories(dir);
    nlohmann::json index;
    index["rr_threshold"] = ensemble.rr_threshold;
    index["lcb_multiplier"] = ensemble.lcb_multiplier;
    index["members"] = nlohmann::json::array();
    for (std::size_t k = 0; k < ensemble.members.size(); ++k) {
        const auto name = member_file_name(k);
        atomic_write(dir / name, encode_member(ensemble.members[k]), true);
        index["members"].push_back({{"step", ensemble.members[k].step}, {"file", name}});
    }
    atomic_write(dir / "ensemble.json", index.dump(2) + "\n");
}

inline EnsembleModel load_ensemble(const fs::path& dir) {
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(read_file(dir / "ensemble.json"));
    } catch (const nlohmann::json::exception& e) {
        throw data_error((dir / "ensemble.json").string() + ": " + e.what());
    }
    EnsembleModel e;
    try {
        e.rr_threshold = index.at("rr_threshold").get<double>();
        e.lcb_multiplier = index.at("lcb_multiplier").get<double>();
        for (const auto& m : index.at("members")) {
            const auto path = dir / m.at("file").get<std::string>();
            auto member = decode_member(read_file(path, true));
            if (member.step != m.at("step").get<std::size_t>()) throw data_error(path.string() + ": step mismatch");
            e.members.push_back(std::move(member));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw data_error((dir / "ensemble.json").string() + ": " + ex.what());
    }
    return e;
}

} // namespace polyminer::io
