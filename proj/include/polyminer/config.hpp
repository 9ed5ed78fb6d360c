#pragma once

// Run configuration: an INI file with [sim], [miner], [de] and [eval] sections, or a JSON
// run manifest (whose "config" object has the same sections). Unset keys keep their defaults.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "polyminer/error.hpp"
#include "polyminer/evalkit.hpp"
#include "polyminer/miner.hpp"
#include "polyminer/simgen.hpp"

namespace polyminer {

inline constexpr const char* tool_version = "0.1.0";

struct RunConfig {
    SimConfig sim;
    std::optional<SimPreset> preset;
    MinerConfig miner;
    EvalConfig eval;
    std::vector<std::uint64_t> seeds{0};
    std::size_t workers = 0;  // 0 = hardware concurrency

    void validate() const {
        sim.validate();
        miner.validate();
        if (eval.every == 0) throw config_error("eval.every must be positive");
        if (seeds.empty()) throw config_error("miner.seeds must list at least one seed");
    }
};

namespace detail {

using ptree = boost::property_tree::ptree;

// Flat "section.key" -> value view of a config document.
class ConfigValues {
public:
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    bool has(const std::string& key) const { return values_.contains(key); }
    const std::map<std::string, std::string>& all() const { return values_; }

    template <typename T>
    void read(const std::string& key, T& out) {
        auto it = values_.find(key);
        if (it == values_.end()) return;
        used_.insert(key);
        out = convert<T>(key, it->second);
    }

    void read_list(const std::string& key, std::vector<std::size_t>& out) {
        auto it = values_.find(key);
        if (it == values_.end()) return;
        used_.insert(key);
        out.clear();
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(convert<std::size_t>(key, trim(item)));
    }

    void read_seeds(const std::string& key, std::vector<std::uint64_t>& out) {
        auto it = values_.find(key);
        if (it == values_.end()) return;
        used_.insert(key);
        out.clear();
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            const auto dash = item.find('-');
            if (dash != std::string::npos && dash > 0) {
                // a-b inclusive range
                const auto lo = convert<std::uint64_t>(key, item.substr(0, dash));
                const auto hi = convert<std::uint64_t>(key, item.substr(dash + 1));
                if (hi < lo) throw config_error("field '" + key + "': empty seed range '" + item + "'");
                for (auto s = lo; s <= hi; ++s) out.push_back(s);
            } else {
                out.push_back(convert<std::uint64_t>(key, item));
            }
        }
    }

    void reject_unknown() const {
        for (const auto& [key, value] : values_)
            if (!used_.contains(key)) throw config_error("unknown field '" + key + "'");
    }

private:
    static std::string trim(std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    }

    template <typename T>
    static T convert(const std::string& key, const std::string& raw) {
        const std::string v = trim(raw);
        if constexpr (std::is_same_v<T, bool>) {
            if (v == "true" || v == "1" || v == "yes") return true;
            if (v == "false" || v == "0" || v == "no") return false;
            throw config_error("field '" + key + "': expected a boolean, got '" + v + "'");
        } else if constexpr (std::is_same_v<T, std::string>) {
            return v;
        } else {
            std::istringstream in(v);
            T out{};
            if constexpr (std::is_unsigned_v<T>) {
                if (!v.empty() && v.front() == '-')
                    throw config_error("field '" + key + "': expected a non-negative integer, got '" + v + "'");
            }
            in >> out;
            if (v.empty() || in.fail() || !in.eof())
                throw config_error("field '" + key + "': cannot parse '" + v + "'");
            return out;
        }
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
};

inline void flatten_json(const nlohmann::json& j, const std::string& prefix, ConfigValues& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) {
            flatten_json(*it, key, out);
        } else if (it->is_array()) {
            std::string joined;
            for (const auto& v : *it) {
                if (!joined.empty()) joined += ",";
                joined += v.is_string() ? v.get<std::string>() : v.dump();
            }
            out.set(key, joined);
        } else {
            out.set(key, it->is_string() ? it->get<std::string>() : it->dump());
        }
    }
}

inline RunConfig build(ConfigValues& v) {
    RunConfig c;
    std::string preset_name;
    v.read("sim.preset", preset_name);
    if (!preset_name.empty()) {
        c.preset = parse_preset(preset_name);
        apply_preset(c.sim, *c.preset);
    }
    auto& s = c.sim;
    v.read("sim.dim", s.dim);
    v.read("sim.n_combinations", s.n_combinations);
    v.read("sim.n_patterns", s.n_patterns);
    v.read("sim.pattern_drug_prob", s.pattern_drug_prob);
    v.read("sim.combo_drug_prob", s.combo_drug_prob);
    v.read("sim.pattern_rr_low", s.pattern_rr_low);
    v.read("sim.pattern_rr_high", s.pattern_rr_high);
    v.read("sim.sigma_inter", s.sigma_inter);
    v.read("sim.sigma_disjoint", s.sigma_disjoint);
    v.read("sim.mu_disjoint", s.mu_disjoint);
    v.read("sim.seed", s.seed);
    v.read("sim.max_attempts_per_item", s.max_attempts_per_item);

    auto& m = c.miner;
    v.read("miner.horizon", m.horizon);
    v.read("miner.warmup", m.warmup);
    v.read("miner.lambda", m.lambda);
    v.read("miner.nu", m.nu);
    v.read("miner.retrain_every", m.retrain_every);
    v.read("miner.noise_sigma", m.noise_sigma);
    v.read("miner.rr_threshold", m.rr_threshold);
    v.read("miner.lcb_multiplier", m.lcb_multiplier);
    v.read_list("miner.hidden_layers", m.hidden_layers);
    v.read("miner.de_init_from_data", m.de_init_from_data);
    v.read("miner.epochs", m.train.epochs);
    v.read("miner.learning_rate", m.train.learning_rate);
    v.read("miner.l2_lambda", m.train.l2_lambda);
    v.read("miner.l2_per_sample", m.train.l2_per_sample);
    v.read("miner.batch_size", m.train.batch_size);
    v.read("miner.plateau_factor", m.train.plateau_factor);
    v.read("miner.plateau_patience", m.train.plateau_patience);
    v.read("miner.min_learning_rate", m.train.min_learning_rate);
    v.read_seeds("miner.seeds", c.seeds);
    if (!c.seeds.empty()) m.seed = c.seeds.front();

    auto& d = m.de;
    v.read("de.population", d.population);
    v.read("de.crossover_rate", d.crossover_rate);
    v.read("de.differential_weight", d.differential_weight);
    v.read("de.steps", d.steps);
    v.read("de.init_prob", d.init_prob);

    v.read("eval.every", c.eval.every);
    v.read("eval.subsample", c.eval.subsample);
    v.read("eval.latest_model", c.eval.latest_model);
    v.read("eval.workers", c.workers);

    v.reject_unknown();
    return c;
}

} // namespace detail

// Parses an INI document. Throws config_error with the line number on syntax errors and with
// the field name on bad values or unknown fields.
inline RunConfig parse_ini_config(const std::string& text, const std::vector<std::string>& required = {}) {
    detail::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw config_error("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    detail::ConfigValues values;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) throw config_error("field '" + section + "' is outside any section");
        static const std::set<std::string> known{"sim", "miner", "de", "eval"};
        if (!known.contains(section)) throw config_error("unknown section [" + section + "]");
        for (const auto& [key, node] : body) values.set(section + "." + key, node.data());
    }
    for (const auto& key : required)
        if (!values.has(key)) throw config_error("missing required field '" + key + "'");
    return detail::build(values);
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    const auto& s = c.sim;
    j["sim"] = {{"dim", s.dim},
                {"n_combinations", s.n_combinations},
                {"n_patterns", s.n_patterns},
                {"pattern_drug_prob", s.pattern_drug_prob},
                {"combo_drug_prob", s.combo_drug_prob},
                {"pattern_rr_low", s.pattern_rr_low},
                {"pattern_rr_high", s.pattern_rr_high},
                {"sigma_inter", s.sigma_inter},
                {"sigma_disjoint", s.sigma_disjoint},
                {"mu_disjoint", s.mu_disjoint},
                {"seed", s.seed},
                {"max_attempts_per_item", s.max_attempts_per_item}};
    const auto& m = c.miner;
    j["miner"] = {{"horizon", m.horizon},
                  {"warmup", m.warmup},
                  {"lambda", m.lambda},
                  {"nu", m.nu},
                  {"retrain_every", m.retrain_every},
                  {"noise_sigma", m.noise_sigma},
                  {"rr_threshold", m.rr_threshold},
                  {"lcb_multiplier", m.lcb_multiplier},
                  {"hidden_layers", m.hidden_layers},
                  {"de_init_from_data", m.de_init_from_data},
                  {"epochs", m.train.epochs},
                  {"learning_rate", m.train.learning_rate},
                  {"l2_lambda", m.train.l2_lambda},
                  {"l2_per_sample", m.train.l2_per_sample},
                  {"batch_size", m.train.batch_size},
                  {"plateau_factor", m.train.plateau_factor},
                  {"plateau_patience", m.train.plateau_patience},
                  {"min_learning_rate", m.train.min_learning_rate},
                  {"seeds", c.seeds}};
    const auto& d = m.de;
    j["de"] = {{"population", d.population},
               {"crossover_rate", d.crossover_rate},
               {"differential_weight", d.differential_weight},
               {"steps", d.steps},
               {"init_prob", d.init_prob}};
    j["eval"] = {{"every", c.eval.every},
                 {"subsample", c.eval.subsample},
                 {"latest_model", c.eval.latest_model},
                 {"workers", c.workers}};
    return j;
}

// Accepts either a bare config object or a manifest with a "config" member.
inline RunConfig parse_json_config(const std::string& text, const std::vector<std::string>& required = {}) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error(std::string("config JSON: ") + e.what());
    }
    if (j.contains("config")) j = j["config"];
    if (!j.is_object()) throw config_error("config JSON must be an object");
    detail::ConfigValues values;
    detail::flatten_json(j, "", values);
    for (const auto& key : required)
        if (!values.has(key)) throw config_error("missing required field '" + key + "'");
    return detail::build(values);
}

inline RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& required = {}) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot read config '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    const bool json = path.extension() == ".json" || (first != std::string::npos && text[first] == '{');
    try {
        return json ? parse_json_config(text, required) : parse_ini_config(text, required);
    } catch (const config_error& e) {
        throw config_error(path.string() + ": " + e.what());
    }
}

// The INI form of a config; round-trips through parse_ini_config.
inline std::string to_ini(const RunConfig& c) {
    const auto j = to_json(c);
    std::ostringstream out;
    bool first = true;
    for (const char* section : {"sim", "miner", "de", "eval"}) {
        if (!first) out << '\n';
        first = false;
        out << '[' << section << "]\n";
        for (auto it = j[section].begin(); it != j[section].end(); ++it) {
            out << it.key() << " = ";
            if (it->is_array()) {
                bool f = true;
                for (const auto& v : *it) {
                    if (!f) out << ',';
                    f = false;
                    out << v.dump();
                }
            } else {
                out << it->dump();
            }
            out << '\n';
        }
    }
    return out.str();
}

} // namespace polyminer
