#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "tardos/channel.hpp"
#include "tardos/codebook.hpp"
#include "tardos/errors.hpp"
#include "tardos/random.hpp"
#include "tardos/sprt.hpp"
#include "tardos/whitebox.hpp"

namespace tardos::harness {

inline constexpr const char* kToolVersion = "tardos-trace 1.0.0";

/// Who colludes: a fixed list, or a fresh sample of `count` users per trial.
struct ColluderSelection {
    std::optional<std::vector<std::size_t>> fixed;
    std::size_t count = 2;

    std::size_t size() const { return fixed ? fixed->size() : count; }
};

struct ChannelConfig {
    Strategy strategy = Strategy::majority;
    std::optional<std::string> preset;
    double rho = 0.0;
    double skew_rate = 0.0;
    ColluderSelection colluders;
};

struct EstimationConfig {
    std::size_t trials = 200;
    /// Collusion size used for P_col; nullopt matches each run's own size.
    std::optional<std::size_t> collusion_size;
    std::optional<Strategy> strategy;
    std::optional<double> rho;
    double smoothing = 1.0;
};

struct SweepConfig {
    std::vector<double> kappas{0.1, 100.0};
    std::vector<std::string> presets{"c2/no-attack", "c2/fine-tune", "c2/prune",
                                     "c6/no-attack", "c6/fine-tune", "c6/prune"};
    std::vector<std::string> skew_presets{"T_R", "T_M", "T_B"};
    std::optional<std::vector<double>> skew_rates;
    std::size_t innocent_trials = 100;
};

struct BaselineConfig {
    double p_random = 0.1;
    std::vector<std::size_t> collusion_sizes{1, 2, 6};
};

struct MaTableConfig {
    std::vector<std::string> presets;  // empty = all presets
    std::size_t passes = 100;          // passes over the m positions, one fresh collusion each
};

struct WhiteboxConfig {
    whitebox::WhiteboxParams params;
    std::vector<std::size_t> collusion_sizes{1, 2, 4, 6};
    std::size_t collusions = 200;
    double finetune_sigma = 0.5;
    double prune_fraction = 0.8;
    whitebox::PruneMode prune_mode = whitebox::PruneMode::smallest_magnitude;
    std::optional<double> threshold;
    std::size_t c0 = 6;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 1;
    std::size_t trials = 100;
    std::size_t n_users = 100;
    bool paper_scale = false;
    TardosParams tardos;
    bool tau_given = false;
    SprtConfig sprt = SprtConfig::from_rates(1e-6, 1e-3);
    ChannelConfig channel;
    EstimationConfig estimation;
    SweepConfig sweep;
    BaselineConfig baseline;
    MaTableConfig ma_table;
    std::optional<WhiteboxConfig> whitebox;
    /// Not part of the experiment identity: excluded from the hash.
    std::size_t threads = 1;
    std::string output_dir = "results";
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config field '") + key + "' has the wrong type");
    }
}

inline const nlohmann::json& section(const nlohmann::json& root, const char* key) {
    static const nlohmann::json empty = nlohmann::json::object();
    if (!root.contains(key)) return empty;
    if (!root.at(key).is_object()) throw ConfigError(std::string("config section '") + key + "' must be a table");
    return root.at(key);
}

inline ColluderSelection parse_colluders(const nlohmann::json& v) {
    ColluderSelection sel;
    if (v.is_array()) {
        sel.fixed = v.get<std::vector<std::size_t>>();
        if (sel.fixed->empty()) throw ConfigError("channel.colluders list is empty");
        sel.count = sel.fixed->size();
        return sel;
    }
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s.rfind("sample:", 0) == 0) {
            try {
                sel.count = std::stoul(s.substr(7));
            } catch (const std::exception&) {
                throw ConfigError("channel.colluders: cannot parse '" + s + "'");
            }
            if (sel.count < 1) throw ConfigError("channel.colluders: sample size must be >= 1");
            return sel;
        }
    }
    if (v.is_number_unsigned()) {
        sel.count = v.get<std::size_t>();
        return sel;
    }
    throw ConfigError("channel.colluders must be a list of user indices or \"sample:<c>\"");
}

}  // namespace detail

/// Converts a TOML document into the JSON tree the config reader consumes.
inline nlohmann::json toml_to_json(const std::string& text, const std::string& origin = "config") {
    try {
        const toml::table tbl = toml::parse(text, origin);
        std::ostringstream os;
        os << toml::json_formatter{tbl};
        return nlohmann::json::parse(os.str());
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << origin << ": " << e.description() << " at " << e.source().begin;
        throw ConfigError(os.str());
    }
}

/// Validates and resolves a config tree. Missing fields take desk-scale defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& root) {
    using detail::get_or;
    using detail::section;
    if (!root.is_object()) throw ConfigError("config root must be a table/object");
    ExperimentConfig c;
    try {
        c.name = get_or<std::string>(root, "name", c.name);
        c.seed = get_or<std::uint64_t>(root, "seed", c.seed);
        c.paper_scale = get_or<bool>(root, "paper_scale", false);
        c.trials = get_or<std::size_t>(root, "trials", c.paper_scale ? 500 : 100);
        c.n_users = get_or<std::size_t>(root, "n_users", 100);
        c.threads = get_or<std::size_t>(root, "threads", 1);
        c.output_dir = get_or<std::string>(root, "output_dir", c.output_dir);

        const auto& tj = section(root, "tardos");
        const int q = get_or<int>(tj, "q", 10);
        const auto m = get_or<std::size_t>(tj, "m", c.paper_scale ? 1000 : 200);
        const double kappa = get_or<double>(tj, "kappa", 0.1);
        const int c0 = get_or<int>(tj, "c0", 6);
        std::optional<double> tau;
        if (tj.contains("tau")) tau = get_or<double>(tj, "tau", 0.0);
        c.tau_given = tau.has_value();
        const auto cb_seed = get_or<std::uint64_t>(tj, "seed", derive_seed(c.seed, "codebook"));
        c.tardos = make_params(q, m, kappa, c0, tau, cb_seed);

        const auto& sj = section(root, "sprt");
        c.sprt = SprtConfig::from_rates(get_or<double>(sj, "eps1", 1e-6), get_or<double>(sj, "eps2", 1e-3),
                                        get_or<double>(sj, "log_base", 10.0), get_or<bool>(sj, "z_stop", true));
        if (sj.contains("a")) c.sprt.a = get_or<double>(sj, "a", c.sprt.a);
        if (sj.contains("b")) c.sprt.b = get_or<double>(sj, "b", c.sprt.b);
        c.sprt.validate();

        const auto& cj = section(root, "channel");
        c.channel.strategy = parse_strategy(get_or<std::string>(cj, "strategy", "majority"));
        if (cj.contains("preset")) {
            const auto& preset = find_preset(get_or<std::string>(cj, "preset", ""));
            c.channel.preset = std::string(preset.name);
            c.channel.rho = preset.ma_violation_rate;
            c.channel.colluders.count = preset.colluders;
        }
        if (cj.contains("rho")) c.channel.rho = get_or<double>(cj, "rho", 0.0);
        c.channel.skew_rate = get_or<double>(cj, "skew_rate", 0.0);
        if (cj.contains("colluders")) c.channel.colluders = detail::parse_colluders(cj.at("colluders"));

        const auto& ej = section(root, "estimation");
        c.estimation.trials = get_or<std::size_t>(ej, "trials", c.paper_scale ? 500 : 200);
        if (ej.contains("collusion_size")) {
            const auto& v = ej.at("collusion_size");
            if (v.is_string() && v.get<std::string>() == "match") c.estimation.collusion_size = std::nullopt;
            else c.estimation.collusion_size = get_or<std::size_t>(ej, "collusion_size", 0);
        } else {
            c.estimation.collusion_size = static_cast<std::size_t>(c0);
        }
        if (ej.contains("strategy")) c.estimation.strategy = parse_strategy(get_or<std::string>(ej, "strategy", ""));
        if (ej.contains("rho")) c.estimation.rho = get_or<double>(ej, "rho", 0.0);
        c.estimation.smoothing = get_or<double>(ej, "smoothing", 1.0);

        const auto& wj = section(root, "sweep");
        c.sweep.kappas = get_or<std::vector<double>>(wj, "kappas", c.sweep.kappas);
        c.sweep.presets = get_or<std::vector<std::string>>(wj, "presets", c.sweep.presets);
        c.sweep.skew_presets = get_or<std::vector<std::string>>(wj, "skew_presets", c.sweep.skew_presets);
        if (wj.contains("skew_rates")) c.sweep.skew_rates = get_or<std::vector<double>>(wj, "skew_rates", {});
        c.sweep.innocent_trials = get_or<std::size_t>(wj, "innocent_trials", c.trials);

        const auto& bj = section(root, "baseline");
        c.baseline.p_random = get_or<double>(bj, "p_random", 0.1);
        c.baseline.collusion_sizes = get_or<std::vector<std::size_t>>(bj, "collusion_sizes", c.baseline.collusion_sizes);

        const auto& mj = section(root, "ma_table");
        c.ma_table.presets = get_or<std::vector<std::string>>(mj, "presets", {});
        c.ma_table.passes = get_or<std::size_t>(mj, "passes", 100);

        if (root.contains("whitebox")) {
            const auto& xj = section(root, "whitebox");
            WhiteboxConfig w;
            w.params.l = get_or<std::size_t>(xj, "l", 4096);
            w.params.p_dim = get_or<std::size_t>(xj, "p_dim", 256);
            w.params.n_users = get_or<std::size_t>(xj, "n_users", c.n_users);
            w.params.embed_strength = get_or<double>(xj, "embed_strength", 0.0);
            w.params.noise_sigma = get_or<double>(xj, "noise_sigma", 0.05);
            w.params.target_projection = get_or<double>(xj, "target_projection", 0.995);
            w.params.lambda = get_or<double>(xj, "lambda", 1.0);
            w.params.seed = get_or<std::uint64_t>(xj, "seed", derive_seed(c.seed, "whitebox"));
            w.collusion_sizes = get_or<std::vector<std::size_t>>(xj, "collusion_sizes", w.collusion_sizes);
            w.collusions = get_or<std::size_t>(xj, "collusions", c.paper_scale ? 500 : 200);
            w.finetune_sigma = get_or<double>(xj, "finetune_sigma", w.finetune_sigma);
            w.prune_fraction = get_or<double>(xj, "prune_fraction", w.prune_fraction);
            const auto mode = get_or<std::string>(xj, "prune_mode", "smallest-magnitude");
            if (mode == "smallest-magnitude") w.prune_mode = whitebox::PruneMode::smallest_magnitude;
            else if (mode == "random") w.prune_mode = whitebox::PruneMode::random;
            else throw ConfigError("whitebox.prune_mode must be 'smallest-magnitude' or 'random'");
            if (xj.contains("threshold")) w.threshold = get_or<double>(xj, "threshold", 0.0);
            w.c0 = get_or<std::size_t>(xj, "c0", static_cast<std::size_t>(c0));
            w.params.validate();
            c.whitebox = w;
        }
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(e.what());
    }

    if (c.trials < 1) throw ConfigError("trials must be >= 1");
    if (c.n_users < 1) throw ConfigError("n_users must be >= 1");
    if (c.estimation.trials < 1) throw ConfigError("estimation.trials must be >= 1");
    if (c.paper_scale) {
        // --paper-scale overrides whatever desk-scale values were given
        c.tardos.m = 1000;
        c.n_users = 100;
        c.trials = 500;
        c.estimation.trials = 500;
    }
    const auto& sel = c.channel.colluders;
    if (sel.fixed)
        for (auto j : *sel.fixed)
            if (j >= c.n_users) throw ConfigError("channel.colluders: user index out of range");
    if (sel.size() >= c.n_users) throw ConfigError("collusion size must be smaller than n_users");
    if (!(c.channel.rho >= 0.0 && c.channel.rho < 1.0)) throw ConfigError("channel.rho must lie in [0, 1)");
    if (!(c.channel.skew_rate >= 0.0 && c.channel.skew_rate < 1.0))
        throw ConfigError("channel.skew_rate must lie in [0, 1)");
    if (!(c.channel.rho + c.channel.skew_rate < 1.0)) throw ConfigError("channel.rho + channel.skew_rate must be < 1");
    for (const auto& p : c.sweep.presets) {
        try {
            find_preset(p);
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
    }
    for (const auto& p : c.ma_table.presets) {
        try {
            find_preset(p);
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
    }
    for (const auto& name : c.sweep.skew_presets) {
        bool found = false;
        for (const auto& sp : kSkewPresets) found = found || sp.name == name;
        if (!found) throw ConfigError("unknown skew preset '" + name + "'");
    }
    for (double k : c.sweep.kappas)
        if (!(k > 0.0)) throw ConfigError("sweep.kappas must be positive");
    return c;
}

/// Reads a config file into its JSON tree; ".json" is parsed as JSON,
/// anything else as TOML.
inline nlohmann::json read_config_tree(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    if (path.extension() == ".json") {
        try {
            return nlohmann::json::parse(buf.str());
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
    }
    return toml_to_json(buf.str(), path.string());
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    return config_from_json(read_config_tree(path));
}

/// Canonical form of a resolved config. Threads and output locations are
/// left out so they cannot change results or their provenance.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["trials"] = c.trials;
    j["n_users"] = c.n_users;
    j["paper_scale"] = c.paper_scale;
    j["tardos"] = {{"q", c.tardos.q},     {"m", c.tardos.m},       {"kappa", c.tardos.kappa},
                   {"c0", c.tardos.c0},   {"tau", c.tardos.tau},   {"seed", c.tardos.seed}};
    j["sprt"] = {{"eps1", c.sprt.eps1}, {"eps2", c.sprt.eps2}, {"a", c.sprt.a},
                 {"b", c.sprt.b},       {"log_base", c.sprt.log_base}, {"z_stop", c.sprt.use_z_stop}};
    nlohmann::json ch = {{"strategy", std::string(to_string(c.channel.strategy))},
                         {"rho", c.channel.rho},
                         {"skew_rate", c.channel.skew_rate}};
    if (c.channel.preset) ch["preset"] = *c.channel.preset;
    if (c.channel.colluders.fixed) ch["colluders"] = *c.channel.colluders.fixed;
    else ch["colluders"] = "sample:" + std::to_string(c.channel.colluders.count);
    j["channel"] = ch;
    nlohmann::json est = {{"trials", c.estimation.trials}, {"smoothing", c.estimation.smoothing}};
    if (c.estimation.collusion_size) est["collusion_size"] = *c.estimation.collusion_size;
    else est["collusion_size"] = "match";
    if (c.estimation.strategy) est["strategy"] = std::string(to_string(*c.estimation.strategy));
    if (c.estimation.rho) est["rho"] = *c.estimation.rho;
    j["estimation"] = est;
    j["sweep"] = {{"kappas", c.sweep.kappas},
                  {"presets", c.sweep.presets},
                  {"skew_presets", c.sweep.skew_presets},
                  {"innocent_trials", c.sweep.innocent_trials}};
    if (c.sweep.skew_rates) j["sweep"]["skew_rates"] = *c.sweep.skew_rates;
    j["baseline"] = {{"p_random", c.baseline.p_random}, {"collusion_sizes", c.baseline.collusion_sizes}};
    j["ma_table"] = {{"presets", c.ma_table.presets}, {"passes", c.ma_table.passes}};
    if (c.whitebox) {
        const auto& w = *c.whitebox;
        j["whitebox"] = {{"l", w.params.l},
                         {"p_dim", w.params.p_dim},
                         {"n_users", w.params.n_users},
                         {"embed_strength", w.params.embed_strength},
                         {"noise_sigma", w.params.noise_sigma},
                         {"target_projection", w.params.target_projection},
                         {"lambda", w.params.lambda},
                         {"seed", w.params.seed},
                         {"collusion_sizes", w.collusion_sizes},
                         {"collusions", w.collusions},
                         {"finetune_sigma", w.finetune_sigma},
                         {"prune_fraction", w.prune_fraction},
                         {"prune_mode", w.prune_mode == whitebox::PruneMode::random ? "random" : "smallest-magnitude"},
                         {"c0", w.c0}};
        if (w.threshold) j["whitebox"]["threshold"] = *w.threshold;
    }
    return j;
}

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
    const auto h = fnv1a64(config_to_json(c).dump());
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) out[15 - i] = kHex[(h >> (4 * i)) & 0xF];
    return out;
}

}  // namespace tardos::harness
