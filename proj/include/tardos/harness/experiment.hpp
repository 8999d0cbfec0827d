#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tardos/channel.hpp"
#include "tardos/codebook.hpp"
#include "tardos/distributions.hpp"
#include "tardos/errors.hpp"
#include "tardos/harness/config.hpp"
#include "tardos/parallel.hpp"
#include "tardos/random.hpp"
#include "tardos/scores.hpp"
#include "tardos/sprt.hpp"
#include "tardos/whitebox.hpp"

namespace tardos::harness {

struct TrialRecord {
    std::size_t trial = 0;
    Decision decision = Decision::undecided;
    /// Queries spent; m for undecided runs.
    std::size_t t_star = 0;
    std::vector<std::size_t> accused;
    std::vector<std::size_t> colluders;  // empty for an innocent model
    double max_w = 0.0;
    double max_s = 0.0;
};

struct RunAggregates {
    std::size_t trials = 0;
    std::size_t accused = 0;
    std::size_t exonerated = 0;
    std::size_t undecided = 0;
    /// Guilty-model trials where no colluder was accused.
    std::size_t false_negatives = 0;
    /// Trials accusing at least one user outside the collusion.
    std::size_t false_accusation_trials = 0;
    std::size_t falsely_accused_users = 0;
    std::size_t innocent_user_slots = 0;
    double per_user_fpr = 0.0;
    double model_fpr = 0.0;
    double fnr = 0.0;
    double mean_t_star = 0.0;
    double median_t_star = 0.0;
    std::size_t max_t_star = 0;
    std::map<std::size_t, std::size_t> t_star_hist;

    friend bool operator==(const RunAggregates&, const RunAggregates&) = default;
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Everything here is a function of the records, so it can be recomputed.
inline RunAggregates aggregate_records(const std::vector<TrialRecord>& records, std::size_t n_users) {
    RunAggregates a;
    a.trials = records.size();
    std::vector<double> ts;
    ts.reserve(records.size());
    double sum = 0.0;
    for (const auto& r : records) {
        switch (r.decision) {
            case Decision::accused: ++a.accused; break;
            case Decision::exonerated: ++a.exonerated; break;
            case Decision::undecided: ++a.undecided; break;
        }
        std::size_t wrong = 0;
        bool caught = false;
        for (auto j : r.accused) {
            if (std::binary_search(r.colluders.begin(), r.colluders.end(), j)) caught = true;
            else ++wrong;
        }
        if (!r.colluders.empty() && !caught) ++a.false_negatives;
        if (wrong) ++a.false_accusation_trials;
        a.falsely_accused_users += wrong;
        a.innocent_user_slots += n_users - r.colluders.size();
        ++a.t_star_hist[r.t_star];
        a.max_t_star = std::max(a.max_t_star, r.t_star);
        sum += static_cast<double>(r.t_star);
        ts.push_back(static_cast<double>(r.t_star));
    }
    if (a.trials) {
        a.mean_t_star = sum / static_cast<double>(a.trials);
        a.model_fpr = static_cast<double>(a.false_accusation_trials) / static_cast<double>(a.trials);
        a.fnr = static_cast<double>(a.false_negatives) / static_cast<double>(a.trials);
    }
    if (a.innocent_user_slots)
        a.per_user_fpr = static_cast<double>(a.falsely_accused_users) / static_cast<double>(a.innocent_user_slots);
    a.median_t_star = median_of(std::move(ts));
    return a;
}

inline nlohmann::json aggregates_to_json(const RunAggregates& a) {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [t, count] : a.t_star_hist) hist[std::to_string(t)] = count;
    return {{"trials", a.trials},
            {"accused", a.accused},
            {"exonerated", a.exonerated},
            {"undecided", a.undecided},
            {"false_negatives", a.false_negatives},
            {"false_accusation_trials", a.false_accusation_trials},
            {"falsely_accused_users", a.falsely_accused_users},
            {"innocent_user_slots", a.innocent_user_slots},
            {"per_user_fpr", a.per_user_fpr},
            {"model_fpr", a.model_fpr},
            {"fnr", a.fnr},
            {"mean_t_star", a.mean_t_star},
            {"median_t_star", a.median_t_star},
            {"max_t_star", a.max_t_star},
            {"t_star_hist", hist}};
}

/// One batch of seeded trials against a fixed codebook and distributions.
struct RunSpec {
    std::string label;
    ChannelModel model;
    ColluderSelection colluders;
    /// Suspect is a model trained without any fingerprint.
    bool innocent = false;
    std::size_t trials = 1;
    std::uint64_t seed = 0;
};

struct RunResult {
    std::string label;
    std::string channel_descriptor;
    std::string distributions_descriptor;
    std::size_t n_users = 0;
    std::vector<TrialRecord> records;
    RunAggregates aggregates;
};

/// A CSV table emitted next to the run files.
struct Table {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
};

struct ExperimentResult {
    std::string experiment;
    Provenance provenance;
    std::vector<RunResult> runs;
    std::vector<Table> tables;
    nlohmann::json report = nlohmann::json::object();
};

/// Trial k draws its collusion and query order from ("trial", seed, k) and
/// ("order", seed, k), and its oracle from derive_seed(seed, "oracle", k).
inline TrialRecord run_one_trial(const Codebook& cb, const ScoreDistributions& dists, const SprtConfig& sprt,
                                 const RunSpec& spec, std::size_t k) {
    TrialRecord rec;
    rec.trial = k;
    try {
        Rng rng = make_rng(spec.seed, "trial", k);
        const std::uint64_t oracle_seed = derive_seed(spec.seed, "oracle", k);
        TableOracle oracle;
        if (spec.innocent) {
            oracle = make_innocent_oracle(cb, oracle_seed);
        } else {
            ChannelSpec ch;
            ch.model = spec.model;
            ch.seed = oracle_seed;
            ch.colluders = spec.colluders.fixed ? *spec.colluders.fixed
                                                : sample_without_replacement(rng, cb.users(), spec.colluders.count);
            std::sort(ch.colluders.begin(), ch.colluders.end());
            rec.colluders = ch.colluders;
            oracle = make_oracle(ch, cb);
        }
        Rng order_rng = make_rng(spec.seed, "order", k);
        const auto order = random_permutation(order_rng, cb.positions());
        const auto res = sequential_accuse(cb, dists, sprt, oracle, order);
        rec.decision = res.decision;
        rec.t_star = res.t_star ? *res.t_star : cb.positions();
        rec.accused = res.accused;
        rec.max_w = *std::max_element(res.state.w.begin(), res.state.w.end());
        rec.max_s = *std::max_element(res.state.s.begin(), res.state.s.end());
    } catch (const TrialError&) {
        throw;
    } catch (const std::exception& e) {
        throw TrialError(k, e.what());
    }
    return rec;
}

inline RunResult run_trials(const Codebook& cb, const ScoreDistributions& dists, const SprtConfig& sprt,
                            const RunSpec& spec, std::size_t threads) {
    if (spec.trials < 1) throw ConfigError("trials must be >= 1");
    if (!spec.innocent && spec.colluders.size() > cb.users())
        throw InsufficientUsersError("collusion size must be smaller than the number of users");
    RunResult out;
    out.label = spec.label;
    out.n_users = cb.users();
    out.channel_descriptor = spec.innocent ? "innocent" : spec.model.descriptor(spec.colluders.size());
    out.distributions_descriptor = dists.channel_descriptor;
    out.records.resize(spec.trials);
    parallel_for(spec.trials, threads, [&](std::size_t k, std::size_t) {
        out.records[k] = run_one_trial(cb, dists, sprt, spec, k);
    });
    out.aggregates = aggregate_records(out.records, cb.users());
    return out;
}

namespace detail {

inline ChannelModel channel_model(const ExperimentConfig& c, const std::vector<Symbol>& labels) {
    ChannelModel m;
    m.strategy = c.channel.strategy;
    m.ma_violation_rate = c.channel.rho;
    m.skew_rate = c.channel.skew_rate;
    if (m.skew_rate > 0.0) m.true_labels = labels;
    return m;
}

/// The owner's offline estimate: c0-sized collusions through the configured
/// strategy with no MA violations unless the config asks otherwise.
inline ChannelModel estimation_model(const ExperimentConfig& c, const ChannelModel& run_model) {
    ChannelModel m = run_model;
    m.strategy = c.estimation.strategy.value_or(run_model.strategy);
    m.ma_violation_rate = c.estimation.rho.value_or(0.0);
    if (m.ma_violation_rate + m.skew_rate >= 1.0) m.ma_violation_rate = 0.0;
    return m;
}

inline std::vector<Symbol> true_labels(const ExperimentConfig& c) {
    return random_true_labels(c.tardos.m, c.tardos.q, derive_seed(c.seed, "labels"));
}

/// Score laws do not depend on which users exist, only on the biases, so a
/// codebook too small to hold a collusion plus innocents is widened for the
/// estimate.
inline ScoreDistributions estimate_for(const ExperimentConfig& c, const Codebook& cb, const ChannelModel& run_model,
                                       std::size_t run_collusion_size, std::size_t threads) {
    EstimationOptions opt;
    opt.collusion_size = c.estimation.collusion_size.value_or(run_collusion_size);
    opt.trials = c.estimation.trials;
    opt.seed = derive_seed(c.seed, "estimation");
    opt.threads = threads;
    opt.smoothing = c.estimation.smoothing;
    const auto model = estimation_model(c, run_model);
    if (cb.users() > opt.collusion_size) return estimate_score_distributions(cb, model, opt);
    const auto wide = generate_codebook(cb.params, std::max<std::size_t>(100, opt.collusion_size + 1));
    return estimate_score_distributions(wide, model, opt);
}

inline Provenance provenance(const ExperimentConfig& c) {
    return {config_hash(c), c.seed, kToolVersion};
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

/// Seeded trials of the configured channel against one codebook.
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
    ExperimentResult res;
    res.experiment = "simulate";
    res.provenance = detail::provenance(c);
    const auto cb = generate_codebook(c.tardos, c.n_users);
    const auto model = detail::channel_model(c, detail::true_labels(c));
    model.validate(cb.alphabet(), cb.positions());
    const auto dists = detail::estimate_for(c, cb, model, c.channel.colluders.size(), c.threads);
    RunSpec spec{"simulate", model, c.channel.colluders, false, c.trials, derive_seed(c.seed, "run", 0)};
    res.runs.push_back(run_trials(cb, dists, c.sprt, spec, c.threads));
    res.report["tau"] = c.tardos.tau;
    res.report["distributions"] = dists.channel_descriptor;
    res.report["score_moments"] = {{"col_mean", dists.moments.col_mean}, {"inn_mean", dists.moments.inn_mean},
                                   {"inn_var", dists.moments.inn_var}};
    return res;
}

/// Shared-trigger SPRT against independent per-user triggers.
inline ExperimentResult experiment_baseline_comparison(const ExperimentConfig& c) {
    ExperimentResult res;
    res.experiment = "baseline-compare";
    res.provenance = detail::provenance(c);
    const auto cb = generate_codebook(c.tardos, c.n_users);
    const std::size_t per_user = baseline_min_queries(c.sprt.eps1, c.baseline.p_random);
    const std::size_t baseline_total = per_user * c.n_users;
    res.report["baseline"] = {{"p_random", c.baseline.p_random},
                              {"per_user_t_star", per_user},
                              {"total_queries", baseline_total},
                              {"fpr_at_t_star", baseline_independent_fpr(per_user, per_user, c.baseline.p_random)}};
    nlohmann::json proposed = nlohmann::json::object();
    std::size_t idx = 0;
    for (std::size_t size : c.baseline.collusion_sizes) {
        ++idx;
        if (size < 1 || size > c.n_users) continue;
        ChannelModel model;
        model.strategy = c.channel.strategy;
        const auto dists = detail::estimate_for(c, cb, model, size, c.threads);
        ColluderSelection sel;
        sel.count = size;
        const std::string label = size == 1 ? "single" : "c" + std::to_string(size);
        RunSpec spec{label, model, sel, false, c.trials, derive_seed(c.seed, "run", idx)};
        auto run = run_trials(cb, dists, c.sprt, spec, c.threads);
        // shared triggers: one run's t* is the total number of queries
        bool all_below = true;
        for (const auto& r : run.records) all_below = all_below && r.t_star < baseline_total;
        proposed[label] = {{"collusion_size", size},
                           {"mean_total_queries", run.aggregates.mean_t_star},
                           {"max_total_queries", run.aggregates.max_t_star},
                           {"all_trials_below_baseline", all_below}};
        res.runs.push_back(std::move(run));
    }
    res.report["proposed"] = proposed;
    return res;
}

/// t* per bias concentration. tau stays at the configured value for every
/// kappa so that the sweep isolates the bias shape.
inline ExperimentResult experiment_kappa_sweep(const ExperimentConfig& c, std::vector<double> kappas = {}) {
    if (kappas.empty()) kappas = c.sweep.kappas;
    if (kappas.empty()) throw ConfigError("kappa sweep needs at least one kappa");
    ExperimentResult res;
    res.experiment = "sweep-kappa";
    res.provenance = detail::provenance(c);
    nlohmann::json per_kappa = nlohmann::json::array();
    std::size_t idx = 0;
    for (double kappa : kappas) {
        auto params = c.tardos;
        params.kappa = kappa;
        params.validate();
        const auto cb = generate_codebook(params, c.n_users);
        nlohmann::json entry = {{"kappa", kappa}, {"tau", params.tau}};
        const std::string kl = "kappa=" + detail::fmt(kappa);
        for (const auto& name : c.sweep.presets) {
            const auto& preset = find_preset(name);
            ChannelModel model;
            model.strategy = Strategy::majority;
            model.ma_violation_rate = preset.ma_violation_rate;
            const auto dists = detail::estimate_for(c, cb, model, preset.colluders, c.threads);
            ColluderSelection sel;
            sel.count = preset.colluders;
            RunSpec spec{kl + "/" + name, model, sel, false, c.trials, derive_seed(c.seed, "run", idx++)};
            auto run = run_trials(cb, dists, c.sprt, spec, c.threads);
            entry["median_t_star"][name] = run.aggregates.median_t_star;
            entry["false_negatives"][name] = run.aggregates.false_negatives;
            res.runs.push_back(std::move(run));
        }
        ChannelModel base;
        base.strategy = Strategy::majority;
        const auto dists = detail::estimate_for(c, cb, base, c.channel.colluders.size(), c.threads);
        RunSpec inn{kl + "/innocent", base, {}, true, c.sweep.innocent_trials, derive_seed(c.seed, "run", idx++)};
        auto run = run_trials(cb, dists, c.sprt, inn, c.threads);
        entry["innocent_mean_t_star"] = run.aggregates.mean_t_star;
        entry["innocent_per_user_fpr"] = run.aggregates.per_user_fpr;
        res.runs.push_back(std::move(run));
        per_kappa.push_back(entry);
    }
    res.report["kappas"] = per_kappa;
    if (kappas.size() >= 2) {
        // direction between the smallest and the largest kappa
        std::size_t lo = 0, hi = 0;
        for (std::size_t i = 0; i < kappas.size(); ++i) {
            if (kappas[i] < kappas[lo]) lo = i;
            if (kappas[i] > kappas[hi]) hi = i;
        }
        nlohmann::json dir;
        for (const auto& name : c.sweep.presets)
            dir["median_t_star_decreases"][name] =
                per_kappa[hi]["median_t_star"][name].get<double>() < per_kappa[lo]["median_t_star"][name].get<double>();
        dir["innocent_mean_t_star_decreases"] = per_kappa[hi]["innocent_mean_t_star"].get<double>() <
                                                per_kappa[lo]["innocent_mean_t_star"].get<double>();
        res.report["direction"] = dir;
    }
    return res;
}

/// t* per trigger type; higher skew toward the true label should cost queries.
inline ExperimentResult experiment_trigger_skew(const ExperimentConfig& c,
                                                std::vector<std::pair<std::string, double>> levels = {}) {
    if (levels.empty()) {
        if (c.sweep.skew_rates) {
            for (double s : *c.sweep.skew_rates) levels.emplace_back("skew=" + detail::fmt(s), s);
        } else {
            for (const auto& name : c.sweep.skew_presets)
                for (const auto& sp : kSkewPresets)
                    if (sp.name == name) levels.emplace_back(std::string(sp.name), sp.skew_rate);
        }
    }
    ExperimentResult res;
    res.experiment = "trigger-skew";
    res.provenance = detail::provenance(c);
    const auto cb = generate_codebook(c.tardos, c.n_users);
    const auto labels = detail::true_labels(c);
    nlohmann::json medians = nlohmann::json::object();
    std::vector<double> med;
    std::size_t idx = 0;
    for (const auto& [name, skew] : levels) {
        if (!(skew >= 0.0) || skew + c.channel.rho >= 1.0)
            throw ConfigError("skew level " + name + ": rho + skew must stay below 1");
        ChannelModel model = detail::channel_model(c, labels);
        model.skew_rate = skew;
        model.true_labels = skew > 0.0 ? labels : std::vector<Symbol>{};
        const auto dists = detail::estimate_for(c, cb, model, c.channel.colluders.size(), c.threads);
        RunSpec spec{name, model, c.channel.colluders, false, c.trials, derive_seed(c.seed, "run", idx++)};
        auto run = run_trials(cb, dists, c.sprt, spec, c.threads);
        medians[name] = {{"skew_rate", skew},
                         {"median_t_star", run.aggregates.median_t_star},
                         {"mean_t_star", run.aggregates.mean_t_star}};
        med.push_back(run.aggregates.median_t_star);
        res.runs.push_back(std::move(run));
    }
    // monotone in the order the levels were given (T_R, T_M, T_B by default)
    bool monotone = true;
    for (std::size_t i = 1; i < med.size(); ++i) monotone = monotone && med[i] >= med[i - 1];
    res.report["levels"] = medians;
    res.report["monotone_non_decreasing"] = monotone;
    return res;
}

struct MaRow {
    std::string preset;
    std::size_t colluders = 0;
    double rho = 0.0;
    ViolationCount count;
    bool within_3sigma = false;
};

/// |measured - rho| <= 3 sqrt(rho (1 - rho) / eligible); rho = 0 needs exactly zero.
inline bool within_three_sigma(double rho, const ViolationCount& vc) {
    if (rho == 0.0) return vc.violations == 0;
    if (vc.eligible == 0) return false;
    const double sd = std::sqrt(rho * (1.0 - rho) / static_cast<double>(vc.eligible));
    return std::abs(vc.rate() - rho) <= 3.0 * sd;
}

inline MaRow measure_preset(const Codebook& cb, const std::string& name, double rho, std::size_t size,
                            Strategy strategy, std::size_t passes, std::uint64_t seed) {
    MaRow row{name, size, rho, {}, false};
    for (std::size_t k = 0; k < passes; ++k) {
        Rng rng = make_rng(seed, "ma-pass", k);
        ChannelSpec spec;
        spec.colluders = sample_without_replacement(rng, cb.users(), size);
        spec.model.strategy = strategy;
        spec.model.ma_violation_rate = rho;
        const auto vc = count_ma_violations(spec, cb, 1, rng);
        row.count.violations += vc.violations;
        row.count.eligible += vc.eligible;
    }
    row.within_3sigma = within_three_sigma(rho, row.count);
    return row;
}

inline ExperimentResult experiment_ma_table(const ExperimentConfig& c) {
    ExperimentResult res;
    res.experiment = "ma-table";
    res.provenance = detail::provenance(c);
    const auto cb = generate_codebook(c.tardos, c.n_users);
    std::vector<std::string> names = c.ma_table.presets;
    if (names.empty())
        for (const auto& p : kChannelPresets) names.emplace_back(p.name);
    Table t{"ma_table", {"preset", "colluders", "rho", "measured", "violations", "eligible", "within_3sigma"}, {}};
    bool all_ok = true;
    std::size_t idx = 0;
    for (const auto& name : names) {
        const auto& p = find_preset(name);
        const auto row = measure_preset(cb, name, p.ma_violation_rate, p.colluders, c.channel.strategy,
                                        c.ma_table.passes, derive_seed(c.seed, "ma", idx++));
        all_ok = all_ok && row.within_3sigma;
        t.rows.push_back({row.preset, std::to_string(row.colluders), detail::fmt(row.rho),
                          detail::fmt(row.count.rate()), std::to_string(row.count.violations),
                          std::to_string(row.count.eligible), row.within_3sigma ? "true" : "false"});
        res.report["presets"][name] = {{"rho", row.rho},
                                       {"measured", row.count.rate()},
                                       {"eligible", row.count.eligible},
                                       {"within_3sigma", row.within_3sigma}};
    }
    res.report["all_within_3sigma"] = all_ok;
    res.tables.push_back(std::move(t));
    return res;
}

struct ProjectionStats {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
    double min = 0.0;
    double max = 0.0;
};

inline ProjectionStats projection_stats(const std::vector<double>& v) {
    ProjectionStats s;
    s.n = v.size();
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    double sq = 0.0;
    for (double x : v) sq += (x - s.mean) * (x - s.mean);
    s.sd = v.size() > 1 ? std::sqrt(sq / static_cast<double>(v.size() - 1)) : 0.0;
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    s.min = *mn;
    s.max = *mx;
    return s;
}

enum class WhiteboxAttack { none, finetune, prune };

inline const char* to_string(WhiteboxAttack a) {
    switch (a) {
        case WhiteboxAttack::none: return "none";
        case WhiteboxAttack::finetune: return "finetune";
        case WhiteboxAttack::prune: return "prune";
    }
    return "?";
}

struct WhiteboxCondition {
    std::size_t c = 0;
    WhiteboxAttack attack = WhiteboxAttack::none;
    std::vector<double> r_col;
    std::vector<double> r_inn;
    std::size_t missed_colluders = 0;
    std::size_t false_accusations = 0;
};

/// Collusion k of condition (c, attack) uses stream ("wb-trial", seed, k) for
/// the collusion and ("wb-attack", seed, k) for the attack noise.
inline WhiteboxCondition run_whitebox_condition(const whitebox::WhiteboxEnsemble& e, const WhiteboxConfig& w,
                                                std::size_t c, WhiteboxAttack attack, double threshold,
                                                std::uint64_t seed, std::size_t threads) {
    WhiteboxCondition cond;
    cond.c = c;
    cond.attack = attack;
    struct Part {
        std::vector<double> col, inn;
        std::size_t missed = 0, wrong = 0;
    };
    std::vector<Part> parts(w.collusions);
    parallel_for(w.collusions, threads, [&](std::size_t k, std::size_t) {
        Rng rng = make_rng(seed, "wb-trial", k);
        auto colluders = sample_without_replacement(rng, e.users(), c);
        std::sort(colluders.begin(), colluders.end());
        auto suspect = whitebox::collude_average(e, colluders);
        Rng arng = make_rng(seed, "wb-attack", k);
        if (attack == WhiteboxAttack::finetune) suspect = whitebox::attack_finetune(suspect, w.finetune_sigma, arng);
        if (attack == WhiteboxAttack::prune) suspect = whitebox::attack_prune(suspect, w.prune_fraction, w.prune_mode, arng);
        const auto r = e.project_all(suspect);
        Part& p = parts[k];
        for (std::size_t j = 0; j < r.size(); ++j) {
            const bool guilty = std::binary_search(colluders.begin(), colluders.end(), j);
            (guilty ? p.col : p.inn).push_back(r[j]);
            if (guilty && !(r[j] > threshold)) ++p.missed;
            if (!guilty && r[j] > threshold) ++p.wrong;
        }
    });
    for (auto& p : parts) {
        cond.r_col.insert(cond.r_col.end(), p.col.begin(), p.col.end());
        cond.r_inn.insert(cond.r_inn.end(), p.inn.begin(), p.inn.end());
        cond.missed_colluders += p.missed;
        cond.false_accusations += p.wrong;
    }
    return cond;
}

inline constexpr std::size_t kProjectionBins = 200;

inline ExperimentResult experiment_whitebox(const ExperimentConfig& c) {
    if (!c.whitebox) throw ConfigError("whitebox experiment needs a [whitebox] section");
    const auto& w = *c.whitebox;
    ExperimentResult res;
    res.experiment = "whitebox";
    res.provenance = detail::provenance(c);
    const auto e = whitebox::embed_users(w.params);
    const double threshold = w.threshold.value_or(whitebox::default_threshold(w.c0, w.params.p_dim));
    res.report["tuned_beta"] = e.beta;
    res.report["threshold"] = threshold;

    Table hist{"r_hist", {"c", "attack", "class", "bin_lo", "bin_hi", "count"}, {}};
    Table summary{"r_summary",
                  {"c", "attack", "col_mean", "col_sd", "inn_mean", "inn_sd", "expected_col_mean", "separation_sd",
                   "missed_colluders", "false_accusations"},
                  {}};
    const double width = 2.0 / static_cast<double>(kProjectionBins);
    std::size_t idx = 0;
    bool colluder_mean_ok = true, innocent_ok = true;
    for (std::size_t size : w.collusion_sizes) {
        if (size < 1 || size >= e.users()) throw ConfigError("whitebox collusion size out of range");
        for (auto attack : {WhiteboxAttack::none, WhiteboxAttack::finetune, WhiteboxAttack::prune}) {
            const auto cond = run_whitebox_condition(e, w, size, attack, threshold,
                                                     derive_seed(c.seed, "wb-condition", idx++), c.threads);
            const auto sc = projection_stats(cond.r_col);
            const auto si = projection_stats(cond.r_inn);
            const double expected = 1.0 / std::sqrt(static_cast<double>(size));
            const double separation = si.sd > 0.0 ? (sc.mean - si.mean) / si.sd : 0.0;
            if (attack == WhiteboxAttack::none) colluder_mean_ok = colluder_mean_ok && std::abs(sc.mean - expected) <= 0.05 * expected;
            innocent_ok = innocent_ok && std::abs(si.mean) <= 0.02;
            const std::string key = "c" + std::to_string(size) + "/" + to_string(attack);
            res.report["conditions"][key] = {{"col_mean", sc.mean},
                                             {"col_sd", sc.sd},
                                             {"inn_mean", si.mean},
                                             {"inn_sd", si.sd},
                                             {"expected_col_mean", expected},
                                             {"separation_sd", separation},
                                             {"missed_colluders", cond.missed_colluders},
                                             {"false_accusations", cond.false_accusations}};
            summary.rows.push_back({std::to_string(size), to_string(attack), detail::fmt(sc.mean), detail::fmt(sc.sd),
                                    detail::fmt(si.mean), detail::fmt(si.sd), detail::fmt(expected),
                                    detail::fmt(separation), std::to_string(cond.missed_colluders),
                                    std::to_string(cond.false_accusations)});
            for (const auto* cls : {"colluder", "innocent"}) {
                const auto& v = std::string(cls) == "colluder" ? cond.r_col : cond.r_inn;
                std::vector<std::size_t> counts(kProjectionBins, 0);
                for (double r : v) {
                    auto b = static_cast<long>(std::floor((r + 1.0) / width));
                    b = std::clamp<long>(b, 0, static_cast<long>(kProjectionBins) - 1);
                    ++counts[static_cast<std::size_t>(b)];
                }
                for (std::size_t b = 0; b < kProjectionBins; ++b)
                    if (counts[b])
                        hist.rows.push_back({std::to_string(size), to_string(attack), cls,
                                             detail::fmt(-1.0 + width * static_cast<double>(b)),
                                             detail::fmt(-1.0 + width * static_cast<double>(b + 1)),
                                             std::to_string(counts[b])});
            }
        }
    }
    res.report["colluder_mean_within_5pct"] = colluder_mean_ok;
    res.report["innocent_means_within_0.02"] = innocent_ok;
    res.tables.push_back(std::move(summary));
    res.tables.push_back(std::move(hist));
    return res;
}

}  // namespace tardos::harness
