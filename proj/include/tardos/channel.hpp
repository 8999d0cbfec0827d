#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tardos/codebook.hpp"
#include "tardos/errors.hpp"
#include "tardos/random.hpp"

namespace tardos {

enum class Strategy { majority, minority, interleaving };

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::majority: return "majority";
        case Strategy::minority: return "minority";
        case Strategy::interleaving: return "interleaving";
    }
    return "?";
}

inline Strategy parse_strategy(std::string_view name) {
    if (name == "majority") return Strategy::majority;
    if (name == "minority") return Strategy::minority;
    if (name == "interleaving") return Strategy::interleaving;
    throw DomainError("unknown collusion strategy '" + std::string(name) + "'");
}

/// Measured marking-assumption violation rates per collusion size and attack.
struct ChannelPreset {
    std::string_view name;
    std::size_t colluders;
    double ma_violation_rate;
};

inline constexpr std::array<ChannelPreset, 9> kChannelPresets{{
    {"single/no-attack", 1, 0.000},
    {"single/fine-tune", 1, 0.023},
    {"single/prune", 1, 0.190},
    {"c2/no-attack", 2, 0.043},
    {"c2/fine-tune", 2, 0.151},
    {"c2/prune", 2, 0.317},
    {"c6/no-attack", 6, 0.056},
    {"c6/fine-tune", 6, 0.156},
    {"c6/prune", 6, 0.290},
}};

inline const ChannelPreset& find_preset(std::string_view name) {
    for (const auto& p : kChannelPresets)
        if (p.name == name) return p;
    throw DomainError("unknown channel preset '" + std::string(name) + "'");
}

/// Trigger-type skew levels: random patterns, merged patterns, benign examples.
struct SkewPreset {
    std::string_view name;
    double skew_rate;
};

inline constexpr std::array<SkewPreset, 3> kSkewPresets{{
    {"T_R", 0.0},
    {"T_M", 0.1},
    {"T_B", 0.3},
}};

/// Everything about a leaked model except who colluded: strategy, MA
/// violation rate rho and main-task skew.
struct ChannelModel {
    Strategy strategy = Strategy::majority;
    double ma_violation_rate = 0.0;
    double skew_rate = 0.0;
    /// True main-task label per trigger; present iff skew_rate > 0.
    std::vector<Symbol> true_labels;

    void validate(int q, std::size_t m) const {
        if (!(ma_violation_rate >= 0.0 && ma_violation_rate < 1.0))
            throw DomainError("ma_violation_rate must lie in [0, 1)");
        if (!(skew_rate >= 0.0 && skew_rate < 1.0)) throw DomainError("skew_rate must lie in [0, 1)");
        if (!(ma_violation_rate + skew_rate < 1.0))
            throw DomainError("ma_violation_rate + skew_rate must be < 1");
        if ((skew_rate > 0.0) != !true_labels.empty())
            throw DomainError("true_labels must be present iff skew_rate > 0");
        if (!true_labels.empty()) {
            if (true_labels.size() != m) throw DomainError("true_labels must have one entry per position");
            for (Symbol s : true_labels)
                if (s >= static_cast<Symbol>(q)) throw DomainError("true label out of alphabet");
        }
    }

    /// Stable text form recorded next to estimated distributions.
    std::string descriptor(std::size_t colluders) const {
        std::ostringstream os;
        os.precision(17);
        os << "strategy=" << to_string(strategy) << ";c=" << colluders
           << ";rho=" << ma_violation_rate << ";skew=" << skew_rate;
        return os.str();
    }
};

/// Uniform random trigger labels, used when a skew level is requested.
inline std::vector<Symbol> random_true_labels(std::size_t m, int q, std::uint64_t seed) {
    Rng rng = make_rng(seed, "true-labels");
    std::vector<Symbol> labels(m);
    for (auto& s : labels) s = static_cast<Symbol>(uniform_index(rng, static_cast<std::size_t>(q)));
    return labels;
}

struct ChannelSpec {
    std::vector<std::size_t> colluders;
    ChannelModel model;
    std::uint64_t seed = 0;

    void validate(const Codebook& cb) const {
        if (colluders.empty()) throw DomainError("channel: colluder set is empty");
        for (std::size_t j : colluders)
            if (j >= cb.users()) throw IndexError("channel: colluder index out of range");
        model.validate(cb.alphabet(), cb.positions());
    }
};

namespace detail {

// Picks uniformly among symbols whose count equals the extreme selected by `better`.
template <typename Better>
Symbol pick_extreme(const std::vector<std::size_t>& counts, Rng& rng, Better better) {
    std::size_t best = 0;
    bool any = false;
    for (std::size_t c : counts)
        if (c > 0 && (!any || better(c, best))) {
            best = c;
            any = true;
        }
    std::size_t ties = 0;
    for (std::size_t c : counts) ties += (c == best);
    std::size_t k = ties > 1 ? uniform_index(rng, ties) : 0;
    for (std::size_t a = 0; a < counts.size(); ++a)
        if (counts[a] == best && k-- == 0) return static_cast<Symbol>(a);
    return 0;
}

}  // namespace detail

/// Output of the leaked model on trigger `position`.
///
/// One uniform u decides the branch: u < skew emits the true label,
/// u < skew + rho emits a uniform symbol nobody in the collusion holds
/// (falling through when the colluders hold every symbol), otherwise the
/// strategy picks among the colluders' symbols.
inline Symbol channel_output(const ChannelSpec& spec, const Codebook& cb, std::size_t position,
                             Rng& rng) {
    if (position >= cb.positions()) throw IndexError("channel_output: position out of range");
    const auto q = static_cast<std::size_t>(cb.alphabet());
    const auto& model = spec.model;

    std::vector<std::size_t> counts(q, 0);
    for (std::size_t j : spec.colluders) ++counts[cb.fingerprints.at(j, position)];

    const double u = uniform01(rng);
    if (u < model.skew_rate) return model.true_labels[position];
    if (u < model.skew_rate + model.ma_violation_rate) {
        const auto unheld = static_cast<std::size_t>(std::count(counts.begin(), counts.end(), 0));
        if (unheld > 0) {
            std::size_t k = uniform_index(rng, unheld);
            for (std::size_t a = 0; a < q; ++a)
                if (counts[a] == 0 && k-- == 0) return static_cast<Symbol>(a);
        }
    }
    switch (model.strategy) {
        case Strategy::majority:
            return detail::pick_extreme(counts, rng, [](std::size_t c, std::size_t b) { return c > b; });
        case Strategy::minority:
            return detail::pick_extreme(counts, rng, [](std::size_t c, std::size_t b) { return c < b; });
        case Strategy::interleaving:
            return cb.fingerprints.at(spec.colluders[uniform_index(rng, spec.colluders.size())],
                                      position);
    }
    return 0;
}

inline bool colluders_hold(const ChannelSpec& spec, const Codebook& cb, std::size_t position,
                           Symbol symbol) {
    return std::any_of(spec.colluders.begin(), spec.colluders.end(), [&](std::size_t j) {
        return cb.fingerprints.at(j, position) == symbol;
    });
}

inline bool colluders_cover_alphabet(const ChannelSpec& spec, const Codebook& cb,
                                     std::size_t position) {
    std::vector<bool> seen(static_cast<std::size_t>(cb.alphabet()), false);
    for (std::size_t j : spec.colluders) seen[cb.fingerprints.at(j, position)] = true;
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

struct ViolationCount {
    std::size_t violations = 0;
    std::size_t eligible = 0;
    double rate() const { return eligible ? static_cast<double>(violations) / eligible : 0.0; }
};

/// Fresh outputs over `trials` passes of every position; positions where the
/// colluders already hold the whole alphabet are left out of the denominator.
inline ViolationCount count_ma_violations(const ChannelSpec& spec, const Codebook& cb,
                                          std::size_t trials, Rng& rng) {
    spec.validate(cb);
    ViolationCount vc;
    for (std::size_t t = 0; t < trials; ++t)
        for (std::size_t i = 0; i < cb.positions(); ++i) {
            if (colluders_cover_alphabet(spec, cb, i)) continue;
            ++vc.eligible;
            if (!colluders_hold(spec, cb, i, channel_output(spec, cb, i, rng))) ++vc.violations;
        }
    return vc;
}

inline double measure_ma_violation_rate(const ChannelSpec& spec, const Codebook& cb,
                                        std::size_t trials, Rng& rng) {
    return count_ma_violations(spec, cb, trials, rng).rate();
}

/// A fixed model: every trigger's answer is decided once, so repeated
/// queries agree. Immutable after construction.
class TableOracle {
public:
    TableOracle() = default;
    explicit TableOracle(std::vector<Symbol> answers) : answers_(std::move(answers)) {}

    Symbol operator()(std::size_t position) const {
        if (position >= answers_.size()) throw IndexError("oracle: position out of range");
        return answers_[position];
    }
    std::span<const Symbol> answers() const { return answers_; }

private:
    std::vector<Symbol> answers_;
};

/// Answer table drawn position by position from stream ("oracle", spec.seed).
inline TableOracle make_oracle(const ChannelSpec& spec, const Codebook& cb) {
    spec.validate(cb);
    Rng rng = make_rng(spec.seed, "oracle");
    std::vector<Symbol> answers(cb.positions());
    for (std::size_t i = 0; i < answers.size(); ++i) answers[i] = channel_output(spec, cb, i, rng);
    return TableOracle(std::move(answers));
}

/// A model carrying none of the fingerprints: each answer is drawn from the
/// trigger's bias, independently of every user.
inline TableOracle make_innocent_oracle(const Codebook& cb, std::uint64_t seed) {
    Rng rng = make_rng(seed, "innocent-oracle");
    std::vector<Symbol> answers(cb.positions());
    for (std::size_t i = 0; i < answers.size(); ++i)
        answers[i] = static_cast<Symbol>(draw_categorical(rng, cb.bias.row(i)));
    return TableOracle(std::move(answers));
}

}  // namespace tardos
