#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tardos/codebook.hpp"
#include "tardos/distributions.hpp"
#include "tardos/errors.hpp"
#include "tardos/scores.hpp"

namespace tardos {

/// Wald thresholds. a and b are in units of log_base.
struct SprtConfig {
    double eps1 = 1e-6;
    double eps2 = 1e-3;
    double a = -3.0;
    double b = 6.0;
    double log_base = 10.0;
    /// Also accuse when the cumulative Tardos score exceeds Z_t.
    bool use_z_stop = true;

    /// a = log(eps2 / (1 - eps1)), b = log((1 - eps2) / eps1).
    static SprtConfig from_rates(double eps1, double eps2, double log_base = 10.0,
                                 bool use_z_stop = true) {
        SprtConfig c;
        c.eps1 = eps1;
        c.eps2 = eps2;
        c.log_base = log_base;
        c.use_z_stop = use_z_stop;
        if (!(eps1 > 0.0 && eps1 < 1.0) || !(eps2 > 0.0 && eps2 < 1.0))
            throw DomainError("eps1 and eps2 must lie in (0, 1)");
        if (!(log_base > 0.0) || log_base == 1.0) throw DomainError("log_base must be positive and != 1");
        const double lnb = std::log(log_base);
        c.a = std::log(eps2 / (1.0 - eps1)) / lnb;
        c.b = std::log((1.0 - eps2) / eps1) / lnb;
        c.validate();
        return c;
    }

    void validate() const {
        if (!(eps1 > 0.0 && eps1 < 1.0) || !(eps2 > 0.0 && eps2 < 1.0))
            throw DomainError("eps1 and eps2 must lie in (0, 1)");
        if (!(a < 0.0 && 0.0 < b)) throw DomainError("thresholds must satisfy a < 0 < b");
        if (!(log_base > 0.0) || log_base == 1.0) throw DomainError("log_base must be positive and != 1");
    }
};

enum class UserStatus : unsigned char { active, accused, exonerated };
enum class Decision { accused, exonerated, undecided };

inline std::string_view to_string(Decision d) {
    switch (d) {
        case Decision::accused: return "accused";
        case Decision::exonerated: return "exonerated";
        case Decision::undecided: return "undecided";
    }
    return "?";
}

/// Cumulative log-likelihood W_j and Tardos score S_j of every user.
struct SprtState {
    std::vector<double> w;
    std::vector<double> s;
    std::vector<UserStatus> status;
    std::vector<bool> consumed;
    std::size_t t = 0;
    std::optional<std::size_t> t_star;

    SprtState() = default;
    SprtState(std::size_t n_users, std::size_t m)
        : w(n_users, 0.0), s(n_users, 0.0), status(n_users, UserStatus::active), consumed(m, false) {}

    bool decided() const noexcept { return t_star.has_value(); }

    std::vector<std::size_t> accused() const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < status.size(); ++j)
            if (status[j] == UserStatus::accused) out.push_back(j);
        return out;
    }
};

/// Consumes one answered trigger.
///
/// Users with W_j >= b, or S_j > Z_t when the auxiliary stop is enabled, are
/// accused. Otherwise, if W_j < a for every user, all are exonerated. Either
/// outcome fixes t* = t.
inline void sprt_step(SprtState& state, const Codebook& cb, const ScoreDistributions& dists,
                      const SprtConfig& config, std::size_t position, Symbol observed) {
    if (position >= cb.positions()) throw IndexError("sprt_step: position out of range");
    if (observed >= static_cast<Symbol>(cb.alphabet())) throw IndexError("sprt_step: symbol out of alphabet");
    if (dists.log_ratio.empty()) throw DomainError("sprt_step: score distributions are empty");
    if (state.w.size() != cb.users() || state.consumed.size() != cb.positions())
        throw DomainError("sprt_step: state does not match the codebook");
    if (state.decided()) throw std::logic_error("sprt_step: a decision was already reached");
    if (state.consumed[position]) throw DuplicatePositionError(position);

    state.consumed[position] = true;
    ++state.t;

    const auto [u1, u0] = score_functions(cb.bias.at(position, observed));
    const double inv_ln_base = 1.0 / std::log(config.log_base);
    const double inc1 = dists.natural_log_ratio(u1) * inv_ln_base;
    const double inc0 = dists.natural_log_ratio(u0) * inv_ln_base;
    const double z = config.use_z_stop ? z_threshold(state.t, config.eps1, cb.params.tau) : 0.0;

    const std::size_t n = cb.users();
    bool any_accused = false;
    bool all_below = true;
    for (std::size_t j = 0; j < n; ++j) {
        if (state.status[j] != UserStatus::active) continue;
        const bool match = cb.fingerprints.at(j, position) == observed;
        state.w[j] += match ? inc1 : inc0;
        state.s[j] += match ? u1 : u0;
        if (state.w[j] >= config.b || (config.use_z_stop && state.s[j] > z)) {
            state.status[j] = UserStatus::accused;
            any_accused = true;
        }
        if (!(state.w[j] < config.a)) all_below = false;
    }
    if (any_accused) {
        state.t_star = state.t;
        return;
    }
    if (all_below) {
        std::fill(state.status.begin(), state.status.end(), UserStatus::exonerated);
        state.t_star = state.t;
    }
}

struct AccusationResult {
    Decision decision = Decision::undecided;
    std::vector<std::size_t> accused;
    std::optional<std::size_t> t_star;
    SprtState state;
};

/// Queries positions in `query_order` until a decision or the order runs out.
template <typename Oracle>
    requires std::invocable<const Oracle&, std::size_t>
AccusationResult sequential_accuse(const Codebook& cb, const ScoreDistributions& dists,
                                   const SprtConfig& config, const Oracle& oracle,
                                   std::span<const std::size_t> query_order) {
    config.validate();
    AccusationResult res;
    res.state = SprtState(cb.users(), cb.positions());
    for (std::size_t position : query_order) {
        Symbol y;
        try {
            y = static_cast<Symbol>(oracle(position));
        } catch (const std::exception& e) {
            throw OracleError(res.state.t, e.what());
        }
        sprt_step(res.state, cb, dists, config, position, y);
        if (res.state.decided()) break;
    }
    res.t_star = res.state.t_star;
    if (!res.state.decided()) {
        res.decision = Decision::undecided;
    } else {
        res.accused = res.state.accused();
        res.decision = res.accused.empty() ? Decision::exonerated : Decision::accused;
    }
    return res;
}

struct TranscriptEntry {
    std::size_t position;
    Symbol symbol;
};

/// Answers observed from a suspect model, in query order.
struct AttackTranscript {
    std::vector<TranscriptEntry> entries;

    void validate(std::size_t m, int q) const {
        std::vector<bool> seen(m, false);
        for (const auto& e : entries) {
            if (e.position >= m) throw IndexError("transcript position " + std::to_string(e.position) + " out of range");
            if (e.symbol >= static_cast<Symbol>(q)) throw IndexError("transcript symbol out of alphabet");
            if (seen[e.position]) throw DuplicatePositionError(e.position);
            seen[e.position] = true;
        }
    }

    std::vector<std::size_t> order() const {
        std::vector<std::size_t> o;
        o.reserve(entries.size());
        for (const auto& e : entries) o.push_back(e.position);
        return o;
    }
};

/// Reads "position,symbol" rows. Blank lines, '#' comments and a
/// "position,symbol" header are skipped.
inline AttackTranscript parse_transcript_csv(std::istream& in) {
    AttackTranscript tr;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("position", 0) == 0) continue;
        std::istringstream row(line);
        long long pos = -1, sym = -1;
        char comma = 0;
        if (!(row >> pos >> comma >> sym) || comma != ',' || pos < 0 || sym < 0)
            throw MalformedFileError("transcript line " + std::to_string(lineno) + ": expected 'position,symbol'");
        tr.entries.push_back({static_cast<std::size_t>(pos), static_cast<Symbol>(sym)});
    }
    return tr;
}

/// Serves a transcript as an oracle; unknown positions throw.
class TranscriptOracle {
public:
    explicit TranscriptOracle(const AttackTranscript& tr) {
        for (const auto& e : tr.entries) answers_.emplace(e.position, e.symbol);
    }
    Symbol operator()(std::size_t position) const {
        auto it = answers_.find(position);
        if (it == answers_.end())
            throw IndexError("no answer recorded for position " + std::to_string(position));
        return it->second;
    }

private:
    std::unordered_map<std::size_t, Symbol> answers_;
};

}  // namespace tardos
