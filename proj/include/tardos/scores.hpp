#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include "tardos/codebook.hpp"
#include "tardos/errors.hpp"

namespace tardos {

struct ScorePair {
    double u1;  // observed symbol matches the user's symbol
    double u0;  // it does not
};

/// U1(p) = sqrt((1-p)/p), U0(p) = -sqrt(p/(1-p)); U1 * U0 = -1.
inline ScorePair score_functions(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("score_functions: p must lie in (0, 1)");
    const double ratio = (1.0 - p) / p;
    return {std::sqrt(ratio), -std::sqrt(1.0 / ratio)};
}

/// Per-position accusation score of user j. Both branches use the bias of
/// the observed symbol y, not of the user's own symbol.
inline double position_score(const Codebook& cb, std::size_t user, std::size_t position,
                             Symbol observed) {
    if (user >= cb.users()) throw IndexError("position_score: user index out of range");
    if (position >= cb.positions()) throw IndexError("position_score: position out of range");
    if (observed >= static_cast<Symbol>(cb.alphabet()))
        throw IndexError("position_score: observed symbol out of alphabet");
    const auto [u1, u0] = score_functions(cb.bias.at(position, observed));
    return cb.fingerprints.at(user, position) == observed ? u1 : u0;
}

/// Smallest Z with eps1 = exp(-(Z^2 / 2t) / (1 + Z / (3 t sqrt(tau)))).
///
/// Solving the quadratic Z^2 - (2L/(3 sqrt(tau))) Z - 2 L t = 0 for
/// L = ln(1/eps1) gives Z = L/(3 sqrt(tau)) + sqrt(L^2/(9 tau) + 2 L t).
inline double z_threshold(std::size_t t, double eps1, double tau) {
    if (t < 1) throw DomainError("z_threshold: t must be >= 1");
    if (!(eps1 > 0.0 && eps1 < 1.0)) throw DomainError("z_threshold: eps1 must lie in (0, 1)");
    if (!(tau > 0.0 && tau < 1.0)) throw DomainError("z_threshold: tau must lie in (0, 1)");
    const double L = -std::log(eps1);
    const double a = L / (3.0 * std::sqrt(tau));
    return a + std::sqrt(a * a + 2.0 * L * static_cast<double>(t));
}

/// exp(-(Z^2 / 2t) / (1 + Z / (3 t sqrt(tau)))), the bound z_threshold inverts.
inline double z_bound(double z, std::size_t t, double tau) {
    const double td = static_cast<double>(t);
    return std::exp(-(z * z / (2.0 * td)) / (1.0 + z / (3.0 * td * std::sqrt(tau))));
}

/// FPR of the independent-trigger baseline after t queries with t_correct
/// right answers: C(t, t') p^t' (1-p)^(t-t').
inline double baseline_independent_fpr(std::size_t t, std::size_t t_correct, double p_random) {
    if (t_correct > t) throw DomainError("baseline_independent_fpr: t_correct > t");
    if (!(p_random > 0.0 && p_random < 1.0))
        throw DomainError("baseline_independent_fpr: p_random must lie in (0, 1)");
    const double log_binom = std::lgamma(static_cast<double>(t) + 1.0) -
                             std::lgamma(static_cast<double>(t_correct) + 1.0) -
                             std::lgamma(static_cast<double>(t - t_correct) + 1.0);
    // rounding the coefficient keeps small cases exact
    const double binom = std::round(std::exp(log_binom));
    const double tail = std::pow(p_random, static_cast<double>(t_correct)) *
                        std::pow(1.0 - p_random, static_cast<double>(t - t_correct));
    if (binom < 1e15) return binom * tail;
    return std::exp(log_binom) * tail;
}

/// Fewest all-correct queries whose baseline FPR reaches eps1. Comparison
/// allows 1e-9 relative slack so 0.1^6 counts as 1e-6.
inline std::size_t baseline_min_queries(double eps1, double p_random) {
    if (!(eps1 > 0.0 && eps1 < 1.0)) throw DomainError("baseline_min_queries: eps1 must lie in (0, 1)");
    if (!(p_random > 0.0 && p_random < 1.0))
        throw DomainError("baseline_min_queries: p_random must lie in (0, 1)");
    for (std::size_t t = 1;; ++t)
        if (baseline_independent_fpr(t, t, p_random) <= eps1 * (1.0 + 1e-9)) return t;
}

}  // namespace tardos
