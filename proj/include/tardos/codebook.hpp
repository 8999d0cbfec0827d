#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tardos/errors.hpp"
#include "tardos/random.hpp"

namespace tardos {

using Symbol = std::uint32_t;

inline constexpr int kCodebookFormatVersion = 1;

/// Cutoff optimized for the default concentration: tau = c0^(-2 / (1 + kappa)).
inline double derive_tau(int c0, double kappa) {
    if (c0 < 2) throw DomainError("derive_tau: c0 must be >= 2");
    if (!(kappa > 0.0) || !std::isfinite(kappa))
        throw DomainError("derive_tau: kappa must be positive");
    return std::pow(static_cast<double>(c0), -2.0 / (1.0 + kappa));
}

struct TardosParams {
    int q = 10;
    std::size_t m = 200;
    double kappa = 0.1;
    int c0 = 6;
    double tau = 0.0;
    std::uint64_t seed = 0;

    double lower() const noexcept { return tau; }
    double upper() const noexcept { return 1.0 - (q - 1) * tau; }

    void validate() const {
        if (q < 2) throw DomainError("q must be >= 2");
        if (m < 1) throw DomainError("m must be >= 1");
        if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("kappa must be positive");
        if (c0 < 2) throw DomainError("c0 must be >= 2");
        if (!(tau > 0.0) || !(tau < 1.0 / q))
            throw DomainError("tau must lie in (0, 1/q); got " + std::to_string(tau) +
                              " for q = " + std::to_string(q));
    }

    friend bool operator==(const TardosParams&, const TardosParams&) = default;
};

/// Builds validated parameters; an absent tau is derived from c0 and kappa.
inline TardosParams make_params(int q, std::size_t m, double kappa, int c0,
                                std::optional<double> tau, std::uint64_t seed) {
    TardosParams p{q, m, kappa, c0, 0.0, seed};
    p.tau = tau ? *tau : derive_tau(c0, kappa);
    p.validate();
    return p;
}

/// m rows of q symbol probabilities, row-major.
class BiasMatrix {
public:
    BiasMatrix() = default;
    BiasMatrix(std::size_t m, int q) : m_(m), q_(q), data_(m * static_cast<std::size_t>(q)) {}

    std::size_t positions() const noexcept { return m_; }
    int alphabet() const noexcept { return q_; }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * q_, static_cast<std::size_t>(q_)};
    }
    std::span<double> row(std::size_t i) {
        return {data_.data() + i * q_, static_cast<std::size_t>(q_)};
    }
    double at(std::size_t i, Symbol a) const { return data_[i * q_ + a]; }

    friend bool operator==(const BiasMatrix&, const BiasMatrix&) = default;

private:
    std::size_t m_ = 0;
    int q_ = 0;
    std::vector<double> data_;
};

/// n_users rows of m symbols, row-major.
class FingerprintMatrix {
public:
    FingerprintMatrix() = default;
    FingerprintMatrix(std::size_t n_users, std::size_t m)
        : n_(n_users), m_(m), data_(n_users * m) {}

    std::size_t users() const noexcept { return n_; }
    std::size_t positions() const noexcept { return m_; }

    std::span<const Symbol> row(std::size_t j) const { return {data_.data() + j * m_, m_}; }
    std::span<Symbol> row(std::size_t j) { return {data_.data() + j * m_, m_}; }
    Symbol at(std::size_t j, std::size_t i) const { return data_[j * m_ + i]; }
    Symbol& at(std::size_t j, std::size_t i) { return data_[j * m_ + i]; }

    friend bool operator==(const FingerprintMatrix&, const FingerprintMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::size_t m_ = 0;
    std::vector<Symbol> data_;
};

/// Checks one bias row; returns an empty string when valid, else the violation.
inline std::string check_bias_row(std::span<const double> row, double tau, int q) {
    const double lo = tau;
    const double hi = 1.0 - (q - 1) * tau;
    double sum = 0.0;
    for (std::size_t a = 0; a < row.size(); ++a) {
        const double v = row[a];
        if (!std::isfinite(v)) return "entry " + std::to_string(a) + " is not finite";
        if (v < lo || v > hi)
            return "entry " + std::to_string(a) + " = " + std::to_string(v) +
                   " lies outside the cutoff interval";
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) return "sums to " + std::to_string(sum);
    return {};
}

struct Codebook {
    TardosParams params;
    BiasMatrix bias;
    FingerprintMatrix fingerprints;
    int format_version = kCodebookFormatVersion;

    std::size_t users() const noexcept { return fingerprints.users(); }
    std::size_t positions() const noexcept { return params.m; }
    int alphabet() const noexcept { return params.q; }

    /// Throws MalformedFileError naming the first violated invariant.
    void validate() const {
        try {
            params.validate();
        } catch (const DomainError& e) {
            throw MalformedFileError(std::string("params: ") + e.what());
        }
        if (bias.positions() != params.m || bias.alphabet() != params.q)
            throw MalformedFileError("bias dimensions disagree with (m, q)");
        if (fingerprints.positions() != params.m)
            throw MalformedFileError("fingerprint length disagrees with m");
        if (fingerprints.users() < 1) throw MalformedFileError("codebook has no users");
        for (std::size_t i = 0; i < params.m; ++i) {
            auto why = check_bias_row(bias.row(i), params.tau, params.q);
            if (!why.empty())
                throw MalformedFileError("bias row " + std::to_string(i) + " " + why);
        }
        for (std::size_t j = 0; j < fingerprints.users(); ++j)
            for (std::size_t i = 0; i < params.m; ++i)
                if (fingerprints.at(j, i) >= static_cast<Symbol>(params.q))
                    throw MalformedFileError("fingerprint symbol out of alphabet at user " +
                                             std::to_string(j) + ", position " +
                                             std::to_string(i));
    }

    friend bool operator==(const Codebook&, const Codebook&) = default;
};

/// Exact sampler for the symmetric Dirichlet(kappa) restricted to
/// p_a in [tau, 1 - (q-1) tau].
///
/// Every component is written p = tau + s*u with s = 1 - q*tau and u on the
/// unit simplex, so the target becomes prod (tau + s*u_a)^(kappa-1) over u.
/// Two rejection envelopes are available:
///
///  - plain:   u ~ Dirichlet(kappa) on the unshifted simplex, accept iff every
///             component falls in the cutoff interval;
///  - shifted: u ~ Dirichlet(g) with g <= 1, accept with probability
///             prod exp(h(u_a) - h_max), h(u) = (kappa-1) ln(tau+s u) + (1-g) ln u.
///
/// Both yield the exact conditional law; neither evaluates the normalizer.
/// The envelope with the best acceptance rate on a fixed pilot run is kept,
/// which matters for small kappa where the plain envelope essentially never
/// accepts (q = 10, kappa = 0.1, tau = 0.038).
class CutoffDirichletSampler {
public:
    static constexpr std::size_t kDefaultMaxAttempts = 1'000'000;

    CutoffDirichletSampler(int q, double kappa, double tau,
                           std::size_t max_attempts = kDefaultMaxAttempts)
        : q_(q), kappa_(kappa), tau_(tau), s_(1.0 - q * tau), max_attempts_(max_attempts) {
        if (q < 2) throw DomainError("sampler: q must be >= 2");
        if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("sampler: kappa must be positive");
        if (!(tau > 0.0) || !(tau < 1.0 / q))
            throw DomainError("sampler: cutoff interval [tau, 1-(q-1)tau] is empty");
        choose_envelope();
    }

    explicit CutoffDirichletSampler(const TardosParams& p,
                                    std::size_t max_attempts = kDefaultMaxAttempts)
        : CutoffDirichletSampler(p.q, p.kappa, p.tau, max_attempts) {}

    /// Proposal concentration of the shifted envelope, or nullopt for plain.
    std::optional<double> proposal_concentration() const {
        if (plain_) return std::nullopt;
        return gamma_;
    }
    double pilot_acceptance() const noexcept { return pilot_acceptance_; }

    void sample(Rng& rng, std::span<double> out) const {
        for (std::size_t attempt = 0; attempt < max_attempts_; ++attempt)
            if (try_once(rng, out, plain_, gamma_, log_bound_)) return;
        throw SamplingError("cutoff Dirichlet rejection exceeded " +
                            std::to_string(max_attempts_) +
                            " attempts; the (q, kappa, tau) combination is infeasible");
    }

    std::vector<double> sample(Rng& rng) const {
        std::vector<double> out(q_);
        sample(rng, out);
        return out;
    }

private:
    static constexpr std::uint64_t kPilotDraws = 4000;

    double h(double u, double g) const {
        double v = (kappa_ - 1.0) * std::log(tau_ + s_ * u);
        if (g != 1.0) v += (1.0 - g) * std::log(u);
        return v;
    }

    // max over u in (0, 1] of h(u; g)
    double h_max(double g) const {
        if (g == 1.0) return kappa_ < 1.0 ? (kappa_ - 1.0) * std::log(tau_) : h(1.0, g);
        double best = h(1.0, g);
        if (g > kappa_) {
            const double ustar = (1.0 - g) * tau_ / (s_ * (g - kappa_));
            if (ustar > 0.0 && ustar < 1.0) best = std::max(best, h(ustar, g));
        }
        return best;
    }

    // One proposal into `out`; reports its acceptance probability through `weight`.
    bool try_once(Rng& rng, std::span<double> out, bool plain, double g, double log_bound,
                  double* weight = nullptr) const {
        const double shape = plain ? kappa_ : g;
        std::gamma_distribution<double> gamma(shape, 1.0);
        double sum = 0.0;
        for (int a = 0; a < q_; ++a) {
            out[a] = gamma(rng);
            sum += out[a];
        }
        const double u_accept = uniform01(rng);
        if (!(sum > 0.0)) {
            if (weight) *weight = 0.0;
            return false;
        }
        const double hi = 1.0 - (q_ - 1) * tau_;
        if (plain) {
            bool inside = true;
            for (int a = 0; a < q_; ++a) {
                out[a] /= sum;
                if (out[a] < tau_ || out[a] > hi) inside = false;
            }
            if (weight) *weight = inside ? 1.0 : 0.0;
            return inside;
        }
        double logw = -q_ * log_bound;
        for (int a = 0; a < q_; ++a) {
            const double u = out[a] / sum;
            if (g != 1.0 && u <= 0.0) {
                if (weight) *weight = 0.0;
                return false;
            }
            logw += h(u, g);
            out[a] = std::min(tau_ + s_ * u, hi);
        }
        if (weight) *weight = std::exp(std::min(logw, 0.0));
        return std::log(u_accept) < logw;
    }

    void choose_envelope() {
        static constexpr std::array<double, 12> kGrid{0.05, 0.1, 0.15, 0.2, 0.3, 0.4,
                                                      0.5,  0.6, 0.7,  0.8, 0.9, 1.0};
        // Pilot stream depends only on (q, kappa, tau) so sampling from a
        // caller stream is unaffected by the selection.
        std::uint64_t key = static_cast<std::uint64_t>(q_);
        key = splitmix64(key ^ std::bit_cast<std::uint64_t>(kappa_));
        key = splitmix64(key ^ std::bit_cast<std::uint64_t>(tau_));
        std::vector<double> scratch(q_);

        auto pilot = [&](bool plain, double g, double bound) {
            Rng rng{derive_seed(key, "cutoff-dirichlet-pilot")};
            double acc = 0.0;
            for (std::uint64_t k = 0; k < kPilotDraws; ++k) {
                double w = 0.0;
                try_once(rng, scratch, plain, g, bound, &w);
                acc += w;
            }
            return acc / static_cast<double>(kPilotDraws);
        };

        plain_ = true;
        gamma_ = kappa_;
        log_bound_ = 0.0;
        pilot_acceptance_ = pilot(true, kappa_, 0.0);
        for (double g : kGrid) {
            const double bound = h_max(g);
            const double rate = pilot(false, g, bound);
            if (rate > pilot_acceptance_) {
                plain_ = false;
                gamma_ = g;
                log_bound_ = bound;
                pilot_acceptance_ = rate;
            }
        }
    }

    int q_;
    double kappa_;
    double tau_;
    double s_;
    std::size_t max_attempts_;
    bool plain_ = true;
    double gamma_ = 1.0;
    double log_bound_ = 0.0;
    double pilot_acceptance_ = 0.0;
};

/// One bias vector from the cutoff symmetric Dirichlet.
inline std::vector<double> sample_bias_vector(const TardosParams& params, Rng& rng) {
    params.validate();
    return CutoffDirichletSampler(params).sample(rng);
}

/// Draws m bias rows from stream ("bias", seed), then every user's symbols
/// position by position from stream ("fingerprints", seed).
inline Codebook generate_codebook(const TardosParams& params, std::size_t n_users) {
    params.validate();
    if (n_users < 1) throw DomainError("generate_codebook: n_users must be >= 1");

    Codebook cb;
    cb.params = params;
    cb.bias = BiasMatrix(params.m, params.q);
    cb.fingerprints = FingerprintMatrix(n_users, params.m);

    const CutoffDirichletSampler sampler(params);
    Rng bias_rng = make_rng(params.seed, "bias");
    for (std::size_t i = 0; i < params.m; ++i) sampler.sample(bias_rng, cb.bias.row(i));

    Rng code_rng = make_rng(params.seed, "fingerprints");
    for (std::size_t i = 0; i < params.m; ++i) {
        const auto row = cb.bias.row(i);
        for (std::size_t j = 0; j < n_users; ++j)
            cb.fingerprints.at(j, i) = static_cast<Symbol>(draw_categorical(code_rng, row));
    }
    return cb;
}

}  // namespace tardos
