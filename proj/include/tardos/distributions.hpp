#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tardos/channel.hpp"
#include "tardos/codebook.hpp"
#include "tardos/errors.hpp"
#include "tardos/parallel.hpp"
#include "tardos/random.hpp"
#include "tardos/scores.hpp"

namespace tardos {

inline constexpr std::size_t kScoreBins = 256;
inline constexpr double kScoreMargin = 0.05;

/// Fixed-width bins over [-(U1(tau) + margin), U1(tau) + margin], which
/// contains every score attainable under the cutoff.
class ScoreBinning {
public:
    ScoreBinning() = default;
    ScoreBinning(double lo, double hi, std::size_t bins)
        : lo_(lo), width_((hi - lo) / static_cast<double>(bins)), bins_(bins) {
        if (!(hi > lo) || bins == 0) throw DomainError("ScoreBinning: empty range");
    }

    static ScoreBinning for_cutoff(double tau, std::size_t bins = kScoreBins) {
        const double half = score_functions(tau).u1 + kScoreMargin;
        return ScoreBinning(-half, half, bins);
    }

    std::size_t bins() const noexcept { return bins_; }
    double lo() const noexcept { return lo_; }
    double width() const noexcept { return width_; }
    double edge(std::size_t k) const noexcept { return lo_ + width_ * static_cast<double>(k); }
    double center(std::size_t k) const noexcept { return lo_ + width_ * (static_cast<double>(k) + 0.5); }

    std::size_t bin_of(double score) const noexcept {
        const double x = std::floor((score - lo_) / width_);
        if (!(x > 0.0)) return 0;
        if (x >= static_cast<double>(bins_)) return bins_ - 1;
        return static_cast<std::size_t>(x);
    }

    std::vector<double> edges() const {
        std::vector<double> e(bins_ + 1);
        for (std::size_t k = 0; k <= bins_; ++k) e[k] = edge(k);
        return e;
    }

private:
    double lo_ = 0.0;
    double width_ = 1.0;
    std::size_t bins_ = 1;
};

struct SampleCounts {
    std::uint64_t col = 0;
    std::uint64_t inn = 0;
    friend bool operator==(const SampleCounts&, const SampleCounts&) = default;
};

/// Raw (unbinned) first and second moments of the pooled scores.
struct ScoreMoments {
    double col_mean = 0.0;
    double col_var = 0.0;
    double inn_mean = 0.0;
    double inn_var = 0.0;
};

/// Empirical per-position score laws for colluders and innocents.
struct ScoreDistributions {
    ScoreBinning binning;
    std::vector<double> p_col;
    std::vector<double> p_inn;
    double smoothing = 1.0;
    SampleCounts n_samples;
    std::string channel_descriptor;
    ScoreMoments moments;
    /// ln(p_col / p_inn) per bin; rebuilt by finalize().
    std::vector<double> log_ratio;

    void finalize() {
        if (p_col.size() != binning.bins() || p_inn.size() != binning.bins())
            throw DomainError("score distributions: mass vectors do not match the bins");
        log_ratio.resize(binning.bins());
        for (std::size_t k = 0; k < binning.bins(); ++k) log_ratio[k] = std::log(p_col[k] / p_inn[k]);
    }

    void validate() const {
        if (binning.bins() == 0 || p_col.empty()) throw DomainError("score distributions are empty");
        auto check = [&](const std::vector<double>& p, const char* which) {
            if (p.size() != binning.bins())
                throw MalformedFileError(std::string(which) + " does not have one mass per bin");
            double sum = 0.0;
            for (double v : p) {
                if (!(v > 0.0)) throw MalformedFileError(std::string(which) + " has a non-positive bin");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw MalformedFileError(std::string(which) + " sums to " + std::to_string(sum));
        };
        check(p_col, "p_col");
        check(p_inn, "p_inn");
    }

    double natural_log_ratio(double score) const { return log_ratio[binning.bin_of(score)]; }
};

/// Integer histograms; merging is exact and order free.
struct ScoreCounts {
    std::vector<std::uint64_t> col;
    std::vector<std::uint64_t> inn;
    double col_sum = 0, col_sq = 0, inn_sum = 0, inn_sq = 0;

    explicit ScoreCounts(std::size_t bins = 0) : col(bins, 0), inn(bins, 0) {}
};

inline ScoreDistributions normalize_counts(const ScoreBinning& binning, const ScoreCounts& counts,
                                           double smoothing, std::string descriptor) {
    ScoreDistributions d;
    d.binning = binning;
    d.smoothing = smoothing;
    d.channel_descriptor = std::move(descriptor);
    const auto bins = static_cast<double>(binning.bins());
    std::uint64_t nc = 0, ni = 0;
    for (auto c : counts.col) nc += c;
    for (auto c : counts.inn) ni += c;
    d.n_samples = {nc, ni};
    d.p_col.resize(binning.bins());
    d.p_inn.resize(binning.bins());
    for (std::size_t k = 0; k < binning.bins(); ++k) {
        d.p_col[k] = (static_cast<double>(counts.col[k]) + smoothing) / (static_cast<double>(nc) + smoothing * bins);
        d.p_inn[k] = (static_cast<double>(counts.inn[k]) + smoothing) / (static_cast<double>(ni) + smoothing * bins);
    }
    if (nc) {
        d.moments.col_mean = counts.col_sum / static_cast<double>(nc);
        d.moments.col_var = counts.col_sq / static_cast<double>(nc) - d.moments.col_mean * d.moments.col_mean;
    }
    if (ni) {
        d.moments.inn_mean = counts.inn_sum / static_cast<double>(ni);
        d.moments.inn_var = counts.inn_sq / static_cast<double>(ni) - d.moments.inn_mean * d.moments.inn_mean;
    }
    d.finalize();
    return d;
}

struct EstimationOptions {
    std::size_t collusion_size = 6;
    std::size_t trials = 200;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    double smoothing = 1.0;
};

/// Scores of one sampled collusion over all m positions, accumulated into `out`.
/// Trial k uses stream ("estimate", seed, k).
inline void accumulate_estimation_trial(const Codebook& cb, const ChannelModel& model,
                                        const EstimationOptions& opt, const ScoreBinning& binning,
                                        std::size_t trial, ScoreCounts& out) {
    Rng rng = make_rng(opt.seed, "estimate", trial);
    ChannelSpec spec;
    spec.colluders = sample_without_replacement(rng, cb.users(), opt.collusion_size);
    spec.model = model;
    std::vector<bool> guilty(cb.users(), false);
    for (auto j : spec.colluders) guilty[j] = true;

    for (std::size_t i = 0; i < cb.positions(); ++i) {
        const Symbol y = channel_output(spec, cb, i, rng);
        const auto [u1, u0] = score_functions(cb.bias.at(i, y));
        const std::size_t b1 = binning.bin_of(u1), b0 = binning.bin_of(u0);
        for (std::size_t j = 0; j < cb.users(); ++j) {
            const bool match = cb.fingerprints.at(j, i) == y;
            const double s = match ? u1 : u0;
            if (guilty[j]) {
                ++out.col[match ? b1 : b0];
                out.col_sum += s;
                out.col_sq += s * s;
            } else {
                ++out.inn[match ? b1 : b0];
                out.inn_sum += s;
                out.inn_sq += s * s;
            }
        }
    }
}

/// Pools per-position scores of colluders and innocents over `trials`
/// random collusions of size `collusion_size`. The result does not depend
/// on the number of threads: counts are integers and the floating moment
/// sums are added in trial order.
inline ScoreDistributions estimate_score_distributions(const Codebook& cb, const ChannelModel& model,
                                                       const EstimationOptions& opt) {
    if (opt.trials < 1) throw DomainError("estimation needs at least one trial");
    if (opt.collusion_size < 1) throw DomainError("collusion size must be >= 1");
    if (cb.users() <= opt.collusion_size)
        throw InsufficientUsersError("estimation needs more than " + std::to_string(opt.collusion_size) +
                                     " users, codebook has " + std::to_string(cb.users()));
    model.validate(cb.alphabet(), cb.positions());
    const auto binning = ScoreBinning::for_cutoff(cb.params.tau);

    std::vector<ScoreCounts> per_trial(opt.trials, ScoreCounts(0));
    parallel_for(opt.trials, opt.threads, [&](std::size_t k, std::size_t) {
        ScoreCounts c(binning.bins());
        accumulate_estimation_trial(cb, model, opt, binning, k, c);
        per_trial[k] = std::move(c);
    });

    ScoreCounts total(binning.bins());
    for (const auto& c : per_trial) {
        for (std::size_t b = 0; b < binning.bins(); ++b) {
            total.col[b] += c.col[b];
            total.inn[b] += c.inn[b];
        }
        total.col_sum += c.col_sum;
        total.col_sq += c.col_sq;
        total.inn_sum += c.inn_sum;
        total.inn_sq += c.inn_sq;
    }
    return normalize_counts(binning, total, opt.smoothing, model.descriptor(opt.collusion_size));
}

inline nlohmann::json distributions_to_json(const ScoreDistributions& d) {
    nlohmann::json j;
    j["bin_edges"] = d.binning.edges();
    j["p_col"] = d.p_col;
    j["p_inn"] = d.p_inn;
    j["smoothing"] = d.smoothing;
    j["n_samples"] = {{"col", d.n_samples.col}, {"inn", d.n_samples.inn}};
    j["channel_descriptor"] = d.channel_descriptor;
    j["moments"] = {{"col_mean", d.moments.col_mean},
                    {"col_var", d.moments.col_var},
                    {"inn_mean", d.moments.inn_mean},
                    {"inn_var", d.moments.inn_var}};
    return j;
}

inline ScoreDistributions distributions_from_json(const nlohmann::json& j) {
    ScoreDistributions d;
    try {
        const auto edges = j.at("bin_edges").get<std::vector<double>>();
        if (edges.size() < 2) throw MalformedFileError("bin_edges needs at least two edges");
        const double width = (edges.back() - edges.front()) / static_cast<double>(edges.size() - 1);
        for (std::size_t k = 1; k < edges.size(); ++k)
            if (std::abs((edges[k] - edges[k - 1]) - width) > 1e-9 * std::max(1.0, std::abs(width)))
                throw MalformedFileError("bin_edges are not equally spaced");
        d.binning = ScoreBinning(edges.front(), edges.back(), edges.size() - 1);
        d.p_col = j.at("p_col").get<std::vector<double>>();
        d.p_inn = j.at("p_inn").get<std::vector<double>>();
        d.smoothing = j.at("smoothing").get<double>();
        d.n_samples.col = j.at("n_samples").at("col").get<std::uint64_t>();
        d.n_samples.inn = j.at("n_samples").at("inn").get<std::uint64_t>();
        d.channel_descriptor = j.at("channel_descriptor").get<std::string>();
        if (j.contains("moments")) {
            const auto& m = j.at("moments");
            d.moments = {m.at("col_mean").get<double>(), m.at("col_var").get<double>(),
                         m.at("inn_mean").get<double>(), m.at("inn_var").get<double>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw MalformedFileError(std::string("distributions: ") + e.what());
    }
    d.validate();
    d.finalize();
    return d;
}

inline void save_distributions(const ScoreDistributions& d, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << distributions_to_json(d).dump() << '\n';
}

inline ScoreDistributions load_distributions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return distributions_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedFileError(path.string() + ": " + e.what());
    }
}

}  // namespace tardos
