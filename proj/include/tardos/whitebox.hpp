#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tardos/errors.hpp"
#include "tardos/random.hpp"

namespace tardos::whitebox {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr int kEnsembleFormatVersion = 1;

struct WhiteboxParams {
    std::size_t l = 4096;       // flattened layer length
    std::size_t p_dim = 256;    // user basis dimension
    std::size_t n_users = 100;
    /// Starting value of the embedding strength; <= 0 picks sqrt(l * p_dim) * RMS(w0).
    double embed_strength = 0.0;
    /// Per-user embedding noise as a fraction of RMS(w0).
    double noise_sigma = 0.05;
    /// Doubling stops once every user's own projection reaches this value.
    /// At 0.95 the shared w0 still holds ~10% of the projected energy and
    /// colluder projections fall well short of 1/sqrt(c).
    double target_projection = 0.995;
    /// Informational only; no training loop consumes it.
    double lambda = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (p_dim < 1) throw DomainError("whitebox: p_dim must be >= 1");
        if (n_users < 1) throw DomainError("whitebox: n_users must be >= 1");
        if (p_dim < n_users) throw DomainError("whitebox: p_dim must be >= n_users (one basis vector per user)");
        if (l < p_dim) throw DomainError("whitebox: l must be >= p_dim");
        if (!(noise_sigma >= 0.0)) throw DomainError("whitebox: noise_sigma must be >= 0");
        if (!(target_projection > 0.0 && target_projection < 1.0))
            throw DomainError("whitebox: target_projection must lie in (0, 1)");
    }
};

inline MatrixXd standard_normal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> n01;
    MatrixXd m(rows, cols);
    // column-major fill order is part of the stream contract
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = n01(rng);
    return m;
}

inline VectorXd standard_normal_vector(std::size_t n, Rng& rng) {
    std::normal_distribution<double> n01;
    VectorXd v(n);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = n01(rng);
    return v;
}

/// p_dim orthonormal columns, from the QR factorization of a Gaussian matrix.
inline MatrixXd generate_basis(std::size_t p_dim, Rng& rng) {
    if (p_dim < 1) throw DomainError("generate_basis: p_dim must be >= 1");
    const auto n = static_cast<Eigen::Index>(p_dim);
    for (int attempt = 0; attempt < 8; ++attempt) {
        const MatrixXd g = standard_normal_matrix(p_dim, p_dim, rng);
        Eigen::HouseholderQR<MatrixXd> qr(g);
        const MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        const double scale = r.diagonal().cwiseAbs().maxCoeff();
        if (!(r.diagonal().cwiseAbs().minCoeff() > 1e-10 * scale)) continue;
        return qr.householderQ() * MatrixXd::Identity(n, n);
    }
    throw DomainError("generate_basis: Gaussian matrix was numerically singular 8 times");
}

/// r_j = (w^T D s_j) / ||w^T D||.
inline double projection(const VectorXd& w, const MatrixXd& d, const VectorXd& s) {
    const VectorXd v = d.transpose() * w;
    const double norm = v.norm();
    if (!(norm > 0.0)) throw DegenerateProjectionError("projection: ||w^T D|| is zero");
    return v.dot(s) / norm;
}

struct RegularizerValue {
    double value;       // E_R(w) = exp(-r_j)
    VectorXd gradient;  // dE_R / dw
};

/// E_R(w) = exp(-r_j(w)) and its gradient. With v = D^T w and n = ||v||,
/// dr/dw = D (s / n - (v.s) v / n^3).
inline RegularizerValue regularizer(const VectorXd& w, const MatrixXd& d, const VectorXd& s) {
    const VectorXd v = d.transpose() * w;
    const double n = v.norm();
    if (!(n > 0.0)) throw DegenerateProjectionError("regularizer: ||w^T D|| is zero");
    const double vs = v.dot(s);
    const double r = vs / n;
    const double e = std::exp(-r);
    const VectorXd dr = d * (s / n - (vs / (n * n * n)) * v);
    return {e, -e * dr};
}

struct WhiteboxEnsemble {
    WhiteboxParams params;
    MatrixXd d;        // l x p_dim secret projection
    MatrixXd basis;    // p_dim x p_dim, column j is user j's s_j
    VectorXd w0;       // shared base weights
    MatrixXd weights;  // l x n_users, column j is w_j
    double beta = 0.0; // tuned embedding strength

    VectorXd user_basis(std::size_t j) const { return basis.col(static_cast<Eigen::Index>(j)); }
    VectorXd user_weights(std::size_t j) const { return weights.col(static_cast<Eigen::Index>(j)); }
    std::size_t users() const noexcept { return params.n_users; }

    /// r_j for every user at once.
    std::vector<double> project_all(const VectorXd& w) const {
        const VectorXd v = d.transpose() * w;
        const double norm = v.norm();
        if (!(norm > 0.0)) throw DegenerateProjectionError("project_all: ||w^T D|| is zero");
        const VectorXd r = basis.leftCols(static_cast<Eigen::Index>(params.n_users)).transpose() * v / norm;
        return {r.data(), r.data() + r.size()};
    }
};

/// Closed-form surrogate of regularized training:
///
///     w_j = w0 + beta * D (D^T D)^-1 s_j + noise_sigma * RMS(w0) * n_j
///
/// D (D^T D)^-1 s_j is the minimum-norm direction with D^T(.) = s_j exactly;
/// (1/l) D s_j only approximates it (E[D^T D] = l I) and caps r_j near
/// 1/sqrt(1 + p/l).
///
/// beta starts at params.embed_strength (or sqrt(l p) RMS(w0)) and doubles
/// until min_j r_j(w_j) >= target_projection. Streams: "wb-d", "wb-basis",
/// "wb-w0", "wb-noise".
inline WhiteboxEnsemble embed_users(const WhiteboxParams& params) {
    params.validate();
    WhiteboxEnsemble e;
    e.params = params;
    Rng rd = make_rng(params.seed, "wb-d");
    e.d = standard_normal_matrix(params.l, params.p_dim, rd);
    Rng rb = make_rng(params.seed, "wb-basis");
    e.basis = generate_basis(params.p_dim, rb);
    Rng rw = make_rng(params.seed, "wb-w0");
    e.w0 = standard_normal_vector(params.l, rw);
    const double rms = std::sqrt(e.w0.squaredNorm() / static_cast<double>(params.l));

    const auto n = static_cast<Eigen::Index>(params.n_users);
    Rng rn = make_rng(params.seed, "wb-noise");
    MatrixXd noise(params.l, params.n_users);
    if (params.noise_sigma > 0.0) noise = params.noise_sigma * rms * standard_normal_matrix(params.l, params.n_users, rn);
    else noise.setZero();

    // D^T w_j = D^T w0 + beta * s_j + D^T noise_j, evaluated per beta cheaply.
    const MatrixXd gram = e.d.transpose() * e.d;
    const MatrixXd aligned_dir = e.d * gram.ldlt().solve(e.basis.leftCols(n));  // l x n
    const VectorXd base = e.d.transpose() * e.w0;
    const MatrixXd gram_part = e.d.transpose() * aligned_dir;  // p x n, ~ basis
    const MatrixXd noise_part = e.d.transpose() * noise;       // p x n

    auto min_projection = [&](double beta) {
        double worst = 1.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const VectorXd v = base + beta * gram_part.col(j) + noise_part.col(j);
            worst = std::min(worst, v.dot(e.basis.col(j)) / v.norm());
        }
        return worst;
    };

    double beta = params.embed_strength > 0.0
                      ? params.embed_strength
                      : std::sqrt(static_cast<double>(params.l * params.p_dim)) * rms;
    int doublings = 0;
    while (min_projection(beta) < params.target_projection) {
        if (++doublings > 64) throw TuningError("embed_users: target projection unreachable within 2^64 x beta");
        beta *= 2.0;
    }
    e.beta = beta;
    e.weights = (e.w0.replicate(1, n) + beta * aligned_dir + noise).eval();
    return e;
}

inline VectorXd collude_average(const WhiteboxEnsemble& e, std::span<const std::size_t> colluders) {
    if (colluders.empty()) throw DomainError("collude_average: colluder set is empty");
    VectorXd sum = VectorXd::Zero(static_cast<Eigen::Index>(e.params.l));
    for (std::size_t j : colluders) {
        if (j >= e.users()) throw IndexError("collude_average: user index out of range");
        sum += e.weights.col(static_cast<Eigen::Index>(j));
    }
    return sum / static_cast<double>(colluders.size());
}

/// Fine-tuning proxy: adds i.i.d. N(0, (sigma_ft * RMS(w))^2) noise.
inline VectorXd attack_finetune(const VectorXd& w, double sigma_ft, Rng& rng) {
    if (!(sigma_ft >= 0.0)) throw DomainError("attack_finetune: sigma_ft must be >= 0");
    if (sigma_ft == 0.0) return w;
    const double rms = std::sqrt(w.squaredNorm() / static_cast<double>(w.size()));
    return w + sigma_ft * rms * standard_normal_vector(static_cast<std::size_t>(w.size()), rng);
}

enum class PruneMode { smallest_magnitude, random };

/// Zeroes floor(fraction * l) coordinates.
inline VectorXd attack_prune(const VectorXd& w, double fraction, PruneMode mode, Rng& rng) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw DomainError("attack_prune: fraction must lie in [0, 1)");
    const auto l = static_cast<std::size_t>(w.size());
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(l)));
    if (k == 0) return w;
    std::vector<std::size_t> idx;
    if (mode == PruneMode::smallest_magnitude) {
        idx.resize(l);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                         [&](std::size_t a, std::size_t b) {
                             const double fa = std::abs(w(static_cast<Eigen::Index>(a)));
                             const double fb = std::abs(w(static_cast<Eigen::Index>(b)));
                             return fa < fb || (fa == fb && a < b);
                         });
        idx.resize(k);
    } else {
        idx = sample_without_replacement(rng, l, k);
    }
    VectorXd out = w;
    for (std::size_t i : idx) out(static_cast<Eigen::Index>(i)) = 0.0;
    return out;
}

struct UserProjection {
    std::size_t user;
    double r;
};

/// Users whose projection exceeds `threshold`, highest first.
inline std::vector<UserProjection> accuse_whitebox(const WhiteboxEnsemble& e, const VectorXd& suspect,
                                                   double threshold) {
    const auto r = e.project_all(suspect);
    std::vector<UserProjection> out;
    for (std::size_t j = 0; j < r.size(); ++j)
        if (r[j] > threshold) out.push_back({j, r[j]});
    std::sort(out.begin(), out.end(), [](const UserProjection& a, const UserProjection& b) {
        return a.r > b.r || (a.r == b.r && a.user < b.user);
    });
    return out;
}

/// Midpoint between the weakest expected colluder projection 1/sqrt(c0) and
/// the innocent 3-sigma band 3/sqrt(p_dim).
inline double default_threshold(std::size_t c0, std::size_t p_dim) {
    return 0.5 * (1.0 / std::sqrt(static_cast<double>(c0)) + 3.0 / std::sqrt(static_cast<double>(p_dim)));
}

/// Header only; vectors are regenerated from the seed on load.
inline nlohmann::json ensemble_to_json(const WhiteboxEnsemble& e) {
    const auto& p = e.params;
    return {{"format_version", kEnsembleFormatVersion},
            {"l", p.l},
            {"p_dim", p.p_dim},
            {"n_users", p.n_users},
            {"embed_strength", p.embed_strength},
            {"noise_sigma", p.noise_sigma},
            {"target_projection", p.target_projection},
            {"lambda", p.lambda},
            {"seed", p.seed},
            {"tuned_beta", e.beta}};
}

inline WhiteboxEnsemble ensemble_from_json(const nlohmann::json& j) {
    WhiteboxParams p;
    try {
        const auto version = j.at("format_version").get<long long>();
        if (version != kEnsembleFormatVersion) throw VersionMismatchError(version, kEnsembleFormatVersion);
        p.l = j.at("l").get<std::size_t>();
        p.p_dim = j.at("p_dim").get<std::size_t>();
        p.n_users = j.at("n_users").get<std::size_t>();
        p.embed_strength = j.at("embed_strength").get<double>();
        p.noise_sigma = j.at("noise_sigma").get<double>();
        p.target_projection = j.at("target_projection").get<double>();
        p.lambda = j.value("lambda", 1.0);
        p.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& ex) {
        throw MalformedFileError(std::string("ensemble header: ") + ex.what());
    }
    auto e = embed_users(p);
    if (j.contains("tuned_beta") && j.at("tuned_beta").get<double>() != e.beta)
        throw MalformedFileError("ensemble header: regenerated beta does not match tuned_beta");
    return e;
}

/// Debug dump of D, the basis and all user weights as CSV matrices.
inline void dump_vectors(const WhiteboxEnsemble& e, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const Eigen::IOFormat csv(Eigen::FullPrecision, Eigen::DontAlignCols, ",", "\n");
    auto write = [&](const char* name, const MatrixXd& m) {
        std::ofstream out(dir / name);
        out << m.format(csv) << '\n';
    };
    write("D.csv", e.d);
    write("basis.csv", e.basis);
    write("weights.csv", e.weights);
}

}  // namespace tardos::whitebox
