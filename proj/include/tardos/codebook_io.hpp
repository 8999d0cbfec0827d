#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "tardos/codebook.hpp"
#include "tardos/errors.hpp"

namespace tardos {

inline nlohmann::json codebook_to_json(const Codebook& cb) {
    nlohmann::json j;
    j["format_version"] = cb.format_version;
    j["q"] = cb.params.q;
    j["m"] = cb.params.m;
    j["n_users"] = cb.users();
    j["kappa"] = cb.params.kappa;
    j["tau"] = cb.params.tau;
    j["c0"] = cb.params.c0;
    j["seed"] = cb.params.seed;
    auto& bias = j["bias"] = nlohmann::json::array();
    for (std::size_t i = 0; i < cb.params.m; ++i) {
        auto r = cb.bias.row(i);
        bias.push_back(std::vector<double>(r.begin(), r.end()));
    }
    auto& codes = j["fingerprints"] = nlohmann::json::array();
    for (std::size_t u = 0; u < cb.users(); ++u) {
        auto r = cb.fingerprints.row(u);
        codes.push_back(std::vector<Symbol>(r.begin(), r.end()));
    }
    return j;
}

namespace detail {

template <typename T>
T required(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw MalformedFileError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw MalformedFileError(std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace detail

/// Parses and re-validates a codebook document.
inline Codebook codebook_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw MalformedFileError("codebook document is not a JSON object");
    const auto version = detail::required<long long>(j, "format_version");
    if (version != kCodebookFormatVersion) throw VersionMismatchError(version, kCodebookFormatVersion);

    Codebook cb;
    cb.format_version = static_cast<int>(version);
    cb.params.q = detail::required<int>(j, "q");
    cb.params.m = detail::required<std::size_t>(j, "m");
    cb.params.kappa = detail::required<double>(j, "kappa");
    cb.params.tau = detail::required<double>(j, "tau");
    cb.params.c0 = detail::required<int>(j, "c0");
    cb.params.seed = detail::required<std::uint64_t>(j, "seed");
    const auto n_users = detail::required<std::size_t>(j, "n_users");
    if (cb.params.q < 2) throw MalformedFileError("q must be >= 2");

    const auto bias = detail::required<std::vector<std::vector<double>>>(j, "bias");
    if (bias.size() != cb.params.m)
        throw MalformedFileError("bias has " + std::to_string(bias.size()) + " rows, m = " +
                                 std::to_string(cb.params.m));
    cb.bias = BiasMatrix(cb.params.m, cb.params.q);
    for (std::size_t i = 0; i < bias.size(); ++i) {
        if (bias[i].size() != static_cast<std::size_t>(cb.params.q))
            throw MalformedFileError("bias row " + std::to_string(i) + " does not have q entries");
        std::copy(bias[i].begin(), bias[i].end(), cb.bias.row(i).begin());
    }

    const auto codes = detail::required<std::vector<std::vector<long long>>>(j, "fingerprints");
    if (codes.size() != n_users)
        throw MalformedFileError("fingerprints has " + std::to_string(codes.size()) +
                                 " rows, n_users = " + std::to_string(n_users));
    cb.fingerprints = FingerprintMatrix(n_users, cb.params.m);
    for (std::size_t u = 0; u < n_users; ++u) {
        if (codes[u].size() != cb.params.m)
            throw MalformedFileError("fingerprint " + std::to_string(u) + " does not have m symbols");
        for (std::size_t i = 0; i < cb.params.m; ++i) {
            const long long s = codes[u][i];
            if (s < 0 || s >= cb.params.q)
                throw MalformedFileError("fingerprint symbol out of alphabet at user " +
                                         std::to_string(u) + ", position " + std::to_string(i));
            cb.fingerprints.at(u, i) = static_cast<Symbol>(s);
        }
    }
    cb.validate();
    return cb;
}

inline void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << codebook_to_json(cb).dump() << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline Codebook load_codebook(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedFileError(path.string() + ": " + e.what());
    }
    return codebook_from_json(j);
}

}  // namespace tardos
