#pragma once

#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tardos/harness/config.hpp"
#include "tardos/harness/experiment.hpp"

namespace tardos::harness {

inline void write_provenance_header(std::ostream& os, const Provenance& p) {
    os << "# config_hash=" << p.config_hash << '\n'
       << "# seed=" << p.seed << '\n'
       << "# tool_version=" << p.tool_version << '\n';
}

inline std::string join_indices(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(v[i]);
    }
    return out;
}

/// File-name-safe form of a run label: "kappa=0.1/c2/prune" -> "kappa-0.1_c2_prune".
inline std::string slug(const std::string& label) {
    std::string s;
    for (char ch : label) {
        if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' || ch == '_') s += ch;
        else if (ch == '=') s += '-';
        else s += '_';
    }
    return s.empty() ? "run" : s;
}

inline void write_trials_csv(std::ostream& os, const Provenance& p, const RunResult& run) {
    write_provenance_header(os, p);
    os << "# run=" << run.label << '\n' << "# channel=" << run.channel_descriptor << '\n';
    os << "trial,decision,t_star,accused,colluders,max_w,max_s\n";
    os.precision(17);
    for (const auto& r : run.records)
        os << r.trial << ',' << to_string(r.decision) << ',' << r.t_star << ',' << join_indices(r.accused) << ','
           << join_indices(r.colluders) << ',' << r.max_w << ',' << r.max_s << '\n';
}

inline void write_histogram_csv(std::ostream& os, const Provenance& p, const RunResult& run) {
    write_provenance_header(os, p);
    os << "# run=" << run.label << '\n';
    os << "t_star,count\n";
    for (const auto& [t, count] : run.aggregates.t_star_hist) os << t << ',' << count << '\n';
}

inline void write_table_csv(std::ostream& os, const Provenance& p, const Table& t) {
    write_provenance_header(os, p);
    for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << '\n';
    }
}

inline nlohmann::json result_to_json(const ExperimentResult& res, const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["provenance"] = {{"config_hash", res.provenance.config_hash},
                       {"seed", res.provenance.seed},
                       {"tool_version", res.provenance.tool_version}};
    j["experiment"] = res.experiment;
    j["config"] = config_to_json(cfg);
    j["report"] = res.report;
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& run : res.runs)
        runs.push_back({{"label", run.label},
                        {"file_stem", slug(run.label)},
                        {"channel", run.channel_descriptor},
                        {"distributions", run.distributions_descriptor},
                        {"n_users", run.n_users},
                        {"aggregates", aggregates_to_json(run.aggregates)}});
    j["runs"] = runs;
    return j;
}

/// Writes <experiment>.json plus per-run trial and histogram CSVs and any
/// tables into `dir`. Returns the paths written, in a fixed order.
inline std::vector<std::filesystem::path> write_result(const ExperimentResult& res, const ExperimentConfig& cfg,
                                                       const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto open = [&](const std::filesystem::path& path) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
        written.push_back(path);
        return out;
    };
    {
        auto out = open(dir / (res.experiment + ".json"));
        out << result_to_json(res, cfg).dump(2) << '\n';
    }
    for (const auto& run : res.runs) {
        const auto stem = slug(run.label);
        {
            auto out = open(dir / (stem + ".trials.csv"));
            write_trials_csv(out, res.provenance, run);
        }
        auto out = open(dir / (stem + ".tstar_hist.csv"));
        write_histogram_csv(out, res.provenance, run);
    }
    for (const auto& t : res.tables) {
        auto out = open(dir / (t.name + ".csv"));
        write_table_csv(out, res.provenance, t);
    }
    return written;
}

/// One line per run, for the terminal.
inline void write_summary(std::ostream& os, const ExperimentResult& res, bool csv) {
    if (!csv) {
        nlohmann::json j;
        j["experiment"] = res.experiment;
        j["config_hash"] = res.provenance.config_hash;
        for (const auto& run : res.runs)
            j["runs"][run.label] = {{"mean_t_star", run.aggregates.mean_t_star},
                                    {"median_t_star", run.aggregates.median_t_star},
                                    {"false_negatives", run.aggregates.false_negatives},
                                    {"per_user_fpr", run.aggregates.per_user_fpr},
                                    {"undecided", run.aggregates.undecided}};
        j["report"] = res.report;
        os << j.dump(2) << '\n';
        return;
    }
    os << "run,trials,mean_t_star,median_t_star,false_negatives,per_user_fpr,model_fpr,undecided\n";
    os.precision(10);
    for (const auto& run : res.runs) {
        const auto& a = run.aggregates;
        os << run.label << ',' << a.trials << ',' << a.mean_t_star << ',' << a.median_t_star << ','
           << a.false_negatives << ',' << a.per_user_fpr << ',' << a.model_fpr << ',' << a.undecided << '\n';
    }
    for (const auto& t : res.tables) {
        for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
        os << '\n';
        for (const auto& row : t.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
            os << '\n';
        }
    }
}

}  // namespace tardos::harness
