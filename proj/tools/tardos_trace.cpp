// tardos-trace: command line front end for the tardos library.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tardos/tardos.hpp"

namespace fs = std::filesystem;
using namespace tardos;
using namespace tardos::harness;

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> threads;
    std::string format = "json";
    bool paper_scale = false;
};

ExperimentConfig resolve_config(const GlobalOptions& g, bool needs_whitebox = false) {
    nlohmann::json tree = g.config.empty() ? nlohmann::json::object() : read_config_tree(g.config);
    if (g.seed) tree["seed"] = *g.seed;
    if (g.paper_scale) tree["paper_scale"] = true;
    if (needs_whitebox && !tree.contains("whitebox")) tree["whitebox"] = nlohmann::json::object();
    auto cfg = config_from_json(tree);
    if (g.threads) cfg.threads = *g.threads;
    if (cfg.threads < 1) throw ConfigError("--threads must be >= 1");
    if (!g.out.empty()) cfg.output_dir = g.out;
    return cfg;
}

void emit_json_or_file(const nlohmann::json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open " + out + " for writing");
    f << j.dump(2) << '\n';
}

int run_experiment_command(const ExperimentResult& res, const ExperimentConfig& cfg, const GlobalOptions& g) {
    const auto files = write_result(res, cfg, cfg.output_dir);
    write_summary(std::cout, res, g.format == "csv");
    std::cerr << "wrote " << files.size() << " files to " << cfg.output_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tardos-code traitor tracing: codebooks, sequential accusation and experiments", "tardos-trace"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config, "TOML or JSON experiment config");
    app.add_option("--seed", g.seed, "master seed (overrides the config)");
    app.add_option("--out", g.out, "output directory (experiments) or file (gen-codebook, estimate-dists, accuse)");
    app.add_option("--threads", g.threads, "worker threads");
    app.add_option("--format", g.format, "stdout summary format")->check(CLI::IsMember({"json", "csv"}));
    app.add_flag("--paper-scale", g.paper_scale, "m=1000, 100 users, 500 trials and 500 estimation collusions");

    auto* gen = app.add_subcommand("gen-codebook", "generate a codebook and save it as JSON");

    auto* est = app.add_subcommand("estimate-dists", "estimate colluder/innocent score distributions");
    std::string est_codebook;
    est->add_option("--codebook", est_codebook, "codebook JSON (generated from the config if omitted)");

    auto* acc = app.add_subcommand("accuse", "run the sequential test on a recorded transcript");
    std::string acc_codebook, acc_dists, acc_transcript;
    acc->add_option("--codebook", acc_codebook, "codebook JSON")->required();
    acc->add_option("--dists", acc_dists, "distributions JSON")->required();
    acc->add_option("--transcript", acc_transcript, "CSV of position,symbol rows in query order")->required();

    auto* sim = app.add_subcommand("simulate", "seeded trials of the configured channel");
    auto* swk = app.add_subcommand("sweep-kappa", "t* against the bias concentration");
    std::vector<double> kappas;
    swk->add_option("--kappas", kappas, "kappa values (overrides sweep.kappas)");
    auto* skw = app.add_subcommand("trigger-skew", "t* against trigger skew");
    std::vector<double> skews;
    skw->add_option("--skew", skews, "skew rates (overrides the T_R/T_M/T_B presets)");
    auto* wbx = app.add_subcommand("whitebox", "projection distributions of the white-box scheme");
    bool dump_vectors = false;
    wbx->add_flag("--dump-vectors", dump_vectors, "also write D, the basis and the user weights as CSV");
    auto* mat = app.add_subcommand("ma-table", "measured marking-assumption violation rates");
    auto* bsl = app.add_subcommand("baseline-compare", "shared triggers against independent per-user triggers");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        std::optional<ExperimentConfig> cfg;
        try {
            cfg = resolve_config(g, wbx->parsed());
        } catch (const ConfigError& e) {
            std::cerr << "config error: " << e.what() << '\n';
            return 1;
        }

        if (gen->parsed()) {
            const auto cb = generate_codebook(cfg->tardos, cfg->n_users);
            const std::string out = g.out.empty() ? "codebook.json" : g.out;
            save_codebook(cb, out);
            std::cerr << "wrote " << out << '\n';
            return 0;
        }
        if (est->parsed()) {
            const auto cb = est_codebook.empty() ? generate_codebook(cfg->tardos, cfg->n_users) : load_codebook(est_codebook);
            ChannelModel model;
            model.strategy = cfg->channel.strategy;
            model.skew_rate = cfg->channel.skew_rate;
            if (model.skew_rate > 0.0)
                model.true_labels = random_true_labels(cb.positions(), cb.alphabet(), derive_seed(cfg->seed, "labels"));
            EstimationOptions opt;
            opt.collusion_size = cfg->estimation.collusion_size.value_or(cfg->channel.colluders.size());
            opt.trials = cfg->estimation.trials;
            opt.seed = derive_seed(cfg->seed, "estimation");
            opt.threads = cfg->threads;
            opt.smoothing = cfg->estimation.smoothing;
            const auto d = estimate_score_distributions(cb, harness::detail::estimation_model(*cfg, model), opt);
            const std::string out = g.out.empty() ? "dists.json" : g.out;
            save_distributions(d, out);
            std::cerr << "wrote " << out << " (" << d.channel_descriptor << ")\n";
            return 0;
        }
        if (acc->parsed()) {
            const auto cb = load_codebook(acc_codebook);
            const auto d = load_distributions(acc_dists);
            std::ifstream tin(acc_transcript);
            if (!tin) throw std::runtime_error("cannot open " + acc_transcript);
            const auto tr = parse_transcript_csv(tin);
            tr.validate(cb.positions(), cb.alphabet());
            const TranscriptOracle oracle(tr);
            const auto order = tr.order();
            const auto res = sequential_accuse(cb, d, cfg->sprt, oracle, order);
            if (g.format == "csv") {
                std::ostringstream os;
                os << "decision,t_star,accused\n"
                   << to_string(res.decision) << ',' << (res.t_star ? std::to_string(*res.t_star) : "") << ','
                   << join_indices(res.accused) << '\n';
                if (g.out.empty()) std::cout << os.str();
                else std::ofstream(g.out) << os.str();
                return 0;
            }
            nlohmann::json j = {{"decision", std::string(to_string(res.decision))},
                                {"accused", res.accused},
                                {"queries_consumed", res.state.t},
                                {"transcript_length", tr.entries.size()}};
            j["t_star"] = res.t_star ? nlohmann::json(*res.t_star) : nlohmann::json(nullptr);
            emit_json_or_file(j, g.out);
            return 0;
        }
        if (sim->parsed()) return run_experiment_command(run_experiment(*cfg), *cfg, g);
        if (swk->parsed()) return run_experiment_command(experiment_kappa_sweep(*cfg, kappas), *cfg, g);
        if (skw->parsed()) {
            std::vector<std::pair<std::string, double>> levels;
            for (double s : skews) levels.emplace_back("skew=" + harness::detail::fmt(s), s);
            return run_experiment_command(experiment_trigger_skew(*cfg, levels), *cfg, g);
        }
        if (wbx->parsed()) {
            const auto res = experiment_whitebox(*cfg);
            if (dump_vectors) whitebox::dump_vectors(whitebox::embed_users(cfg->whitebox->params), fs::path(cfg->output_dir) / "vectors");
            return run_experiment_command(res, *cfg, g);
        }
        if (mat->parsed()) return run_experiment_command(experiment_ma_table(*cfg), *cfg, g);
        if (bsl->parsed()) return run_experiment_command(experiment_baseline_comparison(*cfg), *cfg, g);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
