#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "tardos/distributions.hpp"

using namespace tardos;

namespace {

Codebook book(std::uint64_t seed = 21, std::size_t n = 40, std::size_t m = 200, double kappa = 0.1) {
    return generate_codebook(make_params(10, m, kappa, 6, derive_tau(6, 0.1), seed), n);
}

}  // namespace

TEST(Binning, CoversAttainableScores) {
    const double tau = derive_tau(6, 0.1);
    const auto b = ScoreBinning::for_cutoff(tau);
    EXPECT_EQ(b.bins(), kScoreBins);
    EXPECT_LT(b.lo(), oracle::u0(1.0 - 9 * tau));
    EXPECT_GT(b.edge(b.bins()), oracle::u1(tau));
    EXPECT_EQ(b.bin_of(-1e9), 0u);
    EXPECT_EQ(b.bin_of(1e9), b.bins() - 1);
    for (double s : {-3.0, -0.5, 0.0, 0.7, 4.9}) {
        const auto k = b.bin_of(s);
        EXPECT_LE(b.edge(k), s);
        EXPECT_GT(b.edge(k + 1), s);
    }
}

TEST(Estimation, SingleLeakerMassOnU1Only) {
    const auto cb = book();
    EstimationOptions opt;
    opt.collusion_size = 1;
    opt.trials = 30;
    opt.seed = 3;
    opt.smoothing = 1.0;
    const auto d = estimate_score_distributions(cb, ChannelModel{}, opt);
    // every unsmoothed colluder count sits in a bin of some U1(p) value
    std::vector<bool> u1_bin(d.binning.bins(), false);
    for (std::size_t i = 0; i < cb.positions(); ++i)
        for (double p : cb.bias.row(i)) u1_bin[d.binning.bin_of(oracle::u1(p))] = true;
    const double base = d.smoothing / (static_cast<double>(d.n_samples.col) + d.smoothing * d.binning.bins());
    for (std::size_t k = 0; k < d.binning.bins(); ++k)
        if (!u1_bin[k]) EXPECT_DOUBLE_EQ(d.p_col[k], base) << k;
    EXPECT_GT(d.moments.col_mean, 0.5);
}

TEST(Estimation, MajorityColluderMeanPositive) {
    const auto cb = book(22, 100, 300);
    EstimationOptions opt;
    opt.collusion_size = 6;
    opt.trials = 100;
    opt.seed = 4;
    const auto d = estimate_score_distributions(cb, ChannelModel{}, opt);
    EXPECT_GT(d.moments.col_mean, 0.0);
}

TEST(Estimation, InnocentMeanNearZero) {
    // 200 positions x 94 innocents x 60 trials > 1e6 samples
    const auto cb = book(23, 100, 200);
    EstimationOptions opt;
    opt.trials = 60;
    opt.seed = 5;
    const auto d = estimate_score_distributions(cb, ChannelModel{}, opt);
    ASSERT_GE(d.n_samples.inn, 1'000'000u);
    EXPECT_NEAR(d.moments.inn_mean, 0.0, 0.01);
}

TEST(Estimation, MassesNormalizedAndPositive) {
    const auto cb = book();
    EstimationOptions opt;
    opt.trials = 10;
    const auto d = estimate_score_distributions(cb, ChannelModel{}, opt);
    EXPECT_NO_THROW(d.validate());
    for (std::size_t k = 0; k < d.binning.bins(); ++k)
        EXPECT_DOUBLE_EQ(d.log_ratio[k], std::log(d.p_col[k] / d.p_inn[k]));
}

TEST(Estimation, IndependentOfThreadCount) {
    const auto cb = book();
    EstimationOptions opt;
    opt.trials = 40;
    opt.seed = 6;
    opt.threads = 1;
    const auto a = estimate_score_distributions(cb, ChannelModel{}, opt);
    opt.threads = 4;
    const auto b = estimate_score_distributions(cb, ChannelModel{}, opt);
    EXPECT_EQ(distributions_to_json(a).dump(), distributions_to_json(b).dump());
}

TEST(Estimation, InsufficientUsers) {
    const auto cb = book(24, 6);
    EstimationOptions opt;
    opt.collusion_size = 6;
    EXPECT_THROW(estimate_score_distributions(cb, ChannelModel{}, opt), InsufficientUsersError);
}

TEST(Estimation, DescriptorRecordsChannel) {
    const auto cb = book();
    EstimationOptions opt;
    opt.trials = 2;
    opt.collusion_size = 3;
    ChannelModel m;
    m.strategy = Strategy::interleaving;
    m.ma_violation_rate = 0.1;
    const auto d = estimate_score_distributions(cb, m, opt);
    EXPECT_EQ(d.channel_descriptor, "strategy=interleaving;c=3;rho=0.10000000000000001;skew=0");
}

TEST(DistributionsIo, RoundTrip) {
    const auto cb = book();
    EstimationOptions opt;
    opt.trials = 5;
    const auto d = estimate_score_distributions(cb, ChannelModel{}, opt);
    const auto path = std::filesystem::temp_directory_path() / "tardos_dists.json";
    save_distributions(d, path);
    const auto e = load_distributions(path);
    EXPECT_EQ(e.p_col, d.p_col);
    EXPECT_EQ(e.p_inn, d.p_inn);
    EXPECT_EQ(e.n_samples, d.n_samples);
    EXPECT_EQ(e.channel_descriptor, d.channel_descriptor);
    EXPECT_EQ(e.binning.bins(), d.binning.bins());
    for (double s = -5.0; s < 5.2; s += 0.01) ASSERT_EQ(e.binning.bin_of(s), d.binning.bin_of(s)) << s;
    const auto j = distributions_to_json(d);
    for (const char* key : {"bin_edges", "p_col", "p_inn", "smoothing", "n_samples", "channel_descriptor"})
        EXPECT_TRUE(j.contains(key)) << key;
}

TEST(DistributionsIo, RejectsBadMass) {
    const auto cb = book();
    EstimationOptions opt;
    opt.trials = 5;
    auto j = distributions_to_json(estimate_score_distributions(cb, ChannelModel{}, opt));
    j["p_col"][0] = 0.0;
    EXPECT_THROW(distributions_from_json(j), MalformedFileError);
    j = distributions_to_json(estimate_score_distributions(cb, ChannelModel{}, opt));
    j["p_inn"][3] = j["p_inn"][3].get<double>() + 0.01;
    EXPECT_THROW(distributions_from_json(j), MalformedFileError);
    j.erase("p_col");
    EXPECT_THROW(distributions_from_json(j), MalformedFileError);
}
