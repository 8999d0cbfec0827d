#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "oracles.hpp"
#include "tardos/channel.hpp"
#include "tardos/codebook.hpp"

using namespace tardos;

namespace {

Codebook small_codebook(std::uint64_t seed = 9, std::size_t n = 30, std::size_t m = 300) {
    return generate_codebook(make_params(10, m, 0.1, 6, std::nullopt, seed), n);
}

/// Codebook with hand-set symbols at position 0 and a flat bias.
Codebook handmade(const std::vector<Symbol>& column) {
    Codebook cb;
    cb.params = make_params(10, 1, 0.1, 6, std::nullopt, 0);
    cb.bias = BiasMatrix(1, 10);
    for (double& v : cb.bias.row(0)) v = 0.1;
    cb.fingerprints = FingerprintMatrix(column.size(), 1);
    for (std::size_t j = 0; j < column.size(); ++j) cb.fingerprints.at(j, 0) = column[j];
    return cb;
}

std::vector<Symbol> held(const Codebook& cb, const std::vector<std::size_t>& c, std::size_t i) {
    std::vector<Symbol> h;
    for (auto j : c) h.push_back(cb.fingerprints.at(j, i));
    return h;
}

}  // namespace

TEST(Channel, IdentityForSingleColluder) {
    const auto cb = small_codebook();
    ChannelSpec spec;
    spec.colluders = {4};
    Rng rng = make_rng(1, "t");
    for (std::size_t i = 0; i < cb.positions(); ++i) EXPECT_EQ(channel_output(spec, cb, i, rng), cb.fingerprints.at(4, i));
}

TEST(Channel, StrictMajority) {
    const auto cb = handmade({3, 3, 7});
    ChannelSpec spec;
    spec.colluders = {0, 1, 2};
    Rng rng = make_rng(2, "t");
    for (int k = 0; k < 100; ++k) EXPECT_EQ(channel_output(spec, cb, 0, rng), 3u);
    spec.model.strategy = Strategy::minority;
    for (int k = 0; k < 100; ++k) EXPECT_EQ(channel_output(spec, cb, 0, rng), 7u);
}

TEST(Channel, TiesBrokenUniformly) {
    const auto cb = handmade({1, 1, 5, 5, 8});
    ChannelSpec spec;
    spec.colluders = {0, 1, 2, 3, 4};
    Rng rng = make_rng(3, "t");
    int ones = 0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        const auto y = channel_output(spec, cb, 0, rng);
        ASSERT_TRUE(y == 1 || y == 5);
        ones += y == 1;
    }
    EXPECT_NEAR(ones, n / 2.0, 3 * std::sqrt(n / 4.0));
}

TEST(Channel, StrategiesAgreeWithReferenceSets) {
    const auto cb = small_codebook();
    Rng rng = make_rng(4, "t");
    for (auto strategy : {Strategy::majority, Strategy::minority}) {
        for (std::size_t c = 2; c <= 6; ++c) {
            ChannelSpec spec;
            spec.colluders = sample_without_replacement(rng, cb.users(), c);
            spec.model.strategy = strategy;
            for (std::size_t i = 0; i < cb.positions(); ++i) {
                const auto allowed = oracle::extreme_symbols(held(cb, spec.colluders, i), strategy == Strategy::majority);
                const auto y = channel_output(spec, cb, i, rng);
                ASSERT_TRUE(std::find(allowed.begin(), allowed.end(), y) != allowed.end());
            }
        }
    }
}

TEST(Channel, MarkingAssumptionHoldsWithoutViolations) {
    const auto cb = small_codebook();
    Rng rng = make_rng(5, "t");
    for (auto strategy : {Strategy::majority, Strategy::minority, Strategy::interleaving})
        for (std::size_t c = 1; c <= 6; ++c) {
            ChannelSpec spec;
            spec.colluders = sample_without_replacement(rng, cb.users(), c);
            spec.model.strategy = strategy;
            for (std::size_t i = 0; i < cb.positions(); ++i)
                ASSERT_TRUE(colluders_hold(spec, cb, i, channel_output(spec, cb, i, rng)));
            EXPECT_EQ(measure_ma_violation_rate(spec, cb, 5, rng), 0.0);
        }
}

TEST(Channel, InterleavingMarginal) {
    const auto cb = handmade({2, 2, 2, 6, 9, 9});
    ChannelSpec spec;
    spec.colluders = {0, 1, 2, 3, 4, 5};
    spec.model.strategy = Strategy::interleaving;
    Rng rng = make_rng(6, "t");
    const int n = 60000;
    std::map<Symbol, int> counts;
    for (int k = 0; k < n; ++k) ++counts[channel_output(spec, cb, 0, rng)];
    for (auto [sym, frac] : std::vector<std::pair<Symbol, double>>{{2, 0.5}, {6, 1.0 / 6}, {9, 1.0 / 3}})
        EXPECT_NEAR(counts[sym], n * frac, 3 * std::sqrt(n * frac * (1 - frac))) << sym;
    EXPECT_EQ(counts.size(), 3u);
}

TEST(Channel, PresetViolationFrequency) {
    // c2/prune over 1e5 positions: 0.317 +- 0.01
    const auto cb = small_codebook(10, 30, 1000);
    const auto& preset = find_preset("c2/prune");
    EXPECT_DOUBLE_EQ(preset.ma_violation_rate, 0.317);
    ChannelSpec spec;
    spec.colluders = {3, 11};
    spec.model.ma_violation_rate = preset.ma_violation_rate;
    Rng rng = make_rng(7, "t");
    const auto vc = count_ma_violations(spec, cb, 100, rng);
    EXPECT_EQ(vc.eligible, 100000u);
    EXPECT_NEAR(vc.rate(), 0.317, 0.01);
}

TEST(Channel, CustomViolationRateSixColluders) {
    const auto cb = small_codebook(11, 30, 1000);
    ChannelSpec spec;
    spec.colluders = {0, 5, 9, 13, 20, 27};
    spec.model.ma_violation_rate = 0.05;
    Rng rng = make_rng(8, "t");
    const auto vc = count_ma_violations(spec, cb, 100, rng);
    EXPECT_GT(vc.eligible, 90000u);
    EXPECT_NEAR(vc.rate(), 0.05, 0.005);
}

TEST(Channel, SkewAloneCausesViolationsWhenLabelIsNeverHeld) {
    const auto cb = small_codebook(12, 30, 1000);
    ChannelSpec spec;
    spec.colluders = {1, 2};
    spec.model.skew_rate = 0.2;
    spec.model.true_labels.resize(cb.positions());
    // a label neither colluder holds
    for (std::size_t i = 0; i < cb.positions(); ++i) {
        Symbol s = 0;
        while (s == cb.fingerprints.at(1, i) || s == cb.fingerprints.at(2, i)) ++s;
        spec.model.true_labels[i] = s;
    }
    Rng rng = make_rng(9, "t");
    const auto vc = count_ma_violations(spec, cb, 100, rng);
    EXPECT_NEAR(vc.rate(), 0.2, 3 * std::sqrt(0.2 * 0.8 / vc.eligible));
}

TEST(Channel, PresetTableCarriesPublishedRates) {
    const std::vector<std::pair<std::string, double>> expect{
        {"single/no-attack", 0.000}, {"single/fine-tune", 0.023}, {"single/prune", 0.190},
        {"c2/no-attack", 0.043},     {"c2/fine-tune", 0.151},     {"c2/prune", 0.317},
        {"c6/no-attack", 0.056},     {"c6/fine-tune", 0.156},     {"c6/prune", 0.290}};
    for (const auto& [name, rho] : expect) EXPECT_DOUBLE_EQ(find_preset(name).ma_violation_rate, rho) << name;
    EXPECT_THROW(find_preset("c3/no-attack"), DomainError);
}

TEST(Channel, ValidationRejectsBadModels) {
    ChannelModel m;
    m.ma_violation_rate = 0.7;
    m.skew_rate = 0.3;
    m.true_labels.assign(10, 0);
    EXPECT_THROW(m.validate(10, 10), DomainError);
    ChannelModel no_labels;
    no_labels.skew_rate = 0.1;
    EXPECT_THROW(no_labels.validate(10, 10), DomainError);
    ChannelModel stray_labels;
    stray_labels.true_labels.assign(10, 0);
    EXPECT_THROW(stray_labels.validate(10, 10), DomainError);
    const auto cb = small_codebook();
    ChannelSpec empty;
    EXPECT_THROW(make_oracle(empty, cb), DomainError);
}

TEST(Oracle, MemoizedAndSeedDetermined) {
    const auto cb = small_codebook();
    ChannelSpec spec;
    spec.colluders = {2, 9};
    spec.model.ma_violation_rate = 0.2;
    spec.seed = 44;
    const auto a = make_oracle(spec, cb);
    EXPECT_EQ(a(5), a(5));
    const auto b = make_oracle(spec, cb);
    EXPECT_TRUE(std::equal(a.answers().begin(), a.answers().end(), b.answers().begin()));
    spec.seed = 45;
    const auto c = make_oracle(spec, cb);
    EXPECT_FALSE(std::equal(a.answers().begin(), a.answers().end(), c.answers().begin()));
    EXPECT_THROW(a(cb.positions()), IndexError);
}

TEST(Oracle, TwoColluderMajorityAnswersAreHeld) {
    const auto cb = small_codebook();
    ChannelSpec spec;
    spec.colluders = {0, 17};
    spec.seed = 3;
    const auto o = make_oracle(spec, cb);
    for (std::size_t i = 0; i < cb.positions(); ++i) {
        const auto y = o(i);
        EXPECT_TRUE(y == cb.fingerprints.at(0, i) || y == cb.fingerprints.at(17, i));
    }
}

TEST(Oracle, InnocentAnswersFollowBias) {
    const auto cb = small_codebook(13, 5, 200);
    // pooled over positions: the count of answers equal to the most likely
    // symbol matches its summed probability
    double expect = 0, var = 0, hits = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto o = make_innocent_oracle(cb, s);
        for (std::size_t i = 0; i < cb.positions(); ++i) {
            const auto row = cb.bias.row(i);
            const auto top = static_cast<Symbol>(std::max_element(row.begin(), row.end()) - row.begin());
            expect += row[top];
            var += row[top] * (1 - row[top]);
            hits += o(i) == top;
        }
    }
    EXPECT_NEAR(hits, expect, 3 * std::sqrt(var));
}
