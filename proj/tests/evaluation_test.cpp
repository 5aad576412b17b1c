#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "balbid/error.hpp"
#include "balbid/evaluation.hpp"

using namespace balbid;
using namespace balbid::evaluation;

TEST(Brier, PerfectAndHalfForecasts) {
    const std::vector<double> f{1, 0, 1, 0};
    const std::vector<int> o{1, 0, 1, 0};
    const auto r = brier(f, o);
    EXPECT_EQ(r.brier_score, 0.0);
    EXPECT_EQ(r.brier_raw, 0.0);
    EXPECT_EQ(r.reliability, 0.0);

    const std::vector<double> half(7, 0.5);
    const std::vector<int> o7{1, 0, 0, 1, 1, 0, 1};
    EXPECT_EQ(brier(half, o7).brier_score, 0.25);
    EXPECT_EQ(brier(half, o7).brier_raw, 0.25);
    EXPECT_THROW(brier({}, {}), ContractError);
}

TEST(Brier, ClimatologicalForecastHasNoResolution) {
    // Base rate 0.35 sits on a bin centre.
    std::vector<int> o(100, 0);
    for (int i = 0; i < 35; ++i) o[static_cast<std::size_t>(i)] = 1;
    const std::vector<double> f(100, 0.35);
    const auto r = brier(f, o);
    EXPECT_NEAR(r.reliability, 0.0, 1e-15);
    EXPECT_NEAR(r.resolution, 0.0, 1e-15);
    EXPECT_NEAR(r.brier_score, r.uncertainty, 1e-15);
    EXPECT_NEAR(r.uncertainty, 0.35 * 0.65, 1e-15);
}

TEST(Brier, DecompositionIdentityMatchesDirectOracle) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u;
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 50 + rep * 13;
        std::vector<double> f(static_cast<std::size_t>(n));
        std::vector<int> o(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            f[static_cast<std::size_t>(i)] = u(rng);
            o[static_cast<std::size_t>(i)] = u(rng) < f[static_cast<std::size_t>(i)] ? 1 : 0;
        }
        const auto r = brier(f, o);
        // Oracle: snap by nearest centre and score directly.
        double snapped = 0.0, raw = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = f[static_cast<std::size_t>(i)];
            const double c = std::round(x * 20.0) / 20.0;
            snapped += (c - o[static_cast<std::size_t>(i)]) * (c - o[static_cast<std::size_t>(i)]);
            raw += (x - o[static_cast<std::size_t>(i)]) * (x - o[static_cast<std::size_t>(i)]);
        }
        EXPECT_NEAR(r.brier_score, snapped / n, 1e-12);
        EXPECT_NEAR(r.brier_raw, raw / n, 1e-12);
        EXPECT_NEAR(r.reliability - r.resolution + r.uncertainty, r.brier_score, 1e-10);
        std::size_t total = 0;
        for (const auto& b : r.bins) total += b.n;
        EXPECT_EQ(total, static_cast<std::size_t>(n));
        EXPECT_EQ(r.bins.size(), 21u);
    }
}

TEST(Brier, ConstantForecastScoreIsMinimisedAtTheBaseRate) {
    std::vector<int> o(200, 0);
    for (int i = 0; i < 60; ++i) o[static_cast<std::size_t>(i)] = 1;  // base rate 0.3
    double best = 1e9, best_f = -1;
    for (int k = 0; k <= 20; ++k) {
        const std::vector<double> f(200, k / 20.0);
        const double s = brier(f, o).brier_score;
        if (s < best) {
            best = s;
            best_f = k / 20.0;
        }
    }
    EXPECT_NEAR(best_f, 0.3, 1e-12);
}

TEST(Roc, PerfectReversedAndRandom) {
    const std::vector<int> o{1, 0, 1, 1, 0, 0};
    const std::vector<double> perfect{1, 0, 1, 1, 0, 0};
    const std::vector<double> reversed{0, 1, 0, 0, 1, 1};
    EXPECT_DOUBLE_EQ(roc(perfect, o).auc, 1.0);
    EXPECT_DOUBLE_EQ(roc(reversed, o).auc, 0.0);

    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u;
    std::vector<double> f(10000);
    std::vector<int> y(10000);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = u(rng);
        y[i] = u(rng) < 0.4 ? 1 : 0;
    }
    const auto c = roc(f, y);
    EXPECT_NEAR(c.auc, 0.5, 0.03);
    EXPECT_EQ(c.points.front().fpr, 0.0);
    EXPECT_EQ(c.points.front().tpr, 0.0);
    EXPECT_EQ(c.points.back().fpr, 1.0);
    EXPECT_EQ(c.points.back().tpr, 1.0);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
        EXPECT_GE(c.points[i].fpr, c.points[i - 1].fpr);
        EXPECT_GE(c.points[i].tpr, c.points[i - 1].tpr);
    }
    EXPECT_THROW(roc(std::vector<double>{0.2, 0.3}, std::vector<int>{1, 1}), ContractError);
}

TEST(Roc, AucMatchesPairwiseOracleAndIsTransformInvariant) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u;
    std::vector<double> f(400);
    std::vector<int> y(400);
    for (std::size_t i = 0; i < f.size(); ++i) {
        // Coarse values so ties occur.
        f[i] = std::round(u(rng) * 10.0) / 10.0;
        y[i] = u(rng) < 0.3 + 0.4 * f[i] ? 1 : 0;
    }
    // Mann-Whitney: P(score_pos > score_neg) + 0.5 P(tie).
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (std::size_t j = 0; j < f.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1.0;
                wins += f[i] > f[j] ? 1.0 : f[i] == f[j] ? 0.5 : 0.0;
            }
        }
    }
    const double auc = roc(f, y).auc;
    EXPECT_NEAR(auc, wins / pairs, 1e-12);
    std::vector<double> g(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) g[i] = 1.0 / (1.0 + std::exp(-5.0 * f[i] + 1.0)) * 0.9;
    EXPECT_NEAR(roc(g, y).auc, auc, 1e-12);
}

TEST(VaR, LinearInterpolationBetweenRanks) {
    std::vector<double> r(100);
    for (int i = 0; i < 100; ++i) r[static_cast<std::size_t>(i)] = 100 - i;  // unsorted input
    EXPECT_NEAR(var_alpha(r, 0.01), 1.99, 1e-12);
    EXPECT_NEAR(var_alpha(r, 0.5), 50.5, 1e-12);
    EXPECT_EQ(var_alpha(std::vector<double>(10, 3.0), 0.05), 3.0);
    EXPECT_THROW(var_alpha({}, 0.01), ContractError);
    double prev = -1e300;
    for (int k = 1; k < 100; ++k) {
        const double v = var_alpha(r, k / 100.0);
        EXPECT_GE(v, prev);
        prev = v;
    }
}

TEST(MeanAbsImbalance, PercentOfCapacity) {
    EXPECT_EQ(mean_abs_imbalance(std::vector<double>{1, 2}, std::vector<double>{1, 2}, 10.0), 0.0);
    EXPECT_DOUBLE_EQ(mean_abs_imbalance(std::vector<double>{5, 0, 10, 5}, std::vector<double>{0, 5, 5, 10}, 10.0), 50.0);
}

TEST(RiskReport, AccountingIdentity) {
    const std::vector<double> gross{100, 200, 50}, cost{10, -20, 5}, offer{1, 2, 3}, gen{2, 4, 1};
    const auto r = risk_report(gross, cost, offer, gen, 5.0);
    EXPECT_DOUBLE_EQ(r.total_revenue, 350.0 - (-5.0));
    EXPECT_DOUBLE_EQ(r.normalised_revenue, 355.0 / 7.0);
    EXPECT_DOUBLE_EQ(r.mean_abs_imbalance_pct, 100.0 * (1 + 2 + 2) / 3.0 / 5.0);
}
