#include <gtest/gtest.h>

#include "balbid/error.hpp"
#include "balbid/price_forecast.hpp"

using namespace balbid;
using namespace balbid::price;

namespace {

SettlementRecord rec(int day, int period, double da, std::optional<double> bal, double niv) {
    SettlementRecord r;
    r.date = Date{std::chrono::sys_days{parse_date("2016-01-01")} + std::chrono::days{day}};
    r.period = period;
    r.da_price = da;
    r.bal_price = bal;
    r.niv = niv;
    return r;
}

}  // namespace

TEST(BalancingSteps, TwoStepsAfterTenAm) {
    EXPECT_EQ(balancing_steps(1), 1);
    EXPECT_EQ(balancing_steps(20), 1);
    EXPECT_EQ(balancing_steps(21), 2);
    EXPECT_EQ(balancing_steps(48), 2);
}

TEST(Legs, PositionsAndRealisedTriples) {
    std::vector<SettlementRecord> rs{rec(0, 5, 40, 55, 100), rec(1, 5, 42, 30, -50),
                                     rec(2, 5, 41, std::nullopt, 10), rec(3, 5, 39, 60, 5),
                                     rec(4, 5, 38, 35, 0)};
    Stream s;
    for (const auto& r : rs) s.push_back(&r);
    EXPECT_EQ(leg_positions(s, Leg::up), (std::vector<std::size_t>{0, 3}));
    // NIV == 0 belongs to the long (down) leg.
    EXPECT_EQ(leg_positions(s, Leg::down), (std::vector<std::size_t>{1, 4}));

    const auto t = reconstruct_realised_triples(s);
    EXPECT_FALSE(t[0]);  // down leg not seen yet
    ASSERT_TRUE(t[1]);
    EXPECT_DOUBLE_EQ(t[1]->pi_c, 42);
    EXPECT_DOUBLE_EQ(t[1]->pi_up, 55);
    EXPECT_DOUBLE_EQ(t[1]->pi_down, 30);
    EXPECT_FALSE(t[2]);  // no published price
    ASSERT_TRUE(t[3]);
    EXPECT_DOUBLE_EQ(t[3]->pi_up, 60);
    EXPECT_DOUBLE_EQ(t[3]->pi_down, 30);
    ASSERT_TRUE(t[4]);
    EXPECT_DOUBLE_EQ(t[4]->pi_down, 35);
    EXPECT_DOUBLE_EQ(t[4]->pi_up, 60);
}

TEST(FinaliseTriple, RepairsLegsOnTheWrongSide) {
    const auto ok = finalise_triple({50, 70, 30});
    EXPECT_FALSE(ok.repaired);
    EXPECT_DOUBLE_EQ(*ok.phi_hat, 0.5);
    const auto bad = finalise_triple({50, 45, 30});
    EXPECT_TRUE(bad.repaired);
    EXPECT_DOUBLE_EQ(bad.triple.pi_up, 50);
    EXPECT_DOUBLE_EQ(*bad.phi_hat, 1.0);
    const auto flat = finalise_triple({50, 40, 60});
    EXPECT_FALSE(flat.phi_hat.has_value());
}

TEST(SimpleBenchmark, MeansByMonthAndPeriod) {
    std::vector<SettlementRecord> rs{rec(0, 3, 40, 60, 10), rec(1, 3, 50, 20, -10),
                                     rec(2, 3, 60, 80, 10), rec(0, 4, 10, 5, -1),
                                     rec(40, 3, 100, 120, 5)};
    std::vector<const SettlementRecord*> h;
    for (const auto& r : rs) h.push_back(&r);
    const SimpleBenchmark b(h);

    const auto jan = b.forecast(1, 3);
    EXPECT_DOUBLE_EQ(jan.triple.pi_c, 50.0);
    EXPECT_DOUBLE_EQ(jan.triple.pi_up, 70.0);
    EXPECT_DOUBLE_EQ(jan.triple.pi_down, 20.0);
    EXPECT_FALSE(jan.fallback_c);

    // February only has a short period, so the down leg falls back to the
    // all-month period mean.
    const auto feb = b.forecast(2, 3);
    EXPECT_DOUBLE_EQ(feb.triple.pi_c, 100.0);
    EXPECT_DOUBLE_EQ(feb.triple.pi_up, 120.0);
    EXPECT_TRUE(feb.fallback_down);
    EXPECT_DOUBLE_EQ(feb.triple.pi_down, 20.0);

    // Month without history: period means.
    const auto mar = b.forecast(3, 3);
    EXPECT_TRUE(mar.fallback_c);
    EXPECT_DOUBLE_EQ(mar.triple.pi_c, 62.5);

    // Period 4 has no short period at all: the up leg falls back to pi_c.
    const auto p4 = b.forecast(1, 4);
    EXPECT_DOUBLE_EQ(p4.triple.pi_up, 10.0);
    EXPECT_THROW(b.forecast(1, 9), ContractError);
}

TEST(ForecastSeries, TwoStepWithholdsLatestObservation) {
    ArmaxModel m;
    m.p = 1;
    m.intercept = 1.0;
    m.ar = {0.5};
    SeriesHistory h;
    h.values = {10.0, 20.0};
    h.exog = Eigen::MatrixXd(2, 0);
    const Eigen::RowVectorXd x(0);
    // One step from 20: 1 + 10 = 11.
    EXPECT_DOUBLE_EQ(forecast_series(m, h, x, 1), 11.0);
    // Two steps from 10 (the 20 is not yet published): 1 + 0.5 * 6 = 4.
    EXPECT_DOUBLE_EQ(forecast_series(m, h, x, 2), 4.0);
}

TEST(ForecastSeries, IgnoresExogenousColumnsForModelsWithout) {
    ArmaxModel m;
    m.intercept = 7.0;
    SeriesHistory h;
    h.values = {1.0, 2.0};
    h.exog = Eigen::MatrixXd::Ones(2, 3);
    EXPECT_DOUBLE_EQ(forecast_series(m, h, Eigen::RowVectorXd::Ones(3), 1), 7.0);
}

TEST(PhiScores, RmseAndMae) {
    const std::vector<double> f{0.2, 0.5, 0.9}, r{0.0, 0.5, 0.6};
    const auto s = score_phi_forecasts(f, r);
    EXPECT_NEAR(s.mae, (0.2 + 0.0 + 0.3) / 3.0, 1e-15);
    EXPECT_NEAR(s.rmse, std::sqrt((0.04 + 0.09) / 3.0), 1e-15);
    EXPECT_THROW(score_phi_forecasts({}, {}), ContractError);
}
