#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "balbid/backtest.hpp"
#include "balbid/error.hpp"

using namespace balbid;
using namespace balbid::backtest;
using namespace balbid::strategy;
namespace fs = std::filesystem;

namespace {

BacktestConfig small_config(const std::string& extra = "") {
    const std::string text =
        "synth.days = 56\n"
        "backtest.holdout = block\n"
        "backtest.block_days = 14\n"
        "forecast.system_length = advanced\n"
        "forecast.price = simple\n"
        "forecast.power = simple\n"
        "strategy.kind = min_imbalance, probabilistic_zero_max, additive, multiplicative\n"
        "strategy.nu = 0, 0.5, 1\n"
        "strategy.eta = 0, 0.5\n"
        "seed = 3\n" +
        extra;
    return BacktestConfig::from_config(KeyValueConfig::parse(text));
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("balbid_backtest_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BACKTEST_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

}  // namespace

TEST(Folds, BlocksPartitionTheDays) {
    BacktestConfig c;
    c.block_days = 7;
    const auto folds = make_folds(20, c);
    ASSERT_EQ(folds.size(), 3u);
    std::vector<int> seen(20, 0);
    for (const auto& f : folds) {
        EXPECT_EQ(f.train_days.size() + f.test_days.size(), 20u);
        for (auto d : f.test_days) ++seen[d];
        for (auto d : f.test_days) {
            EXPECT_EQ(std::count(f.train_days.begin(), f.train_days.end(), d), 0);
        }
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    EXPECT_EQ(folds[2].test_days.size(), 6u);

    c.holdout = Holdout::leave_one_day_out;
    EXPECT_EQ(make_folds(20, c).size(), 20u);

    c.holdout = Holdout::split;
    c.train_fraction = 0.75;
    const auto split = make_folds(20, c);
    ASSERT_EQ(split.size(), 1u);
    EXPECT_EQ(split[0].train_days.size(), 15u);
    EXPECT_EQ(split[0].test_days.front(), 15u);

    EXPECT_THROW(make_folds(1, c), DataError);
    c.holdout = Holdout::block;
    c.block_days = 20;
    EXPECT_THROW(make_folds(20, c), ConfigError);
}

TEST(Config, ParsesKeysAndExpandsStrategies) {
    const auto c = small_config();
    EXPECT_EQ(c.block_days, 14);
    EXPECT_EQ(c.price, Source::simple);
    EXPECT_EQ(c.seed, 3u);
    ASSERT_EQ(c.strategies.size(), 7u);
    EXPECT_EQ(c.strategies[2].label(), StrategyParams::additive(0.0).label());
    EXPECT_EQ(c.synth.days, 56);
}

TEST(Config, RejectsBadInput) {
    auto parse = [](const std::string& t) { return BacktestConfig::from_config(KeyValueConfig::parse(t)); };
    EXPECT_THROW(parse("backtset.holdout = block\n"), ConfigError);
    EXPECT_THROW(parse("backtest.holdout = rolling\n"), ConfigError);
    EXPECT_THROW(parse("forecast.price = magic\n"), ConfigError);
    EXPECT_THROW(parse("strategy.kind = additive\n"), ConfigError);
    EXPECT_THROW(parse("strategy.kind = gamble\n"), ConfigError);
    EXPECT_THROW(parse("seed = -1\n"), ConfigError);
    EXPECT_THROW(parse("data.path = x.csv\n").validate(), ConfigError);
    EXPECT_THROW(parse("power.features = wind_fc, tide\n").validate(), ConfigError);
    EXPECT_THROW(parse("strategy.kind = additive\nstrategy.nu = 1.5\n").validate(), ConfigError);
}

TEST(Sweep, ExpandsInclusiveRange) {
    const auto s = parse_sweep("nu=0:1:0.1");
    ASSERT_EQ(s.size(), 11u);
    EXPECT_EQ(*s.front().nu, 0.0);
    EXPECT_EQ(*s.back().nu, 1.0);
    EXPECT_EQ(*s[3].nu, 0.3);
    EXPECT_EQ(parse_sweep("alpha_prime=0.5:0.9:0.2").size(), 3u);
    EXPECT_EQ(parse_sweep("eta=0:2:0.5").front().kind, StrategyKind::multiplicative);
    EXPECT_THROW(parse_sweep("nu"), ConfigError);
    EXPECT_THROW(parse_sweep("nu=0:1"), ConfigError);
    EXPECT_THROW(parse_sweep("nu=1:0:0.1"), ConfigError);
    EXPECT_THROW(parse_sweep("mu=0:1:0.1"), ConfigError);
    EXPECT_THROW(parse_sweep("nu=0:1:x"), ConfigError);
}

TEST(Backtest, LedgerAccountingHolds) {
    const auto config = small_config();
    const auto data = load_dataset(config);
    const auto rep = run(config, data);
    EXPECT_EQ(rep.test_periods, 56u * 48u);
    EXPECT_EQ(rep.ledger.size(), (rep.test_periods - rep.skipped_missing_price) * config.strategies.size());

    std::vector<double> revenue(config.strategies.size(), 0.0);
    for (const auto& row : rep.ledger) {
        const auto& rec = data.at(row.day, row.period);
        EXPECT_GE(row.decision.offer, 0.0);
        EXPECT_LE(row.decision.offer, data.e_max());
        EXPECT_NEAR(row.settlement.revenue, row.gross - row.settlement.cost, 1e-9 * (1 + std::abs(row.gross)));
        EXPECT_NEAR(row.settlement.imbalance, row.decision.offer - rec.gen_energy, 1e-12);
        revenue[row.strategy] += row.settlement.revenue;
    }
    for (std::size_t s = 0; s < config.strategies.size(); ++s) {
        const auto& r = rep.strategies[s].risk;
        EXPECT_NEAR(r.total_revenue, revenue[s], 1e-6 * std::abs(revenue[s]));
        EXPECT_NEAR(r.total_revenue, r.gross_revenue - r.imbalance_cost, 1e-6 * std::abs(revenue[s]));
    }
    // Nesting visible end to end: additive nu = 0 and multiplicative eta = 0
    // both reproduce min-imbalance; nu = 1 reproduces zero/max.
    EXPECT_EQ(rep.strategies[2].risk.total_revenue, rep.strategies[0].risk.total_revenue);
    EXPECT_EQ(rep.strategies[5].risk.total_revenue, rep.strategies[0].risk.total_revenue);
    EXPECT_EQ(rep.strategies[4].risk.total_revenue, rep.strategies[1].risk.total_revenue);
}

TEST(Backtest, OffersMoveAwayFromThePointForecastAsNuGrows) {
    auto config = small_config();
    config.strategies = parse_sweep("nu=0:1:0.25");
    const auto rep = run(config, load_dataset(config));
    const std::size_t k = config.strategies.size();
    ASSERT_EQ(rep.ledger.size() % k, 0u);
    for (std::size_t i = 0; i < rep.ledger.size(); i += k) {
        const double expected = *rep.ledger[i].decision.inputs.expected;
        double prev = -1.0;
        for (std::size_t s = 0; s < k; ++s) {
            const auto& row = rep.ledger[i + s];
            ASSERT_EQ(row.strategy, s);
            const double gap = std::abs(row.decision.offer - expected);
            EXPECT_GE(gap, prev - 1e-12);
            prev = gap;
        }
    }
}

TEST(Backtest, ZeroSpreadsMakeEveryStrategyEarnTheSame) {
    const auto config = small_config("synth.spread_up = 0\nsynth.spread_down = 0\n");
    const auto rep = run(config, load_dataset(config));
    for (const auto& row : rep.ledger) EXPECT_NEAR(row.settlement.cost, 0.0, 1e-9);
    for (const auto& s : rep.strategies) {
        EXPECT_NEAR(s.risk.total_revenue, rep.strategies[0].risk.total_revenue,
                    1e-9 * std::abs(rep.strategies[0].risk.total_revenue));
    }
}

TEST(Backtest, LeakageGuardRejectsTrainingDays) {
    const auto config = small_config();
    const auto data = load_dataset(config);
    std::vector<std::size_t> train(20);
    std::iota(train.begin(), train.end(), 0);
    const auto models = fit_fold_models(data, train, config, 1);
    EXPECT_THROW(models.require_excluded(3), LeakageError);
    EXPECT_NO_THROW(models.require_excluded(30));
}

TEST(Backtest, IdenticalSeedsGiveIdenticalOutputs) {
    const auto config = small_config("forecast.price = advanced\n");
    const auto data_a = load_dataset(config);
    const auto data_b = load_dataset(config);
    const auto a = run(config, data_a);
    const auto b = run(config, data_b);
    EXPECT_EQ(report_json(a, config), report_json(b, config));
    EXPECT_EQ(ledger_csv(a, data_a), ledger_csv(b, data_b));
    EXPECT_EQ(roc_csv(a), roc_csv(b));
}

TEST(Backtest, OutputsAreWritten) {
    const auto config = small_config();
    const auto data = load_dataset(config);
    const auto rep = run(config, data);
    const auto dir = scratch("outputs");
    write_outputs(rep, config, data, dir);
    for (const char* f : {"report.json", "ledger.csv", "roc.csv", "sweep.csv"}) {
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    }
    std::ifstream in(dir / "ledger.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("date,period,day_type,fold,strategy,offer", 0), 0u);
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    EXPECT_EQ(lines, rep.ledger.size());
    const auto j = nlohmann::json::parse(std::ifstream(dir / "report.json"));
    EXPECT_EQ(j.at("data").at("days"), 56);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("cli");
    write_file(dir / "bad.cfg", "no.such.key = 1\n");
    write_file(dir / "baddata.cfg", "data.path = " + (dir / "missing.csv").string() + "\ndata.e_max = 50\n");
    write_file(dir / "synth.cfg", "synth.days = 3\n");
    write_file(dir / "run.cfg",
               "synth.days = 28\nbacktest.block_days = 14\nforecast.price = simple\nforecast.power = simple\n"
               "forecast.system_length = simple\n");

    EXPECT_EQ(run_cli("run --config " + (dir / "bad.cfg").string()), 2);
    EXPECT_EQ(run_cli("run --config " + (dir / "nope.cfg").string()), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("run --config " + (dir / "baddata.cfg").string()), 3);
    EXPECT_EQ(run_cli("synth --config " + (dir / "synth.cfg").string() + " --out " + (dir / "d.csv").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "d.csv"));

    write_file(dir / "csv.cfg", "data.path = " + (dir / "d.csv").string() +
                                    "\ndata.e_max = 50\nbacktest.holdout = leave_one_day_out\n"
                                    "forecast.price = simple\nforecast.power = simple\n"
                                    "forecast.system_length = simple\n");
    EXPECT_EQ(run_cli("run --config " + (dir / "csv.cfg").string() + " --out " + (dir / "csv_out").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "csv_out" / "ledger.csv"));

    EXPECT_EQ(run_cli("run --config " + (dir / "run.cfg").string() + " --out " + (dir / "out").string() +
                      " --seed 9"),
              0);
    EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
    EXPECT_EQ(run_cli("sweep --config " + (dir / "run.cfg").string() + " --param nu=0:1:0.5 --out " +
                      (dir / "sweep").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "sweep" / "sweep.csv"));
    EXPECT_EQ(run_cli("sweep --config " + (dir / "run.cfg").string() + " --param nu=0:2:0.5 --out " +
                      (dir / "sweep2").string()),
              2);
}
