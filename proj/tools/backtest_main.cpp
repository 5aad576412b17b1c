// Command-line front end: run a backtest, sweep a strategy parameter, or
// write a synthetic dataset.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <optional>
#include <string>

#include "balbid/backtest.hpp"
#include "balbid/error.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

balbid::backtest::BacktestConfig load_config(const std::string& path, std::optional<long> seed) {
    auto kv = balbid::KeyValueConfig::load(path);
    if (seed) kv.set("seed", std::to_string(*seed));
    return balbid::backtest::BacktestConfig::from_config(kv);
}

void print_summary(const balbid::backtest::BacktestReport& rep, const std::filesystem::path& out) {
    fmt::print("{} days, {} test periods ({} without a balancing price)\n", rep.num_days,
               rep.test_periods, rep.skipped_missing_price);
    for (const auto& s : rep.strategies) {
        fmt::print("  {:<36} revenue {:>9.3f}/MWh  VaR {:>9.3f}  |d| {:>6.2f}%\n", s.params.label(),
                   s.risk.normalised_revenue, s.risk.var, s.risk.mean_abs_imbalance_pct);
    }
    fmt::print("outputs written to {}\n", out.string());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Day-ahead bidding backtester for single-price balancing markets"};
    app.require_subcommand(1);

    std::string config_path, out_dir, sweep_param, synth_out;
    std::optional<long> seed;

    auto* run = app.add_subcommand("run", "Run a backtest");
    run->add_option("--config", config_path, "Config file")->required();
    run->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    run->add_option("--seed", seed, "Seed (overrides seed)");

    auto* sweep = app.add_subcommand("sweep", "Sweep a strategy parameter");
    sweep->add_option("--config", config_path, "Config file")->required();
    sweep->add_option("--param", sweep_param, "name=start:stop:step, name in nu, eta, alpha_prime")
        ->required();
    sweep->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    sweep->add_option("--seed", seed, "Seed (overrides seed)");

    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset as CSV");
    synth->add_option("--config", config_path, "Config file with synth.* keys")->required();
    synth->add_option("--out", synth_out, "Output CSV path")->required();
    synth->add_option("--seed", seed, "Seed (overrides seed)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        auto config = load_config(config_path, seed);
        if (*synth) {
            config.synth.validate();
            const auto result = balbid::synth_generate(config.synth, config.seed);
            balbid::write_csv(result.data, synth_out);
            fmt::print("wrote {} records to {}\n", result.data.size(), synth_out);
            return 0;
        }
        if (*sweep) config.strategies = balbid::backtest::parse_sweep(sweep_param);
        const std::filesystem::path out = out_dir.empty() ? config.output_dir : std::filesystem::path(out_dir);
        const auto data = balbid::backtest::load_dataset(config);
        const auto report = balbid::backtest::run(config, data);
        balbid::backtest::write_outputs(report, config, data, out);
        print_summary(report, out);
        return 0;
    } catch (const balbid::ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kExitConfig;
    } catch (const balbid::DataError& e) {
        fmt::print(stderr, "data error: {}\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
}
