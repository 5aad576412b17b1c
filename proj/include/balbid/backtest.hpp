#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "balbid/armax.hpp"
#include "balbid/config.hpp"
#include "balbid/evaluation.hpp"
#include "balbid/features.hpp"
#include "balbid/market_data.hpp"
#include "balbid/power_forecast.hpp"
#include "balbid/price_forecast.hpp"
#include "balbid/strategy.hpp"
#include "balbid/system_length.hpp"

namespace balbid::backtest {

/// How days are split into training and test sets.
///  - block: consecutive blocks of `block_days` are held out in turn
///  - leave_one_day_out: every day is its own test block
///  - split: the first `train_fraction` of days train, the rest test
enum class Holdout { block, leave_one_day_out, split };

/// Where each forecast role gets its values from.
enum class Source { perfect, simple, advanced };

const char* to_string(Holdout h);
const char* to_string(Source s);

struct BacktestConfig {
    std::optional<std::filesystem::path> data_path;  ///< CSV input; synthetic data otherwise
    double data_e_max = 0.0;
    SynthConfig synth;

    Holdout holdout = Holdout::block;
    int block_days = 7;
    double train_fraction = 0.75;
    double var_level = 0.01;

    Source system_length = Source::advanced;
    Source price = Source::advanced;
    Source power = Source::advanced;

    std::vector<strategy::StrategyParams> strategies;

    price::ArmaxOptions price_options;
    power::BoostingParams power_params;
    std::vector<std::string> power_features{"wind_fc", "period"};

    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "backtest_out";

    BacktestConfig();
    /// Reads the flat keys documented in the README. Throws `ConfigError`.
    static BacktestConfig from_config(const KeyValueConfig& cfg);
    void validate() const;
};

/// Expands `name=start:stop:step` (inclusive of stop) into strategy
/// parameters for the kind that owns the parameter: nu (additive),
/// eta (multiplicative) or alpha_prime (quantile).
std::vector<strategy::StrategyParams> parse_sweep(const std::string& text);

/// Loads the CSV named by the config or generates synthetic data.
Dataset load_dataset(const BacktestConfig& config);

struct Fold {
    std::size_t index = 0;
    std::vector<std::size_t> train_days;
    std::vector<std::size_t> test_days;
};

std::vector<Fold> make_folds(std::size_t num_days, const BacktestConfig& config);

/// Per-period scaling of the exogenous system forecasts for the price models:
/// missing values take the training mean, then columns are standardised.
struct ExogScaler {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
    Eigen::RowVectorXd apply(const std::vector<std::optional<double>>& row) const;
};

enum class PriceSeries { day_ahead = 0, up = 1, down = 2 };

/// Everything fitted on one fold's training days.
struct FoldModels {
    std::set<std::size_t> train_days;

    std::array<std::optional<system_length::LogisticModel>, kPeriodsPerDay> logistic;
    std::array<FeatureImputer, kPeriodsPerDay> logistic_imputer;
    std::array<double, kPeriodsPerDay> empirical{};
    std::size_t logistic_fallbacks = 0;

    std::optional<price::SimpleBenchmark> simple_price;
    std::array<ExogScaler, kPeriodsPerDay> price_scaler;
    /// Keyed by (period, day type, series). Absent entries use the simple
    /// benchmark for that series.
    std::map<std::tuple<int, DayType, PriceSeries>, price::ArmaxModel> armax;
    std::size_t armax_fitted = 0;
    std::size_t armax_reduced = 0;   ///< fitted after shrinking orders or dropping inputs
    std::size_t armax_fallbacks = 0;  ///< left to the simple benchmark

    std::optional<power::BoostedQuantileModel> gbm;
    Eigen::VectorXd gbm_feature_mean;
    std::array<double, kPeriodsPerDay> simple_power_mean{};
    std::array<std::vector<double>, kPeriodsPerDay> simple_power_quantiles;

    /// Throws `LeakageError` if `day` was used for fitting.
    void require_excluded(std::size_t day) const;
};

/// Fits every model the configuration needs on `train_days` only.
FoldModels fit_fold_models(const Dataset& data, const std::vector<std::size_t>& train_days,
                           const BacktestConfig& config, std::uint64_t fold_seed);

/// Fitted parameters of every model in the fold, for audits.
nlohmann::json to_json(const FoldModels& models);

struct LedgerRow {
    std::size_t day = 0;
    int period = 0;
    std::size_t fold = 0;
    std::size_t strategy = 0;  ///< index into BacktestReport::strategies
    strategy::OfferDecision decision;
    std::optional<settlement::PriceTriple> price_forecast;
    settlement::SettlementResult settlement;
    double gross = 0.0;  ///< pi_c * E
};

struct StrategyResult {
    strategy::StrategyParams params;
    evaluation::RiskReport risk;
    std::size_t fallbacks = 0;
};

struct ForecastScores {
    std::optional<evaluation::BrierReport> brier;
    std::optional<evaluation::RocCurve> roc;
};

struct BacktestReport {
    std::string data_source;
    std::size_t num_days = 0;
    double e_max = 0.0;
    std::vector<Fold> folds;
    std::vector<nlohmann::json> fold_summaries;
    std::size_t test_periods = 0;
    std::size_t skipped_missing_price = 0;
    std::vector<LedgerRow> ledger;
    std::vector<StrategyResult> strategies;
    ForecastScores logistic;
    ForecastScores empirical;
    std::optional<price::PhiScore> phi_simple;
    std::optional<price::PhiScore> phi_advanced;
    std::vector<Date> dates;
    std::vector<DayType> day_types;
};

BacktestReport run(const BacktestConfig& config);
BacktestReport run(const BacktestConfig& config, const Dataset& data);

std::string report_json(const BacktestReport& report, const BacktestConfig& config);
std::string ledger_csv(const BacktestReport& report, const Dataset& data);
std::string roc_csv(const BacktestReport& report);
std::string sweep_csv(const BacktestReport& report);

/// Writes report.json, ledger.csv, roc.csv and sweep.csv into `dir`.
void write_outputs(const BacktestReport& report, const BacktestConfig& config, const Dataset& data,
                   const std::filesystem::path& dir);

}  // namespace balbid::backtest
