#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <vector>

#include "balbid/armax.hpp"
#include "balbid/market_data.hpp"
#include "balbid/settlement.hpp"

namespace balbid::price {

/// Balancing prices after 10:00 (period > 20) are not yet published when
/// day-ahead offers close, so those periods are forecast two steps ahead.
int balancing_steps(int period);

enum class Leg { up, down };

/// Records of one (settlement period, day type) stream in date order.
using Stream = std::vector<const SettlementRecord*>;

/// Positions in `stream` that form the training series of one balancing leg:
/// the up leg is observed in short periods (NIV > 0), the down leg in long
/// periods (NIV <= 0). Positions without a published balancing price are
/// skipped. Each leg series is indexed by its own occurrences.
std::vector<std::size_t> leg_positions(const Stream& stream, Leg leg);

/// Realised (pi_c, pi_up, pi_down) per stream position. The observed leg is
/// the published balancing price; the unobserved leg carries forward the most
/// recent observation of that leg in the stream. Positions before both legs
/// have been seen, or without a balancing price, are nullopt.
std::vector<std::optional<settlement::PriceTriple>> reconstruct_realised_triples(const Stream& stream);

/// Day-ahead price series of a stream (every position observed).
Series day_ahead_series(const Stream& stream);

struct TripleForecast {
    settlement::PriceTriple raw;
    settlement::PriceTriple triple;  ///< after ordering repair
    std::optional<double> phi_hat;   ///< nullopt when the legs coincide
    bool repaired = false;
};

/// Clips legs that fall on the wrong side of pi_c onto pi_c and derives Phi.
TripleForecast finalise_triple(const settlement::PriceTriple& raw);

/// History of one model's series up to (excluding) the target, with aligned
/// exogenous rows.
struct SeriesHistory {
    Series values;
    Eigen::MatrixXd exog;
};

/// Forecast of one fitted series `steps` ahead of the end of `history`. With
/// two steps the most recent history value is withheld from conditioning.
/// A model fitted without exogenous inputs ignores the exogenous columns.
double forecast_series(const ArmaxModel& model, const SeriesHistory& history,
                       const Eigen::RowVectorXd& exog_target, int steps);

struct PriceModelSet {
    ArmaxModel day_ahead;
    ArmaxModel up;
    ArmaxModel down;
};

/// Forecasts one period's triple. The day-ahead model is always one step
/// ahead; balancing legs use `balancing_steps(period)`, dropping the most
/// recent leg observation from the conditioning history when two steps are
/// required.
TripleForecast forecast_triple(const PriceModelSet& models, const SeriesHistory& day_ahead,
                               const SeriesHistory& up, const SeriesHistory& down,
                               const Eigen::RowVectorXd& exog_target, int period);

/// Climatological benchmark: mean prices by (calendar month, settlement
/// period), with balancing legs split by realised NIV sign.
class SimpleBenchmark {
public:
    struct Forecast {
        settlement::PriceTriple triple;
        bool fallback_c = false;     ///< month cell empty, used the period mean
        bool fallback_up = false;    ///< no short periods in the cell
        bool fallback_down = false;  ///< no long periods in the cell
    };

    explicit SimpleBenchmark(std::span<const SettlementRecord* const> history);
    /// Throws `ContractError` when the period has no history at all.
    Forecast forecast(unsigned month, int period) const;
    /// Cell means and counts, for model audits.
    nlohmann::json to_json() const;

private:
    struct Acc {
        double sum = 0.0;
        std::size_t n = 0;
        void add(double v) { sum += v; ++n; }
        std::optional<double> mean() const {
            return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
        }
    };
    struct Cell {
        Acc c, up, down;
    };
    std::map<std::pair<unsigned, int>, Cell> by_month_;
    std::map<int, Cell> by_period_;
};

SimpleBenchmark::Forecast simple_benchmark(std::span<const SettlementRecord* const> history,
                                           unsigned month, int period);

struct PhiScore {
    double rmse = 0.0;
    double mae = 0.0;
    std::size_t n = 0;
};

/// RMSE and MAE between forecast and realised critical probabilities.
PhiScore score_phi_forecasts(std::span<const double> forecast, std::span<const double> realised);

}  // namespace balbid::price
