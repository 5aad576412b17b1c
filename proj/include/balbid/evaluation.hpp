#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

namespace balbid::evaluation {

inline constexpr int kBrierBins = 21;

struct BrierBin {
    double centre = 0.0;
    std::size_t n = 0;
    double mean_forecast = 0.0;       ///< mean raw forecast in the bin (0 if empty)
    double observed_frequency = 0.0;  ///< fraction of positive outcomes (0 if empty)
};

/// Brier score and its Murphy decomposition. The decomposition is computed
/// on forecasts snapped to the nearest of 21 bin centres 0, 0.05, ..., 1, so
/// `brier_score == reliability - resolution + uncertainty` holds up to
/// rounding; `brier_raw` uses the forecasts as issued.
struct BrierReport {
    std::size_t n = 0;
    double brier_raw = 0.0;
    double brier_score = 0.0;
    double reliability = 0.0;
    double resolution = 0.0;
    double uncertainty = 0.0;
    double base_rate = 0.0;
    std::vector<BrierBin> bins;
};

/// Outcomes are 1 for a short system, 0 otherwise.
BrierReport brier(std::span<const double> forecasts, std::span<const int> outcomes);

struct RocPoint {
    double threshold = 0.0;  ///< positive when forecast >= threshold
    double fpr = 0.0;
    double tpr = 0.0;
};

/// ROC curve over every distinct forecast value, from (0, 0) to (1, 1).
struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

/// Throws `ContractError` unless both classes occur.
RocCurve roc(std::span<const double> forecasts, std::span<const int> outcomes);

/// Empirical alpha-percentile of `revenues` by linear interpolation between
/// the closest ranks: position (n - 1) * alpha in the sorted sample.
double var_alpha(std::span<const double> revenues, double alpha);

/// Mean |offer - generated| as a percentage of E_max.
double mean_abs_imbalance(std::span<const double> offers, std::span<const double> generated,
                          double e_max);

struct RiskReport {
    std::size_t n_periods = 0;
    double gross_revenue = 0.0;  ///< sum of pi_c * E
    double imbalance_cost = 0.0;  ///< sum of T
    double total_revenue = 0.0;  ///< gross_revenue - imbalance_cost
    double total_energy = 0.0;
    double normalised_revenue = 0.0;  ///< total_revenue / total_energy
    double var_level = 0.01;
    double var = 0.0;
    double mean_abs_imbalance_pct = 0.0;
};

/// Aggregates settled periods. `gross` and `costs` are the per-period pi_c*E
/// and imbalance cost; per-period revenue is their difference.
RiskReport risk_report(std::span<const double> gross, std::span<const double> costs,
                       std::span<const double> offers, std::span<const double> generated,
                       double e_max, double var_level = 0.01);

nlohmann::json to_json(const BrierReport& r);
nlohmann::json to_json(const RocCurve& r);
nlohmann::json to_json(const RiskReport& r);

/// `method,threshold,fpr,tpr` rows, without header.
std::string roc_csv_rows(const std::string& method, const RocCurve& r);

}  // namespace balbid::evaluation
