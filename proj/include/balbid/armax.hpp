#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace balbid::price {

using Series = std::vector<std::optional<double>>;

struct ArmaxOptions {
    int max_p = 5;
    int max_q = 5;
    int max_iterations = 100;
    double tolerance = 1e-10;  ///< relative change in the residual sum of squares
    /// Grid cells whose AR or MA roots (companion form) reach this modulus are
    /// excluded from selection, i.e. roots within a factor 1.01 of the unit
    /// circle.
    double root_limit = 1.0 / 1.01;
    /// Cells whose AR and MA polynomials share a root to within this distance
    /// carry a cancelling factor: they restate cell (p-1, q-1) and are not
    /// identified, so they are excluded from selection.
    double common_root_tolerance = 0.1;
};

struct AicEntry {
    int p = 0;
    int q = 0;
    double aic = 0.0;
    bool ok = false;
    bool converged = false;
    bool near_unit_root = false;
    bool common_root = false;
};

/// Filter state at a forecast origin: most recent value first.
struct ArmaxState {
    std::vector<double> values;
    std::vector<double> residuals;
};

/// pi_t = a0 + sum_i ar_i pi_{t-i} + sum_j ma_j eps_{t-j} + sum_k exog_k X_{k,t} + eps_t
struct ArmaxModel {
    int p = 0;
    int q = 0;
    double intercept = 0.0;
    std::vector<double> ar;
    std::vector<double> ma;
    std::vector<double> exog;
    std::vector<std::string> exog_names;

    double sigma2 = 0.0;
    double log_likelihood = 0.0;
    double aic = 0.0;
    std::size_t n_effective = 0;
    bool converged = false;
    bool stationary = true;
    bool invertible = true;
    std::vector<AicEntry> aic_table;

    std::vector<double> residuals;  ///< training residuals aligned with the series (0 where unavailable)
    ArmaxState state;               ///< filter state at the end of the training series

    std::size_t num_parameters() const { return 1 + ar.size() + ma.size() + exog.size(); }
};

/// Fits every order on [0..max_p] x [0..max_q] by conditional Gaussian
/// maximum likelihood (pre-sample residuals zero) and keeps the AIC minimum.
/// Ties go to the smaller p+q, then the smaller p. Missing values are allowed:
/// observations whose own value or AR lags are missing drop out of the
/// likelihood and carry a zero residual.
///
/// `exog` is n x k aligned with `series` (k may be 0).
ArmaxModel fit_armax(std::span<const std::optional<double>> series, const Eigen::MatrixXd& exog,
                     const ArmaxOptions& options = {}, std::vector<std::string> exog_names = {});

/// Fits a single (p, q) order. `sample_start` is the first index eligible for
/// the likelihood (defaults to p); the grid search uses max_p for every cell
/// so AIC values share one sample.
ArmaxModel fit_armax_order(std::span<const std::optional<double>> series,
                           const Eigen::MatrixXd& exog, int p, int q,
                           const ArmaxOptions& options = {}, int sample_start = -1);

/// Runs the fitted filter over `history` (with aligned exogenous rows) and
/// returns the state at its end. Missing history values are replaced by their
/// one-step prediction.
ArmaxState condition(const ArmaxModel& model, std::span<const std::optional<double>> history,
                     const Eigen::MatrixXd& exog_history);

/// `steps`-ahead forecast from `state`. `exog_path` holds one exogenous row per
/// step (row `steps-1` belongs to the target). Unknown future residuals are 0
/// and unknown intermediate values are replaced by their own forecasts.
double forecast_price(const ArmaxModel& model, const ArmaxState& state,
                      const Eigen::MatrixXd& exog_path, int steps);

/// Largest root modulus of z^n - c_1 z^{n-1} - ... - c_n. Values below 1 mean
/// an AR polynomial with coefficients c is stationary.
double max_root_modulus(std::span<const double> ar_coefficients);

/// Smallest distance between a root of the AR polynomial and a root of the MA
/// polynomial (both in companion form); +inf when either side is empty.
double min_common_root_distance(std::span<const double> ar, std::span<const double> ma);

nlohmann::json to_json(const ArmaxModel& model);

}  // namespace balbid::price
