#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "balbid/market_data.hpp"

namespace balbid::system_length {

struct LogisticOptions {
    int max_iterations = 100;
    double tolerance = 1e-8;      ///< relative log-likelihood change
    double ridge = 1e-6;          ///< L2 penalty used after separation is detected
    double separation_bound = 25.0;  ///< |beta| (standardised scale) treated as diverging
};

/// Logistic model P(short | x) = 1 / (1 + exp(-beta . [1, x])) for one
/// settlement period. Coefficients are held on the standardised feature scale;
/// `raw_coefficients()` maps them back to the units of the inputs.
struct LogisticModel {
    int period = 0;
    std::vector<std::string> feature_names;
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_scale;
    Eigen::VectorXd beta;        ///< [intercept, slopes...] on the standardised scale
    Eigen::MatrixXd covariance;  ///< inverse Fisher information, standardised scale
    int iterations = 0;
    double log_likelihood = 0.0;
    bool converged = false;
    bool separation = false;  ///< ridge fallback was applied
    std::string train_span;

    std::size_t dimension() const { return feature_names.size(); }
    Eigen::VectorXd raw_coefficients() const;
    Eigen::VectorXd raw_standard_errors() const;
};

/// Maximum-likelihood fit by iteratively reweighted least squares.
///
/// `features` is n x k (no intercept column); `outcomes` are 0/1. Requires at
/// least 10 observations per coefficient and both classes present.
LogisticModel fit_logistic(const Eigen::MatrixXd& features, std::span<const int> outcomes,
                           const LogisticOptions& options = {});

double logistic_link(double score);

/// Probability of a short system for raw feature vector `x`.
double predict_phi(const LogisticModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Short iff phi >= 0.5.
SystemLength deterministic_from_phi(double phi);
SystemLength predict_deterministic(const LogisticModel& model,
                                   const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Fraction of short outcomes (NIV > 0) in a period's training history.
double empirical_proportion(std::span<const int> outcomes);

nlohmann::json to_json(const LogisticModel& model);

}  // namespace balbid::system_length
