#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "balbid/market_data.hpp"

namespace balbid {

/// Exogenous day-ahead system forecasts used by the system-length and price
/// models: load, wind and margin in every period, solar only in daylight
/// periods 12..41 (excluded from the design entirely elsewhere).
std::vector<std::string> exogenous_feature_names(int period);

/// Raw exogenous values for a record in `exogenous_feature_names` order.
std::vector<std::optional<double>> exogenous_features(const SettlementRecord& r);

/// Replaces missing exogenous values with the training mean of the column.
class FeatureImputer {
public:
    FeatureImputer() = default;
    /// Learns column means from training rows; a column that is missing in
    /// every row imputes to 0.
    explicit FeatureImputer(const std::vector<std::vector<std::optional<double>>>& rows);

    Eigen::RowVectorXd apply(const std::vector<std::optional<double>>& row) const;
    Eigen::MatrixXd apply(const std::vector<std::vector<std::optional<double>>>& rows) const;
    const Eigen::VectorXd& means() const { return means_; }

private:
    Eigen::VectorXd means_;
};

}  // namespace balbid
