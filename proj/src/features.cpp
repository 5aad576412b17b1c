#include "balbid/features.hpp"

#include "balbid/error.hpp"

namespace balbid {

std::vector<std::string> exogenous_feature_names(int period) {
    std::vector<std::string> names{"load_fc", "wind_fc", "margin_fc"};
    if (is_solar_period(period)) names.emplace_back("solar_fc");
    return names;
}

std::vector<std::optional<double>> exogenous_features(const SettlementRecord& r) {
    std::vector<std::optional<double>> row{r.load_fc, r.wind_fc, r.margin_fc};
    if (is_solar_period(r.period)) row.push_back(r.solar_fc);
    return row;
}

FeatureImputer::FeatureImputer(const std::vector<std::vector<std::optional<double>>>& rows) {
    if (rows.empty()) throw ContractError("FeatureImputer: no training rows");
    const std::size_t k = rows.front().size();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    std::vector<std::size_t> count(k, 0);
    for (const auto& row : rows) {
        if (row.size() != k) throw ContractError("FeatureImputer: ragged rows");
        for (std::size_t j = 0; j < k; ++j) {
            if (row[j]) {
                sum[static_cast<Eigen::Index>(j)] += *row[j];
                ++count[j];
            }
        }
    }
    means_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
        if (count[j] > 0) {
            means_[static_cast<Eigen::Index>(j)] =
                sum[static_cast<Eigen::Index>(j)] / static_cast<double>(count[j]);
        }
    }
}

Eigen::RowVectorXd FeatureImputer::apply(const std::vector<std::optional<double>>& row) const {
    if (static_cast<Eigen::Index>(row.size()) != means_.size()) {
        throw ContractError("FeatureImputer: dimension mismatch");
    }
    Eigen::RowVectorXd out(means_.size());
    for (Eigen::Index j = 0; j < means_.size(); ++j) {
        const auto& v = row[static_cast<std::size_t>(j)];
        out[j] = v ? *v : means_[j];
    }
    return out;
}

Eigen::MatrixXd FeatureImputer::apply(
    const std::vector<std::vector<std::optional<double>>>& rows) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), means_.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = apply(rows[i]);
    return out;
}

}  // namespace balbid
