#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

namespace balbid::power {

/// Quantile (pinball) loss max{(1-a)(q-y), a(y-q)}.
double pinball_loss(double q, double y, double alpha);

struct BoostingParams {
    int n_trees = 500;
    int max_depth = 3;
    double learning_rate = 0.05;
    double subsample = 0.5;
    int min_leaf = 10;
    int max_bins = 64;
};

struct TreeNode {
    int feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;  ///< x <= threshold goes left
    int left = -1;
    int right = -1;
    double value = 0.0;  ///< leaf increment, already scaled by the learning rate
};

struct Tree {
    std::vector<TreeNode> nodes;
    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct QuantileEnsemble {
    double level = 0.5;
    double init = 0.0;  ///< unconditional training quantile
    std::vector<Tree> trees;
    std::vector<double> train_loss;  ///< mean training pinball loss after each tree

    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// One boosted ensemble per quantile level.
struct BoostedQuantileModel {
    static constexpr int kFormatVersion = 1;

    std::vector<std::string> feature_names;
    BoostingParams params;
    double e_max = 0.0;
    std::uint64_t seed = 0;
    bool constant_target = false;
    std::vector<QuantileEnsemble> ensembles;

    std::vector<double> levels() const;
};

/// Predictive distribution as quantiles, non-decreasing in level and inside
/// [0, E_max].
struct QuantileForecast {
    std::vector<double> levels;
    std::vector<double> values;

    /// Linear interpolation in the level between adjacent grid quantiles;
    /// levels outside the grid clamp to the end quantiles.
    double at(double alpha) const;
};

/// Gradient boosting on pinball loss with depth-limited regression trees.
/// Each tree is grown on the negative gradient of a row subsample; leaf
/// values are the level-quantile of the leaf's residuals.
///
/// Requires >= 200 rows and y in [0, e_max]. A constant target yields a
/// constant model (flagged).
BoostedQuantileModel fit_quantile_model(const Eigen::MatrixXd& features, std::span<const double> y,
                                        std::span<const double> levels,
                                        const BoostingParams& params, std::uint64_t seed,
                                        double e_max, std::vector<std::string> feature_names = {});

/// Predicts every level, clips to [0, E_max] and sorts to remove crossings.
QuantileForecast predict_quantiles(const BoostedQuantileModel& model,
                                   const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Sorts values (monotone rearrangement) and clips them to [0, e_max].
QuantileForecast rearrange(std::vector<double> levels, std::vector<double> values, double e_max);

nlohmann::json to_json(const BoostedQuantileModel& model);
BoostedQuantileModel model_from_json(const nlohmann::json& j);

}  // namespace balbid::power
