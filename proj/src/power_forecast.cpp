#include "balbid/power_forecast.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "balbid/error.hpp"

namespace balbid::power {

double pinball_loss(double q, double y, double alpha) {
    return std::max((1.0 - alpha) * (q - y), alpha * (y - q));
}

double Tree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
}

double QuantileEnsemble::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    double v = init;
    for (const auto& t : trees) v += t.predict(x);
    return v;
}

std::vector<double> BoostedQuantileModel::levels() const {
    std::vector<double> out;
    for (const auto& e : ensembles) out.push_back(e.level);
    return out;
}

namespace {

// Index of the empirical alpha-quantile among m sorted values: the smallest
// element with at least alpha*m values at or below it, which minimises the
// empirical pinball loss.
std::size_t quantile_rank(double alpha, std::size_t m) {
    const double pos = std::ceil(alpha * static_cast<double>(m) - 1e-12);
    const auto k = static_cast<std::size_t>(std::max(pos, 1.0)) - 1;
    return std::min(k, m - 1);
}

double empirical_quantile(std::vector<double> v, double alpha) {
    const std::size_t k = quantile_rank(alpha, v.size());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

struct BinnedFeatures {
    std::vector<std::vector<double>> cuts;        // per feature, ascending
    std::vector<std::vector<std::uint16_t>> bins;  // per feature, per row
};

BinnedFeatures bin_features(const Eigen::MatrixXd& x, int max_bins) {
    BinnedFeatures b;
    const auto n = static_cast<std::size_t>(x.rows());
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        std::vector<double> v(x.col(f).data(), x.col(f).data() + n);
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        std::vector<double> cuts;
        if (v.size() <= static_cast<std::size_t>(max_bins)) {
            cuts.assign(v.begin(), v.end() - 1);
        } else {
            for (int j = 1; j < max_bins; ++j) {
                const auto idx = static_cast<std::size_t>(
                    std::floor(static_cast<double>(j) * static_cast<double>(v.size()) / max_bins));
                cuts.push_back(v[std::min(idx, v.size() - 1)]);
            }
            cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        }
        std::vector<std::uint16_t> rb(n);
        for (std::size_t i = 0; i < n; ++i) {
            rb[i] = static_cast<std::uint16_t>(
                std::lower_bound(cuts.begin(), cuts.end(), x(static_cast<Eigen::Index>(i), f)) -
                cuts.begin());
        }
        b.cuts.push_back(std::move(cuts));
        b.bins.push_back(std::move(rb));
    }
    return b;
}

class TreeBuilder {
public:
    TreeBuilder(const BinnedFeatures& bins, const std::vector<double>& grad,
                const std::vector<double>& resid, double alpha, const BoostingParams& params)
        : bins_(bins), grad_(grad), resid_(resid), alpha_(alpha), params_(params) {}

    Tree build(std::vector<std::size_t> rows) {
        tree_ = Tree{};
        split_bins_.clear();
        grow(std::move(rows), 0);
        return tree_;
    }

    // Leaf increment for a row, using the training bins.
    double apply(std::size_t row) const {
        int i = 0;
        while (tree_.nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const auto& n = tree_.nodes[static_cast<std::size_t>(i)];
            const auto b = bins_.bins[static_cast<std::size_t>(n.feature)][row];
            i = b <= split_bins_[static_cast<std::size_t>(i)] ? n.left : n.right;
        }
        return tree_.nodes[static_cast<std::size_t>(i)].value;
    }

private:
    int grow(std::vector<std::size_t> rows, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        split_bins_.push_back(0);

        int best_feature = -1;
        std::uint16_t best_bin = 0;
        double best_gain = 1e-12;
        const auto min_leaf = static_cast<std::size_t>(std::max(params_.min_leaf, 1));
        if (depth < params_.max_depth && rows.size() >= 2 * min_leaf) {
            double g_total = 0.0;
            for (auto r : rows) g_total += grad_[r];
            const double n_total = static_cast<double>(rows.size());
            for (std::size_t f = 0; f < bins_.cuts.size(); ++f) {
                const std::size_t nb = bins_.cuts[f].size() + 1;
                if (nb < 2) continue;
                std::vector<double> g(nb, 0.0);
                std::vector<std::size_t> c(nb, 0);
                const auto& fb = bins_.bins[f];
                for (auto r : rows) {
                    g[fb[r]] += grad_[r];
                    ++c[fb[r]];
                }
                double gl = 0.0;
                std::size_t cl = 0;
                for (std::size_t b = 0; b + 1 < nb; ++b) {
                    gl += g[b];
                    cl += c[b];
                    const std::size_t cr = rows.size() - cl;
                    if (cl < min_leaf) continue;
                    if (cr < min_leaf) break;
                    const double gr = g_total - gl;
                    const double gain = gl * gl / static_cast<double>(cl) +
                                        gr * gr / static_cast<double>(cr) -
                                        g_total * g_total / n_total;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_feature = static_cast<int>(f);
                        best_bin = static_cast<std::uint16_t>(b);
                    }
                }
            }
        }

        if (best_feature < 0) {
            std::vector<double> r;
            r.reserve(rows.size());
            for (auto i : rows) r.push_back(resid_[i]);
            tree_.nodes[static_cast<std::size_t>(id)].value =
                params_.learning_rate * empirical_quantile(std::move(r), alpha_);
            return id;
        }

        std::vector<std::size_t> left, right;
        const auto& fb = bins_.bins[static_cast<std::size_t>(best_feature)];
        for (auto r : rows) (fb[r] <= best_bin ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        split_bins_[static_cast<std::size_t>(id)] = best_bin;
        const int l = grow(std::move(left), depth + 1);
        const int r = grow(std::move(right), depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = best_feature;
        node.threshold = bins_.cuts[static_cast<std::size_t>(best_feature)][best_bin];
        node.left = l;
        node.right = r;
        return id;
    }

    const BinnedFeatures& bins_;
    const std::vector<double>& grad_;
    const std::vector<double>& resid_;
    double alpha_;
    const BoostingParams& params_;
    Tree tree_;
    std::vector<std::uint16_t> split_bins_;
};

}  // namespace

BoostedQuantileModel fit_quantile_model(const Eigen::MatrixXd& features, std::span<const double> y,
                                        std::span<const double> levels,
                                        const BoostingParams& params, std::uint64_t seed,
                                        double e_max, std::vector<std::string> feature_names) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (features.cols() == 0) throw FitError("fit_quantile_model: empty feature set");
    if (n != y.size()) throw ContractError("fit_quantile_model: feature rows and targets differ");
    if (n < 200) {
        throw FitError(fmt::format("fit_quantile_model: {} training rows (need >= 200)", n));
    }
    if (!(e_max > 0.0)) throw ContractError("fit_quantile_model: E_max must be positive");
    for (double v : y) {
        if (!(v >= 0.0 && v <= e_max)) {
            throw ContractError("fit_quantile_model: target outside [0, E_max]");
        }
    }
    if (!features.allFinite()) throw ContractError("fit_quantile_model: non-finite feature");
    if (levels.empty()) throw ContractError("fit_quantile_model: no quantile levels");
    for (double a : levels) {
        if (!(a > 0.0 && a < 1.0)) throw ContractError("fit_quantile_model: level outside (0, 1)");
    }
    if (params.n_trees < 0 || params.max_depth < 0 || !(params.learning_rate > 0.0) ||
        !(params.subsample > 0.0 && params.subsample <= 1.0) || params.max_bins < 2 ||
        params.max_bins > 65535) {
        throw ContractError("fit_quantile_model: invalid boosting parameters");
    }

    BoostedQuantileModel model;
    model.params = params;
    model.e_max = e_max;
    model.seed = seed;
    model.feature_names = std::move(feature_names);
    if (model.feature_names.empty()) {
        for (Eigen::Index f = 0; f < features.cols(); ++f) {
            model.feature_names.push_back(fmt::format("x{}", f));
        }
    }

    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    model.constant_target = *lo == *hi;
    if (model.constant_target) {
        for (double a : levels) model.ensembles.push_back(QuantileEnsemble{a, *lo, {}, {}});
        return model;
    }

    const BinnedFeatures bins = bin_features(features, params.max_bins);
    const std::vector<double> target(y.begin(), y.end());
    const auto bag_size = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(params.subsample * static_cast<double>(n))));

    for (std::size_t li = 0; li < levels.size(); ++li) {
        const double alpha = levels[li];
        QuantileEnsemble ens;
        ens.level = alpha;
        ens.init = empirical_quantile(target, alpha);
        std::vector<double> f(n, ens.init), grad(n), resid(n);
        std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * (li + 1));
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);

        for (int t = 0; t < params.n_trees; ++t) {
            for (std::size_t i = 0; i < n; ++i) {
                resid[i] = target[i] - f[i];
                grad[i] = target[i] < f[i] ? alpha - 1.0 : alpha;
            }
            std::vector<std::size_t> bag;
            if (bag_size < n) {
                // Partial Fisher-Yates: the first bag_size entries are a
                // uniform sample without replacement.
                for (std::size_t i = 0; i < bag_size; ++i) {
                    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
                    std::swap(perm[i], perm[pick(rng)]);
                }
                bag.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(bag_size));
                std::sort(bag.begin(), bag.end());
            } else {
                bag.resize(n);
                std::iota(bag.begin(), bag.end(), 0);
            }
            TreeBuilder builder(bins, grad, resid, alpha, params);
            ens.trees.push_back(builder.build(std::move(bag)));
            double loss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                f[i] += builder.apply(i);
                loss += pinball_loss(f[i], target[i], alpha);
            }
            ens.train_loss.push_back(loss / static_cast<double>(n));
        }
        model.ensembles.push_back(std::move(ens));
    }
    return model;
}

QuantileForecast rearrange(std::vector<double> levels, std::vector<double> values, double e_max) {
    if (levels.size() != values.size()) throw ContractError("rearrange: size mismatch");
    for (double& v : values) v = std::clamp(v, 0.0, e_max);
    std::sort(values.begin(), values.end());
    // Levels are kept in ascending order alongside the sorted values.
    std::vector<std::size_t> order(levels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return levels[a] < levels[b]; });
    QuantileForecast q;
    for (auto i : order) q.levels.push_back(levels[i]);
    q.values = std::move(values);
    return q;
}

QuantileForecast predict_quantiles(const BoostedQuantileModel& model,
                                   const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    if (x.size() != static_cast<Eigen::Index>(model.feature_names.size())) {
        throw ContractError(fmt::format("predict_quantiles: expected {} features, got {}",
                                        model.feature_names.size(), x.size()));
    }
    std::vector<double> values;
    values.reserve(model.ensembles.size());
    for (const auto& e : model.ensembles) values.push_back(e.predict(x));
    return rearrange(model.levels(), std::move(values), model.e_max);
}

double QuantileForecast::at(double alpha) const {
    if (levels.empty()) throw ContractError("QuantileForecast::at: empty forecast");
    // Complementary levels such as 1 - 0.99 miss the grid by one ulp; snap them.
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (std::abs(alpha - levels[i]) <= 1e-12) return values[i];
    }
    if (alpha <= levels.front()) return values.front();
    if (alpha >= levels.back()) return values.back();
    const auto it = std::upper_bound(levels.begin(), levels.end(), alpha);
    const auto hi = static_cast<std::size_t>(it - levels.begin());
    const std::size_t lo = hi - 1;
    if (levels[lo] == alpha) return values[lo];
    const double w = (alpha - levels[lo]) / (levels[hi] - levels[lo]);
    return values[lo] + w * (values[hi] - values[lo]);
}

nlohmann::json to_json(const BoostedQuantileModel& model) {
    nlohmann::json j;
    j["format"] = "balbid-gbq";
    j["version"] = BoostedQuantileModel::kFormatVersion;
    j["feature_names"] = model.feature_names;
    j["e_max"] = model.e_max;
    j["seed"] = model.seed;
    j["constant_target"] = model.constant_target;
    j["params"] = {{"n_trees", model.params.n_trees},
                   {"max_depth", model.params.max_depth},
                   {"learning_rate", model.params.learning_rate},
                   {"subsample", model.params.subsample},
                   {"min_leaf", model.params.min_leaf},
                   {"max_bins", model.params.max_bins}};
    nlohmann::json ensembles = nlohmann::json::array();
    for (const auto& e : model.ensembles) {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& t : e.trees) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& n : t.nodes) {
                nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
            }
            trees.push_back(nodes);
        }
        ensembles.push_back({{"level", e.level}, {"init", e.init}, {"trees", trees}});
    }
    j["ensembles"] = ensembles;
    return j;
}

BoostedQuantileModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "balbid-gbq") throw DataError("not a boosted quantile model dump");
    if (j.value("version", 0) != BoostedQuantileModel::kFormatVersion) {
        throw DataError("unsupported boosted quantile model version");
    }
    BoostedQuantileModel m;
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.e_max = j.at("e_max").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.constant_target = j.at("constant_target").get<bool>();
    const auto& p = j.at("params");
    m.params.n_trees = p.at("n_trees").get<int>();
    m.params.max_depth = p.at("max_depth").get<int>();
    m.params.learning_rate = p.at("learning_rate").get<double>();
    m.params.subsample = p.at("subsample").get<double>();
    m.params.min_leaf = p.at("min_leaf").get<int>();
    m.params.max_bins = p.at("max_bins").get<int>();
    for (const auto& e : j.at("ensembles")) {
        QuantileEnsemble ens;
        ens.level = e.at("level").get<double>();
        ens.init = e.at("init").get<double>();
        for (const auto& t : e.at("trees")) {
            Tree tree;
            for (const auto& n : t) {
                tree.nodes.push_back(TreeNode{n.at(0).get<int>(), n.at(1).get<double>(),
                                              n.at(2).get<int>(), n.at(3).get<int>(),
                                              n.at(4).get<double>()});
            }
            ens.trees.push_back(std::move(tree));
        }
        m.ensembles.push_back(std::move(ens));
    }
    return m;
}

}  // namespace balbid::power
