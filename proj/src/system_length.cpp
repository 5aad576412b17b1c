#include "balbid/system_length.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

#include "balbid/error.hpp"

namespace balbid::system_length {

double logistic_link(double score) {
    // Split by sign so exp never overflows.
    if (score >= 0.0) return 1.0 / (1.0 + std::exp(-score));
    const double e = std::exp(score);
    return e / (1.0 + e);
}

namespace {

struct IrlsResult {
    Eigen::VectorXd beta;
    Eigen::MatrixXd information;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
};

double log_likelihood(const Eigen::VectorXd& eta, std::span<const int> y) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        // log(1 + exp(eta)) computed stably.
        const double e = eta[i];
        const double softplus = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += y[static_cast<std::size_t>(i)] * e - softplus;
    }
    return ll;
}

// Newton-Raphson / IRLS on the penalised log-likelihood
//   l(beta) - 0.5 * sum_j penalty_j * beta_j^2.
IrlsResult irls(const Eigen::MatrixXd& x, std::span<const int> y, const Eigen::VectorXd& penalty,
                const LogisticOptions& opt) {
    const Eigen::Index p = x.cols();
    IrlsResult r;
    r.beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd yv(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) yv[i] = y[static_cast<std::size_t>(i)];

    auto objective = [&](const Eigen::VectorXd& b) {
        return log_likelihood(x * b, y) - 0.5 * (penalty.array() * b.array().square()).sum();
    };
    double obj = objective(r.beta);

    for (int it = 1; it <= opt.max_iterations; ++it) {
        r.iterations = it;
        const Eigen::VectorXd eta = x * r.beta;
        Eigen::VectorXd mu(eta.size()), w(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            mu[i] = logistic_link(eta[i]);
            w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-300);
        }
        const Eigen::VectorXd grad = x.transpose() * (yv - mu) - penalty.cwiseProduct(r.beta);
        Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
        info.diagonal() += penalty;
        const Eigen::VectorXd step = info.ldlt().solve(grad);
        if (!step.allFinite()) break;

        // Step halving keeps the objective monotone.
        double t = 1.0;
        Eigen::VectorXd next = r.beta + step;
        double next_obj = objective(next);
        for (int h = 0; h < 30 && !(next_obj >= obj); ++h) {
            t *= 0.5;
            next = r.beta + t * step;
            next_obj = objective(next);
        }
        if (!(next_obj >= obj)) break;
        const double change = std::abs(next_obj - obj);
        r.beta = next;
        const double prev = obj;
        obj = next_obj;
        if (change <= opt.tolerance * std::max(std::abs(prev), 1e-300)) {
            r.converged = true;
            break;
        }
    }

    const Eigen::VectorXd eta = x * r.beta;
    Eigen::VectorXd w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double mu = logistic_link(eta[i]);
        w[i] = mu * (1.0 - mu);
    }
    r.information = x.transpose() * w.asDiagonal() * x;
    r.information.diagonal() += penalty;
    r.log_likelihood = log_likelihood(eta, y);
    return r;
}

}  // namespace

LogisticModel fit_logistic(const Eigen::MatrixXd& features, std::span<const int> outcomes,
                           const LogisticOptions& options) {
    const Eigen::Index n = features.rows();
    const Eigen::Index k = features.cols();
    if (static_cast<std::size_t>(n) != outcomes.size()) {
        throw ContractError("fit_logistic: feature rows and outcomes differ in length");
    }
    if (n < 10 * (k + 1)) {
        throw FitError(fmt::format("fit_logistic: {} observations for {} coefficients (need >= {})",
                                   n, k + 1, 10 * (k + 1)));
    }
    std::size_t positives = 0;
    for (int o : outcomes) {
        if (o != 0 && o != 1) throw ContractError("fit_logistic: outcomes must be 0 or 1");
        positives += static_cast<std::size_t>(o);
    }
    if (positives == 0 || positives == outcomes.size()) {
        throw FitError("fit_logistic: training outcomes contain a single class");
    }

    LogisticModel m;
    m.feature_mean = features.colwise().mean().transpose();
    m.feature_scale = Eigen::VectorXd::Ones(k);
    Eigen::VectorXd penalty = Eigen::VectorXd::Zero(k + 1);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double var = (features.col(j).array() - m.feature_mean[j]).square().sum() /
                           static_cast<double>(n);
        if (var > 0.0) {
            m.feature_scale[j] = std::sqrt(var);
        } else {
            penalty[j + 1] = 1.0;  // constant column: pin its coefficient to zero
        }
    }

    Eigen::MatrixXd x(n, k + 1);
    x.col(0).setOnes();
    for (Eigen::Index j = 0; j < k; ++j) {
        x.col(j + 1) = (features.col(j).array() - m.feature_mean[j]) / m.feature_scale[j];
    }

    IrlsResult fit = irls(x, outcomes, penalty, options);
    const bool diverged = !fit.beta.allFinite() ||
                          fit.beta.tail(k).cwiseAbs().maxCoeff() > options.separation_bound ||
                          !fit.converged;
    if (k > 0 && diverged) {
        Eigen::VectorXd ridge = penalty;
        for (Eigen::Index j = 1; j <= k; ++j) ridge[j] = std::max(ridge[j], options.ridge);
        fit = irls(x, outcomes, ridge, options);
        m.separation = true;
    }
    if (!fit.beta.allFinite()) throw FitError("fit_logistic: coefficients are not finite");

    m.beta = fit.beta;
    m.covariance = fit.information.ldlt().solve(Eigen::MatrixXd::Identity(k + 1, k + 1));
    m.iterations = fit.iterations;
    m.log_likelihood = fit.log_likelihood;
    m.converged = fit.converged;
    return m;
}

namespace {

// Linear map from standardised-scale coefficients to raw-scale coefficients.
Eigen::MatrixXd raw_map(const LogisticModel& m) {
    const Eigen::Index k = m.feature_mean.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k + 1, k + 1);
    a(0, 0) = 1.0;
    for (Eigen::Index j = 0; j < k; ++j) {
        a(0, j + 1) = -m.feature_mean[j] / m.feature_scale[j];
        a(j + 1, j + 1) = 1.0 / m.feature_scale[j];
    }
    return a;
}

}  // namespace

Eigen::VectorXd LogisticModel::raw_coefficients() const { return raw_map(*this) * beta; }

Eigen::VectorXd LogisticModel::raw_standard_errors() const {
    const Eigen::MatrixXd a = raw_map(*this);
    return (a * covariance * a.transpose()).diagonal().cwiseSqrt();
}

double predict_phi(const LogisticModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    if (x.size() != model.feature_mean.size()) {
        throw ContractError(fmt::format("predict_phi: expected {} features, got {}",
                                        model.feature_mean.size(), x.size()));
    }
    double score = model.beta[0];
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        score += model.beta[j + 1] * (x[j] - model.feature_mean[j]) / model.feature_scale[j];
    }
    return logistic_link(score);
}

SystemLength deterministic_from_phi(double phi) {
    return phi >= 0.5 ? SystemLength::Short : SystemLength::Long;
}

SystemLength predict_deterministic(const LogisticModel& model,
                                   const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    return deterministic_from_phi(predict_phi(model, x));
}

double empirical_proportion(std::span<const int> outcomes) {
    if (outcomes.empty()) throw ContractError("empirical_proportion: empty group");
    std::size_t shorts = 0;
    for (int o : outcomes) shorts += o != 0 ? 1 : 0;
    return static_cast<double>(shorts) / static_cast<double>(outcomes.size());
}

nlohmann::json to_json(const LogisticModel& model) {
    nlohmann::json j;
    j["period"] = model.period;
    j["feature_names"] = model.feature_names;
    const Eigen::VectorXd raw = model.raw_coefficients();
    j["coefficients"] = std::vector<double>(raw.data(), raw.data() + raw.size());
    j["coefficients_standardised"] =
        std::vector<double>(model.beta.data(), model.beta.data() + model.beta.size());
    j["feature_mean"] = std::vector<double>(model.feature_mean.data(),
                                            model.feature_mean.data() + model.feature_mean.size());
    j["feature_scale"] = std::vector<double>(
        model.feature_scale.data(), model.feature_scale.data() + model.feature_scale.size());
    j["iterations"] = model.iterations;
    j["log_likelihood"] = model.log_likelihood;
    j["converged"] = model.converged;
    j["separation"] = model.separation;
    j["training_span"] = model.train_span;
    return j;
}

}  // namespace balbid::system_length
