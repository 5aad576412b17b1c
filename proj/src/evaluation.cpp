#include "balbid/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "balbid/error.hpp"

namespace balbid::evaluation {

namespace {

void check_pairs(std::span<const double> forecasts, std::span<const int> outcomes, const char* who) {
    if (forecasts.size() != outcomes.size()) {
        throw ContractError(fmt::format("{}: forecasts and outcomes differ in length", who));
    }
    if (forecasts.empty()) throw ContractError(fmt::format("{}: empty input", who));
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        if (!(forecasts[i] >= 0.0 && forecasts[i] <= 1.0)) {
            throw ContractError(fmt::format("{}: forecast {} outside [0, 1]", who, forecasts[i]));
        }
        if (outcomes[i] != 0 && outcomes[i] != 1) {
            throw ContractError(fmt::format("{}: outcome must be 0 or 1", who));
        }
    }
}

}  // namespace

BrierReport brier(std::span<const double> forecasts, std::span<const int> outcomes) {
    check_pairs(forecasts, outcomes, "brier");
    BrierReport r;
    r.n = forecasts.size();
    const double n = static_cast<double>(r.n);
    constexpr int steps = kBrierBins - 1;

    std::vector<std::size_t> count(kBrierBins, 0), positives(kBrierBins, 0);
    std::vector<double> forecast_sum(kBrierBins, 0.0);
    double raw = 0.0, snapped = 0.0;
    std::size_t total_pos = 0;
    for (std::size_t i = 0; i < r.n; ++i) {
        const double f = forecasts[i];
        const int o = outcomes[i];
        const auto k = static_cast<std::size_t>(std::lround(f * steps));
        const double centre = static_cast<double>(k) / steps;
        raw += (f - o) * (f - o);
        snapped += (centre - o) * (centre - o);
        ++count[k];
        positives[k] += static_cast<std::size_t>(o);
        forecast_sum[k] += f;
        total_pos += static_cast<std::size_t>(o);
    }
    r.brier_raw = raw / n;
    r.brier_score = snapped / n;
    r.base_rate = static_cast<double>(total_pos) / n;
    r.uncertainty = r.base_rate * (1.0 - r.base_rate);

    double rel = 0.0, res = 0.0;
    for (int k = 0; k < kBrierBins; ++k) {
        BrierBin b;
        b.centre = static_cast<double>(k) / steps;
        b.n = count[static_cast<std::size_t>(k)];
        if (b.n > 0) {
            const double nk = static_cast<double>(b.n);
            b.mean_forecast = forecast_sum[static_cast<std::size_t>(k)] / nk;
            b.observed_frequency = static_cast<double>(positives[static_cast<std::size_t>(k)]) / nk;
            rel += nk * (b.centre - b.observed_frequency) * (b.centre - b.observed_frequency);
            res += nk * (b.observed_frequency - r.base_rate) * (b.observed_frequency - r.base_rate);
        }
        r.bins.push_back(b);
    }
    r.reliability = rel / n;
    r.resolution = res / n;
    return r;
}

RocCurve roc(std::span<const double> forecasts, std::span<const int> outcomes) {
    check_pairs(forecasts, outcomes, "roc");
    const std::size_t pos = static_cast<std::size_t>(std::count(outcomes.begin(), outcomes.end(), 1));
    const std::size_t neg = outcomes.size() - pos;
    if (pos == 0 || neg == 0) throw ContractError("roc: both outcome classes are required");

    std::vector<std::size_t> order(forecasts.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return forecasts[a] > forecasts[b]; });

    RocCurve c;
    c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = forecasts[order[i]];
        // All forecasts equal to the threshold switch to positive together.
        for (; i < order.size() && forecasts[order[i]] == t; ++i) {
            (outcomes[order[i]] == 1 ? tp : fp) += 1;
        }
        c.points.push_back({t, static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos)});
    }
    for (std::size_t i = 1; i < c.points.size(); ++i) {
        const auto& a = c.points[i - 1];
        const auto& b = c.points[i];
        c.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    return c;
}

double var_alpha(std::span<const double> revenues, double alpha) {
    if (revenues.empty()) throw ContractError("var_alpha: empty input");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("var_alpha: alpha outside (0, 1)");
    std::vector<double> v(revenues.begin(), revenues.end());
    std::sort(v.begin(), v.end());
    const double h = static_cast<double>(v.size() - 1) * alpha;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double mean_abs_imbalance(std::span<const double> offers, std::span<const double> generated,
                          double e_max) {
    if (offers.size() != generated.size()) {
        throw ContractError("mean_abs_imbalance: offers and generation differ in length");
    }
    if (offers.empty()) throw ContractError("mean_abs_imbalance: empty input");
    if (!(e_max > 0.0)) throw ContractError("mean_abs_imbalance: E_max must be positive");
    double s = 0.0;
    for (std::size_t i = 0; i < offers.size(); ++i) s += std::abs(offers[i] - generated[i]);
    return 100.0 * s / static_cast<double>(offers.size()) / e_max;
}

RiskReport risk_report(std::span<const double> gross, std::span<const double> costs,
                       std::span<const double> offers, std::span<const double> generated,
                       double e_max, double var_level) {
    const std::size_t n = gross.size();
    if (costs.size() != n || offers.size() != n || generated.size() != n) {
        throw ContractError("risk_report: inputs differ in length");
    }
    if (n == 0) throw ContractError("risk_report: no settled periods");
    RiskReport r;
    r.n_periods = n;
    r.var_level = var_level;
    std::vector<double> revenue(n);
    for (std::size_t i = 0; i < n; ++i) {
        r.gross_revenue += gross[i];
        r.imbalance_cost += costs[i];
        r.total_energy += generated[i];
        revenue[i] = gross[i] - costs[i];
    }
    r.total_revenue = r.gross_revenue - r.imbalance_cost;
    r.normalised_revenue = r.total_energy > 0.0 ? r.total_revenue / r.total_energy : 0.0;
    r.var = var_alpha(revenue, var_level);
    r.mean_abs_imbalance_pct = mean_abs_imbalance(offers, generated, e_max);
    return r;
}

nlohmann::json to_json(const BrierReport& r) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : r.bins) {
        bins.push_back({{"centre", b.centre},
                        {"n", b.n},
                        {"mean_forecast", b.mean_forecast},
                        {"observed_frequency", b.observed_frequency}});
    }
    return {{"n", r.n},
            {"brier_raw", r.brier_raw},
            {"brier_score", r.brier_score},
            {"reliability", r.reliability},
            {"resolution", r.resolution},
            {"uncertainty", r.uncertainty},
            {"base_rate", r.base_rate},
            {"bins", bins}};
}

nlohmann::json to_json(const RocCurve& r) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : r.points) pts.push_back({p.fpr, p.tpr});
    return {{"auc", r.auc}, {"points", pts}};
}

nlohmann::json to_json(const RiskReport& r) {
    return {{"n_periods", r.n_periods},
            {"gross_revenue", r.gross_revenue},
            {"imbalance_cost", r.imbalance_cost},
            {"total_revenue", r.total_revenue},
            {"total_energy", r.total_energy},
            {"normalised_revenue", r.normalised_revenue},
            {"var_level", r.var_level},
            {"var", r.var},
            {"mean_abs_imbalance_pct", r.mean_abs_imbalance_pct}};
}

std::string roc_csv_rows(const std::string& method, const RocCurve& r) {
    std::string out;
    for (const auto& p : r.points) {
        out += fmt::format("{},{},{},{}\n", method, std::isinf(p.threshold) ? std::string("inf")
                                                                             : fmt::format("{}", p.threshold),
                           p.fpr, p.tpr);
    }
    return out;
}

}  // namespace balbid::evaluation
