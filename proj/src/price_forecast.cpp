#include "balbid/price_forecast.hpp"

#include <fmt/format.h>

#include <cmath>

#include "balbid/error.hpp"

namespace balbid::price {

int balancing_steps(int period) { return period > 20 ? 2 : 1; }

std::vector<std::size_t> leg_positions(const Stream& stream, Leg leg) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const auto& r = *stream[i];
        if (!r.bal_price) continue;
        if ((leg == Leg::up) == r.is_short()) out.push_back(i);
    }
    return out;
}

std::vector<std::optional<settlement::PriceTriple>> reconstruct_realised_triples(
    const Stream& stream) {
    std::vector<std::optional<settlement::PriceTriple>> out(stream.size());
    std::optional<double> last_up, last_down;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const auto& r = *stream[i];
        if (!r.bal_price) continue;
        if (r.is_short()) {
            last_up = *r.bal_price;
        } else {
            last_down = *r.bal_price;
        }
        if (last_up && last_down) {
            out[i] = settlement::PriceTriple{r.da_price, *last_up, *last_down};
        }
    }
    return out;
}

Series day_ahead_series(const Stream& stream) {
    Series s;
    s.reserve(stream.size());
    for (const auto* r : stream) s.emplace_back(r->da_price);
    return s;
}

TripleForecast finalise_triple(const settlement::PriceTriple& raw) {
    TripleForecast f;
    f.raw = raw;
    f.triple = raw;
    if (f.triple.pi_down > f.triple.pi_c) {
        f.triple.pi_down = f.triple.pi_c;
        f.repaired = true;
    }
    if (f.triple.pi_up < f.triple.pi_c) {
        f.triple.pi_up = f.triple.pi_c;
        f.repaired = true;
    }
    if (f.triple.pi_up != f.triple.pi_down) {
        f.phi_hat = settlement::critical_probability(f.triple).value;
    }
    return f;
}

double forecast_series(const ArmaxModel& model, const SeriesHistory& h,
                       const Eigen::RowVectorXd& exog_target, int steps) {
    if (steps != 1 && steps != 2) throw ContractError("forecast_series: steps must be 1 or 2");
    const auto n = static_cast<Eigen::Index>(h.values.size());
    const auto k = static_cast<Eigen::Index>(model.exog.size());
    if (k > 0 && (h.exog.cols() != k || exog_target.size() != k)) {
        throw ContractError("forecast_series: exogenous dimension mismatch");
    }
    const Eigen::MatrixXd hist_exog = k > 0 ? h.exog : Eigen::MatrixXd(n, 0);
    const Eigen::RowVectorXd target = k > 0 ? exog_target : Eigen::RowVectorXd(0);
    if (steps == 2 && n >= 1) {
        const std::span<const std::optional<double>> known(h.values.data(), h.values.size() - 1);
        const ArmaxState state = condition(model, known, hist_exog.topRows(n - 1));
        Eigen::MatrixXd path(2, k);
        path.row(0) = hist_exog.row(n - 1);
        path.row(1) = target;
        return forecast_price(model, state, path, 2);
    }
    const ArmaxState state = condition(model, h.values, hist_exog);
    return forecast_price(model, state, target, 1);
}

TripleForecast forecast_triple(const PriceModelSet& models, const SeriesHistory& day_ahead,
                               const SeriesHistory& up, const SeriesHistory& down,
                               const Eigen::RowVectorXd& exog_target, int period) {
    if (period < 1 || period > kPeriodsPerDay) {
        throw ContractError(fmt::format("forecast_triple: invalid period {}", period));
    }
    const int steps = balancing_steps(period);
    settlement::PriceTriple raw;
    raw.pi_c = forecast_series(models.day_ahead, day_ahead, exog_target, 1);
    raw.pi_up = forecast_series(models.up, up, exog_target, steps);
    raw.pi_down = forecast_series(models.down, down, exog_target, steps);
    return finalise_triple(raw);
}

SimpleBenchmark::SimpleBenchmark(std::span<const SettlementRecord* const> history) {
    for (const auto* r : history) {
        const unsigned month = static_cast<unsigned>(r->date.month());
        auto& cell = by_month_[{month, r->period}];
        auto& pcell = by_period_[r->period];
        cell.c.add(r->da_price);
        pcell.c.add(r->da_price);
        if (r->bal_price) {
            if (r->is_short()) {
                cell.up.add(*r->bal_price);
                pcell.up.add(*r->bal_price);
            } else {
                cell.down.add(*r->bal_price);
                pcell.down.add(*r->bal_price);
            }
        }
    }
}

SimpleBenchmark::Forecast SimpleBenchmark::forecast(unsigned month, int period) const {
    const auto pit = by_period_.find(period);
    if (pit == by_period_.end()) {
        throw ContractError(fmt::format("simple benchmark: no history for period {}", period));
    }
    const Cell* cell = nullptr;
    if (auto it = by_month_.find({month, period}); it != by_month_.end()) cell = &it->second;

    Forecast f;
    auto pick = [&](Acc Cell::*leg, bool& fallback) -> std::optional<double> {
        if (cell) {
            if (auto m = (cell->*leg).mean()) return m;
        }
        fallback = true;
        return (pit->second.*leg).mean();
    };
    const double pi_c = *pick(&Cell::c, f.fallback_c);
    f.triple.pi_c = pi_c;
    f.triple.pi_up = pick(&Cell::up, f.fallback_up).value_or(pi_c);
    f.triple.pi_down = pick(&Cell::down, f.fallback_down).value_or(pi_c);
    return f;
}

nlohmann::json SimpleBenchmark::to_json() const {
    auto cell_json = [](const Cell& c) {
        auto acc = [](const Acc& a) { return nlohmann::json{{"sum", a.sum}, {"n", a.n}}; };
        return nlohmann::json{{"c", acc(c.c)}, {"up", acc(c.up)}, {"down", acc(c.down)}};
    };
    nlohmann::json j;
    for (const auto& [key, cell] : by_month_) {
        j["by_month"][fmt::format("{}/{}", key.first, key.second)] = cell_json(cell);
    }
    for (const auto& [period, cell] : by_period_) {
        j["by_period"][fmt::format("{}", period)] = cell_json(cell);
    }
    return j;
}

SimpleBenchmark::Forecast simple_benchmark(std::span<const SettlementRecord* const> history,
                                           unsigned month, int period) {
    return SimpleBenchmark(history).forecast(month, period);
}

PhiScore score_phi_forecasts(std::span<const double> forecast, std::span<const double> realised) {
    if (forecast.size() != realised.size()) {
        throw ContractError("score_phi_forecasts: length mismatch");
    }
    if (forecast.empty()) throw ContractError("score_phi_forecasts: empty input");
    PhiScore s;
    s.n = forecast.size();
    double sq = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < forecast.size(); ++i) {
        const double e = realised[i] - forecast[i];
        sq += e * e;
        ab += std::abs(e);
    }
    s.rmse = std::sqrt(sq / static_cast<double>(s.n));
    s.mae = ab / static_cast<double>(s.n);
    return s;
}

}  // namespace balbid::price
