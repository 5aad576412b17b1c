#include "balbid/backtest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "balbid/error.hpp"

namespace balbid::backtest {

using strategy::StrategyKind;
using strategy::StrategyParams;

const char* to_string(Holdout h) {
    switch (h) {
        case Holdout::block: return "block";
        case Holdout::leave_one_day_out: return "leave_one_day_out";
        case Holdout::split: return "split";
    }
    return "block";
}

const char* to_string(Source s) {
    switch (s) {
        case Source::perfect: return "perfect";
        case Source::simple: return "simple";
        case Source::advanced: return "advanced";
    }
    return "advanced";
}

namespace {

Holdout parse_holdout(const std::string& s) {
    if (s == "block") return Holdout::block;
    if (s == "leave_one_day_out") return Holdout::leave_one_day_out;
    if (s == "split") return Holdout::split;
    throw ConfigError(fmt::format("backtest.holdout: unknown scheme '{}'", s));
}

Source parse_source(const std::string& key, const std::string& s) {
    if (s == "perfect") return Source::perfect;
    if (s == "simple") return Source::simple;
    if (s == "advanced") return Source::advanced;
    throw ConfigError(fmt::format("{}: expected perfect, simple or advanced, got '{}'", key, s));
}

const std::set<std::string> kPowerFeatures{"wind_fc", "load_fc", "margin_fc", "solar_fc",
                                           "period", "gen_lag2d"};

const std::set<std::string> kKnownKeys{
    "data.path",          "data.e_max",
    "backtest.holdout",   "backtest.block_days",
    "backtest.train_fraction", "backtest.var_level",
    "forecast.system_length",  "forecast.price",
    "forecast.power",     "strategy.kind",
    "strategy.nu",        "strategy.eta",
    "strategy.alpha_prime", "price.max_p",
    "price.max_q",        "price.max_iterations",
    "power.n_trees",      "power.max_depth",
    "power.learning_rate", "power.subsample",
    "power.min_leaf",     "power.max_bins",
    "power.features",     "output.dir",
    "seed",               "holidays",
};

void check_keys(const KeyValueConfig& cfg) {
    for (const auto& [key, value] : cfg.entries()) {
        if (key.rfind("synth.", 0) == 0) continue;
        if (!kKnownKeys.count(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
}

std::vector<StrategyParams> expand_strategies(const KeyValueConfig& cfg) {
    std::vector<std::string> kinds = cfg.get_strings("strategy.kind");
    if (kinds.empty()) kinds = {"min_imbalance", "probabilistic_zero_max"};
    std::vector<StrategyParams> out;
    auto values = [&](const char* key) {
        const auto v = cfg.get_doubles(key);
        if (v.empty()) throw ConfigError(fmt::format("{} must list at least one value", key));
        return v;
    };
    for (const auto& name : kinds) {
        const StrategyKind kind = strategy::parse_strategy_kind(name);
        switch (kind) {
            case StrategyKind::additive:
                for (double v : values("strategy.nu")) out.push_back(StrategyParams::additive(v));
                break;
            case StrategyKind::multiplicative:
                for (double v : values("strategy.eta")) out.push_back(StrategyParams::multiplicative(v));
                break;
            case StrategyKind::quantile:
                for (double v : values("strategy.alpha_prime")) out.push_back(StrategyParams::quantile(v));
                break;
            default:
                out.push_back(StrategyParams::make(kind));
        }
    }
    return out;
}

}  // namespace

BacktestConfig::BacktestConfig() {
    price_options.max_p = 2;
    price_options.max_q = 2;
    strategies = {StrategyParams::make(StrategyKind::min_imbalance),
                  StrategyParams::make(StrategyKind::probabilistic_zero_max)};
}

BacktestConfig BacktestConfig::from_config(const KeyValueConfig& cfg) {
    check_keys(cfg);
    BacktestConfig c;
    if (auto p = cfg.get("data.path")) {
        c.data_path = *p;
        c.data_e_max = cfg.get_double("data.e_max", 0.0);
    }
    c.synth = SynthConfig::from_config(cfg);
    c.holdout = parse_holdout(cfg.get_string("backtest.holdout", to_string(c.holdout)));
    c.block_days = static_cast<int>(cfg.get_int("backtest.block_days", c.block_days));
    c.train_fraction = cfg.get_double("backtest.train_fraction", c.train_fraction);
    c.var_level = cfg.get_double("backtest.var_level", c.var_level);
    c.system_length = parse_source("forecast.system_length",
                                   cfg.get_string("forecast.system_length", to_string(c.system_length)));
    c.price = parse_source("forecast.price", cfg.get_string("forecast.price", to_string(c.price)));
    c.power = parse_source("forecast.power", cfg.get_string("forecast.power", to_string(c.power)));
    c.strategies = expand_strategies(cfg);
    c.price_options.max_p = static_cast<int>(cfg.get_int("price.max_p", c.price_options.max_p));
    c.price_options.max_q = static_cast<int>(cfg.get_int("price.max_q", c.price_options.max_q));
    c.price_options.max_iterations =
        static_cast<int>(cfg.get_int("price.max_iterations", c.price_options.max_iterations));
    auto& pp = c.power_params;
    pp.n_trees = static_cast<int>(cfg.get_int("power.n_trees", pp.n_trees));
    pp.max_depth = static_cast<int>(cfg.get_int("power.max_depth", pp.max_depth));
    pp.learning_rate = cfg.get_double("power.learning_rate", pp.learning_rate);
    pp.subsample = cfg.get_double("power.subsample", pp.subsample);
    pp.min_leaf = static_cast<int>(cfg.get_int("power.min_leaf", pp.min_leaf));
    pp.max_bins = static_cast<int>(cfg.get_int("power.max_bins", pp.max_bins));
    if (cfg.contains("power.features")) c.power_features = cfg.get_strings("power.features");
    const long seed = cfg.get_int("seed", static_cast<long>(c.seed));
    if (seed < 0) throw ConfigError("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    c.output_dir = cfg.get_string("output.dir", c.output_dir.string());
    c.validate();
    return c;
}

void BacktestConfig::validate() const {
    if (data_path) {
        if (!(data_e_max > 0.0)) throw ConfigError("data.e_max must be positive when data.path is set");
    } else {
        synth.validate();
    }
    if (block_days < 1) throw ConfigError("backtest.block_days must be at least 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("backtest.train_fraction must lie in (0, 1)");
    }
    if (!(var_level > 0.0 && var_level < 1.0)) throw ConfigError("backtest.var_level must lie in (0, 1)");
    if (strategies.empty()) throw ConfigError("no strategies configured");
    for (const auto& s : strategies) s.validate();
    if (price_options.max_p < 0 || price_options.max_q < 0) {
        throw ConfigError("price.max_p and price.max_q must be non-negative");
    }
    if (price_options.max_iterations < 1) throw ConfigError("price.max_iterations must be positive");
    const auto& pp = power_params;
    if (pp.n_trees < 1 || pp.max_depth < 1 || !(pp.learning_rate > 0.0) ||
        !(pp.subsample > 0.0 && pp.subsample <= 1.0) || pp.min_leaf < 1 || pp.max_bins < 2 ||
        pp.max_bins > 65535) {
        throw ConfigError("invalid power.* boosting parameters");
    }
    if (power_features.empty()) throw ConfigError("power.features must not be empty");
    for (const auto& f : power_features) {
        if (!kPowerFeatures.count(f)) throw ConfigError(fmt::format("unknown power feature '{}'", f));
    }
}

std::vector<StrategyParams> parse_sweep(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("sweep: expected name=start:stop:step");
    const std::string name = trim(text.substr(0, eq));
    const auto parts = split(text.substr(eq + 1), ':');
    if (parts.size() != 3) throw ConfigError("sweep: expected name=start:stop:step");
    double v[3];
    for (int i = 0; i < 3; ++i) {
        const std::string t = trim(parts[static_cast<std::size_t>(i)]);
        char* end = nullptr;
        v[i] = std::strtod(t.c_str(), &end);
        if (t.empty() || *end != '\0' || !std::isfinite(v[i])) {
            throw ConfigError(fmt::format("sweep: '{}' is not a number", t));
        }
    }
    const double start = v[0], stop = v[1], step = v[2];
    if (!(step > 0.0) || stop < start) throw ConfigError("sweep: need step > 0 and stop >= start");
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    if (count > 100000) throw ConfigError("sweep: too many values");

    std::vector<StrategyParams> out;
    for (long i = 0; i < count; ++i) {
        // Rounding to 12 decimals keeps values such as 0.3 free of
        // accumulated binary error so labels stay readable.
        const double x = std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12;
        if (name == "nu") {
            out.push_back(StrategyParams::additive(x));
        } else if (name == "eta") {
            out.push_back(StrategyParams::multiplicative(x));
        } else if (name == "alpha_prime") {
            out.push_back(StrategyParams::quantile(x));
        } else {
            throw ConfigError(fmt::format("sweep: unknown parameter '{}' (nu, eta or alpha_prime)", name));
        }
        out.back().validate();
    }
    return out;
}

Dataset load_dataset(const BacktestConfig& config) {
    if (config.data_path) return load_csv(*config.data_path, config.data_e_max);
    return synth_generate(config.synth, config.seed).data;
}

std::vector<Fold> make_folds(std::size_t num_days, const BacktestConfig& config) {
    if (num_days < 2) throw DataError("backtest needs at least two days of data");
    std::vector<Fold> folds;
    auto add = [&](std::size_t lo, std::size_t hi) {
        Fold f;
        f.index = folds.size();
        for (std::size_t d = 0; d < num_days; ++d) {
            (d >= lo && d < hi ? f.test_days : f.train_days).push_back(d);
        }
        folds.push_back(std::move(f));
    };
    if (config.holdout == Holdout::split) {
        auto n_train = static_cast<std::size_t>(std::floor(config.train_fraction * static_cast<double>(num_days)));
        n_train = std::clamp<std::size_t>(n_train, 1, num_days - 1);
        add(n_train, num_days);
        return folds;
    }
    const std::size_t block =
        config.holdout == Holdout::leave_one_day_out ? 1 : static_cast<std::size_t>(config.block_days);
    if (block >= num_days) throw ConfigError("backtest.block_days leaves no training days");
    for (std::size_t lo = 0; lo < num_days; lo += block) add(lo, std::min(num_days, lo + block));
    return folds;
}

Eigen::RowVectorXd ExogScaler::apply(const std::vector<std::optional<double>>& row) const {
    if (static_cast<Eigen::Index>(row.size()) != mean.size()) {
        throw ContractError("ExogScaler: feature dimension mismatch");
    }
    Eigen::RowVectorXd x(mean.size());
    for (Eigen::Index j = 0; j < mean.size(); ++j) {
        const auto& v = row[static_cast<std::size_t>(j)];
        x[j] = v ? (*v - mean[j]) / scale[j] : 0.0;
    }
    return x;
}

void FoldModels::require_excluded(std::size_t day) const {
    if (train_days.count(day)) {
        throw LeakageError(fmt::format("day {} is forecast by a model trained on it", day));
    }
}

namespace {

ExogScaler fit_scaler(const std::vector<std::vector<std::optional<double>>>& rows, std::size_t k) {
    ExogScaler s;
    s.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    s.scale = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        for (const auto& r : rows) {
            if (r[j]) {
                sum += *r[j];
                ++n;
            }
        }
        if (n == 0) continue;
        const double m = sum / static_cast<double>(n);
        for (const auto& r : rows) {
            if (r[j]) sq += (*r[j] - m) * (*r[j] - m);
        }
        const double sd = std::sqrt(sq / static_cast<double>(n));
        s.mean[static_cast<Eigen::Index>(j)] = m;
        if (sd > 0.0) s.scale[static_cast<Eigen::Index>(j)] = sd;
    }
    return s;
}

/// Per-(period, day type) streams. A day's position within the stream of its
/// day type is the same for every period.
struct StreamIndex {
    std::map<DayType, std::vector<std::size_t>> days;
    std::vector<std::size_t> position;

    explicit StreamIndex(const Dataset& data) : position(data.num_days()) {
        for (std::size_t d = 0; d < data.num_days(); ++d) {
            auto& v = days[data.day_type(d)];
            position[d] = v.size();
            v.push_back(d);
        }
    }
};

price::Stream stream_records(const Dataset& data, const std::vector<std::size_t>& days, int period) {
    price::Stream s;
    s.reserve(days.size());
    for (auto d : days) s.push_back(&data.at(d, period));
    return s;
}

Eigen::MatrixXd scaled_exog(const ExogScaler& scaler, const price::Stream& stream,
                            const std::vector<std::size_t>& positions) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(positions.size()), scaler.mean.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = scaler.apply(exogenous_features(*stream[positions[i]]));
    }
    return x;
}

enum class FitOutcome { full, reduced, failed };

/// Fits the grid; when the series is too short for the configured orders the
/// orders shrink step by step, and after that the exogenous inputs are
/// dropped. Returns nullopt when even a constant-mean model cannot be fitted.
std::optional<price::ArmaxModel> fit_with_fallback(const price::Series& series,
                                                   const Eigen::MatrixXd& exog,
                                                   const std::vector<std::string>& names,
                                                   const price::ArmaxOptions& options,
                                                   FitOutcome& outcome) {
    outcome = FitOutcome::full;
    for (int use_exog = 1; use_exog >= 0; --use_exog) {
        const int top = std::max(options.max_p, options.max_q);
        for (int shrink = 0; shrink <= top; ++shrink) {
            price::ArmaxOptions o = options;
            o.max_p = std::max(0, options.max_p - shrink);
            o.max_q = std::max(0, options.max_q - shrink);
            try {
                const Eigen::MatrixXd x = use_exog ? exog : Eigen::MatrixXd(exog.rows(), 0);
                return price::fit_armax(series, x, o,
                                        use_exog ? names : std::vector<std::string>{});
            } catch (const FitError&) {
                outcome = FitOutcome::reduced;
            }
        }
    }
    outcome = FitOutcome::failed;
    return std::nullopt;
}

std::optional<double> power_feature(const Dataset& data, std::size_t day, int period,
                                    const std::string& name, const std::set<std::size_t>* allowed) {
    const auto& r = data.at(day, period);
    if (name == "wind_fc") return r.wind_fc;
    if (name == "load_fc") return r.load_fc;
    if (name == "margin_fc") return r.margin_fc;
    if (name == "solar_fc") return r.solar_fc.value_or(0.0);
    if (name == "period") return static_cast<double>(period);
    if (name == "gen_lag2d") {
        // Generation two days back is settled before the day-ahead gate
        // closes. During fitting it is only used when that day also trains.
        if (day < 2) return std::nullopt;
        if (allowed && !allowed->count(day - 2)) return std::nullopt;
        return data.at(day - 2, period).gen_energy;
    }
    throw ConfigError(fmt::format("unknown power feature '{}'", name));
}

Eigen::RowVectorXd power_row(const Dataset& data, std::size_t day, int period,
                             const std::vector<std::string>& names, const Eigen::VectorXd& fill,
                             const std::set<std::size_t>* allowed) {
    Eigen::RowVectorXd x(static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto v = power_feature(data, day, period, names[j], allowed);
        x[static_cast<Eigen::Index>(j)] = v ? *v : fill[static_cast<Eigen::Index>(j)];
    }
    return x;
}

bool needs_gbm(const Dataset& data, const BacktestConfig& config) {
    if (config.power != Source::advanced) return false;
    for (const auto& s : config.strategies) {
        if (s.kind == StrategyKind::quantile) return true;
    }
    for (const auto& r : data.records()) {
        if (!r.power_fc) return true;
    }
    return false;
}

std::string span_of(const Dataset& data, const std::vector<std::size_t>& days) {
    return fmt::format("{}..{} ({} days)", format_date(data.day(days.front())),
                       format_date(data.day(days.back())), days.size());
}

}  // namespace

FoldModels fit_fold_models(const Dataset& data, const std::vector<std::size_t>& train_days,
                           const BacktestConfig& config, std::uint64_t fold_seed) {
    if (train_days.empty()) throw FitError("fold has no training days");
    FoldModels m;
    m.train_days.insert(train_days.begin(), train_days.end());
    for (auto d : train_days) {
        if (d >= data.num_days()) throw ContractError("training day index out of range");
    }
    const std::string train_span = span_of(data, train_days);

    std::vector<const SettlementRecord*> train_records;
    for (auto d : train_days) {
        for (int p = 1; p <= kPeriodsPerDay; ++p) train_records.push_back(&data.at(d, p));
    }

    for (int p = 1; p <= kPeriodsPerDay; ++p) {
        const auto pi = static_cast<std::size_t>(p - 1);
        std::vector<std::vector<std::optional<double>>> rows;
        std::vector<int> outcomes;
        for (auto d : train_days) {
            const auto& r = data.at(d, p);
            rows.push_back(exogenous_features(r));
            outcomes.push_back(r.is_short() ? 1 : 0);
        }
        m.empirical[pi] = system_length::empirical_proportion(outcomes);
        m.logistic_imputer[pi] = FeatureImputer(rows);
        m.price_scaler[pi] = fit_scaler(rows, exogenous_feature_names(p).size());
        try {
            auto model = system_length::fit_logistic(m.logistic_imputer[pi].apply(rows), outcomes);
            model.period = p;
            model.feature_names = exogenous_feature_names(p);
            model.train_span = train_span;
            m.logistic[pi] = std::move(model);
        } catch (const FitError&) {
            ++m.logistic_fallbacks;
        }

        // Climatological power forecast for the period.
        std::vector<double> gen;
        for (auto d : train_days) gen.push_back(data.at(d, p).gen_energy);
        double sum = 0.0;
        for (double g : gen) sum += g;
        m.simple_power_mean[pi] = sum / static_cast<double>(gen.size());
        std::vector<double> q;
        for (double a : quantile_levels()) q.push_back(evaluation::var_alpha(gen, a));
        m.simple_power_quantiles[pi] = power::rearrange(quantile_levels(), q, data.e_max()).values;
    }

    m.simple_price.emplace(train_records);

    if (config.price == Source::advanced) {
        const StreamIndex index(data);
        for (const auto& [day_type, days] : index.days) {
            for (int p = 1; p <= kPeriodsPerDay; ++p) {
                const auto& scaler = m.price_scaler[static_cast<std::size_t>(p - 1)];
                const auto names = exogenous_feature_names(p);
                const price::Stream stream = stream_records(data, days, p);

                // Day-ahead series on the stream's own time index, test days
                // masked as missing.
                std::vector<std::size_t> all(stream.size());
                for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
                price::Series da(stream.size());
                for (std::size_t i = 0; i < stream.size(); ++i) {
                    if (m.train_days.count(days[i])) da[i] = stream[i]->da_price;
                }
                // Balancing legs: occurrences of each leg among training days.
                std::vector<std::pair<PriceSeries, std::vector<std::size_t>>> series_positions;
                series_positions.emplace_back(PriceSeries::day_ahead, all);
                for (auto leg : {price::Leg::up, price::Leg::down}) {
                    std::vector<std::size_t> pos;
                    for (auto i : price::leg_positions(stream, leg)) {
                        if (m.train_days.count(days[i])) pos.push_back(i);
                    }
                    series_positions.emplace_back(
                        leg == price::Leg::up ? PriceSeries::up : PriceSeries::down, std::move(pos));
                }

                for (const auto& [which, pos] : series_positions) {
                    price::Series values;
                    if (which == PriceSeries::day_ahead) {
                        values = da;
                    } else {
                        for (auto i : pos) values.emplace_back(*stream[i]->bal_price);
                    }
                    FitOutcome outcome;
                    auto model = fit_with_fallback(values, scaled_exog(scaler, stream, pos), names,
                                                   config.price_options, outcome);
                    if (!model) {
                        ++m.armax_fallbacks;
                        continue;
                    }
                    ++m.armax_fitted;
                    if (outcome == FitOutcome::reduced) ++m.armax_reduced;
                    m.armax.emplace(std::make_tuple(p, day_type, which), std::move(*model));
                }
            }
        }
    }

    if (needs_gbm(data, config)) {
        const auto& names = config.power_features;
        const std::size_t k = names.size();
        std::vector<double> sum(k, 0.0);
        std::vector<std::size_t> count(k, 0);
        for (auto d : train_days) {
            for (int p = 1; p <= kPeriodsPerDay; ++p) {
                for (std::size_t j = 0; j < k; ++j) {
                    if (auto v = power_feature(data, d, p, names[j], &m.train_days)) {
                        sum[j] += *v;
                        ++count[j];
                    }
                }
            }
        }
        m.gbm_feature_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
        for (std::size_t j = 0; j < k; ++j) {
            if (count[j]) m.gbm_feature_mean[static_cast<Eigen::Index>(j)] = sum[j] / static_cast<double>(count[j]);
        }
        const auto n = static_cast<Eigen::Index>(train_days.size() * kPeriodsPerDay);
        Eigen::MatrixXd x(n, static_cast<Eigen::Index>(k));
        std::vector<double> y;
        y.reserve(static_cast<std::size_t>(n));
        Eigen::Index row = 0;
        for (auto d : train_days) {
            for (int p = 1; p <= kPeriodsPerDay; ++p) {
                x.row(row++) = power_row(data, d, p, names, m.gbm_feature_mean, &m.train_days);
                y.push_back(data.at(d, p).gen_energy);
            }
        }
        m.gbm = power::fit_quantile_model(x, y, quantile_levels(), config.power_params, fold_seed,
                                          data.e_max(), names);
    }
    return m;
}

nlohmann::json to_json(const FoldModels& m) {
    nlohmann::json j;
    j["train_days"] = std::vector<std::size_t>(m.train_days.begin(), m.train_days.end());
    nlohmann::json logistic = nlohmann::json::array();
    for (const auto& l : m.logistic) logistic.push_back(l ? system_length::to_json(*l) : nlohmann::json());
    j["logistic"] = logistic;
    j["empirical"] = m.empirical;
    nlohmann::json imputers = nlohmann::json::array();
    for (const auto& imp : m.logistic_imputer) {
        imputers.push_back(std::vector<double>(imp.means().data(), imp.means().data() + imp.means().size()));
    }
    j["logistic_imputer"] = imputers;
    if (m.simple_price) j["simple_price"] = m.simple_price->to_json();
    nlohmann::json armax;
    for (const auto& [key, model] : m.armax) {
        const auto& [p, t, s] = key;
        static const char* series_names[] = {"day_ahead", "up", "down"};
        armax[fmt::format("{}/{}/{}", p, to_string(t), series_names[static_cast<int>(s)])] =
            price::to_json(model);
    }
    j["armax"] = armax;
    j["simple_power_mean"] = m.simple_power_mean;
    j["simple_power_quantiles"] = m.simple_power_quantiles;
    if (m.gbm) j["gbm"] = power::to_json(*m.gbm);
    return j;
}

namespace {

struct PeriodForecast {
    double phi = 0.0;
    std::optional<settlement::PriceTriple> triple;
    std::optional<double> phi_hat;
    double expected = 0.0;
    power::QuantileForecast quantiles;
};

class Runner {
public:
    Runner(const BacktestConfig& config, const Dataset& data)
        : config_(config), data_(data), index_(data) {
        for (const auto& [type, days] : index_.days) {
            for (int p = 1; p <= kPeriodsPerDay; ++p) {
                auto& s = streams_[{p, type}];
                s.records = stream_records(data, days, p);
                s.realised = price::reconstruct_realised_triples(s.records);
                s.up = price::leg_positions(s.records, price::Leg::up);
                s.down = price::leg_positions(s.records, price::Leg::down);
            }
        }
    }

    BacktestReport run() {
        BacktestReport rep;
        rep.data_source = data_.source();
        rep.num_days = data_.num_days();
        rep.e_max = data_.e_max();
        for (std::size_t d = 0; d < data_.num_days(); ++d) {
            rep.dates.push_back(data_.day(d));
            rep.day_types.push_back(data_.day_type(d));
        }
        rep.folds = make_folds(data_.num_days(), config_);
        for (const auto& s : config_.strategies) rep.strategies.push_back(StrategyResult{s, {}, 0});

        for (const auto& fold : rep.folds) {
            const FoldModels models =
                fit_fold_models(data_, fold.train_days, config_, config_.seed + 7919 * fold.index);
            rep.fold_summaries.push_back({{"fold", fold.index},
                                          {"train_days", fold.train_days.size()},
                                          {"test_days", fold.test_days.size()},
                                          {"train_span", span_of(data_, fold.train_days)},
                                          {"test_span", span_of(data_, fold.test_days)},
                                          {"logistic_fallbacks", models.logistic_fallbacks},
                                          {"armax_fitted", models.armax_fitted},
                                          {"armax_reduced", models.armax_reduced},
                                          {"armax_fallbacks", models.armax_fallbacks},
                                          {"gbm", models.gbm.has_value()}});
            for (auto d : fold.test_days) test_day(models, fold.index, d, rep);
        }

        std::stable_sort(rep.ledger.begin(), rep.ledger.end(), [](const LedgerRow& a, const LedgerRow& b) {
            return std::tie(a.day, a.period, a.strategy) < std::tie(b.day, b.period, b.strategy);
        });
        aggregate(rep);
        return rep;
    }

private:
    struct StreamData {
        price::Stream records;
        std::vector<std::optional<settlement::PriceTriple>> realised;
        std::vector<std::size_t> up, down;
    };

    void test_day(const FoldModels& models, std::size_t fold, std::size_t day, BacktestReport& rep) {
        models.require_excluded(day);
        const DayType type = data_.day_type(day);
        const std::size_t pos = index_.position[day];
        const auto month = static_cast<unsigned>(data_.day(day).month());

        for (int p = 1; p <= kPeriodsPerDay; ++p) {
            const auto pi = static_cast<std::size_t>(p - 1);
            const SettlementRecord& rec = data_.at(day, p);
            const StreamData& stream = streams_.at({p, type});
            ++rep.test_periods;

            // System length.
            const auto& lm = models.logistic[pi];
            const double phi_emp = models.empirical[pi];
            const double phi_log =
                lm ? system_length::predict_phi(*lm, models.logistic_imputer[pi].apply(exogenous_features(rec)))
                   : phi_emp;
            const int outcome = rec.is_short() ? 1 : 0;
            phi_logistic_.push_back(phi_log);
            phi_empirical_.push_back(phi_emp);
            outcomes_.push_back(outcome);

            PeriodForecast f;
            switch (config_.system_length) {
                case Source::perfect: f.phi = outcome; break;
                case Source::simple: f.phi = phi_emp; break;
                case Source::advanced: f.phi = phi_log; break;
            }

            // Prices.
            const auto& realised = stream.realised[pos];
            std::optional<double> phi_realised;
            if (realised && realised->pi_up != realised->pi_down) {
                phi_realised = settlement::critical_probability(*realised).value;
            }
            const auto simple = models.simple_price->forecast(month, p);
            const price::TripleForecast simple_tf = price::finalise_triple(simple.triple);
            std::optional<price::TripleForecast> advanced_tf;
            if (config_.price == Source::advanced) {
                advanced_tf = advanced_triple(models, stream, type, pos, p, simple.triple, rec);
            }
            if (phi_realised) {
                if (simple_tf.phi_hat) {
                    phi_simple_.first.push_back(*simple_tf.phi_hat);
                    phi_simple_.second.push_back(*phi_realised);
                }
                if (advanced_tf && advanced_tf->phi_hat) {
                    phi_advanced_.first.push_back(*advanced_tf->phi_hat);
                    phi_advanced_.second.push_back(*phi_realised);
                }
            }
            switch (config_.price) {
                case Source::perfect:
                {
                    // Before both legs have been seen in the stream, the
                    // day's own leg is still known; the other leg comes from
                    // the simple benchmark.
                    settlement::PriceTriple t = simple.triple;
                    t.pi_c = rec.da_price;
                    if (realised) {
                        t = *realised;
                    } else if (rec.bal_price) {
                        (rec.is_short() ? t.pi_up : t.pi_down) = *rec.bal_price;
                    }
                    const auto tf = price::finalise_triple(t);
                    f.triple = tf.triple;
                    f.phi_hat = tf.phi_hat;
                    break;
                }
                case Source::simple:
                    f.triple = simple_tf.triple;
                    f.phi_hat = simple_tf.phi_hat;
                    break;
                case Source::advanced:
                    f.triple = advanced_tf->triple;
                    f.phi_hat = advanced_tf->phi_hat;
                    break;
            }

            // Power.
            switch (config_.power) {
                case Source::perfect:
                    f.expected = rec.gen_energy;
                    f.quantiles = power::rearrange(
                        quantile_levels(), std::vector<double>(quantile_levels().size(), rec.gen_energy),
                        data_.e_max());
                    break;
                case Source::simple:
                    f.expected = models.simple_power_mean[pi];
                    f.quantiles = power::QuantileForecast{quantile_levels(), models.simple_power_quantiles[pi]};
                    break;
                case Source::advanced:
                    if (models.gbm) {
                        f.quantiles = power::predict_quantiles(
                            *models.gbm, power_row(data_, day, p, config_.power_features,
                                                   models.gbm_feature_mean, nullptr));
                    }
                    f.expected = rec.power_fc ? *rec.power_fc : f.quantiles.at(0.5);
                    break;
            }

            if (!rec.bal_price) {
                ++rep.skipped_missing_price;
                continue;
            }

            strategy::OfferInputs in;
            in.phi = f.phi;
            in.phi_hat = f.phi_hat;
            in.expected = std::clamp(f.expected, 0.0, data_.e_max());
            if (!f.quantiles.levels.empty()) in.quantiles = f.quantiles;
            in.realised_length = rec.length();

            for (std::size_t s = 0; s < config_.strategies.size(); ++s) {
                LedgerRow row;
                row.day = day;
                row.period = p;
                row.fold = fold;
                row.strategy = s;
                row.decision = strategy::decide(config_.strategies[s], in, data_.e_max(), p);
                row.price_forecast = f.triple;
                row.settlement = settlement::settle(row.decision.offer, rec.gen_energy, rec.da_price,
                                                    *rec.bal_price, data_.e_max());
                row.gross = rec.da_price * rec.gen_energy;
                rep.ledger.push_back(std::move(row));
            }
        }
    }

    price::TripleForecast advanced_triple(const FoldModels& models, const StreamData& stream,
                                          DayType type, std::size_t pos, int p,
                                          const settlement::PriceTriple& simple,
                                          const SettlementRecord& rec) {
        const auto& scaler = models.price_scaler[static_cast<std::size_t>(p - 1)];
        const Eigen::RowVectorXd target = scaler.apply(exogenous_features(rec));
        auto history = [&](const std::vector<std::size_t>& positions, bool balancing) {
            price::SeriesHistory h;
            std::vector<std::size_t> used;
            for (auto i : positions) {
                if (i >= pos) break;
                used.push_back(i);
                const auto* r = stream.records[i];
                h.values.emplace_back(balancing ? *r->bal_price : r->da_price);
            }
            h.exog = scaled_exog(scaler, stream.records, used);
            return h;
        };
        auto leg = [&](PriceSeries which, double fallback, int steps) {
            const auto it = models.armax.find({p, type, which});
            if (it == models.armax.end()) return fallback;
            std::vector<std::size_t> positions;
            if (which == PriceSeries::day_ahead) {
                positions.resize(pos);
                for (std::size_t i = 0; i < pos; ++i) positions[i] = i;
            }
            const auto& src = which == PriceSeries::day_ahead ? positions
                              : which == PriceSeries::up      ? stream.up
                                                              : stream.down;
            return price::forecast_series(it->second, history(src, which != PriceSeries::day_ahead),
                                          target, steps);
        };
        const int steps = price::balancing_steps(p);
        settlement::PriceTriple raw;
        raw.pi_c = leg(PriceSeries::day_ahead, simple.pi_c, 1);
        raw.pi_up = leg(PriceSeries::up, simple.pi_up, steps);
        raw.pi_down = leg(PriceSeries::down, simple.pi_down, steps);
        return price::finalise_triple(raw);
    }

    void aggregate(BacktestReport& rep) {
        for (std::size_t s = 0; s < rep.strategies.size(); ++s) {
            std::vector<double> gross, cost, offer, gen;
            std::size_t fallbacks = 0;
            for (const auto& row : rep.ledger) {
                if (row.strategy != s) continue;
                gross.push_back(row.gross);
                cost.push_back(row.settlement.cost);
                offer.push_back(row.decision.offer);
                gen.push_back(data_.at(row.day, row.period).gen_energy);
                fallbacks += row.decision.fallback ? 1 : 0;
            }
            if (gross.empty()) throw DataError("no test period has a published balancing price");
            rep.strategies[s].risk =
                evaluation::risk_report(gross, cost, offer, gen, data_.e_max(), config_.var_level);
            rep.strategies[s].fallbacks = fallbacks;
        }

        auto scores = [&](const std::vector<double>& phi) {
            ForecastScores sc;
            if (phi.empty()) return sc;
            sc.brier = evaluation::brier(phi, outcomes_);
            try {
                sc.roc = evaluation::roc(phi, outcomes_);
            } catch (const ContractError&) {
                // Single-class test outcomes: no ROC curve exists.
            }
            return sc;
        };
        rep.logistic = scores(phi_logistic_);
        rep.empirical = scores(phi_empirical_);
        if (!phi_simple_.first.empty()) rep.phi_simple = price::score_phi_forecasts(phi_simple_.first, phi_simple_.second);
        if (!phi_advanced_.first.empty()) {
            rep.phi_advanced = price::score_phi_forecasts(phi_advanced_.first, phi_advanced_.second);
        }
    }

    const BacktestConfig& config_;
    const Dataset& data_;
    StreamIndex index_;
    std::map<std::pair<int, DayType>, StreamData> streams_;
    std::vector<double> phi_logistic_, phi_empirical_;
    std::vector<int> outcomes_;
    std::pair<std::vector<double>, std::vector<double>> phi_simple_, phi_advanced_;
};

std::string opt(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

}  // namespace

BacktestReport run(const BacktestConfig& config, const Dataset& data) {
    config.validate();
    return Runner(config, data).run();
}

BacktestReport run(const BacktestConfig& config) {
    const Dataset data = load_dataset(config);
    return run(config, data);
}

std::string report_json(const BacktestReport& rep, const BacktestConfig& config) {
    nlohmann::json j;
    j["data"] = {{"source", rep.data_source}, {"days", rep.num_days}, {"e_max", rep.e_max}};
    j["config"] = {{"holdout", to_string(config.holdout)},
                   {"block_days", config.block_days},
                   {"train_fraction", config.train_fraction},
                   {"var_level", config.var_level},
                   {"seed", config.seed},
                   {"forecast",
                    {{"system_length", to_string(config.system_length)},
                     {"price", to_string(config.price)},
                     {"power", to_string(config.power)}}},
                   {"price", {{"max_p", config.price_options.max_p}, {"max_q", config.price_options.max_q}}},
                   {"power",
                    {{"n_trees", config.power_params.n_trees},
                     {"max_depth", config.power_params.max_depth},
                     {"learning_rate", config.power_params.learning_rate},
                     {"subsample", config.power_params.subsample},
                     {"min_leaf", config.power_params.min_leaf},
                     {"max_bins", config.power_params.max_bins},
                     {"features", config.power_features}}}};
    j["test_periods"] = rep.test_periods;
    j["skipped_missing_price"] = rep.skipped_missing_price;
    j["ledger_rows"] = rep.ledger.size();
    j["folds"] = rep.fold_summaries;

    nlohmann::json strategies = nlohmann::json::array();
    for (const auto& s : rep.strategies) {
        nlohmann::json e = evaluation::to_json(s.risk);
        e["label"] = s.params.label();
        e["kind"] = strategy::to_string(s.params.kind);
        if (const auto p = s.params.parameter()) e["parameter"] = {{"name", p->first}, {"value", p->second}};
        e["fallbacks"] = s.fallbacks;
        strategies.push_back(e);
    }
    j["strategies"] = strategies;

    auto scores = [](const ForecastScores& sc) {
        nlohmann::json o;
        if (sc.brier) o["brier"] = evaluation::to_json(*sc.brier);
        if (sc.roc) o["auc"] = sc.roc->auc;
        return o;
    };
    j["system_length"] = {{"logistic", scores(rep.logistic)}, {"empirical_proportion", scores(rep.empirical)}};
    auto phi = [](const std::optional<price::PhiScore>& s) {
        return s ? nlohmann::json{{"rmse", s->rmse}, {"mae", s->mae}, {"n", s->n}} : nlohmann::json();
    };
    j["critical_probability"] = {{"simple", phi(rep.phi_simple)}, {"advanced", phi(rep.phi_advanced)}};
    return j.dump(2) + "\n";
}

std::string ledger_csv(const BacktestReport& rep, const Dataset& data) {
    std::string out =
        "date,period,day_type,fold,strategy,offer,branch,fallback,phi,phi_hat,expected,"
        "pi_c_hat,pi_up_hat,pi_down_hat,gen_energy,da_price,bal_price,niv,imbalance,imbalance_cost,"
        "revenue\n";
    for (const auto& row : rep.ledger) {
        const auto& r = data.at(row.day, row.period);
        const auto& d = row.decision;
        const auto& pf = row.price_forecast;
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                           format_date(r.date), r.period, to_string(r.day_type), row.fold,
                           rep.strategies[row.strategy].params.label(), d.offer,
                           strategy::to_string(d.branch), d.fallback ? 1 : 0, opt(d.inputs.phi),
                           opt(d.inputs.phi_hat), opt(d.inputs.expected),
                           pf ? fmt::format("{}", pf->pi_c) : "", pf ? fmt::format("{}", pf->pi_up) : "",
                           pf ? fmt::format("{}", pf->pi_down) : "", r.gen_energy, r.da_price,
                           opt(r.bal_price), r.niv, row.settlement.imbalance, row.settlement.cost,
                           row.settlement.revenue);
    }
    return out;
}

std::string roc_csv(const BacktestReport& rep) {
    std::string out = "method,threshold,fpr,tpr\n";
    if (rep.logistic.roc) out += evaluation::roc_csv_rows("logistic", *rep.logistic.roc);
    if (rep.empirical.roc) out += evaluation::roc_csv_rows("empirical_proportion", *rep.empirical.roc);
    return out;
}

std::string sweep_csv(const BacktestReport& rep) {
    std::string out = "strategy,kind,parameter,value,normalised_revenue,total_revenue,var,mean_abs_imbalance_pct,n_periods\n";
    for (const auto& s : rep.strategies) {
        const auto p = s.params.parameter();
        out += fmt::format("{},{},{},{},{},{},{},{},{}\n", s.params.label(), strategy::to_string(s.params.kind),
                           p ? p->first : "", p ? fmt::format("{}", p->second) : "",
                           s.risk.normalised_revenue, s.risk.total_revenue, s.risk.var,
                           s.risk.mean_abs_imbalance_pct, s.risk.n_periods);
    }
    return out;
}

void write_outputs(const BacktestReport& report, const BacktestConfig& config, const Dataset& data,
                   const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
    auto write = [&](const char* name, const std::string& text) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw DataError(fmt::format("cannot write '{}'", (dir / name).string()));
        f << text;
    };
    write("report.json", report_json(report, config));
    write("ledger.csv", ledger_csv(report, data));
    write("roc.csv", roc_csv(report));
    write("sweep.csv", sweep_csv(report));
}

}  // namespace balbid::backtest
