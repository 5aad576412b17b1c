#include "balbid/market_data.hpp"

#include <fmt/format.h>

#include <boost/math/distributions/normal.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "balbid/error.hpp"

namespace balbid {

const char* to_string(DayType t) {
    switch (t) {
        case DayType::weekday: return "weekday";
        case DayType::weekend: return "weekend";
        case DayType::holiday: return "holiday";
    }
    return "weekday";
}

DayType parse_day_type(const std::string& s) {
    if (s == "weekday") return DayType::weekday;
    if (s == "weekend") return DayType::weekend;
    if (s == "holiday") return DayType::holiday;
    throw DataError("unknown day_type '" + s + "'");
}

Date parse_date(const std::string& iso) {
    const std::string t = trim(iso);
    int y = 0;
    unsigned m = 0, d = 0;
    bool ok = t.size() == 10 && t[4] == '-' && t[7] == '-';
    if (ok) {
        ok = std::from_chars(t.data(), t.data() + 4, y).ec == std::errc() &&
             std::from_chars(t.data() + 5, t.data() + 7, m).ec == std::errc() &&
             std::from_chars(t.data() + 8, t.data() + 10, d).ec == std::errc();
    }
    const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ok || !date.ok()) throw DataError("invalid ISO-8601 date '" + t + "'");
    return date;
}

std::string format_date(const Date& d) {
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(d.year()),
                       static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
}

std::int64_t day_number(const Date& d) {
    return std::chrono::sys_days{d}.time_since_epoch().count();
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<SettlementRecord> records, double e_max, std::string source)
    : records_(std::move(records)), e_max_(e_max), source_(std::move(source)) {
    if (!(e_max_ > 0.0)) throw DataError("E_max must be positive");
    if (records_.empty()) throw DataError("dataset has no records");

    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.period < 1 || r.period > kPeriodsPerDay) {
            throw DataError(fmt::format("{} period {}: period index outside 1..48",
                                        format_date(r.date), r.period));
        }
        if (!(r.gen_energy >= 0.0 && r.gen_energy <= e_max_)) {
            throw DataError(fmt::format("{} period {}: gen_energy {} outside [0, {}]",
                                        format_date(r.date), r.period, r.gen_energy, e_max_));
        }
        if (r.solar_fc && !is_solar_period(r.period)) {
            throw DataError(fmt::format("{} period {}: solar_fc only allowed in periods 12-41",
                                        format_date(r.date), r.period));
        }
        if (i > 0) {
            const auto& prev = records_[i - 1];
            const auto a = day_number(prev.date), b = day_number(r.date);
            if (a == b && prev.period == r.period) {
                throw DataError(fmt::format("{} period {}: duplicate period", format_date(r.date),
                                            r.period));
            }
            if (b < a || (a == b && r.period < prev.period)) {
                throw DataError(fmt::format("{} period {}: timestamps not increasing",
                                            format_date(r.date), r.period));
            }
        }
    }

    // Whole 48-period days only. Clock-change days (46 or 50 periods) land here.
    std::size_t i = 0;
    while (i < records_.size()) {
        std::size_t j = i;
        while (j < records_.size() && records_[j].date == records_[i].date) ++j;
        const std::size_t n = j - i;
        if (n != static_cast<std::size_t>(kPeriodsPerDay)) {
            throw DataError(fmt::format("{}: day has {} periods; only 48-period days are supported",
                                        format_date(records_[i].date), n));
        }
        for (std::size_t k = i + 1; k < j; ++k) {
            if (records_[k].day_type != records_[i].day_type) {
                throw DataError(fmt::format("{}: inconsistent day_type within day",
                                            format_date(records_[i].date)));
            }
        }
        i = j;
    }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::optional<double> parse_cell(const std::string& cell, const char* name, int line) {
    const std::string t = trim(cell);
    if (t.empty()) return std::nullopt;
    double v = 0.0;
    const auto* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(t.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw DataError(fmt::format("line {}: column '{}' is not numeric: '{}'", line, name, t));
    }
    return v;
}

double require(const std::optional<double>& v, const char* name, int line) {
    if (!v) throw DataError(fmt::format("line {}: column '{}' is required", line, name));
    return *v;
}

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : ""; }

}  // namespace

Dataset parse_csv(const std::string& text, double e_max, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    if (trim(line) != kCsvHeader) {
        throw DataError(fmt::format("CSV header mismatch: expected '{}'", kCsvHeader));
    }

    std::vector<SettlementRecord> records;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != 12) {
            throw DataError(fmt::format("line {}: expected 12 columns, found {}", lineno,
                                        cells.size()));
        }
        SettlementRecord r;
        try {
            r.date = parse_date(cells[0]);
        } catch (const DataError& e) {
            throw DataError(fmt::format("line {}: {}", lineno, e.what()));
        }
        int period = 0;
        const std::string pt = trim(cells[1]);
        auto [ptr, ec] = std::from_chars(pt.data(), pt.data() + pt.size(), period);
        if (ec != std::errc() || ptr != pt.data() + pt.size()) {
            throw DataError(fmt::format("line {}: period '{}' is not an integer", lineno, pt));
        }
        if (period < 1 || period > kPeriodsPerDay) {
            throw DataError(fmt::format("line {}: period {} outside 1..48", lineno, period));
        }
        r.period = period;
        try {
            r.day_type = parse_day_type(trim(cells[2]));
        } catch (const DataError& e) {
            throw DataError(fmt::format("line {}: {}", lineno, e.what()));
        }
        r.da_price = require(parse_cell(cells[3], "da_price", lineno), "da_price", lineno);
        r.bal_price = parse_cell(cells[4], "bal_price", lineno);
        r.niv = require(parse_cell(cells[5], "niv", lineno), "niv", lineno);
        r.gen_energy = require(parse_cell(cells[6], "gen_energy", lineno), "gen_energy", lineno);
        if (r.gen_energy < 0.0 || r.gen_energy > e_max) {
            throw DataError(fmt::format("line {}: gen_energy {} outside [0, {}]", lineno,
                                        r.gen_energy, e_max));
        }
        r.load_fc = parse_cell(cells[7], "load_fc", lineno);
        r.wind_fc = parse_cell(cells[8], "wind_fc", lineno);
        r.solar_fc = parse_cell(cells[9], "solar_fc", lineno);
        r.margin_fc = parse_cell(cells[10], "margin_fc", lineno);
        r.power_fc = parse_cell(cells[11], "power_fc", lineno);
        records.push_back(r);
    }
    return Dataset(std::move(records), e_max, source);
}

Dataset load_csv(const std::filesystem::path& path, double e_max) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open data file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), e_max, path.string());
}

std::string to_csv(const Dataset& data) {
    std::string out = kCsvHeader;
    out += '\n';
    for (const auto& r : data.records()) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", format_date(r.date), r.period,
                           to_string(r.day_type), r.da_price, cell(r.bal_price), r.niv,
                           r.gen_energy, cell(r.load_fc), cell(r.wind_fc), cell(r.solar_fc),
                           cell(r.margin_fc), cell(r.power_fc));
    }
    return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << to_csv(data);
}

// ---------------------------------------------------------------------------
// Calendar

HolidayCalendar HolidayCalendar::from_config(const KeyValueConfig& cfg) {
    std::set<std::int64_t> days;
    for (const auto& s : cfg.get_strings("holidays")) {
        try {
            days.insert(day_number(parse_date(s)));
        } catch (const DataError& e) {
            throw ConfigError(std::string("holidays: ") + e.what());
        }
    }
    return HolidayCalendar(std::move(days));
}

DayType HolidayCalendar::classify(const Date& d) const {
    if (days_.count(day_number(d))) return DayType::holiday;
    const std::chrono::weekday wd{std::chrono::sys_days{d}};
    if (wd == std::chrono::Saturday || wd == std::chrono::Sunday) return DayType::weekend;
    return DayType::weekday;
}

// ---------------------------------------------------------------------------
// Synthetic data

const std::vector<double>& quantile_levels() {
    static const std::vector<double> levels = [] {
        std::vector<double> v{0.01};
        for (int i = 1; i <= 19; ++i) v.push_back(0.05 * i);
        v.push_back(0.99);
        return v;
    }();
    return levels;
}

SynthConfig SynthConfig::from_config(const KeyValueConfig& cfg) {
    SynthConfig c;
    c.days = static_cast<int>(cfg.get_int("synth.days", c.days));
    if (auto s = cfg.get("synth.start")) {
        try {
            c.start = parse_date(*s);
        } catch (const DataError& e) {
            throw ConfigError(std::string("synth.start: ") + e.what());
        }
    }
    c.e_max = cfg.get_double("synth.e_max", c.e_max);
    c.holidays = HolidayCalendar::from_config(cfg);
    if (cfg.contains("synth.beta")) c.beta = cfg.get_doubles("synth.beta");
    c.driver_persistence = cfg.get_double("synth.driver_persistence", c.driver_persistence);
    c.niv_scale = cfg.get_double("synth.niv_scale", c.niv_scale);
    c.price_base = cfg.get_double("synth.price_base", c.price_base);
    c.price_shape_amplitude = cfg.get_double("synth.price_shape_amplitude", c.price_shape_amplitude);
    c.price_load_effect = cfg.get_double("synth.price_load_effect", c.price_load_effect);
    c.price_wind_effect = cfg.get_double("synth.price_wind_effect", c.price_wind_effect);
    c.price_ar = cfg.get_double("synth.price_ar", c.price_ar);
    c.price_noise = cfg.get_double("synth.price_noise", c.price_noise);
    c.spread_up = cfg.get_double("synth.spread_up", c.spread_up);
    c.spread_down = cfg.get_double("synth.spread_down", c.spread_down);
    c.spread_noise = cfg.get_double("synth.spread_noise", c.spread_noise);
    c.wind_latent_mean = cfg.get_double("synth.wind_latent_mean", c.wind_latent_mean);
    c.wind_coupling = cfg.get_double("synth.wind_coupling", c.wind_coupling);
    c.wind_residual_sd = cfg.get_double("synth.wind_residual_sd", c.wind_residual_sd);
    c.wind_residual_persistence =
        cfg.get_double("synth.wind_residual_persistence", c.wind_residual_persistence);
    c.national_wind_capacity =
        cfg.get_double("synth.national_wind_capacity", c.national_wind_capacity);
    c.emit_power_fc = cfg.get_bool("synth.emit_power_fc", c.emit_power_fc);
    c.validate();
    return c;
}

void SynthConfig::validate() const {
    if (days <= 0) throw ConfigError("synth.days must be positive");
    if (!(e_max > 0.0)) throw ConfigError("synth.e_max must be positive");
    if (spread_up < 0.0 || spread_down < 0.0) throw ConfigError("price spreads must be >= 0");
    if (spread_noise < 0.0) throw ConfigError("synth.spread_noise must be >= 0");
    if (beta.size() != 5) throw ConfigError("synth.beta needs 5 values (intercept + 4 drivers)");
    if (!(niv_scale > 0.0)) throw ConfigError("synth.niv_scale must be positive");
    if (std::abs(driver_persistence) >= 1.0 || std::abs(price_ar) >= 1.0 ||
        std::abs(wind_residual_persistence) >= 1.0) {
        throw ConfigError("AR coefficients must lie in (-1, 1)");
    }
    if (wind_residual_sd < 0.0 || price_noise < 0.0) {
        throw ConfigError("noise levels must be >= 0");
    }
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double load_shape(int period) {
    // Morning ramp, evening peak, overnight trough.
    const double h = (period - 0.5) / 2.0;
    return 0.5 * std::sin(2.0 * std::numbers::pi * (h - 9.0) / 24.0) +
           0.4 * std::exp(-0.5 * std::pow((h - 18.0) / 1.5, 2));
}

double solar_shape(int period) {
    if (!is_solar_period(period)) return 0.0;
    return std::sin(std::numbers::pi * (period - kFirstSolarPeriod + 0.5) /
                    (kLastSolarPeriod - kFirstSolarPeriod + 1));
}

}  // namespace

SynthResult synth_generate(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    const std::size_t n = static_cast<std::size_t>(config.days) * kPeriodsPerDay;
    SynthResult out;
    out.beta_star = config.beta;
    out.true_phi.reserve(n);
    out.true_prices.reserve(n);
    out.true_quantiles.reserve(n);
    out.drivers.reserve(n);

    const auto& levels = quantile_levels();
    const boost::math::normal_distribution<double> std_normal;
    std::vector<double> z_alpha;
    for (double a : levels) z_alpha.push_back(boost::math::quantile(std_normal, a));

    std::array<double, 4> z{};
    for (double& v : z) v = normal(rng);
    const double rho = config.driver_persistence;
    const double innov = std::sqrt(1.0 - rho * rho);
    const double rho_r = config.wind_residual_persistence;
    double wind_residual = config.wind_residual_sd * normal(rng);
    std::array<double, kPeriodsPerDay> price_dev{};
    const double dev_sd = config.price_noise / std::sqrt(1.0 - config.price_ar * config.price_ar);
    for (double& v : price_dev) v = dev_sd * normal(rng);

    std::vector<SettlementRecord> records;
    records.reserve(n);
    const std::chrono::sys_days start{config.start};

    for (int d = 0; d < config.days; ++d) {
        const Date date{start + std::chrono::days{d}};
        const DayType dt = config.holidays.classify(date);
        for (int p = 1; p <= kPeriodsPerDay; ++p) {
            for (double& v : z) v = rho * v + innov * normal(rng);
            wind_residual = rho_r * wind_residual +
                            config.wind_residual_sd * std::sqrt(1.0 - rho_r * rho_r) * normal(rng);
            const bool solar = is_solar_period(p);

            SettlementRecord r;
            r.date = date;
            r.period = p;
            r.day_type = dt;
            r.load_fc = config.load_base + config.load_amplitude * load_shape(p) +
                        config.load_sd * z[kLoadDriver];
            r.wind_fc = config.national_wind_capacity *
                        std::max(0.0, 0.35 + 0.12 * z[kWindDriver]);
            r.margin_fc = config.margin_base + config.margin_sd * z[kMarginDriver];
            if (solar) {
                r.solar_fc = std::max(
                    0.0, solar_shape(p) * (config.solar_peak + config.solar_sd * z[kSolarDriver]));
            }

            // System length.
            double score = config.beta[0] + config.beta[1] * z[kLoadDriver] +
                           config.beta[2] * z[kWindDriver] + config.beta[3] * z[kMarginDriver];
            if (solar) score += config.beta[4] * z[kSolarDriver];
            const double phi = logistic(score);
            const bool is_short = uniform(rng) < phi;
            const double magnitude = config.niv_scale * (0.1 + std::abs(normal(rng)));
            r.niv = is_short ? magnitude : -magnitude;

            // Prices.
            price_dev[p - 1] =
                config.price_ar * price_dev[p - 1] + config.price_noise * normal(rng);
            r.da_price = config.price_base +
                         config.price_shape_amplitude * load_shape(p) * 2.0 +
                         config.price_load_effect * z[kLoadDriver] +
                         config.price_wind_effect * z[kWindDriver] + price_dev[p - 1];
            const double s2 = config.spread_noise * config.spread_noise;
            const double u_up = std::exp(config.spread_noise * normal(rng) - 0.5 * s2);
            const double u_down = std::exp(config.spread_noise * normal(rng) - 0.5 * s2);
            const double rel = magnitude / config.niv_scale;
            settlement::PriceTriple triple{r.da_price,
                                           r.da_price + config.spread_up * rel * u_up,
                                           r.da_price - config.spread_down * rel * u_down};
            r.bal_price = is_short ? triple.pi_up : triple.pi_down;

            // Generation.
            const double centre = config.wind_latent_mean + config.wind_coupling * z[kWindDriver];
            r.gen_energy = config.e_max * logistic(centre + wind_residual);
            if (config.emit_power_fc) r.power_fc = config.e_max * logistic(centre);

            std::vector<double> q;
            q.reserve(levels.size());
            for (double za : z_alpha) {
                q.push_back(config.e_max * logistic(centre + config.wind_residual_sd * za));
            }

            records.push_back(r);
            out.true_phi.push_back(phi);
            out.true_prices.push_back(triple);
            out.true_quantiles.push_back(std::move(q));
            out.drivers.push_back(z);
        }
    }
    out.data = Dataset(std::move(records), config.e_max, fmt::format("synthetic:seed={}", seed));
    return out;
}

}  // namespace balbid
