#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "balbid/config.hpp"
#include "balbid/settlement.hpp"

namespace balbid {

inline constexpr int kPeriodsPerDay = 48;
inline constexpr int kFirstSolarPeriod = 12;
inline constexpr int kLastSolarPeriod = 41;

enum class DayType { weekday, weekend, holiday };

const char* to_string(DayType t);
DayType parse_day_type(const std::string& s);

/// Sign of the net imbalance volume. NIV == 0 counts as long.
enum class SystemLength { Short, Long };

inline SystemLength system_length_of(double niv) {
    return niv > 0.0 ? SystemLength::Short : SystemLength::Long;
}

using Date = std::chrono::year_month_day;

Date parse_date(const std::string& iso);
std::string format_date(const Date& d);
/// Days since 1970-01-01.
std::int64_t day_number(const Date& d);

inline bool is_solar_period(int period) {
    return period >= kFirstSolarPeriod && period <= kLastSolarPeriod;
}

/// One half-hour settlement period.
struct SettlementRecord {
    Date date{};
    int period = 1;  ///< 1..48
    DayType day_type = DayType::weekday;
    double da_price = 0.0;            ///< pi_C
    std::optional<double> bal_price;  ///< pi_S, missing until published
    double niv = 0.0;                 ///< MWh, > 0 means the system is short
    double gen_energy = 0.0;          ///< MWh in [0, E_max]
    std::optional<double> load_fc;
    std::optional<double> wind_fc;
    std::optional<double> solar_fc;  ///< periods 12..41 only
    std::optional<double> margin_fc;
    std::optional<double> power_fc;  ///< operator point forecast, MWh

    SystemLength length() const { return system_length_of(niv); }
    bool is_short() const { return niv > 0.0; }
};

/// Validated, immutable sequence of whole days of settlement records.
class Dataset {
public:
    Dataset() = default;
    /// Validates ordering, 48-period days and the generation range; throws
    /// `DataError` on violation.
    Dataset(std::vector<SettlementRecord> records, double e_max, std::string source);

    const std::vector<SettlementRecord>& records() const { return records_; }
    double e_max() const { return e_max_; }
    const std::string& source() const { return source_; }
    std::size_t size() const { return records_.size(); }
    std::size_t num_days() const { return records_.size() / kPeriodsPerDay; }

    /// Records of day `day_index` (0-based), periods 1..48 in order.
    const SettlementRecord& at(std::size_t day_index, int period) const {
        return records_[day_index * kPeriodsPerDay + static_cast<std::size_t>(period - 1)];
    }
    Date day(std::size_t day_index) const { return at(day_index, 1).date; }
    DayType day_type(std::size_t day_index) const { return at(day_index, 1).day_type; }

private:
    std::vector<SettlementRecord> records_;
    double e_max_ = 0.0;
    std::string source_;
};

inline constexpr const char* kCsvHeader =
    "date,period,day_type,da_price,bal_price,niv,gen_energy,load_fc,wind_fc,solar_fc,margin_fc,"
    "power_fc";

Dataset load_csv(const std::filesystem::path& path, double e_max);
Dataset parse_csv(const std::string& text, double e_max, const std::string& source = "csv");
std::string to_csv(const Dataset& data);
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// Holiday calendar; dates not listed are weekdays or weekends by the civil
/// calendar.
class HolidayCalendar {
public:
    HolidayCalendar() = default;
    explicit HolidayCalendar(std::set<std::int64_t> days) : days_(std::move(days)) {}
    static HolidayCalendar from_config(const KeyValueConfig& cfg);

    DayType classify(const Date& d) const;
    bool empty() const { return days_.empty(); }

private:
    std::set<std::int64_t> days_;
};

/// Indices into the synthetic exogenous driver vector.
enum SynthDriver : int { kLoadDriver = 0, kWindDriver = 1, kMarginDriver = 2, kSolarDriver = 3 };

struct SynthConfig {
    int days = 120;
    Date start = parse_date("2015-11-06");
    double e_max = 50.0;
    HolidayCalendar holidays;

    // System length: logit P(short) = beta[0] + beta[1..4] . z, where z are the
    // standardised exogenous drivers (load, wind, margin, solar). The solar
    // term only applies in periods 12..41.
    std::vector<double> beta{0.0, 0.8, -0.6, -0.5, 0.3};
    double driver_persistence = 0.9;  // AR(1) coefficient across half-hours
    double niv_scale = 300.0;         // MWh

    // Day-ahead price: base + daily shape + exogenous effects + per-period
    // AR(1) deviation across days.
    double price_base = 40.0;
    double price_shape_amplitude = 10.0;
    double price_load_effect = 4.0;
    double price_wind_effect = -3.0;
    double price_ar = 0.7;
    double price_noise = 3.0;

    // Balancing legs: pi_up = pi_c + spread_up * |NIV|/niv_scale * u.
    double spread_up = 20.0;
    double spread_down = 12.0;
    double spread_noise = 0.5;  // log-normal sigma of u

    // Generation: E = e_max * logistic(x) with latent
    // x = wind_latent_mean + wind_coupling * z_wind + r, r a stationary AR(1)
    // with standard deviation wind_residual_sd. The national wind forecast is
    // linear in z_wind, so the true conditional quantiles given wind_fc are
    // known in closed form.
    double wind_latent_mean = -0.3;
    double wind_coupling = 1.2;
    double wind_residual_sd = 0.8;
    double wind_residual_persistence = 0.9;
    double national_wind_capacity = 8000.0;  // MW
    bool emit_power_fc = false;

    double load_base = 30000.0;
    double load_amplitude = 8000.0;
    double load_sd = 2000.0;
    double margin_base = 6000.0;
    double margin_sd = 1500.0;
    double solar_peak = 3000.0;
    double solar_sd = 800.0;

    /// Reads `synth.*` keys (plus `holidays`) from a flat config.
    static SynthConfig from_config(const KeyValueConfig& cfg);
    void validate() const;
};

/// Fixed quantile levels used for probabilistic power forecasts.
const std::vector<double>& quantile_levels();

/// Synthetic dataset plus the ground truth used by oracle checks.
struct SynthResult {
    Dataset data;
    std::vector<double> true_phi;                       ///< P(short) per record
    std::vector<settlement::PriceTriple> true_prices;   ///< per record
    std::vector<std::vector<double>> true_quantiles;    ///< per record, at quantile_levels()
    std::vector<std::array<double, 4>> drivers;         ///< standardised z per record
    std::vector<double> beta_star;
};

SynthResult synth_generate(const SynthConfig& config, std::uint64_t seed);

}  // namespace balbid
