#pragma once

#include <optional>
#include <string>

#include "balbid/market_data.hpp"
#include "balbid/power_forecast.hpp"

namespace balbid::strategy {

enum class StrategyKind {
    min_imbalance,
    known_niv,
    deterministic_sl,
    probabilistic_zero_max,
    additive,
    multiplicative,
    quantile,
};

const char* to_string(StrategyKind kind);
/// Throws `ConfigError` for an unknown name.
StrategyKind parse_strategy_kind(const std::string& name);

/// A strategy and its single tuning parameter, if it has one: nu for
/// additive, eta for multiplicative and alpha' for quantile.
struct StrategyParams {
    StrategyKind kind = StrategyKind::min_imbalance;
    std::optional<double> nu;
    std::optional<double> eta;
    std::optional<double> alpha_prime;

    static StrategyParams make(StrategyKind kind);
    static StrategyParams additive(double nu);
    static StrategyParams multiplicative(double eta);
    static StrategyParams quantile(double alpha_prime);

    /// Throws `ConfigError` when a required parameter is missing or out of
    /// range, or when a parameter is given to a kind that does not use it.
    void validate() const;
    /// Stable identifier such as `additive(nu=0.5)`.
    std::string label() const;
    /// Name and value of the tuning parameter, if any.
    std::optional<std::pair<std::string, double>> parameter() const;
};

enum class Branch { long_position, short_position, none };

const char* to_string(Branch b);

/// Forecast inputs available when the offer is made.
struct OfferInputs {
    std::optional<double> phi;      ///< probability the system is short
    std::optional<double> phi_hat;  ///< forecast critical probability; nullopt if degenerate
    std::optional<double> expected;  ///< point forecast of generation
    std::optional<power::QuantileForecast> quantiles;
    std::optional<SystemLength> realised_length;  ///< oracle input for known_niv
};

struct OfferDecision {
    int period = 0;
    double offer = 0.0;
    Branch branch = Branch::none;
    /// The price forecast was degenerate and the offer fell back to the
    /// point forecast.
    bool fallback = false;
    OfferInputs inputs;
};

/// Offer the expected generation.
double offer_min_imbalance(double expected, double e_max);
/// Offer nothing into a short system and everything into a long one.
double offer_known_niv(SystemLength length, double e_max);
/// Zero/max rule: E_max when phi < phi_hat, otherwise 0.
double offer_probabilistic(double phi, double phi_hat, double e_max);
double offer_additive(double expected, double phi, double phi_hat, double nu, double e_max);
double offer_multiplicative(double expected, double phi, double phi_hat, double eta, double e_max);
/// q(alpha') on the long branch, q(1 - alpha') on the short branch.
double offer_quantile(const power::QuantileForecast& q, double phi, double phi_hat,
                      double alpha_prime);

/// Long iff phi < phi_hat. Every branching strategy uses this predicate.
inline Branch branch_of(double phi, double phi_hat) {
    return phi < phi_hat ? Branch::long_position : Branch::short_position;
}

/// Applies `params` to the inputs. Throws `ContractError` when an input the
/// strategy needs is absent.
OfferDecision decide(const StrategyParams& params, const OfferInputs& inputs, double e_max,
                     int period = 0);

}  // namespace balbid::strategy
