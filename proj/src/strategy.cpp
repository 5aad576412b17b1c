#include "balbid/strategy.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "balbid/error.hpp"

namespace balbid::strategy {

namespace {

constexpr std::pair<StrategyKind, const char*> kKindNames[] = {
    {StrategyKind::min_imbalance, "min_imbalance"},
    {StrategyKind::known_niv, "known_niv"},
    {StrategyKind::deterministic_sl, "deterministic_sl"},
    {StrategyKind::probabilistic_zero_max, "probabilistic_zero_max"},
    {StrategyKind::additive, "additive"},
    {StrategyKind::multiplicative, "multiplicative"},
    {StrategyKind::quantile, "quantile"},
};

void check_probability(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw ContractError(fmt::format("{} = {} is outside [0, 1]", what, v));
    }
}

}  // namespace

const char* to_string(StrategyKind kind) {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

StrategyKind parse_strategy_kind(const std::string& name) {
    for (const auto& [k, n] : kKindNames) {
        if (name == n) return k;
    }
    throw ConfigError(fmt::format("unknown strategy kind '{}'", name));
}

const char* to_string(Branch b) {
    switch (b) {
        case Branch::long_position: return "long";
        case Branch::short_position: return "short";
        case Branch::none: break;
    }
    return "n/a";
}

StrategyParams StrategyParams::make(StrategyKind kind) {
    StrategyParams p;
    p.kind = kind;
    return p;
}

StrategyParams StrategyParams::additive(double nu) {
    StrategyParams p = make(StrategyKind::additive);
    p.nu = nu;
    return p;
}

StrategyParams StrategyParams::multiplicative(double eta) {
    StrategyParams p = make(StrategyKind::multiplicative);
    p.eta = eta;
    return p;
}

StrategyParams StrategyParams::quantile(double alpha_prime) {
    StrategyParams p = make(StrategyKind::quantile);
    p.alpha_prime = alpha_prime;
    return p;
}

void StrategyParams::validate() const {
    const bool wants_nu = kind == StrategyKind::additive;
    const bool wants_eta = kind == StrategyKind::multiplicative;
    const bool wants_alpha = kind == StrategyKind::quantile;
    const auto check_presence = [&](const std::optional<double>& v, bool wanted, const char* name) {
        if (wanted && !v) {
            throw ConfigError(fmt::format("strategy {} requires parameter {}", to_string(kind), name));
        }
        if (!wanted && v) {
            throw ConfigError(fmt::format("strategy {} does not take parameter {}", to_string(kind), name));
        }
    };
    check_presence(nu, wants_nu, "nu");
    check_presence(eta, wants_eta, "eta");
    check_presence(alpha_prime, wants_alpha, "alpha_prime");
    if (nu && !(*nu >= 0.0 && *nu <= 1.0)) {
        throw ConfigError(fmt::format("nu = {} is outside [0, 1]", *nu));
    }
    if (eta && !(*eta >= 0.0 && std::isfinite(*eta))) {
        throw ConfigError(fmt::format("eta = {} must be finite and non-negative", *eta));
    }
    // Levels below one half would bet against the branch the forecast chose.
    if (alpha_prime && !(*alpha_prime >= 0.5 && *alpha_prime < 1.0)) {
        throw ConfigError(fmt::format("alpha_prime = {} is outside [0.5, 1)", *alpha_prime));
    }
}

std::optional<std::pair<std::string, double>> StrategyParams::parameter() const {
    if (nu) return std::pair<std::string, double>{"nu", *nu};
    if (eta) return std::pair<std::string, double>{"eta", *eta};
    if (alpha_prime) return std::pair<std::string, double>{"alpha_prime", *alpha_prime};
    return std::nullopt;
}

std::string StrategyParams::label() const {
    if (const auto p = parameter()) return fmt::format("{}({}={})", to_string(kind), p->first, p->second);
    return to_string(kind);
}

double offer_min_imbalance(double expected, double e_max) {
    return std::clamp(expected, 0.0, e_max);
}

double offer_known_niv(SystemLength length, double e_max) {
    return length == SystemLength::Short ? 0.0 : e_max;
}

double offer_probabilistic(double phi, double phi_hat, double e_max) {
    check_probability(phi, "phi");
    check_probability(phi_hat, "phi_hat");
    return branch_of(phi, phi_hat) == Branch::long_position ? e_max : 0.0;
}

double offer_additive(double expected, double phi, double phi_hat, double nu, double e_max) {
    check_probability(phi, "phi");
    check_probability(phi_hat, "phi_hat");
    if (branch_of(phi, phi_hat) == Branch::long_position) {
        return std::min(e_max, expected + nu * e_max);
    }
    return std::max(0.0, expected - nu * e_max);
}

double offer_multiplicative(double expected, double phi, double phi_hat, double eta, double e_max) {
    check_probability(phi, "phi");
    check_probability(phi_hat, "phi_hat");
    if (branch_of(phi, phi_hat) == Branch::long_position) {
        return std::min(e_max, (1.0 + eta) * expected);
    }
    return std::max(0.0, (1.0 - eta) * expected);
}

double offer_quantile(const power::QuantileForecast& q, double phi, double phi_hat,
                      double alpha_prime) {
    check_probability(phi, "phi");
    check_probability(phi_hat, "phi_hat");
    if (branch_of(phi, phi_hat) == Branch::long_position) return q.at(alpha_prime);
    return q.at(1.0 - alpha_prime);
}

OfferDecision decide(const StrategyParams& params, const OfferInputs& in, double e_max, int period) {
    OfferDecision d;
    d.period = period;
    d.inputs = in;

    auto need = [&](const auto& v, const char* what) -> decltype(auto) {
        if (!v) {
            throw ContractError(
                fmt::format("strategy {} needs input {}", to_string(params.kind), what));
        }
        return *v;
    };

    switch (params.kind) {
        case StrategyKind::min_imbalance:
            d.offer = offer_min_imbalance(need(in.expected, "expected"), e_max);
            return d;
        case StrategyKind::known_niv: {
            const SystemLength sl = need(in.realised_length, "realised_length");
            d.offer = offer_known_niv(sl, e_max);
            d.branch = sl == SystemLength::Short ? Branch::short_position : Branch::long_position;
            return d;
        }
        case StrategyKind::deterministic_sl: {
            const double phi = need(in.phi, "phi");
            const SystemLength sl = phi >= 0.5 ? SystemLength::Short : SystemLength::Long;
            d.offer = offer_known_niv(sl, e_max);
            d.branch = sl == SystemLength::Short ? Branch::short_position : Branch::long_position;
            return d;
        }
        default:
            break;
    }

    const double phi = need(in.phi, "phi");
    if (!in.phi_hat) {
        // No expected cost attaches to either imbalance direction, so the
        // neutral action is to contract the point forecast.
        d.offer = offer_min_imbalance(need(in.expected, "expected"), e_max);
        d.fallback = true;
        return d;
    }
    const double phi_hat = *in.phi_hat;
    d.branch = branch_of(phi, phi_hat);
    switch (params.kind) {
        case StrategyKind::probabilistic_zero_max:
            d.offer = offer_probabilistic(phi, phi_hat, e_max);
            break;
        case StrategyKind::additive:
            d.offer = offer_additive(need(in.expected, "expected"), phi, phi_hat,
                                     need(params.nu, "nu"), e_max);
            break;
        case StrategyKind::multiplicative:
            d.offer = offer_multiplicative(need(in.expected, "expected"), phi, phi_hat,
                                           need(params.eta, "eta"), e_max);
            break;
        case StrategyKind::quantile:
            d.offer = offer_quantile(need(in.quantiles, "quantiles"), phi, phi_hat,
                                     need(params.alpha_prime, "alpha_prime"));
            break;
        default:
            break;
    }
    return d;
}

}  // namespace balbid::strategy
