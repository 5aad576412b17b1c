#pragma once

namespace balbid::settlement {

/// Day-ahead price with the two balancing legs. The regulation ordering
/// `pi_down <= pi_c <= pi_up` is expected of forecast triples, but real data
/// can violate it, so an unordered triple is representable and reported by
/// `ordered()`.
struct PriceTriple {
    double pi_c = 0.0;
    double pi_up = 0.0;
    double pi_down = 0.0;

    bool ordered() const { return pi_down <= pi_c && pi_c <= pi_up; }
};

struct SettlementResult {
    double imbalance = 0.0;  ///< d = contracted - generated (MWh)
    double cost = 0.0;       ///< T = (pi_s - pi_c) * d
    double revenue = 0.0;    ///< R = pi_c * generated - T
};

/// Settles one period at the single imbalance price `pi_s`.
///
/// Both volumes must lie in [0, e_max]; a `ContractError` is thrown otherwise.
/// Pass `e_max <= 0` to skip the upper bound check.
SettlementResult settle(double contracted, double generated, double pi_c, double pi_s,
                        double e_max = 0.0);

struct CriticalProbability {
    double value = 0.0;    ///< Phi, clamped to [0, 1]
    double raw = 0.0;      ///< Phi before clamping
    bool clamped = false;  ///< true when raw fell outside [0, 1]
};

/// Phi = (pi_c - pi_down) / (pi_up - pi_down), the cost/loss ratio at which
/// the expected-cost-optimal offer flips from E_max to 0.
///
/// Throws `DegeneratePricesError` when pi_up == pi_down.
CriticalProbability critical_probability(const PriceTriple& prices);

/// Expected imbalance cost for a given offer, under short probability `phi`
/// and expected generation `expected_generation`.
double expected_imbalance_cost(double contracted, double expected_generation, double phi,
                               const PriceTriple& prices);

}  // namespace balbid::settlement
