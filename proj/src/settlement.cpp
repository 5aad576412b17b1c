#include "balbid/settlement.hpp"

#include <cmath>
#include <string>

#include "balbid/error.hpp"

namespace balbid::settlement {

SettlementResult settle(double contracted, double generated, double pi_c, double pi_s,
                        double e_max) {
    if (!(contracted >= 0.0) || !(generated >= 0.0)) {
        throw ContractError("settle: volumes must be non-negative");
    }
    if (e_max > 0.0 && (contracted > e_max || generated > e_max)) {
        throw ContractError("settle: volumes must not exceed E_max");
    }
    SettlementResult r;
    r.imbalance = contracted - generated;
    r.cost = (pi_s - pi_c) * r.imbalance;
    r.revenue = pi_c * generated - r.cost;
    return r;
}

CriticalProbability critical_probability(const PriceTriple& prices) {
    const double spread = prices.pi_up - prices.pi_down;
    if (spread == 0.0 || !std::isfinite(spread)) {
        throw DegeneratePricesError("critical probability undefined: pi_up == pi_down");
    }
    CriticalProbability out;
    out.raw = (prices.pi_c - prices.pi_down) / spread;
    out.value = out.raw;
    if (out.raw < 0.0) {
        out.value = 0.0;
        out.clamped = true;
    } else if (out.raw > 1.0) {
        out.value = 1.0;
        out.clamped = true;
    }
    return out;
}

double expected_imbalance_cost(double contracted, double expected_generation, double phi,
                               const PriceTriple& prices) {
    const double d = contracted - expected_generation;
    return phi * (prices.pi_up - prices.pi_c) * d +
           (1.0 - phi) * (prices.pi_down - prices.pi_c) * d;
}

}  // namespace balbid::settlement
