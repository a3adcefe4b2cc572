#pragma once

// Valley statistics and the smooth multiplicative gate applied to the
// rejected-response term. The gate value is a plain number: it is computed
// from the current policy and then treated as a constant by every objective.

#include <string_view>

#include "gatelab/prob.hpp"

namespace gatelab {

enum class GateStatistic {
    SeqMean,        // geometric mean of rejected token probabilities
    TokenQuantile,  // lower-tail quantile of rejected token probabilities
};

std::string_view to_string(GateStatistic s) noexcept;
GateStatistic parse_gate_statistic(std::string_view text);

struct GateConfig {
    GateStatistic statistic = GateStatistic::SeqMean;
    double tau = 0.10;    // threshold, probability units
    double alpha = 50.0;  // steepness
    double q = 0.10;      // quantile, TokenQuantile only

    // Defaults per statistic: SeqMean tau=0.10, TokenQuantile tau=0.005, q=0.10.
    static GateConfig defaults_for(GateStatistic statistic);

    void validate() const;
};

struct GateResult {
    double statistic_value = 0.0;  // s, in [0, 1]
    double gate_value = 1.0;       // g = sigmoid(alpha * (s - tau))
    bool detached = true;          // always true; g never carries a derivative
};

double seq_statistic(const ScoredResponse& rejected);
double tok_statistic(const ScoredResponse& rejected, double q);

// Dispatches on cfg.statistic.
double valley_statistic(const ScoredResponse& rejected, const GateConfig& cfg);

GateResult gate_value(double s, const GateConfig& cfg);

// statistic + gate in one call.
GateResult compute_gate(const ScoredResponse& rejected, const GateConfig& cfg);

// Log-space gate of the logistic-regression toy: sigmoid(alpha * (ln p - ln tau)).
double toy_gate(double p, double tau, double alpha);

} // namespace gatelab
