#pragma once

// Seeded finite-difference suites: scalar (sequence log-probability) level and
// full tabular-parameter level.

#include <cstdint>
#include <span>
#include <vector>

#include "gatelab/lm.hpp"
#include "gatelab/objectives.hpp"

namespace gatelab {

struct ScalarCase {
    PairAdvantages adv;
    ScoredResponse rejected;  // token log-probs summing to adv.logpi_rejected
    LossConfig cfg;
};

// Random advantages, rejected responses and (beta, tau, alpha, statistic).
// Deterministic in (objective, gated, seed, index).
ScalarCase random_scalar_case(Objective objective, bool gated, std::uint64_t seed, int index);

struct ScalarSuiteResult {
    Objective objective = Objective::DPO;
    bool gated = false;
    int cases = 0;
    double max_rel_err = 0.0;
    int worst_case = -1;
    GradCheck worst;
};

ScalarSuiteResult scalar_suite(Objective objective, bool gated, int cases, std::uint64_t seed,
                               double h, GateMode mode = GateMode::Detached);

struct ParamCheckResult {
    std::size_t cells = 0;        // theta entries in rows visited by the batch
    double max_rel_err = 0.0;
    double max_abs_grad = 0.0;
    std::size_t worst_cell = 0;
};

// Analytic minibatch gradient (gates fixed at the unperturbed policy) against
// central differences of the mean pair loss, evaluated in 50-digit arithmetic.
// Relative error uses max(|numeric|, 1e-6 * max |numeric|) as denominator.
ParamCheckResult param_gradcheck(const lm::TabularLM& policy, const lm::TabularLM& reference,
                                 std::span<const lm::PreferencePair> batch, const LossConfig& cfg,
                                 double h);

struct ParamProblem {
    lm::TabularLM policy;
    lm::TabularLM reference;
    std::vector<lm::PreferencePair> batch;
};

// Random theta (policy and reference), random 4-pair batch on a small vocabulary.
ParamProblem random_param_problem(std::uint64_t seed, int vocab = 8, int pairs = 4);

} // namespace gatelab
