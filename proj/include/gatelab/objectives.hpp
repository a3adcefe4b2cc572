#pragma once

// DPO, IPO and Cal-DPO with optional rejected-term gating. Every objective
// reports its loss and the closed-form derivatives with respect to the two
// policy sequence log-probabilities; the gate enters as a constant.

#include <span>
#include <string_view>
#include <vector>

#include "gatelab/gate.hpp"
#include "gatelab/prob.hpp"

namespace gatelab {

enum class Objective { DPO, IPO, CalDPO };

std::string_view to_string(Objective o) noexcept;
Objective parse_objective(std::string_view text);

struct PairAdvantages {
    double delta_chosen = 0.0;    // log pi(y+) - log ref(y+)
    double delta_rejected = 0.0;  // log pi(y-) - log ref(y-)
    double logpi_chosen = 0.0;
    double logpi_rejected = 0.0;
    double logref_chosen = 0.0;
    double logref_rejected = 0.0;

    static PairAdvantages from_logprobs(double logpi_chosen, double logpi_rejected,
                                        double logref_chosen, double logref_rejected);
};

struct LossConfig {
    Objective objective = Objective::DPO;
    bool gated = false;
    double beta = 0.1;
    GateConfig gate;  // consulted only when gated
    // Cal-DPO only: scale the sigmoid argument by beta. Off by default, which
    // evaluates the logistic term on the raw advantage difference.
    bool caldpo_beta_in_sigmoid = false;

    // beta = 1e-3 for Cal-DPO, 0.1 otherwise; gate defaults per statistic.
    static LossConfig defaults_for(Objective objective, bool gated,
                                   GateStatistic statistic = GateStatistic::SeqMean);

    double calibration_target() const noexcept { return 1.0 / (2.0 * beta); }
    std::string label() const;
    void validate() const;
};

// Per-pair outcome. grad_* are derivatives of the pair loss with respect to
// log pi(y+|x) and log pi(y-|x).
struct PairResult {
    double logit = 0.0;       // gated logit beta * (d+ - g d-)
    double loss = 0.0;
    double grad_coeff = 0.0;  // beta * (1 - sigmoid(logit))
    double grad_chosen = 0.0;
    double grad_rejected = 0.0;
    GateResult gate;          // gate_value == 1 when ungated
};

struct BatchResult {
    std::vector<PairResult> pairs;
    double mean_loss = 0.0;  // arithmetic mean, reduced in index order
};

double gated_logit(const PairAdvantages& adv, double g, double beta);

// The three families. `rejected` is only read when cfg.gated is set.
PairResult dpo_family_loss(const PairAdvantages& adv, const LossConfig& cfg,
                           const ScoredResponse& rejected);
PairResult ipo_family_loss(const PairAdvantages& adv, const LossConfig& cfg,
                           const ScoredResponse& rejected);
PairResult caldpo_family_loss(const PairAdvantages& adv, const LossConfig& cfg,
                              const ScoredResponse& rejected);

// Dispatch on cfg.objective.
PairResult evaluate_pair(const PairAdvantages& adv, const LossConfig& cfg,
                         const ScoredResponse& rejected);

// Same, with an externally supplied gate (ignored when cfg.gated is false).
PairResult evaluate_pair_with_gate(const PairAdvantages& adv, const LossConfig& cfg,
                                   const GateResult& gate);

BatchResult evaluate_batch(std::span<const PairAdvantages> advs, const LossConfig& cfg,
                           std::span<const ScoredResponse> rejected);

// Pair loss as a function of the four sequence log-probabilities and a gate
// value, in any floating type. Used as the finite-difference target.
template <class Real>
Real objective_loss(const LossConfig& cfg, const Real& logpi_chosen, const Real& logpi_rejected,
                    const Real& logref_chosen, const Real& logref_rejected, const Real& g) {
    const Real beta(cfg.beta);
    const Real dc = logpi_chosen - logref_chosen;
    const Real dr = logpi_rejected - logref_rejected;
    switch (cfg.objective) {
    case Objective::DPO: {
        const Real z = beta * (dc - g * dr);
        return softplus(Real(-z));
    }
    case Objective::IPO: {
        const Real z = beta * (dc - g * dr);
        const Real m = z - Real(1) / (Real(2) * beta);
        return m * m;
    }
    case Objective::CalDPO: {
        const Real c = Real(1) / (Real(2) * beta);
        Real u = dc - g * dr;
        if (cfg.caldpo_beta_in_sigmoid) u = beta * u;
        const Real a = dc - c;
        const Real b = g * dr + c;
        return softplus(Real(-u)) + a * a + b * b;
    }
    }
    return Real(0);
}

enum class GateMode {
    Detached,    // gate held fixed across the perturbation
    Recomputed,  // statistic re-derived from the perturbed log-probability
};

struct GradCheck {
    double analytic_chosen = 0.0;
    double analytic_rejected = 0.0;
    double numeric_chosen = 0.0;
    double numeric_rejected = 0.0;
    double rel_err_chosen = 0.0;
    double rel_err_rejected = 0.0;
    double max_rel_err = 0.0;
    double gate_value = 1.0;
    double logit = 0.0;
    double grad_coeff = 0.0;
    // numeric_rejected / grad_coeff; equals g for the DPO family.
    double rejected_scale = 0.0;
};

double relative_error(double reference, double candidate);

// Central differences of the pair loss in log pi(y+) and log pi(y-), evaluated
// in 50-digit arithmetic so tiny gated gradients are still resolved. In
// Recomputed mode a shift h of log pi(y-) is spread evenly over the valid
// rejected tokens, which scales either statistic by exp(h / T).
GradCheck analytic_vs_numeric_grads(const PairAdvantages& adv, const LossConfig& cfg,
                                    const ScoredResponse& rejected, double h,
                                    GateMode mode = GateMode::Detached);

} // namespace gatelab
