#include "gatelab/objectives.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <sstream>
#include <string>

#include "gatelab/error.hpp"

namespace gatelab {

using HighPrecision = boost::multiprecision::cpp_bin_float_50;

std::string_view to_string(Objective o) noexcept {
    switch (o) {
    case Objective::DPO: return "dpo";
    case Objective::IPO: return "ipo";
    case Objective::CalDPO: return "caldpo";
    }
    return "unknown";
}

Objective parse_objective(std::string_view text) {
    if (text == "dpo" || text == "DPO") return Objective::DPO;
    if (text == "ipo" || text == "IPO") return Objective::IPO;
    if (text == "caldpo" || text == "cal-dpo" || text == "CalDPO") return Objective::CalDPO;
    throw Error(ErrorKind::InvalidInput, "unknown objective '" + std::string(text) + "'");
}

PairAdvantages PairAdvantages::from_logprobs(double logpi_chosen, double logpi_rejected,
                                             double logref_chosen, double logref_rejected) {
    PairAdvantages a;
    a.logpi_chosen = logpi_chosen;
    a.logpi_rejected = logpi_rejected;
    a.logref_chosen = logref_chosen;
    a.logref_rejected = logref_rejected;
    a.delta_chosen = logpi_chosen - logref_chosen;
    a.delta_rejected = logpi_rejected - logref_rejected;
    return a;
}

LossConfig LossConfig::defaults_for(Objective objective, bool gated, GateStatistic statistic) {
    LossConfig cfg;
    cfg.objective = objective;
    cfg.gated = gated;
    cfg.beta = objective == Objective::CalDPO ? 1e-3 : 0.1;
    cfg.gate = GateConfig::defaults_for(statistic);
    return cfg;
}

std::string LossConfig::label() const {
    std::string name;
    switch (objective) {
    case Objective::DPO: name = "DPO"; break;
    case Objective::IPO: name = "IPO"; break;
    case Objective::CalDPO: name = "Cal-DPO"; break;
    }
    if (!gated) return name;
    return "Gate-" + name + (gate.statistic == GateStatistic::SeqMean ? " (seq)" : " (tok)");
}

void LossConfig::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw Error(ErrorKind::InvalidInput, "beta must be > 0");
    if (gated) gate.validate();
}

double gated_logit(const PairAdvantages& adv, double g, double beta) {
    const double z = beta * (adv.delta_chosen - g * adv.delta_rejected);
    if (!std::isfinite(z)) throw Error(ErrorKind::InvalidInput, "non-finite gated logit");
    return z;
}

namespace {

void check_objective(const LossConfig& cfg, Objective expected) {
    if (cfg.objective != expected)
        throw Error(ErrorKind::InvalidInput,
                    "loss config objective is " + std::string(to_string(cfg.objective)) +
                        ", expected " + std::string(to_string(expected)));
}

PairResult dpo_at(const PairAdvantages& adv, const LossConfig& cfg, const GateResult& gate) {
    PairResult r;
    r.gate = gate;
    const double g = gate.gate_value;
    r.logit = gated_logit(adv, g, cfg.beta);
    r.loss = softplus(-r.logit);
    r.grad_coeff = cfg.beta * logistic(-r.logit);
    r.grad_chosen = -r.grad_coeff;
    r.grad_rejected = g * r.grad_coeff;
    return r;
}

PairResult ipo_at(const PairAdvantages& adv, const LossConfig& cfg, const GateResult& gate) {
    PairResult r;
    r.gate = gate;
    const double g = gate.gate_value;
    r.logit = gated_logit(adv, g, cfg.beta);
    const double m = r.logit - cfg.calibration_target();
    r.loss = m * m;
    r.grad_coeff = cfg.beta * logistic(-r.logit);
    r.grad_chosen = 2.0 * m * cfg.beta;
    r.grad_rejected = -2.0 * m * cfg.beta * g;
    return r;
}

PairResult caldpo_at(const PairAdvantages& adv, const LossConfig& cfg, const GateResult& gate) {
    PairResult r;
    r.gate = gate;
    const double g = gate.gate_value;
    const double c = cfg.calibration_target();
    r.logit = gated_logit(adv, g, cfg.beta);
    const double scale = cfg.caldpo_beta_in_sigmoid ? cfg.beta : 1.0;
    const double u = scale * (adv.delta_chosen - g * adv.delta_rejected);
    const double a = adv.delta_chosen - c;
    const double b = g * adv.delta_rejected + c;
    const double tail = logistic(-u);  // 1 - sigmoid(u)
    r.loss = softplus(-u) + a * a + b * b;
    r.grad_coeff = cfg.beta * logistic(-r.logit);
    r.grad_chosen = -scale * tail + 2.0 * a;
    r.grad_rejected = scale * g * tail + 2.0 * g * b;
    return r;
}

GateResult gate_for(const LossConfig& cfg, const ScoredResponse& rejected) {
    if (!cfg.gated) return GateResult{};
    return compute_gate(rejected, cfg.gate);
}

} // namespace

PairResult dpo_family_loss(const PairAdvantages& adv, const LossConfig& cfg,
                           const ScoredResponse& rejected) {
    check_objective(cfg, Objective::DPO);
    return dpo_at(adv, cfg, gate_for(cfg, rejected));
}

PairResult ipo_family_loss(const PairAdvantages& adv, const LossConfig& cfg,
                           const ScoredResponse& rejected) {
    check_objective(cfg, Objective::IPO);
    return ipo_at(adv, cfg, gate_for(cfg, rejected));
}

PairResult caldpo_family_loss(const PairAdvantages& adv, const LossConfig& cfg,
                              const ScoredResponse& rejected) {
    check_objective(cfg, Objective::CalDPO);
    return caldpo_at(adv, cfg, gate_for(cfg, rejected));
}

PairResult evaluate_pair_with_gate(const PairAdvantages& adv, const LossConfig& cfg,
                                   const GateResult& gate) {
    const GateResult effective = cfg.gated ? gate : GateResult{};
    switch (cfg.objective) {
    case Objective::DPO: return dpo_at(adv, cfg, effective);
    case Objective::IPO: return ipo_at(adv, cfg, effective);
    case Objective::CalDPO: return caldpo_at(adv, cfg, effective);
    }
    return {};
}

PairResult evaluate_pair(const PairAdvantages& adv, const LossConfig& cfg,
                         const ScoredResponse& rejected) {
    return evaluate_pair_with_gate(adv, cfg, gate_for(cfg, rejected));
}

BatchResult evaluate_batch(std::span<const PairAdvantages> advs, const LossConfig& cfg,
                           std::span<const ScoredResponse> rejected) {
    if (advs.size() != rejected.size())
        throw Error(ErrorKind::InvalidInput, "batch advantages/responses size mismatch");
    if (advs.empty()) throw Error(ErrorKind::EmptyInput, "empty batch");
    BatchResult out;
    out.pairs.reserve(advs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < advs.size(); ++i) {
        out.pairs.push_back(evaluate_pair(advs[i], cfg, rejected[i]));
        total += out.pairs.back().loss;
    }
    out.mean_loss = total / static_cast<double>(advs.size());
    return out;
}

double relative_error(double reference, double candidate) {
    const double diff = std::abs(candidate - reference);
    if (reference == 0.0) return diff;
    return diff / std::abs(reference);
}

GradCheck analytic_vs_numeric_grads(const PairAdvantages& adv, const LossConfig& cfg,
                                    const ScoredResponse& rejected, double h, GateMode mode) {
    if (!(h >= 1e-7 && h <= 1e-3))
        throw Error(ErrorKind::InvalidInput, "finite-difference step must lie in [1e-7, 1e-3]");

    const GateResult gate = cfg.gated ? compute_gate(rejected, cfg.gate) : GateResult{};
    const PairResult analytic = evaluate_pair_with_gate(adv, cfg, gate);

    const HighPrecision lc(adv.logpi_chosen), lr(adv.logpi_rejected);
    const HighPrecision rc(adv.logref_chosen), rr(adv.logref_rejected);
    const HighPrecision step(h);
    const HighPrecision g0(gate.gate_value);

    const double n_valid = cfg.gated ? static_cast<double>(rejected.valid_count()) : 1.0;
    // Gate as a function of the shift applied to log pi(y-).
    auto gate_at = [&](const HighPrecision& shift) -> HighPrecision {
        if (!cfg.gated || mode == GateMode::Detached) return g0;
        using boost::multiprecision::exp;
        const HighPrecision s = HighPrecision(gate.statistic_value) * exp(shift / HighPrecision(n_valid));
        return logistic(HighPrecision(cfg.gate.alpha) * (s - HighPrecision(cfg.gate.tau)));
    };

    const HighPrecision fc = (objective_loss(cfg, HighPrecision(lc + step), lr, rc, rr, g0) -
                              objective_loss(cfg, HighPrecision(lc - step), lr, rc, rr, g0)) /
                             (2 * step);
    const HighPrecision fr =
        (objective_loss(cfg, lc, HighPrecision(lr + step), rc, rr, gate_at(step)) -
         objective_loss(cfg, lc, HighPrecision(lr - step), rc, rr, gate_at(HighPrecision(-step)))) /
        (2 * step);

    GradCheck out;
    out.analytic_chosen = analytic.grad_chosen;
    out.analytic_rejected = analytic.grad_rejected;
    out.numeric_chosen = static_cast<double>(fc);
    out.numeric_rejected = static_cast<double>(fr);
    out.rel_err_chosen = relative_error(out.analytic_chosen, out.numeric_chosen);
    out.rel_err_rejected = relative_error(out.analytic_rejected, out.numeric_rejected);
    out.max_rel_err = std::max(out.rel_err_chosen, out.rel_err_rejected);
    out.gate_value = gate.gate_value;
    out.logit = analytic.logit;
    out.grad_coeff = analytic.grad_coeff;
    out.rejected_scale = analytic.grad_coeff != 0.0
                             ? static_cast<double>(fr / HighPrecision(analytic.grad_coeff))
                             : 0.0;
    return out;
}

} // namespace gatelab
