#include "gatelab/gradcheck.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <map>
#include <set>

#include "gatelab/error.hpp"
#include "gatelab/rng.hpp"

namespace gatelab {

using HighPrecision = boost::multiprecision::cpp_bin_float_50;

ScalarCase random_scalar_case(Objective objective, bool gated, std::uint64_t seed, int index) {
    Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(index + 1)) ^
            (static_cast<std::uint64_t>(objective) << 56) ^ (gated ? 1ULL << 60 : 0ULL));
    const auto stat = rng.below(2) == 0 ? GateStatistic::SeqMean : GateStatistic::TokenQuantile;
    ScalarCase c;
    c.cfg = LossConfig::defaults_for(objective, gated, stat);
    c.cfg.beta = objective == Objective::CalDPO ? rng.uniform(1e-3, 0.5) : rng.uniform(0.02, 1.0);
    c.cfg.gate.tau = stat == GateStatistic::SeqMean ? rng.uniform(0.01, 0.3) : rng.uniform(1e-3, 0.05);
    c.cfg.gate.alpha = rng.uniform(10.0, 90.0);
    c.cfg.gate.q = rng.uniform(0.05, 0.5);

    const int len = 1 + rng.below(8);
    double logpi_rej = 0.0;
    for (int t = 0; t < len; ++t) {
        const double lp = std::log(rng.uniform(1e-4, 0.9));
        c.rejected.token_logprobs.push_back(lp);
        c.rejected.valid_mask.push_back(1);
        logpi_rej += lp;
    }
    const double logpi_ch = -rng.uniform(0.5, 20.0);
    const double d_ch = rng.uniform(-4.0, 4.0);
    const double d_rej = rng.uniform(-4.0, 4.0);
    c.adv = PairAdvantages::from_logprobs(logpi_ch, logpi_rej, logpi_ch - d_ch, logpi_rej - d_rej);
    return c;
}

ScalarSuiteResult scalar_suite(Objective objective, bool gated, int cases, std::uint64_t seed,
                               double h, GateMode mode) {
    ScalarSuiteResult out;
    out.objective = objective;
    out.gated = gated;
    out.cases = cases;
    for (int i = 0; i < cases; ++i) {
        const ScalarCase c = random_scalar_case(objective, gated, seed, i);
        const GradCheck gc = analytic_vs_numeric_grads(c.adv, c.cfg, c.rejected, h, mode);
        if (out.worst_case < 0 || gc.max_rel_err > out.max_rel_err || std::isnan(gc.max_rel_err)) {
            out.max_rel_err = gc.max_rel_err;
            out.worst_case = i;
            out.worst = gc;
        }
    }
    return out;
}

namespace {

HighPrecision hp_logsumexp(const std::vector<HighPrecision>& row) {
    HighPrecision m = *std::max_element(row.begin(), row.end());
    HighPrecision acc = 0;
    for (const auto& v : row) acc += exp(v - m);
    return m + log(acc);
}

// Log-softmax of every row of a model, high precision.
std::vector<std::vector<HighPrecision>> hp_log_softmax(const lm::TabularLM& m) {
    std::vector<std::vector<HighPrecision>> rows(m.vocab);
    for (int r = 0; r < m.vocab; ++r) {
        std::vector<HighPrecision> row(m.vocab);
        for (int k = 0; k < m.vocab; ++k) row[k] = HighPrecision(m.theta[r * m.vocab + k]);
        const HighPrecision lse = hp_logsumexp(row);
        for (auto& v : row) v -= lse;
        rows[r] = std::move(row);
    }
    return rows;
}

HighPrecision hp_seq_logprob(const std::vector<std::vector<HighPrecision>>& lsm, int bos,
                             const lm::TokenSeq& prompt, const lm::TokenSeq& resp) {
    int ctx = prompt.empty() ? bos : prompt.back();
    HighPrecision total = 0;
    for (int tok : resp) {
        total += lsm[ctx][tok];
        ctx = tok;
    }
    return total;
}

HighPrecision hp_mean_loss(const std::vector<std::vector<HighPrecision>>& pol,
                           const std::vector<std::vector<HighPrecision>>& ref, int bos,
                           std::span<const lm::PreferencePair> batch, const LossConfig& cfg,
                           const std::vector<GateResult>& gates) {
    HighPrecision total = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& p = batch[i];
        const HighPrecision g = cfg.gated ? HighPrecision(gates[i].gate_value) : HighPrecision(1);
        total += objective_loss<HighPrecision>(cfg, hp_seq_logprob(pol, bos, p.prompt, p.chosen),
                                               hp_seq_logprob(pol, bos, p.prompt, p.rejected),
                                               hp_seq_logprob(ref, bos, p.prompt, p.chosen),
                                               hp_seq_logprob(ref, bos, p.prompt, p.rejected), g);
    }
    return total / HighPrecision(batch.size());
}

} // namespace

ParamCheckResult param_gradcheck(const lm::TabularLM& policy, const lm::TabularLM& reference,
                                 std::span<const lm::PreferencePair> batch, const LossConfig& cfg,
                                 double h) {
    if (batch.empty()) throw Error(ErrorKind::EmptyInput, "empty batch");
    if (!(h > 0.0)) throw Error(ErrorKind::InvalidInput, "step must be positive");
    const auto gates = lm::minibatch_gates(policy, batch, cfg);
    const auto analytic = lm::minibatch_gradient(policy, reference, batch, cfg, gates).grad;

    std::set<int> rows;
    for (const auto& p : batch) {
        for (const auto* resp : {&p.chosen, &p.rejected}) {
            int ctx = lm::first_context(policy, p.prompt);
            for (int tok : *resp) {
                rows.insert(ctx);
                ctx = tok;
            }
        }
    }

    const int V = policy.vocab;
    const auto ref = hp_log_softmax(reference);
    auto pol = hp_log_softmax(policy);
    std::vector<std::size_t> cells;
    std::vector<double> numeric;
    for (int r : rows) {
        const auto saved = pol[r];
        for (int k = 0; k < V; ++k) {
            auto shifted = [&](double sign) {
                std::vector<HighPrecision> row(V);
                for (int j = 0; j < V; ++j) row[j] = HighPrecision(policy.theta[r * V + j]);
                row[k] += HighPrecision(sign * h);
                const HighPrecision lse = hp_logsumexp(row);
                for (auto& v : row) v -= lse;
                pol[r] = std::move(row);
                return hp_mean_loss(pol, ref, policy.bos, batch, cfg, gates);
            };
            const HighPrecision up = shifted(+1.0);
            const HighPrecision down = shifted(-1.0);
            pol[r] = saved;
            cells.push_back(static_cast<std::size_t>(r * V + k));
            numeric.push_back(static_cast<double>((up - down) / HighPrecision(2.0 * h)));
        }
    }

    ParamCheckResult out;
    out.cells = cells.size();
    for (double n : numeric) out.max_abs_grad = std::max(out.max_abs_grad, std::fabs(n));
    const double floor = 1e-6 * out.max_abs_grad;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const double n = numeric[i];
        const double a = analytic[cells[i]];
        const double denom = std::max(std::fabs(n), floor);
        const double err = denom > 0.0 ? std::fabs(a - n) / denom : std::fabs(a - n);
        if (err > out.max_rel_err || std::isnan(err)) {
            out.max_rel_err = err;
            out.worst_cell = cells[i];
        }
    }
    return out;
}

ParamProblem random_param_problem(std::uint64_t seed, int vocab, int pairs) {
    Rng rng(seed);
    ParamProblem p;
    p.policy = lm::TabularLM::uniform(vocab, 0);
    p.reference = lm::TabularLM::uniform(vocab, 0);
    for (double& t : p.policy.theta) t = rng.uniform(-1.5, 1.5);
    for (double& t : p.reference.theta) t = rng.uniform(-1.5, 1.5);
    auto seq = [&](int len) {
        lm::TokenSeq s(static_cast<std::size_t>(len));
        for (int& t : s) t = rng.below(vocab);
        return s;
    };
    for (int i = 0; i < pairs; ++i) {
        lm::PreferencePair pair;
        pair.pair_id = "g" + std::to_string(i);
        pair.prompt = seq(1 + rng.below(3));
        pair.chosen = seq(2 + rng.below(4));
        pair.rejected = seq(2 + rng.below(4));
        p.batch.push_back(std::move(pair));
    }
    return p;
}

} // namespace gatelab
