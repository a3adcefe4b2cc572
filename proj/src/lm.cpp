#include "gatelab/lm.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gatelab/parallel.hpp"
#include "gatelab/rng.hpp"

namespace gatelab::lm {

TabularLM TabularLM::uniform(int vocab, int bos) {
    if (vocab < 2) throw Error(ErrorKind::InvalidInput, "vocabulary must have >= 2 tokens");
    if (bos < 0 || bos >= vocab) throw Error(ErrorKind::InvalidToken, "bos outside vocabulary");
    TabularLM m;
    m.vocab = vocab;
    m.bos = bos;
    m.theta.assign(static_cast<std::size_t>(vocab) * vocab, 0.0);
    return m;
}

std::span<const double> TabularLM::row(int context) const {
    return {theta.data() + static_cast<std::size_t>(context) * vocab, static_cast<std::size_t>(vocab)};
}

std::span<double> TabularLM::row(int context) {
    return {theta.data() + static_cast<std::size_t>(context) * vocab, static_cast<std::size_t>(vocab)};
}

std::vector<double> TabularLM::next_logprobs(int context) const { return log_softmax(row(context)); }

std::vector<double> TabularLM::next_probs(int context) const { return softmax(row(context)); }

namespace {

void check_tokens(const TokenSeq& seq, int vocab, const char* what) {
    for (int t : seq) {
        if (t < 0 || t >= vocab) {
            std::ostringstream os;
            os << what << " token " << t << " outside vocabulary of size " << vocab;
            throw Error(ErrorKind::InvalidToken, os.str());
        }
    }
}

} // namespace

void validate_pair(const PreferencePair& pair, int vocab) {
    if (pair.chosen.empty() || pair.rejected.empty())
        throw Error(ErrorKind::InvalidInput, "pair '" + pair.pair_id + "' has an empty response");
    check_tokens(pair.prompt, vocab, "prompt");
    check_tokens(pair.chosen, vocab, "chosen");
    check_tokens(pair.rejected, vocab, "rejected");
}

int first_context(const TabularLM& model, const TokenSeq& prompt) {
    return prompt.empty() ? model.bos : prompt.back();
}

ScoredResponse score_sequence(const TabularLM& model, const TokenSeq& prompt,
                              const TokenSeq& response) {
    check_tokens(prompt, model.vocab, "prompt");
    check_tokens(response, model.vocab, "response");
    std::vector<double> lp;
    lp.reserve(response.size());
    int ctx = first_context(model, prompt);
    for (int tok : response) {
        lp.push_back(model.next_logprobs(ctx)[tok]);
        ctx = tok;
    }
    return ScoredResponse::all_valid(std::move(lp));
}

double sequence_logprob(const TabularLM& model, const TokenSeq& prompt, const TokenSeq& response) {
    return gatelab::sequence_logprob(score_sequence(model, prompt, response));
}

void accumulate_logprob_grad(const TabularLM& model, const TokenSeq& prompt,
                             const TokenSeq& response, double weight, std::span<double> grad) {
    const auto V = static_cast<std::size_t>(model.vocab);
    int ctx = first_context(model, prompt);
    for (int tok : response) {
        const auto p = model.next_probs(ctx);
        double* g = grad.data() + static_cast<std::size_t>(ctx) * V;
        for (std::size_t k = 0; k < V; ++k) g[k] -= weight * p[k];
        g[tok] += weight;
        ctx = tok;
    }
}

void OptimizerConfig::validate() const {
    if (!(lr > 0.0)) throw Error(ErrorKind::InvalidInput, "learning rate must be > 0");
    if (batch_size < 1) throw Error(ErrorKind::InvalidInput, "batch size must be >= 1");
    if (!(rmsprop_decay >= 0.0 && rmsprop_decay < 1.0))
        throw Error(ErrorKind::InvalidInput, "rmsprop decay must lie in [0, 1)");
    if (!(rmsprop_eps > 0.0)) throw Error(ErrorKind::InvalidInput, "rmsprop eps must be > 0");
}

std::string_view to_string(OptimizerConfig::Kind k) noexcept {
    return k == OptimizerConfig::Kind::SGD ? "sgd" : "rmsprop";
}

OptimizerConfig::Kind parse_optimizer(std::string_view text) {
    if (text == "sgd") return OptimizerConfig::Kind::SGD;
    if (text == "rmsprop") return OptimizerConfig::Kind::RMSprop;
    throw Error(ErrorKind::InvalidInput, "unknown optimizer '" + std::string(text) + "'");
}

void Optimizer::step(TabularLM& model, std::span<const double> grad) {
    if (grad.size() != model.theta.size()) throw Error(ErrorKind::InvalidInput, "gradient size mismatch");
    if (cfg_.kind == OptimizerConfig::Kind::SGD) {
        for (std::size_t i = 0; i < grad.size(); ++i) model.theta[i] -= cfg_.lr * grad[i];
        return;
    }
    if (mean_square_.empty()) mean_square_.assign(grad.size(), 0.0);
    const double rho = cfg_.rmsprop_decay;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        mean_square_[i] = rho * mean_square_[i] + (1.0 - rho) * grad[i] * grad[i];
        model.theta[i] -= cfg_.lr * grad[i] / (std::sqrt(mean_square_[i]) + cfg_.rmsprop_eps);
    }
}

namespace {

struct ScoredPair {
    ScoredResponse chosen;
    ScoredResponse rejected;
    PairAdvantages adv;
};

ScoredPair score_pair(const TabularLM& policy, const TabularLM& reference, const PreferencePair& p) {
    ScoredPair s;
    s.chosen = score_sequence(policy, p.prompt, p.chosen);
    s.rejected = score_sequence(policy, p.prompt, p.rejected);
    s.adv = PairAdvantages::from_logprobs(gatelab::sequence_logprob(s.chosen),
                                          gatelab::sequence_logprob(s.rejected),
                                          sequence_logprob(reference, p.prompt, p.chosen),
                                          sequence_logprob(reference, p.prompt, p.rejected));
    return s;
}

} // namespace

std::vector<GateResult> minibatch_gates(const TabularLM& policy,
                                        std::span<const PreferencePair> batch,
                                        const LossConfig& cfg) {
    std::vector<GateResult> gates;
    gates.reserve(batch.size());
    for (const auto& p : batch) {
        if (!cfg.gated) {
            gates.emplace_back();
            continue;
        }
        gates.push_back(compute_gate(score_sequence(policy, p.prompt, p.rejected), cfg.gate));
    }
    return gates;
}

MinibatchGradient minibatch_gradient(const TabularLM& policy, const TabularLM& reference,
                                     std::span<const PreferencePair> batch, const LossConfig& cfg,
                                     std::span<const GateResult> fixed_gates, int threads) {
    if (batch.empty()) throw Error(ErrorKind::EmptyInput, "empty minibatch");
    if (!fixed_gates.empty() && fixed_gates.size() != batch.size())
        throw Error(ErrorKind::InvalidInput, "fixed gate count differs from batch size");

    const std::size_t n = batch.size();
    const std::size_t cells = policy.theta.size();
    std::vector<PairAdvantages> advs(n);
    std::vector<PairResult> results(n);
    std::vector<std::vector<double>> partial(n);

    parallel_for(n, threads, [&](std::size_t i) {
        const auto& pair = batch[i];
        const ScoredPair s = score_pair(policy, reference, pair);
        advs[i] = s.adv;
        GateResult gate;
        if (cfg.gated) gate = fixed_gates.empty() ? compute_gate(s.rejected, cfg.gate) : fixed_gates[i];
        results[i] = evaluate_pair_with_gate(s.adv, cfg, gate);
        partial[i].assign(cells, 0.0);
        accumulate_logprob_grad(policy, pair.prompt, pair.chosen, results[i].grad_chosen, partial[i]);
        accumulate_logprob_grad(policy, pair.prompt, pair.rejected, results[i].grad_rejected, partial[i]);
    });

    MinibatchGradient out;
    out.grad.assign(cells, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < cells; ++j) out.grad[j] += partial[i][j];
        total += results[i].loss;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double& g : out.grad) g *= inv;
    out.advantages = std::move(advs);
    out.result.pairs = std::move(results);
    out.result.mean_loss = total * inv;
    return out;
}

double minibatch_loss(const TabularLM& policy, const TabularLM& reference,
                      std::span<const PreferencePair> batch, const LossConfig& cfg,
                      std::span<const GateResult> gates) {
    if (batch.empty()) throw Error(ErrorKind::EmptyInput, "empty minibatch");
    if (gates.size() != batch.size()) throw Error(ErrorKind::InvalidInput, "gate count differs from batch size");
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const ScoredPair s = score_pair(policy, reference, batch[i]);
        total += evaluate_pair_with_gate(s.adv, cfg, gates[i]).loss;
    }
    return total / static_cast<double>(batch.size());
}

std::vector<ContextMass> context_masses(const TabularLM& model, std::span<const PreferencePair> pairs) {
    std::vector<ContextMass> out;
    for (const auto& pair : pairs) {
        int ctx = first_context(model, pair.prompt);
        for (std::size_t t = 0; t < pair.chosen.size(); ++t) {
            const auto p = model.next_probs(ctx);
            const int yc = pair.chosen[t];
            const int yr = t < pair.rejected.size() ? pair.rejected[t] : -1;
            ContextMass m;
            m.chosen = p[yc];
            m.rejected = (yr >= 0 && yr != yc) ? p[yr] : 0.0;
            for (int k = 0; k < model.vocab; ++k)
                if (k != yc && k != yr) m.others += p[k];
            m.argmax = *std::max_element(p.begin(), p.end());
            out.push_back(m);
            ctx = yc;
        }
    }
    return out;
}

TrainRecord evaluate(const TabularLM& policy, const TabularLM& reference,
                     std::span<const PreferencePair> eval_set, const LossConfig& cfg, int epoch) {
    TrainRecord rec;
    rec.epoch = epoch;
    if (eval_set.empty()) return rec;
    const auto n = static_cast<double>(eval_set.size());
    double loss = 0.0, gate = 0.0, gated = 0.0, dc = 0.0, dr = 0.0;
    for (const auto& pair : eval_set) {
        const ScoredPair s = score_pair(policy, reference, pair);
        const PairResult r = evaluate_pair(s.adv, cfg, s.rejected);
        loss += r.loss;
        gate += r.gate.gate_value;
        if (r.gate.gate_value < 0.5) gated += 1.0;
        dc += s.adv.delta_chosen;
        dr += s.adv.delta_rejected;
    }
    rec.mean_loss = loss / n;
    rec.mean_gate = gate / n;
    rec.gated_fraction = gated / n;
    rec.delta_logpi_chosen = dc / n;
    rec.delta_logpi_rejected = dr / n;

    const auto pol = context_masses(policy, eval_set);
    const auto ref = context_masses(reference, eval_set);
    double am = 0.0, om = 0.0;
    for (std::size_t i = 0; i < pol.size(); ++i) {
        am += pol[i].argmax - ref[i].argmax;
        om += pol[i].others - ref[i].others;
    }
    if (!pol.empty()) {
        rec.argmax_mass_delta = am / static_cast<double>(pol.size());
        rec.others_mass_delta = om / static_cast<double>(pol.size());
    }
    return rec;
}

TrainResult train(std::span<const PreferencePair> train_set, std::span<const PreferencePair> eval_set,
                  const TabularLM& reference, const LossConfig& cfg, const OptimizerConfig& opt,
                  int epochs, int threads) {
    cfg.validate();
    opt.validate();
    if (epochs < 0) throw Error(ErrorKind::InvalidInput, "epochs must be >= 0");
    if (train_set.empty() && epochs > 0) throw Error(ErrorKind::EmptyInput, "empty training set");
    for (const auto& p : train_set) validate_pair(p, reference.vocab);
    for (const auto& p : eval_set) validate_pair(p, reference.vocab);

    TrainResult out;
    out.policy = reference;
    Optimizer optimizer(opt);
    const auto bs = static_cast<std::size_t>(opt.batch_size);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        int batch_index = 0;
        for (std::size_t start = 0; start < train_set.size(); start += bs, ++batch_index) {
            const auto batch = train_set.subspan(start, std::min(bs, train_set.size() - start));
            auto mg = minibatch_gradient(out.policy, reference, batch, cfg, {}, threads);
            const bool finite_grad = std::all_of(mg.grad.begin(), mg.grad.end(),
                                                 [](double g) { return std::isfinite(g); });
            bool finite_step = finite_grad && std::isfinite(mg.result.mean_loss);
            TabularLM next = out.policy;
            if (finite_step) {
                optimizer.step(next, mg.grad);
                finite_step = std::all_of(next.theta.begin(), next.theta.end(),
                                          [](double t) { return std::isfinite(t); });
            }
            if (!finite_step) {
                DivergenceSnapshot snap;
                snap.epoch = epoch;
                snap.batch = batch_index;
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    snap.pair_ids.push_back(batch[i].pair_id);
                    snap.pair_losses.push_back(mg.result.pairs[i].loss);
                }
                snap.records = out.records;
                std::ostringstream os;
                os << "non-finite loss, gradient or parameters at epoch " << epoch << ", batch " << batch_index;
                throw DivergenceError(os.str(), std::move(snap));
            }
            out.policy = std::move(next);
        }
        out.records.push_back(evaluate(out.policy, reference, eval_set, cfg, epoch));
    }
    return out;
}

TabularLM sft_initialize(std::span<const PreferencePair> pairs, int vocab, int bos, int epochs,
                         double lr) {
    TabularLM model = TabularLM::uniform(vocab, bos);
    std::vector<double> grad(model.theta.size());
    for (int e = 0; e < epochs; ++e) {
        for (const auto& p : pairs) {
            std::fill(grad.begin(), grad.end(), 0.0);
            accumulate_logprob_grad(model, p.prompt, p.chosen, 1.0, grad);
            for (std::size_t i = 0; i < grad.size(); ++i) model.theta[i] += lr * grad[i];
        }
    }
    return model;
}

void SyntheticSpec::validate() const {
    std::ostringstream os;
    if (vocab < 4) os << "vocab must be >= 4; ";
    if (num_pairs < 2) os << "num_pairs must be >= 2; ";
    if (prompt_len < 1 || response_len < 1) os << "prompt and response lengths must be >= 1; ";
    if (!(valley_fraction >= 0.0 && valley_fraction <= 1.0)) os << "valley_fraction outside [0,1]; ";
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) os << "eval_fraction outside (0,1); ";
    if (support < 1 || support > vocab - 1) os << "support must lie in [1, vocab-1]; ";
    if (!(dominant_weight > 0.0 && dominant_weight <= 1.0)) os << "dominant_weight outside (0,1]; ";
    if (valley_fraction > 0.0 && support >= vocab - 1)
        os << "valley pairs need tokens outside each context's support (vocab too small); ";
    const double prompts = std::pow(static_cast<double>(vocab - 1), prompt_len);
    if (prompts < 2.0 * num_pairs) os << "too few distinct prompts for num_pairs; ";
    if (sft_epochs < 0 || !(sft_lr >= 0.0)) os << "invalid sft settings; ";
    if (!os.str().empty()) throw Error(ErrorKind::InvalidSpec, os.str());
}

SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const int V = spec.vocab;
    SyntheticDataset data;

    // Generating chain: `support` successors per context, first one dominant,
    // the rest sharing the remainder with halving weights.
    std::vector<std::vector<double>> weights(V);
    data.support.resize(V);
    for (int c = 0; c < V; ++c) {
        std::vector<int> content(V - 1);
        for (int t = 1; t < V; ++t) content[t - 1] = t;
        rng.shuffle(content);
        data.support[c].assign(content.begin(), content.begin() + spec.support);
        std::vector<double> w(spec.support);
        w[0] = spec.support == 1 ? 1.0 : spec.dominant_weight;
        double rest = 0.0;
        for (int j = 1; j < spec.support; ++j) rest += std::ldexp(1.0, -(j - 1));
        for (int j = 1; j < spec.support; ++j)
            w[j] = (1.0 - spec.dominant_weight) * std::ldexp(1.0, -(j - 1)) / rest;
        weights[c] = std::move(w);
    }

    auto sample_chain = [&](int ctx) {
        TokenSeq out;
        for (int t = 0; t < spec.response_len; ++t) {
            ctx = data.support[ctx][rng.categorical(weights[ctx])];
            out.push_back(ctx);
        }
        return out;
    };
    auto sample_valley = [&](int ctx) {
        TokenSeq out;
        for (int t = 0; t < spec.response_len; ++t) {
            std::vector<int> off;
            const auto& sup = data.support[ctx];
            for (int tok = 1; tok < V; ++tok)
                if (std::find(sup.begin(), sup.end(), tok) == sup.end()) off.push_back(tok);
            ctx = off[static_cast<std::size_t>(rng.below(static_cast<int>(off.size())))];
            out.push_back(ctx);
        }
        return out;
    };

    const int n = spec.num_pairs;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    const int n_valley = static_cast<int>(std::lround(spec.valley_fraction * n));
    std::vector<bool> valley(n, false);
    for (int i = 0; i < n_valley; ++i) valley[order[i]] = true;

    std::set<TokenSeq> seen;
    std::vector<PreferencePair> pairs;
    for (int i = 0; i < n; ++i) {
        PreferencePair p;
        std::ostringstream id;
        id << "p" << i;
        p.pair_id = id.str();
        do {
            p.prompt.clear();
            for (int t = 0; t < spec.prompt_len; ++t) p.prompt.push_back(1 + rng.below(V - 1));
        } while (!seen.insert(p.prompt).second);
        p.chosen = sample_chain(p.prompt.back());
        if (valley[i]) {
            p.rejected = sample_valley(p.prompt.back());
        } else {
            for (int tries = 0; tries < 16; ++tries) {
                p.rejected = sample_chain(p.prompt.back());
                if (p.rejected != p.chosen) break;
            }
        }
        pairs.push_back(std::move(p));
    }

    const int n_eval = std::clamp(static_cast<int>(std::lround(spec.eval_fraction * n)), 1, n - 1);
    for (int i = 0; i < n; ++i) {
        if (i < n - n_eval) {
            data.train.push_back(pairs[i]);
            data.train_valley.push_back(valley[i]);
        } else {
            data.eval.push_back(pairs[i]);
            data.eval_valley.push_back(valley[i]);
        }
    }
    return data;
}

TabularLM initial_model(const SyntheticDataset& data, const SyntheticSpec& spec) {
    return sft_initialize(data.train, spec.vocab, 0, spec.sft_epochs, spec.sft_lr);
}

std::vector<SweepRow> sweep(SweepParam param, std::span<const double> grid, const LossConfig& base,
                            std::span<const PreferencePair> train_set,
                            std::span<const PreferencePair> eval_set, const TabularLM& reference,
                            const OptimizerConfig& opt, int epochs, int threads) {
    if (grid.empty()) throw Error(ErrorKind::UsageError, "sweep grid is empty");
    std::vector<SweepRow> rows;
    for (double value : grid) {
        LossConfig cfg = base;
        cfg.gated = true;
        if (param == SweepParam::Tau) cfg.gate.tau = value;
        else cfg.gate.alpha = value;
        cfg.validate();

        SweepRow row;
        row.value = value;
        const TrainRecord init = evaluate(reference, reference, eval_set, cfg, -1);
        row.gated_fraction = init.gated_fraction;
        row.mean_gate = init.mean_gate;
        auto run = train(train_set, eval_set, reference, cfg, opt, epochs, threads);
        if (!run.records.empty()) {
            const auto& last = run.records.back();
            row.delta_chosen = last.delta_logpi_chosen;
            row.delta_rejected = last.delta_logpi_rejected;
            row.final_gated_fraction = last.gated_fraction;
            row.final_mean_gate = last.mean_gate;
        }
        row.records = std::move(run.records);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace gatelab::lm
