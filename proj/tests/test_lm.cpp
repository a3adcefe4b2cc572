#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "gatelab/error.hpp"
#include "gatelab/gradcheck.hpp"
#include "gatelab/lm.hpp"
#include "gatelab/lm_io.hpp"
#include "lm_fixtures.hpp"
#include "oracles.hpp"

using namespace gatelab;
using namespace gatelab::lm;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::UsageError;
}

TabularLM random_model(int V, std::uint64_t seed, double scale = 1.0) {
    oracle::Gen gen(seed);
    TabularLM m = TabularLM::uniform(V, 0);
    for (double& t : m.theta) t = gen.uni(-scale, scale);
    return m;
}

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.num_pairs = 40;
    return s;
}

} // namespace

TEST_CASE("scoring examples") {
    const auto u = TabularLM::uniform(7);
    const TokenSeq resp{1, 2, 3, 4};
    const auto sr = score_sequence(u, {5}, resp);
    for (double lp : sr.token_logprobs) CHECK(lp == doctest::Approx(-std::log(7.0)).epsilon(1e-15));
    CHECK(sequence_logprob(u, {5}, resp) == doctest::Approx(-4.0 * std::log(7.0)).epsilon(1e-14));

    auto m = random_model(5, 1);
    CHECK(sequence_logprob(m, {3}, {2}) == doctest::Approx(m.next_logprobs(3)[2]).epsilon(1e-15));

    auto v3 = TabularLM::uniform(3);
    for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) v3.theta[r * 3 + k] = k + 1.0;
    const auto want = oracle::log_softmax({1.0, 2.0, 3.0});
    const auto got = score_sequence(v3, {0}, {2, 0, 1});
    CHECK(std::fabs(got.token_logprobs[0] - want[2]) < 1e-12);
    CHECK(std::fabs(got.token_logprobs[1] - want[0]) < 1e-12);
    CHECK(std::fabs(got.token_logprobs[2] - want[1]) < 1e-12);
}

TEST_CASE("contexts and invalid tokens") {
    auto m = TabularLM::uniform(4, 3);
    CHECK(first_context(m, {}) == 3);
    CHECK(first_context(m, {1, 2}) == 2);
    CHECK(kind_of([&] { score_sequence(m, {0}, {4}); }) == ErrorKind::InvalidToken);
    CHECK(kind_of([&] { score_sequence(m, {-1}, {1}); }) == ErrorKind::InvalidToken);
    CHECK(kind_of([&] { validate_pair({"x", {0}, {}, {1}}, 4); }) == ErrorKind::InvalidInput);
    CHECK(kind_of([&] { validate_pair({"x", {0}, {1}, {9}}, 4); }) == ErrorKind::InvalidToken);
}

TEST_CASE("property: log-probability gradient matches finite differences") {
    oracle::Gen gen(51);
    for (int trial = 0; trial < 20; ++trial) {
        const int V = gen.integer(3, 7);
        auto m = random_model(V, 100 + static_cast<std::uint64_t>(trial), 2.0);
        TokenSeq prompt{gen.integer(0, V - 1)}, resp;
        for (int i = 0, n = gen.integer(1, 6); i < n; ++i) resp.push_back(gen.integer(0, V - 1));
        std::vector<double> grad(m.theta.size(), 0.0);
        accumulate_logprob_grad(m, prompt, resp, 1.0, grad);
        for (std::size_t c = 0; c < m.theta.size(); ++c) {
            const double h = 1e-6, saved = m.theta[c];
            m.theta[c] = saved + h;
            const double up = sequence_logprob(m, prompt, resp);
            m.theta[c] = saved - h;
            const double dn = sequence_logprob(m, prompt, resp);
            m.theta[c] = saved;
            CHECK(std::fabs((up - dn) / (2 * h) - grad[c]) < 1e-8);
        }
    }
}

TEST_CASE("parameter gradient check for all six variants") {
    for (Objective o : {Objective::DPO, Objective::IPO, Objective::CalDPO})
        for (bool gated : {false, true})
            for (std::uint64_t seed : {1u, 2u}) {
                const auto p = random_param_problem(seed);
                const auto r = param_gradcheck(p.policy, p.reference, p.batch, LossConfig::defaults_for(o, gated), 1e-5);
                CHECK(r.cells > 0);
                CHECK(r.max_rel_err <= 1e-4);
            }
}

TEST_CASE("minibatch gradient is the mean of per-pair gradients and thread-count independent") {
    const auto p = random_param_problem(7);
    const auto cfg = LossConfig::defaults_for(Objective::DPO, true);
    const auto all = minibatch_gradient(p.policy, p.reference, p.batch, cfg, {}, 1);
    const auto par = minibatch_gradient(p.policy, p.reference, p.batch, cfg, {}, 4);
    CHECK(all.grad == par.grad);
    CHECK(all.result.mean_loss == par.result.mean_loss);
    std::vector<double> manual(all.grad.size(), 0.0);
    for (std::size_t i = 0; i < p.batch.size(); ++i) {
        const auto one = minibatch_gradient(p.policy, p.reference, std::span(p.batch).subspan(i, 1), cfg);
        for (std::size_t c = 0; c < manual.size(); ++c) manual[c] += one.grad[c] / static_cast<double>(p.batch.size());
    }
    for (std::size_t c = 0; c < manual.size(); ++c) CHECK(manual[c] == doctest::Approx(all.grad[c]).epsilon(1e-12));
    CHECK_THROWS_AS(minibatch_gradient(p.policy, p.reference, std::span<const PreferencePair>{}, cfg), Error);
}

TEST_CASE("zero epochs leave the policy at the reference") {
    const auto data = make_synthetic_dataset(small_spec(), 3);
    const auto ref = initial_model(data, small_spec());
    const auto r = train(data.train, data.eval, ref, LossConfig::defaults_for(Objective::DPO, false), {}, 0);
    CHECK(r.records.empty());
    CHECK(r.policy == ref);
}

TEST_CASE("single ungated step moves chosen up and rejected down") {
    const auto d = fixture::disjoint_pair();
    OptimizerConfig opt;
    opt.lr = 1e-3;
    const std::vector<PreferencePair> batch{d.pair};
    const auto r = train(batch, batch, d.model, LossConfig::defaults_for(Objective::DPO, false), opt, 1);
    CHECK(sequence_logprob(r.policy, d.pair.prompt, d.pair.chosen) >= sequence_logprob(d.model, d.pair.prompt, d.pair.chosen));
    CHECK(sequence_logprob(r.policy, d.pair.prompt, d.pair.rejected) <= sequence_logprob(d.model, d.pair.prompt, d.pair.rejected));
}

TEST_CASE("gated and ungated single steps differ only on rejected cells, by g") {
    const auto d = fixture::disjoint_pair();
    const std::vector<PreferencePair> batch{d.pair};
    auto gated = LossConfig::defaults_for(Objective::DPO, true);
    const double s = seq_statistic(score_sequence(d.model, d.pair.prompt, d.pair.rejected));
    gated.gate.tau = s + 0.01;
    const auto plain = LossConfig::defaults_for(Objective::DPO, false);
    for (auto kind : {OptimizerConfig::Kind::SGD, OptimizerConfig::Kind::RMSprop}) {
        OptimizerConfig opt;
        opt.kind = kind;
        const auto gu = minibatch_gradient(d.model, d.model, batch, plain);
        const auto gg = minibatch_gradient(d.model, d.model, batch, gated);
        const double g = gg.result.pairs[0].gate.gate_value;
        CHECK(g == doctest::Approx(oracle::sigmoid(-0.5)).epsilon(1e-12));
        // raw gradients: row 2 chosen-only, row 4 rejected-only
        for (int k = 0; k < 6; ++k) {
            CHECK(std::fabs(gg.grad[2 * 6 + k] - gu.grad[2 * 6 + k]) <= 1e-12);
            CHECK(std::fabs(gg.grad[4 * 6 + k] - g * gu.grad[4 * 6 + k]) <= 1e-10);
        }
        if (kind == OptimizerConfig::Kind::SGD) {
            const auto ru = train(batch, batch, d.model, plain, opt, 1).policy;
            const auto rg = train(batch, batch, d.model, gated, opt, 1).policy;
            for (int k = 0; k < 6; ++k) {
                const double du_c = ru.theta[12 + k] - d.model.theta[12 + k];
                const double dg_c = rg.theta[12 + k] - d.model.theta[12 + k];
                CHECK(std::fabs(du_c - dg_c) <= 1e-12);
                const double du_r = ru.theta[24 + k] - d.model.theta[24 + k];
                const double dg_r = rg.theta[24 + k] - d.model.theta[24 + k];
                CHECK(std::fabs(dg_r - g * du_r) <= 1e-10);
            }
        }
    }
}

TEST_CASE("first-order attenuation of the rejected log-probability") {
    const auto d = fixture::disjoint_pair();
    const std::vector<PreferencePair> batch{d.pair};
    auto gated = LossConfig::defaults_for(Objective::DPO, true);
    gated.gate.tau = seq_statistic(score_sequence(d.model, d.pair.prompt, d.pair.rejected)) + 0.01;
    OptimizerConfig opt;
    opt.lr = 1e-3;
    const double before = sequence_logprob(d.model, d.pair.prompt, d.pair.rejected);
    const auto ru = train(batch, batch, d.model, LossConfig::defaults_for(Objective::DPO, false), opt, 1).policy;
    const auto rg = train(batch, batch, d.model, gated, opt, 1).policy;
    const double du = sequence_logprob(ru, d.pair.prompt, d.pair.rejected) - before;
    const double dg = sequence_logprob(rg, d.pair.prompt, d.pair.rejected) - before;
    const double g = oracle::sigmoid(-0.5);
    CHECK(std::fabs(dg / du - g) <= 0.05 * g);
}

TEST_CASE("training is deterministic, keeps the reference frozen and accounts mass") {
    const auto spec = small_spec();
    const auto data = make_synthetic_dataset(spec, 9);
    const auto ref = initial_model(data, spec);
    const auto hash = fingerprint(ref);
    const auto cfg = LossConfig::defaults_for(Objective::DPO, true);
    const auto a = train(data.train, data.eval, ref, cfg, {}, 3, 1);
    const auto b = train(data.train, data.eval, ref, cfg, {}, 3, 4);
    CHECK(fingerprint(ref) == hash);
    REQUIRE(a.records.size() == 3);
    CHECK(a.policy == b.policy);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.records[i].mean_loss == b.records[i].mean_loss);
        CHECK(a.records[i].delta_logpi_chosen == b.records[i].delta_logpi_chosen);
        CHECK(a.records[i].gated_fraction >= 0.0);
        CHECK(a.records[i].gated_fraction <= 1.0);
    }
    for (const auto& m : context_masses(a.policy, data.eval)) CHECK(std::fabs(m.chosen + m.rejected + m.others - 1.0) < 1e-12);
}

TEST_CASE("divergence is reported with a snapshot") {
    const auto spec = small_spec();
    const auto data = make_synthetic_dataset(spec, 4);
    const auto ref = initial_model(data, spec);
    OptimizerConfig opt;
    opt.lr = 1e306;
    try {
        train(data.train, data.eval, ref, LossConfig::defaults_for(Objective::CalDPO, false), opt, 2);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.kind() == ErrorKind::Divergence);
        CHECK(e.snapshot().pair_ids.size() == 4);
    }
}

TEST_CASE("synthetic data") {
    const auto spec = small_spec();
    const auto a = make_synthetic_dataset(spec, 5);
    const auto b = make_synthetic_dataset(spec, 5);
    REQUIRE(a.train.size() == b.train.size());
    CHECK(pairs_to_jsonl(a.train) == pairs_to_jsonl(b.train));
    CHECK(a.eval.size() == 8);
    std::set<TokenSeq> train_prompts;
    for (const auto& p : a.train) train_prompts.insert(p.prompt);
    for (const auto& p : a.eval) CHECK(train_prompts.count(p.prompt) == 0);

    const auto ref = initial_model(a, spec);
    for (std::size_t i = 0; i < a.train.size(); ++i)
        if (a.train_valley[i])
            CHECK(seq_statistic(score_sequence(ref, a.train[i].prompt, a.train[i].rejected)) < 0.10);

    SyntheticSpec bad = spec;
    bad.support = bad.vocab - 1;
    CHECK(kind_of([&] { make_synthetic_dataset(bad, 1); }) == ErrorKind::InvalidSpec);
    bad = spec;
    bad.vocab = 3;
    CHECK(kind_of([&] { make_synthetic_dataset(bad, 1); }) == ErrorKind::InvalidSpec);
}

TEST_CASE("valley share drives the initial gate") {
    SyntheticSpec spec;  // full size: the warm start needs enough chosen data
    auto cfg = LossConfig::defaults_for(Objective::DPO, true);
    spec.valley_fraction = 0.0;
    const auto none = make_synthetic_dataset(spec, 6);
    const auto ref0 = initial_model(none, spec);
    CHECK(evaluate(ref0, ref0, none.train, cfg, 0).gated_fraction <= 0.05);
    spec.valley_fraction = 1.0;
    const auto all = make_synthetic_dataset(spec, 6);
    const auto ref1 = initial_model(all, spec);
    CHECK(evaluate(ref1, ref1, all.train, cfg, 0).mean_gate < 0.5);
}

TEST_CASE("sweep rejects an empty grid") {
    const auto data = make_synthetic_dataset(small_spec(), 2);
    const auto ref = initial_model(data, small_spec());
    CHECK(kind_of([&] {
              sweep(SweepParam::Tau, {}, LossConfig::defaults_for(Objective::DPO, true), data.train, data.eval, ref, {}, 1);
          }) == ErrorKind::UsageError);
}

TEST_CASE("dataset and checkpoint formats") {
    const auto pairs = parse_pairs_jsonl("{\"prompt\":[1],\"chosen\":[2,3],\"rejected\":[4],\"pair_id\":\"a\"}\n"
                                         "\n"
                                         "{\"prompt\":[],\"chosen\":[1],\"rejected\":[2]}\n");
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].pair_id == "a");
    CHECK(pairs[1].pair_id == "line3");
    CHECK(parse_pairs_jsonl(pairs_to_jsonl(pairs)).size() == 2);
    CHECK_THROWS_AS(parse_pairs_jsonl("{\"prompt\":[1],\"chosen\":[2]}\n"), Error);
    CHECK_THROWS_AS(parse_pairs_jsonl("{\"prompt\":[1],\"chosen\":[2.5],\"rejected\":[1]}\n"), Error);
    CHECK_THROWS_AS(parse_pairs_jsonl("not json\n"), Error);

    const auto m = random_model(5, 77, 3.0);
    const auto text = checkpoint_to_string(m, "{\"k\":1}");
    const auto back = parse_checkpoint(text);
    CHECK(back.model == m);
    CHECK(back.config_json == "{\"k\":1}");
    CHECK(checkpoint_to_string(back.model, back.config_json) == text);
    CHECK_THROWS_AS(parse_checkpoint("gatelab-checkpoint 9\n"), Error);
    CHECK_THROWS_AS(parse_checkpoint(text.substr(0, text.size() / 2)), Error);
}
