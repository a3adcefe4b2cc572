#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gatelab/error.hpp"
#include "gatelab/objectives.hpp"
#include "oracles.hpp"

using namespace gatelab;
using oracle::HP;

namespace {

PairAdvantages adv_of(double dc, double dr) {
    // Arbitrary absolute levels; only the differences matter.
    return PairAdvantages::from_logprobs(-3.0 + dc, -7.0 + dr, -3.0, -7.0);
}

GateResult forced(double g) {
    GateResult r;
    r.gate_value = g;
    return r;
}

LossConfig cfg_of(Objective o, bool gated, double beta) {
    LossConfig c = LossConfig::defaults_for(o, gated);
    c.beta = beta;
    return c;
}

// Oracle derivatives by 50-digit central differences of the oracle losses.
struct OracleGrad {
    double chosen, rejected, loss;
};

OracleGrad oracle_grad(Objective o, double dc, double dr, double g, double beta, bool bis = false) {
    auto f = [&](HP a, HP b) -> HP {
        switch (o) {
        case Objective::DPO: return oracle::dpo(a, b, HP(g), HP(beta));
        case Objective::IPO: return oracle::ipo(a, b, HP(g), HP(beta));
        case Objective::CalDPO: return oracle::caldpo(a, b, HP(g), HP(beta), bis);
        }
        return HP(0);
    };
    const HP h("1e-20");
    const HP a(dc), b(dr);
    return {static_cast<double>((f(a + h, b) - f(a - h, b)) / (2 * h)),
            static_cast<double>((f(a, b + h) - f(a, b - h)) / (2 * h)), static_cast<double>(f(a, b))};
}

} // namespace

TEST_CASE("config defaults and labels") {
    CHECK(LossConfig::defaults_for(Objective::DPO, false).beta == 0.1);
    CHECK(LossConfig::defaults_for(Objective::IPO, true).beta == 0.1);
    CHECK(LossConfig::defaults_for(Objective::CalDPO, false).beta == 1e-3);
    CHECK(LossConfig::defaults_for(Objective::CalDPO, false).calibration_target() == doctest::Approx(500.0));
    CHECK(LossConfig::defaults_for(Objective::DPO, true, GateStatistic::TokenQuantile).gate.tau == 0.005);
    CHECK(LossConfig::defaults_for(Objective::DPO, true).label() == "Gate-DPO (seq)");
    CHECK(parse_objective("caldpo") == Objective::CalDPO);
    CHECK_THROWS_AS(parse_objective("kto"), Error);
    LossConfig bad = LossConfig::defaults_for(Objective::DPO, false);
    bad.beta = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("advantages") {
    const auto a = PairAdvantages::from_logprobs(-1.25, -4.5, -2.0, -3.0);
    CHECK(a.delta_chosen == 0.75);
    CHECK(a.delta_rejected == -1.5);
}

TEST_CASE("gated_logit") {
    CHECK(gated_logit(adv_of(1.5, 1.5), 1.0, 0.1) == 0.0);
    CHECK(gated_logit(adv_of(2.0, -4.0), 0.5, 0.1) == doctest::Approx(0.4).epsilon(1e-15));
    oracle::Gen gen(31);
    for (int i = 0; i < 100; ++i) {
        const auto a = adv_of(gen.uni(-5, 5), gen.uni(-5, 5));
        const double beta = gen.uni(0.01, 1.0);
        CHECK(gated_logit(a, 1.0, beta) == beta * (a.delta_chosen - a.delta_rejected));
    }
}

TEST_CASE("DPO examples") {
    const auto cfg = cfg_of(Objective::DPO, false, 0.1);
    const auto r = evaluate_pair_with_gate(adv_of(0.0, 0.0), cfg, {});
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(r.grad_coeff == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(r.grad_chosen == doctest::Approx(-0.05).epsilon(1e-15));
    CHECK(r.grad_rejected == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(r.gate.gate_value == 1.0);

    const auto g = evaluate_pair_with_gate(adv_of(1.0, -1.0), cfg_of(Objective::DPO, true, 0.1), forced(0.5));
    CHECK(g.logit == doctest::Approx(0.15).epsilon(1e-15));
    const double loss = static_cast<double>(oracle::dpo(HP(1), HP(-1), HP("0.5"), HP("0.1")));
    CHECK(oracle::rel_err(loss, g.loss) < 1e-14);
    CHECK(g.loss == doctest::Approx(0.620957).epsilon(1e-6));
    CHECK(g.grad_coeff == doctest::Approx(0.0462565).epsilon(1e-6));
    CHECK(g.grad_rejected == doctest::Approx(0.0231283).epsilon(1e-6));
}

TEST_CASE("IPO examples") {
    const double beta = 0.1;
    // z = 1/(2 beta) = 5 at dc - dr = 50
    const auto at_min = evaluate_pair_with_gate(adv_of(30.0, -20.0), cfg_of(Objective::IPO, false, beta), {});
    CHECK(std::fabs(at_min.loss) < 1e-20);
    CHECK(std::fabs(at_min.grad_chosen) < 1e-12);
    CHECK(std::fabs(at_min.grad_rejected) < 1e-12);
    const auto z0 = evaluate_pair_with_gate(adv_of(0.0, 0.0), cfg_of(Objective::IPO, false, beta), {});
    CHECK(z0.loss == doctest::Approx(25.0).epsilon(1e-14));
    CHECK(z0.grad_chosen == doctest::Approx(-1.0).epsilon(1e-14));  // 2 * (0 - 5) * 0.1
}

TEST_CASE("Cal-DPO examples") {
    const double beta = 1e-3, c = 500.0;
    const auto fixed = evaluate_pair_with_gate(adv_of(c, -c), cfg_of(Objective::CalDPO, false, beta), {});
    CHECK(fixed.loss == doctest::Approx(softplus(-2.0 * c)).epsilon(1e-12));
    const auto zero = evaluate_pair_with_gate(adv_of(0.0, 0.0), cfg_of(Objective::CalDPO, false, beta), {});
    CHECK(zero.loss == doctest::Approx(500000.0 + std::log(2.0)).epsilon(1e-15));
    CHECK(zero.loss - 500000.0 == doctest::Approx(0.6931).epsilon(1e-4));
}

TEST_CASE("family checks") {
    const auto r = ScoredResponse::all_valid({-1.0});
    CHECK_THROWS_AS(dpo_family_loss(adv_of(0, 0), cfg_of(Objective::IPO, false, 0.1), r), Error);
    CHECK_THROWS_AS(ipo_family_loss(adv_of(0, 0), cfg_of(Objective::CalDPO, false, 0.1), r), Error);
    CHECK_THROWS_AS(caldpo_family_loss(adv_of(0, 0), cfg_of(Objective::DPO, false, 0.1), r), Error);
    // Gated path needs a scoreable rejected response.
    CHECK_THROWS_AS(dpo_family_loss(adv_of(0, 0), cfg_of(Objective::DPO, true, 0.1), ScoredResponse{}), Error);
}

TEST_CASE("gated path takes the gate from the rejected response") {
    const auto rej = ScoredResponse::all_valid({std::log(0.02), std::log(0.5)});
    const auto cfg = cfg_of(Objective::DPO, true, 0.1);
    const auto r = dpo_family_loss(adv_of(0.3, -0.2), cfg, rej);
    const auto g = compute_gate(rej, cfg.gate);
    CHECK(r.gate.gate_value == g.gate_value);
    CHECK(r.grad_rejected == doctest::Approx(g.gate_value * r.grad_coeff).epsilon(1e-15));
}

TEST_CASE("property: analytic gradients match the oracle") {
    oracle::Gen gen(32);
    for (Objective o : {Objective::DPO, Objective::IPO, Objective::CalDPO}) {
        for (int i = 0; i < 300; ++i) {
            const double dc = gen.uni(-6, 6), dr = gen.uni(-6, 6);
            const double g = gen.uni(1e-4, 1.0);
            const double beta = o == Objective::CalDPO ? gen.uni(1e-3, 0.5) : gen.uni(0.01, 1.0);
            const bool bis = o == Objective::CalDPO && gen.integer(0, 1) == 1;
            auto cfg = cfg_of(o, true, beta);
            cfg.caldpo_beta_in_sigmoid = bis;
            const auto r = evaluate_pair_with_gate(adv_of(dc, dr), cfg, forced(g));
            const auto want = oracle_grad(o, dc, dr, g, beta, bis);
            CHECK(oracle::rel_err(want.loss, r.loss) < 1e-12);
            CHECK(std::fabs(want.chosen - r.grad_chosen) <= 1e-11 * std::max(1.0, std::fabs(want.chosen)));
            CHECK(std::fabs(want.rejected - r.grad_rejected) <= 1e-11 * std::max(1.0, std::fabs(want.rejected)));
        }
    }
}

TEST_CASE("property: exact scaling, non-expansiveness, monotone coefficient") {
    oracle::Gen gen(33);
    for (int i = 0; i < 1000; ++i) {
        const double beta = gen.uni(0.01, 1.0);
        const double g = gen.uni(1e-6, 1.0);
        const auto r = evaluate_pair_with_gate(adv_of(gen.uni(-8, 8), gen.uni(-8, 8)), cfg_of(Objective::DPO, true, beta),
                                               forced(g));
        CHECK(r.grad_coeff >= 0.0);
        CHECK(r.grad_coeff == doctest::Approx(beta * (1.0 - oracle::sigmoid(r.logit))).epsilon(1e-13));
        CHECK(r.grad_chosen == -r.grad_coeff);
        CHECK(r.grad_rejected == doctest::Approx(g * r.grad_coeff).epsilon(1e-15));
        CHECK(std::fabs(r.grad_rejected) <= r.grad_coeff);
        CHECK(r.loss >= 0.0);
        const auto r2 = evaluate_pair_with_gate(adv_of(r.logit / beta + 0.5, 0.0), cfg_of(Objective::DPO, false, beta), {});
        CHECK(r2.grad_coeff < r.grad_coeff);
    }
}

TEST_CASE("property: reduction at g = 1 and non-negativity") {
    oracle::Gen gen(34);
    for (Objective o : {Objective::DPO, Objective::IPO, Objective::CalDPO}) {
        for (int i = 0; i < 500; ++i) {
            const auto a = adv_of(gen.uni(-6, 6), gen.uni(-6, 6));
            const double beta = gen.uni(1e-3, 1.0);
            const auto u = evaluate_pair_with_gate(a, cfg_of(o, false, beta), {});
            const auto g = evaluate_pair_with_gate(a, cfg_of(o, true, beta), forced(1.0));
            CHECK(u.loss == g.loss);
            CHECK(u.grad_chosen == g.grad_chosen);
            CHECK(u.grad_rejected == g.grad_rejected);
            CHECK(u.logit == g.logit);
            CHECK(u.loss >= 0.0);
        }
    }
}

TEST_CASE("evaluate_batch mean") {
    const std::vector<PairAdvantages> advs{adv_of(0, 0), adv_of(1, -1), adv_of(-2, 3)};
    const std::vector<ScoredResponse> rej(3, ScoredResponse::all_valid({-1.0}));
    const auto cfg = cfg_of(Objective::DPO, false, 0.1);
    const auto b = evaluate_batch(advs, cfg, rej);
    REQUIRE(b.pairs.size() == 3);
    CHECK(b.mean_loss == doctest::Approx((b.pairs[0].loss + b.pairs[1].loss + b.pairs[2].loss) / 3.0));
}

TEST_CASE("finite-difference probe") {
    const auto rej = ScoredResponse::all_valid({std::log(0.08), std::log(0.3), std::log(0.05)});
    const auto a = PairAdvantages::from_logprobs(-4.0, rej.token_logprobs[0] + rej.token_logprobs[1] + rej.token_logprobs[2],
                                                 -4.7, -5.1);
    const auto dpo = cfg_of(Objective::DPO, false, 0.1);
    CHECK(analytic_vs_numeric_grads(a, dpo, rej, 1e-5).max_rel_err <= 1e-6);

    const auto gated = cfg_of(Objective::DPO, true, 0.1);
    const auto d = analytic_vs_numeric_grads(a, gated, rej, 1e-5);
    CHECK(d.gate_value > 0.05);
    CHECK(d.gate_value < 0.95);
    CHECK(std::fabs(d.rejected_scale - d.gate_value) <= 1e-5 * d.gate_value);

    const auto nd = analytic_vs_numeric_grads(a, gated, rej, 1e-5, GateMode::Recomputed);
    CHECK(std::fabs(nd.rejected_scale - nd.gate_value) > 100.0 * std::fabs(d.rejected_scale - d.gate_value));
    CHECK(nd.max_rel_err > 1e-3);

    CHECK_THROWS_AS(analytic_vs_numeric_grads(a, dpo, rej, 1e-2), Error);
    CHECK_THROWS_AS(analytic_vs_numeric_grads(a, dpo, rej, 1e-9), Error);
}
