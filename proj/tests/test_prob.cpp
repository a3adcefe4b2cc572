#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gatelab/error.hpp"
#include "gatelab/prob.hpp"
#include "oracles.hpp"

using namespace gatelab;

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

} // namespace

TEST_CASE("log_softmax examples") {
    const std::vector<double> half{0.0, 0.0};
    auto a = log_softmax(half);
    CHECK(a[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK(a[1] == a[0]);

    const std::vector<double> z{1.0, 2.0, 3.0};
    const auto got = log_softmax(z);
    const auto want = oracle::log_softmax(z);
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(got[i] - want[i]) < 1e-12);
    CHECK(got[0] == doctest::Approx(-2.4076).epsilon(1e-4));
    CHECK(got[2] == doctest::Approx(-0.4076).epsilon(1e-3));

    const std::vector<double> fives{5.0, 5.0, 5.0};
    const auto base = log_softmax(fives);
    for (double c : {-30.0, 1.5, 77.0}) {
        std::vector<double> shifted{5.0 + c, 5.0 + c, 5.0 + c};
        const auto s = log_softmax(shifted);
        for (int i = 0; i < 3; ++i) CHECK(std::fabs(s[i] - base[i]) < 1e-12);
    }
}

TEST_CASE("log_softmax rejects non-finite and empty input") {
    const std::vector<double> bad{0.0, std::numeric_limits<double>::infinity()};
    CHECK(kind_of([&] { log_softmax(bad); }) == ErrorKind::InvalidInput);
    const std::vector<double> nan{std::nan(""), 1.0};
    CHECK(kind_of([&] { log_softmax(nan); }) == ErrorKind::InvalidInput);
    CHECK_THROWS_AS(log_softmax(std::vector<double>{}), Error);
}

TEST_CASE("property: softmax normalizes and is shift invariant") {
    oracle::Gen gen(11);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> z(static_cast<std::size_t>(gen.integer(2, 64)));
        for (double& v : z) v = gen.uni(-50.0, 50.0);
        const auto lp = log_softmax(z);
        double total = 0.0;
        for (double v : lp) {
            const double p = std::exp(v);
            CHECK(p > 0.0);
            CHECK(p <= 1.0);
            total += p;
        }
        CHECK(std::fabs(total - 1.0) < 1e-12);

        const double c = gen.uni(-100.0, 100.0);
        std::vector<double> zc = z;
        for (double& v : zc) v += c;
        const auto lpc = log_softmax(zc);
        for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::fabs(lpc[i] - lp[i]) < 1e-12);
    }
}

TEST_CASE("sequence_logprob") {
    CHECK(sequence_logprob(ScoredResponse::all_valid({-1.5})) == -1.5);
    ScoredResponse r{{-1.0, -9.0, -2.0}, {true, false, true}};
    CHECK(sequence_logprob(r) == -3.0);
    ScoredResponse masked{{-1.0, -2.0}, {false, false}};
    CHECK(kind_of([&] { sequence_logprob(masked); }) == ErrorKind::EmptyResponse);
    CHECK(kind_of([&] { sequence_logprob(ScoredResponse{}); }) == ErrorKind::EmptyResponse);
}

TEST_CASE("property: sequence_logprob permutation invariance and mask exclusion") {
    oracle::Gen gen(12);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = gen.integer(1, 20);
        ScoredResponse r;
        double expected = 0.0;
        for (int i = 0; i < n; ++i) {
            // Dyadic values keep the sum exact under any ordering.
            const double v = -static_cast<double>(gen.integer(0, 4096)) / 64.0;
            const bool valid = i == 0 || gen.integer(0, 3) != 0;
            r.token_logprobs.push_back(v);
            r.valid_mask.push_back(valid);
            if (valid) expected += v;
        }
        CHECK(sequence_logprob(r) == expected);
        std::vector<std::size_t> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), gen.eng);
        ScoredResponse p;
        for (auto i : idx) {
            p.token_logprobs.push_back(r.token_logprobs[i]);
            p.valid_mask.push_back(r.valid_mask[i]);
        }
        CHECK(sequence_logprob(p) == expected);
        // Masked content does not matter.
        for (std::size_t i = 0; i < p.size(); ++i)
            if (!p.valid_mask[i]) p.token_logprobs[i] = -1e300;
        CHECK(sequence_logprob(p) == expected);
    }
}

TEST_CASE("lower_quantile") {
    CHECK(lower_quantile(std::vector<double>{0.5, 0.2, 0.9, 0.1}, 0.10) == 0.1);
    CHECK(lower_quantile(std::vector<double>{0.3}, 0.75) == 0.3);
    std::vector<double> tenth;
    for (int i = 1; i <= 10; ++i) tenth.push_back(i / 10.0);
    CHECK(lower_quantile(tenth, 0.10) == 0.1);
    CHECK(lower_quantile(tenth, 0.55) == 0.6);  // ceil(5.5) - 1 = 5
    CHECK(lower_quantile(tenth, 0.999) == 1.0);
    CHECK(kind_of([] { lower_quantile(std::vector<double>{}, 0.1); }) == ErrorKind::EmptyInput);
    CHECK(kind_of([] { lower_quantile(std::vector<double>{1.0}, 0.0); }) == ErrorKind::InvalidInput);
    CHECK(kind_of([] { lower_quantile(std::vector<double>{1.0}, 1.0); }) == ErrorKind::InvalidInput);
}

TEST_CASE("property: lower_quantile bounds") {
    oracle::Gen gen(13);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> v(static_cast<std::size_t>(gen.integer(1, 40)));
        for (double& x : v) x = gen.uni(0.0, 1.0);
        const double q = gen.uni(1e-3, 0.999);
        const double got = lower_quantile(v, q);
        const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
        CHECK(got <= *mx);
        CHECK(got >= *mn);
        if (q * static_cast<double>(v.size()) <= 1.0) CHECK(got == *mn);
        CHECK(std::find(v.begin(), v.end(), got) != v.end());
    }
}

TEST_CASE("clamped_exp floors degenerate log-probabilities and counts them") {
    const auto before = clamp_events();
    CHECK(clamped_exp(-std::numeric_limits<double>::infinity()) == std::exp(kMinLogProb));
    CHECK(clamped_exp(-2000.0) == std::exp(kMinLogProb));
    CHECK(clamp_events() == before + 2);
    CHECK(clamped_exp(-1.0) == std::exp(-1.0));
    CHECK(clamp_events() == before + 2);
}

TEST_CASE("sigmoid and softplus against high precision") {
    for (double x = -40.0; x <= 40.0; x += 0.37) {
        CHECK(oracle::rel_err(oracle::sigmoid(x), sigmoid(x)) < 1e-14);
        const double sp = softplus(x);
        const double want = static_cast<double>(log(oracle::HP(1) + exp(oracle::HP(x))));
        CHECK(oracle::rel_err(want, sp) < 1e-14);
    }
    CHECK(sigmoid(-1000.0) > 0.0);
    CHECK(sigmoid(1000.0) < 1.0);
    CHECK(sigmoid(-501.0) == std::numeric_limits<double>::denorm_min());
    CHECK(sigmoid(501.0) == std::nextafter(1.0, 0.0));
    CHECK_THROWS_AS(sigmoid(std::nan("")), Error);
}

TEST_CASE("entropy") {
    CHECK(entropy(std::vector<double>{0.5, 0.5}) == doctest::Approx(std::log(2.0)));
    CHECK(entropy(std::vector<double>{1.0, 0.0}) == 0.0);
}
