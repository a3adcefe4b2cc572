#pragma once

// Shared constructions for language-model tests.

#include <cmath>

#include "gatelab/lm.hpp"

namespace fixture {

// V = 6, prompt {1}, chosen {2, 3}, rejected {4, 5}. The responses share only
// context row 1; rows 2 and 4 belong to one response each. Row 1 is set so
// that p(2) = p(4) = x with <e_2 - p, e_4 - p> = 0, which makes the two
// sequence-log-probability gradients orthogonal.
struct DisjointPair {
    gatelab::lm::TabularLM model;
    gatelab::lm::PreferencePair pair;
};

inline DisjointPair disjoint_pair() {
    DisjointPair d;
    d.model = gatelab::lm::TabularLM::uniform(6, 0);
    // f(x) = 2x^2 + 4y^2 - 2x with y = (1 - 2x) / 4; root in (0, 0.5)
    auto f = [](double x) {
        const double y = (1.0 - 2.0 * x) / 4.0;
        return 2.0 * x * x + 4.0 * y * y - 2.0 * x;
    };
    double lo = 0.0, hi = 0.5;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0 ? lo : hi) = mid;
    }
    const double x = 0.5 * (lo + hi);
    const double y = (1.0 - 2.0 * x) / 4.0;
    for (int k = 0; k < 6; ++k) d.model.theta[6 + k] = std::log(k == 2 || k == 4 ? x : y);
    // Distinct, non-uniform rows for the response contexts.
    for (int k = 0; k < 6; ++k) {
        d.model.theta[2 * 6 + k] = 0.3 * k;
        d.model.theta[4 * 6 + k] = -0.2 * k;
    }
    d.pair = {"d0", {1}, {2, 3}, {4, 5}};
    return d;
}

} // namespace fixture
