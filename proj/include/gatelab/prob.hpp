#pragma once

// Probability kernels shared by every module. Probabilities are carried in
// natural-log space; linear space only appears inside gate statistics.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace gatelab {

// Floor applied to token log-probabilities before exponentiation.
inline constexpr double kMinLogProb = -745.0;

// Per-token log-probabilities of one response under one model.
struct ScoredResponse {
    std::vector<double> token_logprobs;  // natural log, each <= 0
    std::vector<bool> valid_mask;        // false = padding

    static ScoredResponse all_valid(std::vector<double> logprobs);

    std::size_t size() const noexcept { return token_logprobs.size(); }
    std::size_t valid_count() const noexcept;
};

std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

// Sum of valid token log-probabilities. Throws EmptyResponse if nothing is valid.
double sequence_logprob(const ScoredResponse& resp);

// Lower order statistic: sorted[clamp(ceil(q*N) - 1, 0, N-1)].
double lower_quantile(std::span<const double> values, double q);

// exp(logprob) with the logprob clamped to kMinLogProb. Clamping events are
// counted process-wide so callers can log them.
double clamped_exp(double logprob);
std::size_t clamp_events() noexcept;

// Shannon entropy in nats of a probability vector.
double entropy(std::span<const double> probs);

// Logistic function with the saturation policy used for gates: |x| > 500
// returns the boundary neighbour inside (0, 1), and results are always kept
// strictly inside the open interval.
double sigmoid(double x);

// Generic overflow-safe logistic for any floating type (used by the
// high-precision finite-difference oracle as well as the double path).
template <class Real>
Real logistic(const Real& x) {
    using std::exp;
    if (x >= Real(0)) {
        Real e = exp(-x);
        return Real(1) / (Real(1) + e);
    }
    Real e = exp(x);
    return e / (Real(1) + e);
}

// softplus(x) = log(1 + e^x), piecewise-stable.
template <class Real>
Real softplus(const Real& x) {
    using std::exp;
    using std::log1p;
    if (x > Real(0)) return x + log1p(exp(-x));
    return log1p(exp(x));
}

} // namespace gatelab
