#include "gatelab/prob.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "gatelab/error.hpp"

namespace gatelab {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyResponse: return "EmptyResponse";
    case ErrorKind::InvalidToken: return "InvalidToken";
    case ErrorKind::InvalidScenario: return "InvalidScenario";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::MissingVariant: return "MissingVariant";
    case ErrorKind::Divergence: return "Divergence";
    case ErrorKind::IOError: return "IOError";
    case ErrorKind::UsageError: return "UsageError";
    }
    return "Unknown";
}

namespace {
std::atomic<std::size_t> g_clamp_events{0};
}

ScoredResponse ScoredResponse::all_valid(std::vector<double> logprobs) {
    ScoredResponse r;
    r.valid_mask.assign(logprobs.size(), true);
    r.token_logprobs = std::move(logprobs);
    return r;
}

std::size_t ScoredResponse::valid_count() const noexcept {
    return static_cast<std::size_t>(std::count(valid_mask.begin(), valid_mask.end(), true));
}

std::vector<double> log_softmax(std::span<const double> logits) {
    if (logits.empty()) throw Error(ErrorKind::InvalidInput, "log_softmax of empty vector");
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) {
        if (!std::isfinite(v)) throw Error(ErrorKind::InvalidInput, "non-finite logit");
        mx = std::max(mx, v);
    }
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    auto out = log_softmax(logits);
    for (double& v : out) v = std::exp(v);
    return out;
}

double sequence_logprob(const ScoredResponse& resp) {
    if (resp.valid_mask.size() != resp.token_logprobs.size())
        throw Error(ErrorKind::InvalidInput, "mask/logprob length mismatch");
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < resp.token_logprobs.size(); ++t) {
        if (!resp.valid_mask[t]) continue;
        total += resp.token_logprobs[t];
        ++n;
    }
    if (n == 0) throw Error(ErrorKind::EmptyResponse, "response has no valid tokens");
    return total;
}

double lower_quantile(std::span<const double> values, double q) {
    if (values.empty()) throw Error(ErrorKind::EmptyInput, "quantile of empty sample");
    if (!(q > 0.0 && q < 1.0)) {
        std::ostringstream os;
        os << "quantile q=" << q << " outside (0,1)";
        throw Error(ErrorKind::InvalidInput, os.str());
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<long long>(sorted.size());
    long long idx = static_cast<long long>(std::ceil(q * static_cast<double>(n))) - 1;
    idx = std::clamp(idx, 0LL, n - 1);
    return sorted[static_cast<std::size_t>(idx)];
}

double clamped_exp(double logprob) {
    if (logprob < kMinLogProb || std::isnan(logprob)) {
        g_clamp_events.fetch_add(1, std::memory_order_relaxed);
        return std::exp(kMinLogProb);
    }
    return std::exp(logprob);
}

std::size_t clamp_events() noexcept { return g_clamp_events.load(std::memory_order_relaxed); }

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

double sigmoid(double x) {
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    const double hi = std::nextafter(1.0, 0.0);
    if (std::isnan(x)) throw Error(ErrorKind::InvalidInput, "sigmoid of NaN");
    if (x > 500.0) return hi;
    if (x < -500.0) return lo;
    return std::clamp(logistic(x), lo, hi);
}

} // namespace gatelab
