#include "gatelab/gate.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gatelab/error.hpp"

namespace gatelab {

std::string_view to_string(GateStatistic s) noexcept {
    return s == GateStatistic::SeqMean ? "seq_mean" : "token_quantile";
}

GateStatistic parse_gate_statistic(std::string_view text) {
    if (text == "seq_mean" || text == "seq") return GateStatistic::SeqMean;
    if (text == "token_quantile" || text == "tok" || text == "q") return GateStatistic::TokenQuantile;
    throw Error(ErrorKind::InvalidInput, "unknown gate statistic '" + std::string(text) + "'");
}

GateConfig GateConfig::defaults_for(GateStatistic statistic) {
    GateConfig cfg;
    cfg.statistic = statistic;
    cfg.tau = statistic == GateStatistic::SeqMean ? 0.10 : 0.005;
    return cfg;
}

void GateConfig::validate() const {
    std::ostringstream os;
    if (!(tau > 0.0 && tau < 1.0)) os << "tau=" << tau << " outside (0,1); ";
    if (!(alpha > 0.0) || !std::isfinite(alpha)) os << "alpha=" << alpha << " must be > 0; ";
    if (!(q > 0.0 && q < 1.0)) os << "q=" << q << " outside (0,1); ";
    if (!os.str().empty()) throw Error(ErrorKind::InvalidInput, "gate config: " + os.str());
}

double seq_statistic(const ScoredResponse& rejected) {
    const double total = sequence_logprob(rejected);
    const auto n = static_cast<double>(rejected.valid_count());
    return clamped_exp(total / n);
}

double tok_statistic(const ScoredResponse& rejected, double q) {
    std::vector<double> probs;
    probs.reserve(rejected.size());
    for (std::size_t t = 0; t < rejected.size(); ++t)
        if (rejected.valid_mask[t]) probs.push_back(clamped_exp(rejected.token_logprobs[t]));
    if (probs.empty()) throw Error(ErrorKind::EmptyResponse, "response has no valid tokens");
    return lower_quantile(probs, q);
}

double valley_statistic(const ScoredResponse& rejected, const GateConfig& cfg) {
    return cfg.statistic == GateStatistic::SeqMean ? seq_statistic(rejected)
                                                   : tok_statistic(rejected, cfg.q);
}

GateResult gate_value(double s, const GateConfig& cfg) {
    if (!(s >= 0.0)) throw Error(ErrorKind::InvalidInput, "gate statistic must be >= 0");
    return GateResult{s, sigmoid(cfg.alpha * (s - cfg.tau)), true};
}

GateResult compute_gate(const ScoredResponse& rejected, const GateConfig& cfg) {
    return gate_value(valley_statistic(rejected, cfg), cfg);
}

double toy_gate(double p, double tau, double alpha) {
    if (!(p > 0.0)) throw Error(ErrorKind::InvalidInput, "toy gate needs p > 0");
    if (!(tau > 0.0) || !(alpha > 0.0))
        throw Error(ErrorKind::InvalidInput, "toy gate needs tau > 0 and alpha > 0");
    return sigmoid(alpha * (std::log(p) - std::log(tau)));
}

} // namespace gatelab
