#include "gatelab/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gatelab/error.hpp"
#include "gatelab/gate.hpp"
#include "gatelab/prob.hpp"
#include "gatelab/rng.hpp"

namespace gatelab::toy {

std::vector<double> ToyState::logits() const {
    std::vector<double> z(static_cast<std::size_t>(K), 0.0);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < K; ++k) z[k] += W[static_cast<std::size_t>(i) * K + k] * phi[i];
    return z;
}

std::vector<double> ToyState::probs() const {
    const auto z = logits();
    return softmax(z);
}

std::vector<double> unit_feature(int d, std::uint64_t seed) {
    if (d < 1) throw Error(ErrorKind::InvalidScenario, "feature dimension must be >= 1");
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<double> phi(static_cast<std::size_t>(d));
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& v : phi) {
            v = rng.uniform(-1.0, 1.0);
            norm += v * v;
        }
    } while (norm < 1e-6);
    norm = std::sqrt(norm);
    for (double& v : phi) v /= norm;
    return phi;
}

ToyState realize(const std::vector<double>& p0, int target, double eta, int d,
                 std::uint64_t seed) {
    const int K = static_cast<int>(p0.size());
    if (K < 2) throw Error(ErrorKind::InvalidScenario, "need at least two classes");
    if (target < 0 || target >= K) throw Error(ErrorKind::InvalidScenario, "target out of range");
    double total = 0.0;
    for (double p : p0) {
        if (!(p > 0.0)) throw Error(ErrorKind::InvalidScenario, "initial distribution has a zero entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        std::ostringstream os;
        os << "initial distribution sums to " << total;
        throw Error(ErrorKind::InvalidScenario, os.str());
    }
    ToyState s;
    s.d = d;
    s.K = K;
    s.eta = eta;
    s.target = target;
    s.phi = unit_feature(d, seed);
    s.W.resize(static_cast<std::size_t>(d) * K);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < K; ++k) s.W[static_cast<std::size_t>(i) * K + k] = s.phi[i] * std::log(p0[k]);
    return s;
}

namespace {

ToyState scaled_step(const ToyState& state, double scale) {
    ToyState next = state;
    auto p = state.probs();
    p[state.target] -= 1.0;  // p - e_y
    const double step = state.eta * scale;
    for (int i = 0; i < state.d; ++i)
        for (int k = 0; k < state.K; ++k)
            next.W[static_cast<std::size_t>(i) * state.K + k] -= step * state.phi[i] * p[k];
    return next;
}

} // namespace

ToyState baseline_step(const ToyState& state) { return scaled_step(state, 1.0); }

GatedStep gated_step(const ToyState& state, double tau, double alpha) {
    const auto p = state.probs();
    const double g = toy_gate(p[state.target], tau, alpha);
    return GatedStep{scaled_step(state, g), g};
}

char to_char(Label l) noexcept { return static_cast<char>('A' + static_cast<int>(l)); }

Label parse_label(char c) {
    if (c >= 'a' && c <= 'e') c = static_cast<char>(c - 'a' + 'A');
    if (c < 'A' || c > 'E') throw Error(ErrorKind::InvalidScenario, std::string("unknown scenario '") + c + "'");
    return static_cast<Label>(c - 'A');
}

namespace {

// Target (class 0) at `target_mass`, class 1 at `argmax_mass`, rest uniform.
std::vector<double> valley(int K, double target_mass, double argmax_mass) {
    std::vector<double> p(static_cast<std::size_t>(K));
    const double rest = (1.0 - target_mass - argmax_mass) / (K - 2);
    std::fill(p.begin(), p.end(), rest);
    p[0] = target_mass;
    p[1] = argmax_mass;
    return p;
}

} // namespace

ToyScenario make_scenario(Label label, const ScenarioDefaults& df, std::uint64_t seed, bool strict) {
    ToyScenario s;
    s.label = label;
    s.steps = df.steps;
    s.d = df.d;
    s.seed = seed;
    s.target = 0;
    s.eta = -df.eta_magnitude;
    s.K = label == Label::E ? df.large_k : df.small_k;
    const double tau = label == Label::E ? (strict ? df.strict_tau_large_k : df.loose_tau_large_k)
                                         : (strict ? df.strict_tau_small_k : df.loose_tau_small_k);
    s.gate = GateParams{tau, df.alpha};
    const int K = s.K;
    switch (label) {
    case Label::A:
        s.eta = df.eta_magnitude;
        s.initial_distribution.assign(K, 1.0 / K);
        s.description = "positive gradient, flat distribution";
        break;
    case Label::B:
        s.initial_distribution.assign(K, 1.0 / K);
        s.description = "negative gradient, flat distribution";
        break;
    case Label::C:
        s.initial_distribution.assign(K, (1.0 - df.peak_mass) / (K - 1));
        s.initial_distribution[0] = df.peak_mass;
        s.description = "negative gradient on a peak";
        break;
    case Label::D:
        s.initial_distribution = valley(K, df.valley_target, df.valley_argmax);
        s.description = "negative gradient on a valley";
        break;
    case Label::E:
        s.initial_distribution = valley(K, df.large_target, df.large_argmax);
        s.description = "negative gradient on a valley, large vocabulary";
        break;
    }
    return s;
}

std::vector<ToyScenario> default_scenarios(const ScenarioDefaults& defaults, std::uint64_t seed) {
    std::vector<ToyScenario> out;
    for (Label l : {Label::A, Label::B, Label::C, Label::D, Label::E})
        out.push_back(make_scenario(l, defaults, seed));
    return out;
}

ToyDiagnostics diagnose(const std::vector<double>& before, const std::vector<double>& after,
                        int target, double gate_value) {
    ToyDiagnostics d;
    d.delta_target = after[target] - before[target];
    const auto argmax = static_cast<std::size_t>(
        std::distance(before.begin(), std::max_element(before.begin(), before.end())));
    for (std::size_t k = 0; k < before.size(); ++k)
        d.delta_max = std::max(d.delta_max, std::abs(after[k] - before[k]));
    d.argmax_mass_change = after[argmax] - before[argmax];
    d.entropy_before = entropy(before);
    d.entropy_after = entropy(after);
    d.gate_value = gate_value;
    return d;
}

ScenarioRun run_scenario(const ToyScenario& s) {
    if (static_cast<int>(s.initial_distribution.size()) != s.K)
        throw Error(ErrorKind::InvalidScenario, "initial distribution length differs from K");
    if (s.steps < 0) throw Error(ErrorKind::InvalidScenario, "negative step count");
    if (s.gate && (!(s.gate->tau > 0.0) || !(s.gate->alpha > 0.0)))
        throw Error(ErrorKind::InvalidScenario, "gate parameters must be positive");

    const ToyState start = realize(s.initial_distribution, s.target, s.eta, s.d, s.seed);
    ScenarioRun run;
    run.scenario = s;
    run.p_before = start.probs();

    ToyState base = start;
    ToyState gated = start;
    double last_gate = 1.0;
    for (int t = 0; t < s.steps; ++t) {
        base = baseline_step(base);
        if (s.gate) {
            auto step = gated_step(gated, s.gate->tau, s.gate->alpha);
            gated = std::move(step.state);
            last_gate = step.gate_value;
        } else {
            gated = baseline_step(gated);
        }
    }
    run.p_after_baseline = base.probs();
    run.p_after_gated = gated.probs();
    run.baseline = diagnose(run.p_before, run.p_after_baseline, s.target, 1.0);
    run.gated = diagnose(run.p_before, run.p_after_gated, s.target, last_gate);
    return run;
}

double tail_relative_change(const std::vector<double>& before, const std::vector<double>& after) {
    std::vector<std::size_t> order(before.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return before[a] < before[b]; });
    const std::size_t n = before.size() * 9 / 10;
    double mass_before = 0.0, mass_after = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mass_before += before[order[i]];
        mass_after += after[order[i]];
    }
    if (mass_before == 0.0) return 0.0;
    return (mass_after - mass_before) / mass_before;
}

StrictLooseReport strict_vs_loose(Label label, const ScenarioDefaults& defaults,
                                  std::uint64_t seed) {
    if (label != Label::B && label != Label::D && label != Label::E)
        throw Error(ErrorKind::InvalidScenario, "strict/loose comparison needs scenario B, D or E");
    StrictLooseReport r;
    r.loose = run_scenario(make_scenario(label, defaults, seed, false));
    r.strict = run_scenario(make_scenario(label, defaults, seed, true));
    r.loose_gate = r.loose.gated.gate_value;
    r.strict_gate = r.strict.gated.gate_value;
    r.baseline_tail_change = tail_relative_change(r.loose.p_before, r.loose.p_after_baseline);
    r.loose_tail_change = tail_relative_change(r.loose.p_before, r.loose.p_after_gated);
    r.strict_tail_change = tail_relative_change(r.strict.p_before, r.strict.p_after_gated);
    return r;
}

} // namespace gatelab::toy
