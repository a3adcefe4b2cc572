#pragma once

// Single-example multiclass logistic regression used to exhibit squeezing
// under negative-gradient updates, with and without the log-space gate.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gatelab::toy {

struct ToyState {
    int d = 8;                  // feature dimension
    int K = 0;                  // classes
    std::vector<double> W;      // d x K, row-major (W[i * K + k])
    std::vector<double> phi;    // unit-norm feature vector
    double eta = 1.0;           // learning rate; negative = rejected-style update
    int target = 0;             // class y

    std::vector<double> logits() const;  // W^T phi
    std::vector<double> probs() const;   // softmax(W^T phi)
};

// Deterministic unit vector of dimension d.
std::vector<double> unit_feature(int d, std::uint64_t seed);

// W = phi * ln(p0)^T, so that W^T phi = ln p0 for unit phi. Zero or
// non-normalized p0 raises InvalidScenario.
ToyState realize(const std::vector<double>& p0, int target, double eta, int d,
                 std::uint64_t seed);

// W <- W - eta * phi (p - e_y)^T
ToyState baseline_step(const ToyState& state);

struct GatedStep {
    ToyState state;
    double gate_value = 1.0;
};

// W <- W - eta * g(p(y)) * phi (p - e_y)^T with g the log-space toy gate.
GatedStep gated_step(const ToyState& state, double tau, double alpha);

enum class Label { A, B, C, D, E };

char to_char(Label l) noexcept;
Label parse_label(char c);

struct GateParams {
    double tau = 0.03;
    double alpha = 50.0;
};

struct ToyScenario {
    Label label = Label::A;
    int K = 50;
    std::vector<double> initial_distribution;
    int target = 0;
    double eta = -1.0;
    int steps = 1;
    std::optional<GateParams> gate;
    int d = 8;
    std::uint64_t seed = 0;
    std::string description;
};

struct ScenarioDefaults {
    int small_k = 50;
    int large_k = 1000;
    double eta_magnitude = 1.0;
    int steps = 1;
    int d = 8;
    double alpha = 50.0;
    double loose_tau_small_k = 0.03;
    double loose_tau_large_k = 1e-8;
    double strict_tau_small_k = 0.01;
    double strict_tau_large_k = 1e-6;
    double peak_mass = 0.90;          // C
    double valley_target = 1e-6;      // D
    double valley_argmax = 0.90;      // D
    double large_target = 1e-10;      // E
    double large_argmax = 0.5;        // E
};

// A: uniform, positive step. B: uniform, negative step. C: peak target at
// peak_mass. D: valley target with a dominant argmax. E: large-K valley.
ToyScenario make_scenario(Label label, const ScenarioDefaults& defaults, std::uint64_t seed,
                          bool strict = false);
std::vector<ToyScenario> default_scenarios(const ScenarioDefaults& defaults, std::uint64_t seed);

struct ToyDiagnostics {
    double delta_target = 0.0;        // change in p(y)
    double delta_max = 0.0;           // max |change| over classes
    double argmax_mass_change = 0.0;  // change of the initial argmax class
    double entropy_before = 0.0;      // nats
    double entropy_after = 0.0;
    double gate_value = 1.0;          // last applied gate, 1 for baseline
};

struct ScenarioRun {
    ToyScenario scenario;
    std::vector<double> p_before;
    std::vector<double> p_after_baseline;
    std::vector<double> p_after_gated;
    ToyDiagnostics baseline;
    ToyDiagnostics gated;
};

ToyDiagnostics diagnose(const std::vector<double>& before, const std::vector<double>& after,
                        int target, double gate_value);

// Runs `steps` baseline and gated updates from identical starting states.
// Scenarios without gate parameters run the gated branch with g == 1.
ScenarioRun run_scenario(const ToyScenario& s);

// Relative change of the total mass of the floor(0.9 K) least likely classes
// (ranked by the initial distribution).
double tail_relative_change(const std::vector<double>& before, const std::vector<double>& after);

struct StrictLooseReport {
    ScenarioRun loose;
    ScenarioRun strict;
    double loose_gate = 0.0;
    double strict_gate = 0.0;
    double baseline_tail_change = 0.0;
    double loose_tail_change = 0.0;
    double strict_tail_change = 0.0;
};

// Scenario D or E only (InvalidScenario otherwise); B is accepted as well so
// the flat-distribution control can be compared.
StrictLooseReport strict_vs_loose(Label label, const ScenarioDefaults& defaults,
                                  std::uint64_t seed);

} // namespace gatelab::toy
