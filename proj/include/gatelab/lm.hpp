#pragma once

// Tabular bigram language model trained on preference pairs. Sequence-level
// gradient coefficients from the objectives are pushed onto theta through
// the softmax Jacobian of every visited context row; no autodiff involved.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gatelab/error.hpp"
#include "gatelab/objectives.hpp"
#include "gatelab/prob.hpp"

namespace gatelab::lm {

using TokenSeq = std::vector<int>;

struct TabularLM {
    int vocab = 0;
    int bos = 0;                // context used when the prompt is empty
    std::vector<double> theta;  // vocab x vocab, row = previous token

    static TabularLM uniform(int vocab, int bos = 0);

    std::span<const double> row(int context) const;
    std::span<double> row(int context);
    std::vector<double> next_logprobs(int context) const;
    std::vector<double> next_probs(int context) const;

    bool operator==(const TabularLM&) const = default;
};

// SHA-256 of the checkpoint serialization; used to prove the reference stays frozen.
std::string fingerprint(const TabularLM& model);

struct PreferencePair {
    std::string pair_id;
    TokenSeq prompt;
    TokenSeq chosen;
    TokenSeq rejected;
};

void validate_pair(const PreferencePair& pair, int vocab);

// Context of the first response token: the last prompt token, or bos.
int first_context(const TabularLM& model, const TokenSeq& prompt);

// Teacher-forced per-token log-probabilities of `response`; prompt tokens are
// conditioning only and are not scored.
ScoredResponse score_sequence(const TabularLM& model, const TokenSeq& prompt,
                              const TokenSeq& response);

double sequence_logprob(const TabularLM& model, const TokenSeq& prompt, const TokenSeq& response);

// grad += weight * d log pi(response | prompt) / d theta
void accumulate_logprob_grad(const TabularLM& model, const TokenSeq& prompt,
                             const TokenSeq& response, double weight, std::span<double> grad);

struct OptimizerConfig {
    enum class Kind { SGD, RMSprop };
    Kind kind = Kind::SGD;
    double lr = 5e-2;
    double rmsprop_decay = 0.99;
    double rmsprop_eps = 1e-8;
    int batch_size = 4;

    void validate() const;
};

std::string_view to_string(OptimizerConfig::Kind k) noexcept;
OptimizerConfig::Kind parse_optimizer(std::string_view text);

class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    void step(TabularLM& model, std::span<const double> grad);

private:
    OptimizerConfig cfg_;
    std::vector<double> mean_square_;
};

struct MinibatchGradient {
    std::vector<double> grad;  // d mean_loss / d theta
    std::vector<PairAdvantages> advantages;
    BatchResult result;
};

// Scores every pair under policy and reference, computes one detached gate per
// pair from its rejected response (or uses `fixed_gates` when non-empty), and
// assembles the parameter gradient of the mean pair loss.
MinibatchGradient minibatch_gradient(const TabularLM& policy, const TabularLM& reference,
                                     std::span<const PreferencePair> batch, const LossConfig& cfg,
                                     std::span<const GateResult> fixed_gates = {},
                                     int threads = 1);

// Gates of a batch under the given policy.
std::vector<GateResult> minibatch_gates(const TabularLM& policy,
                                        std::span<const PreferencePair> batch,
                                        const LossConfig& cfg);

// Mean pair loss with the supplied gates held constant.
double minibatch_loss(const TabularLM& policy, const TabularLM& reference,
                      std::span<const PreferencePair> batch, const LossConfig& cfg,
                      std::span<const GateResult> gates);

struct TrainRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double mean_gate = 1.0;
    double gated_fraction = 0.0;  // share of pairs with g < 0.5
    double delta_logpi_chosen = 0.0;
    double delta_logpi_rejected = 0.0;
    double argmax_mass_delta = 0.0;
    double others_mass_delta = 0.0;
};

// Probability mass split for one evaluation context.
struct ContextMass {
    double chosen = 0.0;
    double rejected = 0.0;  // 0 when the rejected token equals the chosen one or is absent
    double others = 0.0;    // summed explicitly over the remaining tokens
    double argmax = 0.0;
};

// One entry per chosen-response position of every pair, in pair order.
std::vector<ContextMass> context_masses(const TabularLM& model,
                                        std::span<const PreferencePair> pairs);

// Held-out metrics of `policy` against `reference`.
TrainRecord evaluate(const TabularLM& policy, const TabularLM& reference,
                     std::span<const PreferencePair> eval_set, const LossConfig& cfg, int epoch);

struct DivergenceSnapshot {
    int epoch = 0;
    int batch = 0;
    std::vector<std::string> pair_ids;
    std::vector<double> pair_losses;
    std::vector<TrainRecord> records;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, DivergenceSnapshot snap)
        : Error(ErrorKind::Divergence, what), snapshot_(std::move(snap)) {}
    const DivergenceSnapshot& snapshot() const noexcept { return snapshot_; }

private:
    DivergenceSnapshot snapshot_;
};

struct TrainResult {
    std::vector<TrainRecord> records;  // one per epoch, evaluated on eval_set
    TabularLM policy;
};

// Minibatches are taken in dataset order; the reference is never modified.
TrainResult train(std::span<const PreferencePair> train_set,
                  std::span<const PreferencePair> eval_set, const TabularLM& reference,
                  const LossConfig& cfg, const OptimizerConfig& opt, int epochs, int threads = 1);

// Maximum-likelihood warm start on the chosen responses (per-pair SGD).
TabularLM sft_initialize(std::span<const PreferencePair> pairs, int vocab, int bos, int epochs,
                         double lr);

struct SyntheticSpec {
    int vocab = 24;
    int num_pairs = 200;
    int prompt_len = 3;
    int response_len = 6;
    double valley_fraction = 0.3;  // share of pairs with off-support rejected transitions
    double eval_fraction = 0.2;
    int support = 4;               // successors per context in the generating chain
    double dominant_weight = 0.55; // probability of each context's most likely successor
    int sft_epochs = 3;
    double sft_lr = 0.5;

    void validate() const;
};

struct SyntheticDataset {
    std::vector<PreferencePair> train;
    std::vector<PreferencePair> eval;
    std::vector<bool> train_valley;
    std::vector<bool> eval_valley;
    std::vector<std::vector<int>> support;  // generating successors per context
};

// Prompts are distinct across all pairs, so the splits never share a prompt.
// Deterministic in (spec, seed).
SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed);

// The SFT-initialized model for a synthetic dataset (bos = 0).
TabularLM initial_model(const SyntheticDataset& data, const SyntheticSpec& spec);

enum class SweepParam { Tau, Alpha };

struct SweepRow {
    double value = 0.0;
    double delta_chosen = 0.0;    // final epoch
    double delta_rejected = 0.0;  // final epoch
    double gated_fraction = 0.0;  // under the shared initial model
    double mean_gate = 1.0;       // under the shared initial model
    double final_gated_fraction = 0.0;
    double final_mean_gate = 1.0;
    std::vector<TrainRecord> records;
};

// One training run per grid value, all from `reference`. The gate-activation
// columns are measured on eval_set under `reference`, where the statistic is
// identical for every grid point.
std::vector<SweepRow> sweep(SweepParam param, std::span<const double> grid,
                            const LossConfig& base, std::span<const PreferencePair> train_set,
                            std::span<const PreferencePair> eval_set, const TabularLM& reference,
                            const OptimizerConfig& opt, int epochs, int threads = 1);

} // namespace gatelab::lm
