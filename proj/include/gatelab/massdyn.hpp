#pragma once

// Mass-dynamics evaluation: score response variants under reference and
// policy, then summarize how chosen, rejected and unrelated mass moved.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gatelab/lm.hpp"

namespace gatelab::massdyn {

enum class VariantLabel {
    Chosen,
    ChosenInitial,
    ChosenSelfr,
    ChosenGptSemantic,
    ChosenGptFormat,
    Rejected,
    RejectGptSemantic,
    RejectGptFormat,
    IrrTrain,
    IrrTest,
    IrrHum,
    RandomPermute,
    RandomNonhum,
};

inline constexpr std::array kAllLabels = {
    VariantLabel::Chosen,        VariantLabel::ChosenInitial,     VariantLabel::ChosenSelfr,
    VariantLabel::ChosenGptSemantic, VariantLabel::ChosenGptFormat, VariantLabel::Rejected,
    VariantLabel::RejectGptSemantic, VariantLabel::RejectGptFormat, VariantLabel::IrrTrain,
    VariantLabel::IrrTest,       VariantLabel::IrrHum,            VariantLabel::RandomPermute,
    VariantLabel::RandomNonhum,
};

enum class Category { ChosenSet, RejectedSet, OtherSet };

std::string_view to_string(VariantLabel l) noexcept;
std::string_view to_string(Category c) noexcept;
// Unknown labels raise InvalidInput naming the label.
VariantLabel parse_label(std::string_view text);
Category category_of(VariantLabel l) noexcept;

struct VariantInput {
    std::string prompt_id;
    VariantLabel label = VariantLabel::Chosen;
    lm::TokenSeq prompt;
    lm::TokenSeq tokens;
};

struct MassDynRecord {
    std::string prompt_id;
    VariantLabel label = VariantLabel::Chosen;
    Category category = Category::ChosenSet;
    lm::TokenSeq tokens;
    double logp_ref = 0.0;
    double logp_policy = 0.0;
};

// Read-only access to both models; variants never feed back into training.
std::vector<MassDynRecord> score_variants(const lm::TabularLM& policy,
                                          const lm::TabularLM& reference,
                                          const std::vector<VariantInput>& variants,
                                          int threads = 1);

struct VariantMean {
    double mean_delta = 0.0;
    std::size_t count = 0;
};

struct AggregateOptions {
    bool canonical_only = false;  // delta_chosen over the canonical `chosen` label only
};

struct MassDynReport {
    double delta_chosen = 0.0;
    double delta_others = 0.0;
    double delta_margin = 0.0;
    std::map<VariantLabel, VariantMean> per_variant;
    std::size_t chosen_count = 0;
    std::size_t others_count = 0;
    std::size_t prompt_count = 0;
};

// Means over empty sets are NaN. Every prompt must carry canonical `chosen`
// and `rejected` records, otherwise MissingVariant lists the prompt ids.
MassDynReport aggregate(const std::vector<MassDynRecord>& records, AggregateOptions opts = {});

enum class Health { Healthy, Destructive, Neutral };

std::string_view to_string(Health h) noexcept;

struct HealthThresholds {
    double destructive_others = -5.0;  // log units
};

// Healthy: chosen and margin both rise. Destructive: chosen falls while
// unrelated mass drops below the threshold. Neutral otherwise.
Health healthiness_summary(const MassDynReport& report, HealthThresholds t = {});

std::string observation(Health h);

std::vector<VariantInput> parse_variants_jsonl(std::string_view text);
std::string variants_to_jsonl(const std::vector<VariantInput>& variants);
std::vector<VariantInput> load_variants(const std::filesystem::path& path);

// Evaluation variant set for synthetic pairs: per pair `chosen`, `rejected`,
// `random_permute` (shuffled chosen tokens), `irr_train` (chosen response of a
// training pair), `irr_test` (chosen response of another held-out pair) and
// `random_nonhum` (uniform content tokens).
std::vector<VariantInput> make_variant_set(const std::vector<lm::PreferencePair>& eval_set,
                                           const std::vector<lm::PreferencePair>& train_set,
                                           int vocab, std::uint64_t seed);

} // namespace gatelab::massdyn
