#include "gatelab/massdyn.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <sstream>

#include "gatelab/error.hpp"
#include "gatelab/parallel.hpp"
#include "gatelab/report.hpp"
#include "gatelab/rng.hpp"

namespace gatelab::massdyn {

using nlohmann::json;

std::string_view to_string(VariantLabel l) noexcept {
    switch (l) {
    case VariantLabel::Chosen: return "chosen";
    case VariantLabel::ChosenInitial: return "chosen_initial";
    case VariantLabel::ChosenSelfr: return "chosen_selfr";
    case VariantLabel::ChosenGptSemantic: return "chosen_gptsemantic";
    case VariantLabel::ChosenGptFormat: return "chosen_gptformat";
    case VariantLabel::Rejected: return "rejected";
    case VariantLabel::RejectGptSemantic: return "reject_gptsemantic";
    case VariantLabel::RejectGptFormat: return "reject_gptformat";
    case VariantLabel::IrrTrain: return "irr_train";
    case VariantLabel::IrrTest: return "irr_test";
    case VariantLabel::IrrHum: return "irr_hum";
    case VariantLabel::RandomPermute: return "random_permute";
    case VariantLabel::RandomNonhum: return "random_nonhum";
    }
    return "unknown";
}

std::string_view to_string(Category c) noexcept {
    switch (c) {
    case Category::ChosenSet: return "chosen_set";
    case Category::RejectedSet: return "rejected_set";
    case Category::OtherSet: return "other_set";
    }
    return "unknown";
}

VariantLabel parse_label(std::string_view text) {
    for (VariantLabel l : kAllLabels)
        if (to_string(l) == text) return l;
    throw Error(ErrorKind::InvalidInput, "unknown variant label '" + std::string(text) + "'");
}

Category category_of(VariantLabel l) noexcept {
    switch (l) {
    case VariantLabel::Chosen:
    case VariantLabel::ChosenInitial:
    case VariantLabel::ChosenSelfr:
    case VariantLabel::ChosenGptSemantic:
    case VariantLabel::ChosenGptFormat: return Category::ChosenSet;
    case VariantLabel::Rejected:
    case VariantLabel::RejectGptSemantic:
    case VariantLabel::RejectGptFormat: return Category::RejectedSet;
    default: return Category::OtherSet;
    }
}

std::vector<MassDynRecord> score_variants(const lm::TabularLM& policy, const lm::TabularLM& reference,
                                          const std::vector<VariantInput>& variants, int threads) {
    if (policy.vocab != reference.vocab)
        throw Error(ErrorKind::InvalidInput, "policy and reference vocabularies differ");
    std::vector<MassDynRecord> out(variants.size());
    parallel_for(variants.size(), threads, [&](std::size_t i) {
        const auto& v = variants[i];
        if (v.tokens.empty())
            throw Error(ErrorKind::InvalidInput, "variant of prompt '" + v.prompt_id + "' has no tokens");
        MassDynRecord& r = out[i];
        r.prompt_id = v.prompt_id;
        r.label = v.label;
        r.category = category_of(v.label);
        r.tokens = v.tokens;
        try {
            r.logp_ref = lm::sequence_logprob(reference, v.prompt, v.tokens);
            r.logp_policy = lm::sequence_logprob(policy, v.prompt, v.tokens);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::InvalidToken)
                throw Error(ErrorKind::InvalidToken, "prompt '" + v.prompt_id + "': " + e.what());
            throw;
        }
    });
    return out;
}

MassDynReport aggregate(const std::vector<MassDynRecord>& records, AggregateOptions opts) {
    // Reduce in prompt-id order (stable within a prompt).
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return records[a].prompt_id < records[b].prompt_id;
    });

    MassDynReport rep;
    double chosen_sum = 0.0, others_sum = 0.0;
    std::map<VariantLabel, double> label_sum;
    struct Canonical {
        const MassDynRecord* chosen = nullptr;
        const MassDynRecord* rejected = nullptr;
    };
    std::map<std::string, Canonical> prompts;

    for (std::size_t idx : order) {
        const auto& r = records[idx];
        const double d = r.logp_policy - r.logp_ref;
        label_sum[r.label] += d;
        rep.per_variant[r.label].count += 1;
        const bool counts_as_chosen =
            r.category == Category::ChosenSet && (!opts.canonical_only || r.label == VariantLabel::Chosen);
        if (counts_as_chosen) {
            chosen_sum += d;
            ++rep.chosen_count;
        } else if (r.category == Category::OtherSet) {
            others_sum += d;
            ++rep.others_count;
        }
        auto& c = prompts[r.prompt_id];
        if (r.label == VariantLabel::Chosen && !c.chosen) c.chosen = &r;
        if (r.label == VariantLabel::Rejected && !c.rejected) c.rejected = &r;
    }

    std::vector<std::string> missing;
    double margin_sum = 0.0;
    for (const auto& [id, c] : prompts) {
        if (!c.chosen || !c.rejected) {
            missing.push_back(id);
            continue;
        }
        margin_sum += (c.chosen->logp_policy - c.rejected->logp_policy) -
                      (c.chosen->logp_ref - c.rejected->logp_ref);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
        throw Error(ErrorKind::MissingVariant, "canonical chosen/rejected missing for prompts: " + list);
    }

    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    for (auto& [label, mean] : rep.per_variant)
        mean.mean_delta = label_sum[label] / static_cast<double>(mean.count);
    rep.prompt_count = prompts.size();
    rep.delta_chosen = rep.chosen_count ? chosen_sum / static_cast<double>(rep.chosen_count) : nan;
    rep.delta_others = rep.others_count ? others_sum / static_cast<double>(rep.others_count) : nan;
    rep.delta_margin = rep.prompt_count ? margin_sum / static_cast<double>(rep.prompt_count) : nan;
    return rep;
}

std::string_view to_string(Health h) noexcept {
    switch (h) {
    case Health::Healthy: return "healthy";
    case Health::Destructive: return "destructive";
    case Health::Neutral: return "neutral";
    }
    return "unknown";
}

Health healthiness_summary(const MassDynReport& report, HealthThresholds t) {
    if (report.delta_chosen > 0.0 && report.delta_margin > 0.0) return Health::Healthy;
    if (report.delta_chosen < 0.0 && report.delta_others < t.destructive_others) return Health::Destructive;
    return Health::Neutral;
}

std::string observation(Health h) {
    switch (h) {
    case Health::Healthy: return "positive chosen, healthy trade-off";
    case Health::Destructive: return "chosen drops with severe squeezing";
    case Health::Neutral: return "no clear improvement";
    }
    return "";
}

namespace {

lm::TokenSeq int_array(const json& obj, const char* key, std::size_t line) {
    if (!obj.contains(key) || !obj[key].is_array())
        throw Error(ErrorKind::InvalidInput,
                    "line " + std::to_string(line) + ": field '" + key + "' must be an integer array");
    lm::TokenSeq out;
    for (const auto& v : obj[key]) {
        if (!v.is_number_integer())
            throw Error(ErrorKind::InvalidInput,
                        "line " + std::to_string(line) + ": field '" + key + "' holds a non-integer");
        out.push_back(v.get<int>());
    }
    return out;
}

} // namespace

std::vector<VariantInput> parse_variants_jsonl(std::string_view text) {
    std::vector<VariantInput> out;
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
        const auto end = text.find('\n', pos);
        const auto line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::InvalidInput, "line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!obj.is_object() || !obj.contains("prompt_id") || !obj["prompt_id"].is_string() ||
            !obj.contains("variant") || !obj["variant"].is_string())
            throw Error(ErrorKind::InvalidInput,
                        "line " + std::to_string(line_no) + ": needs string fields prompt_id and variant");
        VariantInput v;
        v.prompt_id = obj["prompt_id"].get<std::string>();
        v.label = parse_label(obj["variant"].get<std::string>());
        v.prompt = int_array(obj, "prompt", line_no);
        v.tokens = int_array(obj, "tokens", line_no);
        out.push_back(std::move(v));
    }
    return out;
}

std::string variants_to_jsonl(const std::vector<VariantInput>& variants) {
    std::string out;
    for (const auto& v : variants) {
        json obj;
        obj["prompt_id"] = v.prompt_id;
        obj["variant"] = std::string(to_string(v.label));
        obj["prompt"] = v.prompt;
        obj["tokens"] = v.tokens;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::vector<VariantInput> load_variants(const std::filesystem::path& path) {
    return parse_variants_jsonl(read_file(path));
}

std::vector<VariantInput> make_variant_set(const std::vector<lm::PreferencePair>& eval_set,
                                           const std::vector<lm::PreferencePair>& train_set,
                                           int vocab, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<VariantInput> out;
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const auto& p = eval_set[i];
        auto add = [&](VariantLabel l, lm::TokenSeq toks) {
            out.push_back(VariantInput{p.pair_id, l, p.prompt, std::move(toks)});
        };
        add(VariantLabel::Chosen, p.chosen);
        add(VariantLabel::Rejected, p.rejected);
        lm::TokenSeq perm = p.chosen;
        rng.shuffle(perm);
        add(VariantLabel::RandomPermute, std::move(perm));
        if (!train_set.empty())
            add(VariantLabel::IrrTrain, train_set[static_cast<std::size_t>(rng.below(static_cast<int>(train_set.size())))].chosen);
        if (eval_set.size() > 1) {
            std::size_t j = static_cast<std::size_t>(rng.below(static_cast<int>(eval_set.size() - 1)));
            if (j >= i) ++j;
            add(VariantLabel::IrrTest, eval_set[j].chosen);
        }
        lm::TokenSeq noise(p.chosen.size());
        for (int& t : noise) t = 1 + rng.below(vocab - 1);
        add(VariantLabel::RandomNonhum, std::move(noise));
    }
    return out;
}

} // namespace gatelab::massdyn
