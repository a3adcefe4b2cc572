#pragma once

// Second, straight-line implementation of the mass-dynamics aggregates.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gatelab/massdyn.hpp"

namespace oracle {

struct Aggregates {
    double chosen = NAN, others = NAN, margin = NAN;
    bool missing = false;
};

inline Aggregates brute_force(const std::vector<gatelab::massdyn::MassDynRecord>& recs, bool canonical_only = false) {
    using gatelab::massdyn::VariantLabel;
    auto is_chosen = [&](VariantLabel l) {
        if (canonical_only) return l == VariantLabel::Chosen;
        return l == VariantLabel::Chosen || l == VariantLabel::ChosenInitial || l == VariantLabel::ChosenSelfr ||
               l == VariantLabel::ChosenGptSemantic || l == VariantLabel::ChosenGptFormat;
    };
    auto is_other = [](VariantLabel l) {
        return l == VariantLabel::IrrTrain || l == VariantLabel::IrrTest || l == VariantLabel::IrrHum ||
               l == VariantLabel::RandomPermute || l == VariantLabel::RandomNonhum;
    };
    Aggregates a;
    double cs = 0, os = 0;
    int cn = 0, on = 0;
    std::map<std::string, std::vector<const gatelab::massdyn::MassDynRecord*>> by_prompt;
    for (const auto& r : recs) {
        by_prompt[r.prompt_id].push_back(&r);
        if (is_chosen(r.label)) cs += r.logp_policy - r.logp_ref, ++cn;
        if (is_other(r.label)) os += r.logp_policy - r.logp_ref, ++on;
    }
    if (cn) a.chosen = cs / cn;
    if (on) a.others = os / on;
    double ms = 0;
    for (const auto& [id, rs] : by_prompt) {
        const gatelab::massdyn::MassDynRecord *c = nullptr, *r = nullptr;
        for (const auto* x : rs) {
            if (x->label == VariantLabel::Chosen && !c) c = x;
            if (x->label == VariantLabel::Rejected && !r) r = x;
        }
        if (!c || !r) {
            a.missing = true;
            continue;
        }
        ms += (c->logp_policy - r->logp_policy) - (c->logp_ref - r->logp_ref);
    }
    if (!by_prompt.empty()) a.margin = ms / static_cast<double>(by_prompt.size());
    return a;
}

} // namespace oracle
