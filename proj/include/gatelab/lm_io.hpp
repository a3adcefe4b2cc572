#pragma once

// File formats of the language-model lab.
//
// Dataset (JSON Lines): one pair per line,
//   {"prompt":[..], "chosen":[..], "rejected":[..], "pair_id":"..."}
// pair_id is optional; missing ids become "line<N>" (1-based).
//
// Checkpoint (text, LF):
//   gatelab-checkpoint 1
//   vocab <V>
//   bos <B>
//   config <single-line JSON echo>
//   theta
//   <V lines of V space-separated shortest round-trip doubles>
//   end

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gatelab/lm.hpp"

namespace gatelab::lm {

inline constexpr int kCheckpointVersion = 1;

std::vector<PreferencePair> parse_pairs_jsonl(std::string_view text);
std::string pairs_to_jsonl(const std::vector<PreferencePair>& pairs);
std::vector<PreferencePair> load_pairs(const std::filesystem::path& path);

std::string checkpoint_to_string(const TabularLM& model, std::string_view config_json = "{}");

struct Checkpoint {
    TabularLM model;
    std::string config_json;
};

Checkpoint parse_checkpoint(std::string_view text);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const std::filesystem::path& path, const TabularLM& model,
                     std::string_view config_json = "{}");

} // namespace gatelab::lm
