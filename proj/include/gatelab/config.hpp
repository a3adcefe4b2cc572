#pragma once

// Run configuration for the command-line tool. JSON file, every key optional;
// unknown keys are rejected so typos do not silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gatelab/lm.hpp"
#include "gatelab/objectives.hpp"
#include "gatelab/toy.hpp"

namespace gatelab {

enum class Experiment { Toy, StrictVsLoose, Train, SweepTau, SweepAlpha, MassDyn, GradCheck };

std::string_view to_string(Experiment e) noexcept;
Experiment parse_experiment(std::string_view text);

struct DatasetConfig {
    std::string train_path;  // JSONL; empty = synthetic
    std::string eval_path;   // JSONL; empty = split from train
    std::string reference_checkpoint;  // empty = SFT warm start on the train split
    double eval_fraction = 0.2;        // used when eval_path is empty
    lm::SyntheticSpec synthetic;
};

struct ToyConfig {
    toy::ScenarioDefaults defaults;
    std::vector<toy::Label> scenarios{toy::Label::A, toy::Label::B, toy::Label::C, toy::Label::D,
                                      toy::Label::E};
    std::vector<toy::Label> strict_vs_loose{toy::Label::D, toy::Label::E};
};

struct SweepConfig {
    std::vector<double> tau_grid{0.001, 0.05, 0.10, 0.15, 0.20};
    std::vector<double> alpha_grid{10, 30, 50, 70, 90};
};

struct PolicyEntry {
    std::string name;
    std::string checkpoint;
};

struct MassDynConfig {
    std::string variants_path;          // empty = generated from the synthetic eval split
    std::string reference_checkpoint;   // required when policies are listed
    std::vector<PolicyEntry> policies;  // empty = train the gated and ungated runs on synthetic data
    bool canonical_only = false;
    double destructive_others = -5.0;
};

struct GradCheckConfig {
    int pairs = 1000;
    double h = 1e-5;
    double scalar_threshold = 1e-5;
    double param_threshold = 1e-4;
    int param_batches = 5;
    bool non_detached = false;
    bool single_pair = false;
};

struct RunConfig {
    Experiment experiment = Experiment::Train;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output_dir = "out";
    LossConfig loss = LossConfig::defaults_for(Objective::DPO, false);
    lm::OptimizerConfig optimizer;
    int epochs = 5;
    DatasetConfig dataset;
    ToyConfig toy;
    SweepConfig sweep;
    MassDynConfig massdyn;
    GradCheckConfig gradcheck;

    void validate() const;
};

// Objective-dependent defaults (beta) and statistic-dependent defaults (tau)
// are applied only to keys the input leaves unset.
RunConfig resolve_config(const nlohmann::json& input);
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved echo; resolve_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& c);

} // namespace gatelab
