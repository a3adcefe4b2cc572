#pragma once

// Experiment drivers behind the `gatelab` executable. Each command writes its
// outputs into cfg.output_dir, echoes the resolved config, and writes
// manifest.json last.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "gatelab/config.hpp"
#include "gatelab/lm.hpp"

namespace gatelab {

inline constexpr const char* kArtifactVersion = "1.0.0";

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitError = 4;

// Collects output files and their checksums.
class RunDir {
public:
    explicit RunDir(std::filesystem::path dir);

    void write(const std::string& name, std::string_view content);
    const std::filesystem::path& path() const noexcept { return dir_; }
    const std::vector<std::string>& files() const noexcept { return names_; }

    void write_manifest(std::string_view command, const nlohmann::json& config, double wall_seconds,
                        std::string_view status);

private:
    std::filesystem::path dir_;
    std::vector<std::string> names_;
    std::vector<std::string> digests_;
    std::vector<std::size_t> sizes_;
};

struct LoadedData {
    std::vector<lm::PreferencePair> train;
    std::vector<lm::PreferencePair> eval;
    lm::TabularLM reference;
    bool synthetic = false;
};

// Synthetic benchmark (seeded) unless dataset.train_path is set.
LoadedData load_data(const RunConfig& cfg);

int cmd_toy(const RunConfig& cfg, std::ostream& log);
int cmd_strict_vs_loose(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_sweep(const RunConfig& cfg, std::ostream& log);  // tau or alpha, per cfg.experiment
int cmd_massdyn(const RunConfig& cfg, std::ostream& log);
int cmd_gradcheck(const RunConfig& cfg, std::ostream& log);

// Dispatch on cfg.experiment; library errors are mapped to exit statuses and
// reported on `err`.
int run_command(const RunConfig& cfg, std::ostream& log, std::ostream& err);

} // namespace gatelab
