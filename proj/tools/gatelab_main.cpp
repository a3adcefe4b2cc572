// gatelab <command> --config <path> [--out <dir>] [--seed N] [--threads N]

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "gatelab/commands.hpp"
#include "gatelab/config.hpp"
#include "gatelab/error.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Valley-gated preference optimization lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    const std::pair<const char*, const char*> commands[] = {
        {"toy", "toy multiclass scenarios A-E, baseline vs gated step"},
        {"strict-vs-loose", "loose and strict gate on the valley scenarios"},
        {"train", "preference training on the tabular bigram model"},
        {"sweep-tau", "train once per tau grid value"},
        {"sweep-alpha", "train once per alpha grid value"},
        {"massdyn", "probability-mass dynamics over evaluation variants"},
        {"gradcheck", "finite-difference gradient checks"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON config file (omit for all defaults)");
        sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
        sub->add_option("--seed", seed, "seed (overrides config)");
        sub->add_option("--threads", threads, "worker cap; 1 runs serially")->check(CLI::PositiveNumber);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : gatelab::kExitUsage;  // --help exits 0
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        nlohmann::json input = nlohmann::json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw gatelab::Error(gatelab::ErrorKind::IOError, "cannot read " + config_path);
            try {
                input = nlohmann::json::parse(in);
            } catch (const nlohmann::json::parse_error& e) {
                throw gatelab::Error(gatelab::ErrorKind::InvalidInput, config_path + ": " + e.what());
            }
        }
        input["experiment"] = command;
        if (out_dir) input["output_dir"] = *out_dir;
        if (seed) input["seed"] = *seed;
        if (threads) input["threads"] = *threads;
        const gatelab::RunConfig cfg = gatelab::resolve_config(input);
        return gatelab::run_command(cfg, std::cout, std::cerr);
    } catch (const gatelab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == gatelab::ErrorKind::IOError ? gatelab::kExitError : gatelab::kExitUsage;
    }
}
