// Experiment runner CLI: run / sweep / presets / validate.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedpgp/config.hpp"
#include "fedpgp/runner.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string seeds;
    std::string out;
    int workers = 0;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Config file (flat key = value lines)");
    cmd->add_option("--preset", args.preset, "Named preset configuration");
    cmd->add_option("--seed", args.seeds, "Comma-separated seed list override");
    cmd->add_option("--out", args.out, "Output directory");
    cmd->add_option("--workers", args.workers, "Concurrent client workers per round");
    cmd->add_option("--set", args.overrides, "key=value override (repeatable)");
}

// Resolution order: preset/file, then --set overrides, then dedicated flags.
fedpgp::ExperimentConfig resolve_config(const CommonArgs& args) {
    fedpgp::ExperimentConfig cfg;
    if (!args.preset.empty() && !args.config_path.empty()) {
        throw fedpgp::ConfigError("--config and --preset are mutually exclusive");
    }
    if (!args.preset.empty()) {
        cfg = fedpgp::preset_config(args.preset);
    } else if (!args.config_path.empty()) {
        cfg = fedpgp::parse_config_file(args.config_path);
    }
    for (const std::string& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw fedpgp::ConfigError("--set expects key=value, got '" + kv + "'");
        }
        fedpgp::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!args.seeds.empty()) fedpgp::apply_override(cfg, "seeds", args.seeds);
    if (args.workers > 0) cfg.workers = args.workers;
    if (!args.out.empty()) {
        cfg.out = args.out;
    } else if (cfg.out.empty()) {
        if (const char* root = std::getenv("FEDPGP_OUT_ROOT")) {
            cfg.out = std::string(root) + "/" +
                      (!args.preset.empty() ? args.preset : std::string("run"));
        }
    }
    fedpgp::validate(cfg);
    return cfg;
}

std::vector<std::string> split_values(const std::string& csv) {
    std::vector<std::string> out;
    std::string item;
    for (char c : csv) {
        if (c == ',') {
            if (!item.empty()) out.push_back(item);
            item.clear();
        } else {
            item += c;
        }
    }
    if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic federated prompt-learning simulator"};
    app.require_subcommand(1);

    CommonArgs run_args;
    bool run_force = false;
    CLI::App* run_cmd = app.add_subcommand("run", "Run the configured experiment per seed");
    add_common(run_cmd, run_args);
    run_cmd->add_flag("--force", run_force, "Write into a nonempty output directory");

    CommonArgs sweep_args;
    bool sweep_force = false;
    std::string sweep_param;
    std::string sweep_values;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Sweep one parameter across shared seeds");
    add_common(sweep_cmd, sweep_args);
    sweep_cmd->add_flag("--force", sweep_force, "Write into a nonempty output directory");
    sweep_cmd->add_option("--param", sweep_param, "Parameter to sweep: mu, b or shots")
        ->required();
    sweep_cmd->add_option("--values", sweep_values, "Comma-separated values")->required();

    CLI::App* presets_cmd = app.add_subcommand("presets", "List the named presets");

    CommonArgs validate_args;
    CLI::App* validate_cmd =
        app.add_subcommand("validate", "Validate a config and print its canonical form");
    add_common(validate_cmd, validate_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (presets_cmd->parsed()) {
            for (const std::string& name : fedpgp::preset_names()) {
                std::printf("%s\n", name.c_str());
                const std::string text = fedpgp::serialize_config(fedpgp::preset_config(name));
                std::string indented;
                for (char c : text) {
                    if (indented.empty() || indented.back() == '\n') indented += "  ";
                    indented += c;
                }
                std::fputs(indented.c_str(), stdout);
            }
            return 0;
        }
        if (validate_cmd->parsed()) {
            const fedpgp::ExperimentConfig cfg = resolve_config(validate_args);
            std::fputs(fedpgp::serialize_config(cfg).c_str(), stdout);
            return 0;
        }
        if (run_cmd->parsed()) {
            const fedpgp::ExperimentConfig cfg = resolve_config(run_args);
            return fedpgp::run_command(cfg, fedpgp::RunOptions{run_force});
        }
        if (sweep_cmd->parsed()) {
            const fedpgp::ExperimentConfig cfg = resolve_config(sweep_args);
            return fedpgp::sweep_command(cfg, sweep_param, split_values(sweep_values),
                                         fedpgp::RunOptions{sweep_force});
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
