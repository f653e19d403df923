// croplab command-line driver.
//
//   croplab <solve|crop-eval|attack|budget|sweep|report> --config PATH [--out DIR] [--seed N] [--jobs N]
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 missing artifact.

#include "croplab/harness/commands.hpp"
#include "croplab/harness/config.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;

} // namespace

int main(int argc, char** argv) {
    using namespace croplab::harness;

    CLI::App app{"croplab: constrained policy randomization against imitation attacks"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;

    const auto add = [&](const std::string& name, const std::string& help, bool needs_config) {
        auto* sub = app.add_subcommand(name, help);
        auto* opt = sub->add_option("--config", config_path, "experiment config file");
        if (needs_config) opt->required();
        sub->add_option("--out", out_dir, "output directory (overrides [run] out)");
        sub->add_option("--seed", seed, "base seed (overrides [run] seed)");
        sub->add_option("--jobs", jobs, "worker threads (overrides [run] jobs)")->check(CLI::PositiveNumber);
        return sub;
    };
    auto* solve = add("solve", "build the MDP and write solved tables", true);
    auto* crop_eval = add("crop-eval", "loss bounds and diversion counts over the CRoP grid", true);
    auto* attack = add("attack", "imitation attacks against every CRoP cell", true);
    auto* budget = add("budget", "adversarial budget tables", true);
    auto* sweep = add("sweep", "solve, crop-eval, attack, budget and report", true);
    auto* report = add("report", "plot-ready series from existing CSVs", false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        ExperimentConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        else if (!report->parsed()) throw ConfigError("--config is required");
        if (out_dir) cfg.out_dir = *out_dir;
        if (seed) cfg.seed = *seed;
        if (jobs) cfg.jobs = *jobs;

        if (solve->parsed()) cmd_solve(cfg);
        else if (crop_eval->parsed()) cmd_crop_eval(cfg);
        else if (attack->parsed()) cmd_attack(cfg);
        else if (budget->parsed()) cmd_budget(cfg);
        else if (sweep->parsed()) cmd_sweep(cfg);
        else if (report->parsed()) cmd_report(cfg.out_dir);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const croplab::ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << '\n';
        return kExitMissing;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
