// hemo-uq <simulate|propagate|sobol|fast|converge|validate> --config FILE
//         [--seed N] [--workers N] [--out DIR]
//
// Exit codes: 0 success, 1 numerical failure, 2 configuration or I/O failure.

#include <iostream>
#include <optional>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "hemo_uq/hemo_uq.hpp"

namespace {

struct Args {
    std::string config;
    std::optional<std::uint64_t> seed;
    int workers = 0;
    std::string out;
};

int execute(const std::string& command, const Args& a) {
    using namespace hemo_uq;
    if (command == "validate") return run_validate(a.config, a.seed, std::cout);

    Diagnostics diag;
    ExperimentConfig cfg = load_experiment(a.config, diag, a.seed);
    if (!a.out.empty()) {
        cfg.output_dir = a.out;
        if (diag.ok()) cfg.resolved = resolved_config(cfg);
    }
    if (diag.ok() && std::string(to_string(cfg.kind)) != command) {
        diag.error("config describes a '" + std::string(to_string(cfg.kind)) + "' experiment, not '" +
                   command + "'");
    }
    if (!diag.ok()) {
        for (const auto& e : diag.errors) std::cerr << "hemo-uq: config error: " << e << '\n';
        return 2;
    }
    for (const auto& w : diag.warnings) std::cerr << "hemo-uq: warning: " << w << '\n';
    RunOptions opt;
    opt.workers = resolve_workers(a.workers);
    opt.log = &std::cout;
    return run_experiment(cfg, command, opt, std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reduced ocular hemodynamics: simulation, uncertainty propagation and sensitivity analysis"};
    app.require_subcommand(1);
    Args args;
    std::string chosen;
    const std::pair<const char*, const char*> commands[] = {
        {"simulate", "one deterministic run: trajectory and the nine flows"},
        {"propagate", "Monte Carlo propagation for one population"},
        {"sobol", "pick-freeze Sobol' indices"},
        {"fast", "extended FAST indices"},
        {"converge", "index convergence over a sample-size schedule"},
        {"validate", "check a configuration and dry-run two cycles"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", args.config, "experiment configuration (JSON)")->required();
        sub->add_option("--seed", args.seed, "master seed, overrides the configured one");
        sub->add_option("--workers", args.workers,
                        "worker threads (default: HEMO_UQ_WORKERS, else all cores)")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--out", args.out, "output directory, overrides the configured one");
        sub->callback([&chosen, name] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        return execute(chosen, args);
    } catch (const hemo_uq::NumericalFailure& e) {
        std::cerr << "hemo-uq: numerical failure: " << e.what() << '\n';
        return 1;
    } catch (const hemo_uq::Error& e) {
        std::cerr << "hemo-uq: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "hemo-uq: " << e.what() << '\n';
        return 2;
    }
}
