#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <string>

#include "ilnet/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"IL-net style semi-supervised detector: train, sweep, analyze"};
    app.require_subcommand(1);

    std::string run_config, run_out;
    std::optional<uint64_t> run_seed;
    uint64_t seed_value = 0;
    auto* run = app.add_subcommand("run", "one training run");
    run->add_option("--config", run_config, "config file (key=value lines)")->required();
    auto* seed_opt = run->add_option("--seed", seed_value, "training seed override");
    run->add_option("--out", run_out, "output directory");

    std::string sweep_spec, sweep_out;
    auto* sweep = app.add_subcommand("sweep", "ablation sweep over one parameter");
    sweep->add_option("--spec", sweep_spec, "sweep spec (JSON)")->required();
    sweep->add_option("--out", sweep_out, "output directory");

    std::string an_log, an_out;
    auto* analyze = app.add_subcommand("analyze", "plots and CSVs from a run or sweep dir");
    analyze->add_option("--log-dir", an_log, "directory holding metrics.jsonl or sweep_summary.csv")
        ->required();
    analyze->add_option("--out", an_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        if (seed_opt->count() > 0) run_seed = seed_value;
        return ilnet::cmd_run(run_config, run_seed, ilnet::resolve_out_dir(run_out, "run"));
    }
    if (sweep->parsed())
        return ilnet::cmd_sweep(sweep_spec, ilnet::resolve_out_dir(sweep_out, "sweep"));
    return ilnet::cmd_analyze(an_log, ilnet::resolve_out_dir(an_out, "analysis"));
}
