// Command-line front end: run experiments, validate configs, run the
// brute-force oracle suites.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "som/experiment.hpp"
#include "som/oracle_suite.hpp"

namespace {

int report_suite(const som::SuiteResult& r) {
    std::printf("%-40s cases=%d failures=%d worst=%.3g time=%.3fs %s\n", r.name.c_str(), r.cases, r.failures,
                r.worst_error, r.seconds, r.passed() ? "PASS" : "FAIL");
    return r.passed() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential optimistic matching simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment and write ledger CSVs");
    run_cmd->add_option("--config", config_path, "Experiment config file")->required();
    run_cmd->add_option("--seed", seed, "Run this single seed instead of run.seeds");
    run_cmd->add_option("--out", out_dir, "Output directory (overrides run.out_dir)");

    std::string check_path;
    auto* check_cmd = app.add_subcommand("check", "Validate a config file");
    check_cmd->add_option("--config", check_path, "Experiment config file")->required();

    int cases = 500;
    auto* oracle_cmd = app.add_subcommand("oracle-suite", "Brute-force equivalence suites");
    oracle_cmd->add_option("--cases", cases, "Random instances per suite")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            som::ExperimentConfig cfg = som::load_config(config_path);
            if (seed) cfg.run.seeds = {*seed};
            if (out_dir) cfg.run.out_dir = *out_dir;
            const som::RunSummary sum = som::run_experiment(cfg);
            for (const auto& s : sum.seeds)
                std::printf("seed %llu: episodes=%d cum_total_gap=%.6g slope=%.4g optimism_violated=%d hard_failures=%zu\n",
                            static_cast<unsigned long long>(s.seed), s.episodes, s.cum_total_gap, s.regret_slope,
                            s.optimism_violated ? 1 : 0, s.hard_failures);
            std::printf("wrote %s\n", cfg.run.out_dir.c_str());
            return sum.exit_code;
        }
        if (*check_cmd) {
            const som::ExperimentConfig cfg = som::load_config(check_path);
            std::printf("config ok: d=%d H=%d contexts=%d actions=%d agents=%d K=%d seeds=%zu\n", cfg.market.d,
                        cfg.market.H, cfg.market.num_contexts, cfg.market.num_actions, cfg.market.rows_per_step,
                        cfg.som.K, cfg.run.seeds.size());
            return 0;
        }
        if (*oracle_cmd) {
            int status = 0;
            status |= report_suite(som::matching_equivalence_suite(cases));
            status |= report_suite(som::duality_stability_suite(cases));
            status |= report_suite(som::subset_instability_suite(std::max(1, cases * 2 / 5)));
            return status;
        }
    } catch (const som::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
