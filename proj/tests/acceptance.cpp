// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "som/experiment.hpp"
#include "som/oracle_suite.hpp"

using namespace som;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
    std::printf("criterion %d: %s  %s (%s)\n", id, ok ? "PASS" : "FAIL", what.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

// d=2, H=2, |C|=3, |actions|=2, 3 agents per side, sigma=0.1; K=300, delta=0.1, unscaled radii.
MarketConfig optimism_market() {
    MarketConfig m;
    m.d = 2;
    m.H = 2;
    m.num_contexts = 3;
    m.num_actions = 2;
    m.rows_per_step = m.cols_per_step = 3;
    m.noise_sigma = 0.1;
    return m;
}

SomConfig optimism_som() {
    SomConfig s;
    s.K = 300;
    s.lambda = 1.0;
    s.delta = 0.1;
    s.beta_scale_u = 1.0;
    s.beta_scale_V = 1.0;
    return s;
}

// d=3, H=3, |C|=5, |actions|=3, 4 agents per side, sigma=0.1; K=2000, lambda=1, delta=0.1, radii scaled by 0.2.
MarketConfig trend_market() {
    MarketConfig m;
    m.d = 3;
    m.H = 3;
    m.num_contexts = 5;
    m.num_actions = 3;
    m.rows_per_step = m.cols_per_step = 4;
    m.noise_sigma = 0.1;
    return m;
}

SomConfig trend_som() {
    SomConfig s;
    s.K = 2000;
    s.lambda = 1.0;
    s.delta = 0.1;
    s.beta_scale_u = 0.2;
    s.beta_scale_V = 0.2;
    return s;
}

double mean_total_gap(const RegretLedger& l, int first, int last) {
    double s = 0.0;
    for (int k = first; k <= last; ++k) s += l.rows[static_cast<std::size_t>(k) - 1].per_episode.total_gap;
    return s / (last - first + 1);
}

} // namespace

int run_all() {
    using clock = std::chrono::steady_clock;

    // 1-3: matching machinery against enumeration.
    const SuiteResult eq = matching_equivalence_suite(500, 1);
    report(1, eq.passed() && eq.seconds < 5.0, "matching oracle equivalence on 500 instances",
           std::to_string(eq.failures) + " mismatches, worst " + fmt("%.2e", eq.worst_error) + ", " +
               fmt("%.3f", eq.seconds) + " s");

    const SuiteResult du = duality_stability_suite(500, 1);
    report(2, du.passed(), "duality, slackness and stability on the same 500 instances",
           std::to_string(du.failures) + " failures, worst " + fmt("%.2e", du.worst_error));

    const SuiteResult si = subset_instability_suite(200, 100, 2, 4);
    report(3, si.passed(), "subset instability characterisation on 200 outcomes x 100 perturbations",
           std::to_string(si.failures) + " failures, worst Lipschitz excess " + fmt("%.2e", si.worst_error));

    // 4-5: twenty literal-radius runs.
    std::vector<SeedResult> small;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) small.push_back(run_seed(optimism_market(), optimism_som(), seed));
    int violated = 0;
    std::size_t lemma_failures = 0, lemma_failures_all = 0;
    for (const auto& r : small) {
        lemma_failures_all += r.tally.planner_optimism + r.tally.si_bound;
        if (r.optimism_violated()) {
            ++violated;
        } else {
            lemma_failures += r.tally.planner_optimism + r.tally.si_bound;
        }
    }
    report(4, violated <= 4, "optimism event fails in at most 4 of 20 runs",
           std::to_string(violated) + " of 20 runs with some ucb < truth - 1e-9");
    report(5, lemma_failures == 0, "planner optimism and SI bonus bound in every optimistic run",
           std::to_string(lemma_failures) + " violations in " + std::to_string(20 - violated) +
               " optimistic runs; " + std::to_string(lemma_failures_all) + " across all cells where optimism held");

    // 6-7: the regret trend runs; the decomposition covers every run.
    std::vector<SeedResult> trend;
    double slowest = 0.0, slope_sum = 0.0, early_sum = 0.0, late_sum = 0.0;
    bool per_seed_halved = true;
    std::string slopes;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto t0 = clock::now();
        trend.push_back(run_seed(trend_market(), trend_som(), seed));
        slowest = std::max(slowest, std::chrono::duration<double>(clock::now() - t0).count());
        const RegretLedger& l = trend.back().ledger;
        const double slope = regret_slope(l, 1000, 2000);
        slope_sum += slope;
        slopes += (slopes.empty() ? "" : " ") + fmt("%.3f", slope);
        const double early = mean_total_gap(l, 1, 200), late = mean_total_gap(l, 1801, 2000);
        early_sum += early;
        late_sum += late;
        per_seed_halved = per_seed_halved && late <= 0.5 * early;
    }
    std::size_t decomposition = 0, hard = 0;
    for (const auto* runs : {&small, &trend})
        for (const auto& r : *runs) {
            decomposition += r.tally.decomposition;
            hard += r.tally.hard_failures();
        }
    report(6, decomposition == 0, "per-episode regret decomposition in all 25 runs",
           std::to_string(decomposition) + " violations; " + std::to_string(hard) + " hard audit failures overall");

    const double mean_slope = slope_sum / 5.0;
    report(7, mean_slope <= 0.9 && late_sum <= 0.5 * early_sum && slowest <= 600.0,
           "sublinear regret trend over 5 seeds",
           "mean slope " + fmt("%.3f", mean_slope) + " [" + slopes + "], last-200/first-200 mean regret " +
               fmt("%.3f", late_sum / early_sum) + (per_seed_halved ? " (every seed below 0.5)" : "") +
               ", slowest seed " + fmt("%.1f", slowest) + " s");

    // 8: determinism of the written ledgers.
    bool identical = true;
    for (std::size_t i = 0; i < small.size(); ++i)
        identical = identical && ledger_csv(run_seed(optimism_market(), optimism_som(), small[i].seed).ledger) ==
                                     ledger_csv(small[i].ledger);
    for (std::size_t i = 0; i < trend.size(); ++i)
        identical = identical && ledger_csv(run_seed(trend_market(), trend_som(), trend[i].seed).ledger) ==
                                     ledger_csv(trend[i].ledger);
    namespace fs = std::filesystem;
    const fs::path a = fs::temp_directory_path() / "som_acceptance_a", b = fs::temp_directory_path() / "som_acceptance_b";
    ExperimentConfig cfg;
    cfg.market = optimism_market();
    cfg.som = optimism_som();
    cfg.run.seeds = {1, 2, 3, 4};
    cfg.run.out_dir = a.string();
    run_experiment(cfg, 4);
    cfg.run.out_dir = b.string();
    run_experiment(cfg, 1);
    for (const auto& entry : fs::directory_iterator(a)) {
        std::ifstream fa(entry.path(), std::ios::binary), fb(b / entry.path().filename(), std::ios::binary);
        const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
        identical = identical && !sa.empty() && sa == sb;
    }
    fs::remove_all(a);
    fs::remove_all(b);
    report(8, identical, "byte-identical ledgers on re-run", "25 in-memory ledgers and 4 written seeds compared");

    std::printf("%s\n", failures == 0 ? "all criteria passed" : "some criteria failed");
    return failures == 0 ? 0 : 1;
}

int main() {
    try {
        return run_all();
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 1;
    }
}
