#ifndef SOM_EXPERIMENT_HPP
#define SOM_EXPERIMENT_HPP

// Experiment harness: sectioned config files, seeded runs with runtime
// invariant audits, and CSV persistence of the regret ledger.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "som/errors.hpp"
#include "som/evaluation.hpp"
#include "som/market.hpp"
#include "som/matching.hpp"
#include "som/som.hpp"

namespace som {

class ConfigError : public std::runtime_error {
public:
    enum class Kind { MissingFile, Parse, Validation };
    ConfigError(Kind kind, std::string key, const std::string& what)
        : std::runtime_error(what), kind_(kind), key_(std::move(key)) {}
    Kind kind() const { return kind_; }
    /// Dotted key path ("som.lambda"), empty when not tied to one key.
    const std::string& key() const { return key_; }

private:
    Kind kind_;
    std::string key_;
};

struct RunBlock {
    std::vector<std::uint64_t> seeds{0};
    std::string out_dir = "out";
    bool emit_traces = false;
};

struct ExperimentConfig {
    MarketConfig market;
    SomConfig som;
    std::optional<bool> si_tracking; ///< unset: on iff every roster fits the SI cap
    RunBlock run;

    bool si_enabled() const {
        if (si_tracking) return *si_tracking;
        return market.rows_per_step <= kDefaultSubsetCap && market.cols_per_step <= kDefaultSubsetCap;
    }
};

namespace detail {

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    T out{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError(ConfigError::Kind::Parse, key, key + ": cannot parse '" + s + "' as a number");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError(ConfigError::Kind::Parse, key, key + ": expected true or false, got '" + s + "'");
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& raw) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<std::uint64_t>(key, item));
    if (out.empty()) throw ConfigError(ConfigError::Kind::Validation, key, key + ": need at least one seed");
    return out;
}

inline void require(bool ok, const std::string& key, const std::string& msg) {
    if (!ok) throw ConfigError(ConfigError::Kind::Validation, key, key + ": " + msg);
}

} // namespace detail

/// Range checks for every field; throws ConfigError naming the key.
inline void validate(const ExperimentConfig& c) {
    using detail::require;
    const MarketConfig& m = c.market;
    require(m.d >= 1, "market.d", "must be >= 1");
    require(m.H >= 1, "market.H", "must be >= 1");
    require(m.num_contexts >= 1, "market.num_contexts", "must be >= 1");
    require(m.num_actions >= 1, "market.num_actions", "must be >= 1");
    require(m.rows_per_step >= 1, "market.agents_per_side", "must be >= 1");
    require(m.universe_rows == 0 || m.universe_rows >= m.rows_per_step, "market.universe_per_side",
            "must be >= agents_per_side");
    require(m.noise_sigma >= 0.0 && m.noise_sigma <= 1.0, "market.noise_sigma", "must lie in [0, 1]");
    require(m.utility_target_scale > 0.0 && m.utility_target_scale <= 1.0, "market.utility_target_scale",
            "must lie in (0, 1]");
    const SomConfig& s = c.som;
    require(s.K >= 1, "som.K", "must be >= 1");
    require(s.lambda > 0.0, "som.lambda", "must be positive");
    require(s.delta > 0.0 && s.delta < 1.0, "som.delta", "must lie in (0, 1)");
    require(s.eta > 0.0, "som.eta", "must be positive");
    require(s.beta_scale_u >= 0.0, "som.beta_scale_u", "must be >= 0");
    require(s.beta_scale_V >= 0.0, "som.beta_scale_V", "must be >= 0");
    require(!(c.si_tracking.value_or(false)) ||
                (m.rows_per_step <= kDefaultSubsetCap && m.cols_per_step <= kDefaultSubsetCap),
            "som.si_tracking", "rosters above 8 agents per side cannot track subset instability");
    require(!c.run.seeds.empty(), "run.seeds", "need at least one seed");
    require(!c.run.out_dir.empty(), "run.out_dir", "must not be empty");
}

/// Parses an INI-style config from text. Sections: [market], [som], [run].
inline ExperimentConfig parse_config(std::istream& in) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(ConfigError::Kind::Parse, "", std::string("config parse error: ") + e.what());
    }

    ExperimentConfig c;
    int agents = c.market.rows_per_step;
    int universe = 0;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"market.d", [&](auto& k, auto& v) { c.market.d = detail::parse_number<int>(k, v); }},
        {"market.H", [&](auto& k, auto& v) { c.market.H = detail::parse_number<int>(k, v); }},
        {"market.num_contexts", [&](auto& k, auto& v) { c.market.num_contexts = detail::parse_number<int>(k, v); }},
        {"market.num_actions", [&](auto& k, auto& v) { c.market.num_actions = detail::parse_number<int>(k, v); }},
        {"market.agents_per_side", [&](auto& k, auto& v) { agents = detail::parse_number<int>(k, v); }},
        {"market.universe_per_side", [&](auto& k, auto& v) { universe = detail::parse_number<int>(k, v); }},
        {"market.noise_sigma", [&](auto& k, auto& v) { c.market.noise_sigma = detail::parse_number<double>(k, v); }},
        {"market.utility_target_scale",
         [&](auto& k, auto& v) { c.market.utility_target_scale = detail::parse_number<double>(k, v); }},
        {"som.K", [&](auto& k, auto& v) { c.som.K = detail::parse_number<int>(k, v); }},
        {"som.lambda", [&](auto& k, auto& v) { c.som.lambda = detail::parse_number<double>(k, v); }},
        {"som.delta", [&](auto& k, auto& v) { c.som.delta = detail::parse_number<double>(k, v); }},
        {"som.eta", [&](auto& k, auto& v) { c.som.eta = detail::parse_number<double>(k, v); }},
        {"som.beta_scale_u", [&](auto& k, auto& v) { c.som.beta_scale_u = detail::parse_number<double>(k, v); }},
        {"som.beta_scale_V", [&](auto& k, auto& v) { c.som.beta_scale_V = detail::parse_number<double>(k, v); }},
        {"som.si_tracking", [&](auto& k, auto& v) { c.si_tracking = detail::parse_bool(k, v); }},
        {"run.seeds", [&](auto& k, auto& v) { c.run.seeds = detail::parse_seed_list(k, v); }},
        {"run.out_dir", [&](auto&, auto& v) { c.run.out_dir = detail::trim(v); }},
        {"run.emit_traces", [&](auto& k, auto& v) { c.run.emit_traces = detail::parse_bool(k, v); }},
    };

    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ConfigError(ConfigError::Kind::Validation, section, "unknown key '" + section + "' outside any section");
        for (const auto& [name, value] : body) {
            const std::string key = section + "." + name;
            const auto it = setters.find(key);
            if (it == setters.end()) throw ConfigError(ConfigError::Kind::Validation, key, "unknown key '" + key + "'");
            it->second(key, value.data());
        }
    }
    c.market.rows_per_step = c.market.cols_per_step = agents;
    c.market.universe_rows = c.market.universe_cols = universe;
    c.som.si_tracking = c.si_enabled();
    validate(c);
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ConfigError::Kind::MissingFile, "", "cannot open config file " + path.string());
    return parse_config(in);
}

/// Per-run tallies of the runtime audits.
struct CheckTally {
    std::size_t checks = 0;
    // Hard invariants.
    std::size_t om_stability = 0;
    std::size_t transfer_sum = 0;
    std::size_t q_range = 0;
    std::size_t planner_optimism = 0;
    std::size_t si_bound = 0;
    std::size_t gap_sign = 0;
    std::size_t decomposition = 0;
    // Informational.
    std::size_t optimism_violations = 0; ///< (episode, step) pairs with some ucb < truth
    std::size_t width_bound = 0;

    std::size_t hard_failures() const {
        return om_stability + transfer_sum + q_range + planner_optimism + si_bound + gap_sign + decomposition;
    }
};

struct SeedResult {
    std::uint64_t seed = 0;
    RegretLedger ledger;
    CheckTally tally;
    std::vector<EpisodeTrace> traces; ///< kept only when requested
    bool optimism_violated() const { return tally.optimism_violations > 0; }
};

namespace detail {

inline constexpr double kEstTol = 1e-6;

// Audits one finished episode and returns its ledger row.
inline EpisodeArtifacts audit_episode(const MarketOracle& oracle, const SomLearner& learner,
                                      const EpisodeTables& tables, EpisodeTrace& trace, bool with_si,
                                      CheckTally& tally) {
    const MarketInstance& m = oracle.market();
    const UtilityEstimator& ue = learner.utility_estimator();
    auto fail_if = [&](bool bad, std::size_t& counter) {
        ++tally.checks;
        if (bad) ++counter;
    };

    PolicySnapshot policy;
    for (int h = 0; h < m.H; ++h) {
        const StepTables& st = tables[static_cast<std::size_t>(h)];
        const double clip = m.sum_W(h);
        fail_if((st.q.q.array() < 0.0).any() || (st.q.q.array() > clip).any(), tally.q_range);

        bool step_optimistic = true;
        std::vector<char> cell_optimistic(static_cast<std::size_t>(m.num_cells()), 1);
        for (int C = 0; C < m.num_contexts; ++C)
            for (int e = 0; e < m.num_actions; ++e) {
                const std::size_t cell = static_cast<std::size_t>(m.cell(C, e));
                const UtilityPair& est = st.estimates[cell];
                const UtilityPair& truth = oracle.truth(h, C, e);
                const MarketOutcome& om = st.outcomes[cell];
                fail_if(!is_stable(om, est.u, est.v, kExactTol), tally.om_stability);
                fail_if(std::abs(om.transfers.total()) > kExactTol, tally.transfer_sum);

                const Eigen::MatrixXd bu = est.u - truth.u, bv = est.v - truth.v;
                const bool optimistic = bu.minCoeff() >= -kExactTol && bv.minCoeff() >= -kExactTol;
                cell_optimistic[cell] = optimistic;
                step_optimistic = step_optimistic && optimistic;
                if (!optimistic) continue;

                if (ue.has_data(h)) {
                    for (int i = 0; i < m.rows_at(h); ++i)
                        for (int j = 0; j < m.cols_at(h); ++j) {
                            const double w = 2.0 * ue.beta() * ue.width(h, pair_feature(m, h, C, e, i, j));
                            fail_if(bu(i, j) > w + kExactTol || bv(i, j) > w + kExactTol, tally.width_bound);
                        }
                }
                const double gap = st.r_bar(C, e) - oracle.values().r_bar_true[h](C, e);
                const double bonus = si_bonus_bound(om.matching, bu.cwiseMax(0.0), bv.cwiseMax(0.0));
                fail_if(gap < -kEstTol || gap > bonus + kEstTol, tally.planner_optimism);
            }
        if (!step_optimistic) ++tally.optimism_violations;

        policy.action.emplace_back();
        policy.outcome.emplace_back();
        for (int C = 0; C < m.num_contexts; ++C) {
            const int e = st.q.greedy_action(C);
            policy.action.back().push_back(e);
            policy.outcome.back().push_back(st.outcomes[static_cast<std::size_t>(m.cell(C, e))]);
        }
    }

    EpisodeArtifacts a;
    a.episode = trace.episode;
    double realized_si = 0.0;
    for (int h = 0; h < m.H; ++h) {
        StepRecord& rec = trace.steps[static_cast<std::size_t>(h)];
        a.realized_welfare += rec.welfare;
        a.pseudo_welfare += oracle.values().r_bar_true[h](rec.context, rec.action);
        a.bonus_sum += rec.utility_bonus + rec.value_bonus;
        if (!with_si) continue;
        const double si = oracle.subset_instability(h, rec.context, rec.action, rec.outcome);
        rec.subset_instability = si;
        realized_si += si;
        const std::size_t cell = static_cast<std::size_t>(m.cell(rec.context, rec.action));
        const UtilityPair& est = tables[static_cast<std::size_t>(h)].estimates[cell];
        const UtilityPair& truth = oracle.truth(h, rec.context, rec.action);
        const Eigen::MatrixXd bu = est.u - truth.u, bv = est.v - truth.v;
        if (bu.minCoeff() >= -kExactTol && bv.minCoeff() >= -kExactTol) {
            const double bound = si_bonus_bound(rec.outcome.matching, bu.cwiseMax(0.0), bv.cwiseMax(0.0));
            fail_if(si > bound + kEstTol, tally.si_bound);
        }
    }

    const PolicyValues pv = evaluate_policy(oracle, policy, with_si);
    const double v_star = oracle.values().w_star_1;
    a.planner_gap = v_star - pv.pseudo_value;
    a.total_gap = v_star - pv.true_value;
    fail_if(a.planner_gap < -kExactTol || a.total_gap < -kExactTol || pv.pseudo_value < pv.true_value - kExactTol,
            tally.gap_sign);
    if (with_si) {
        a.agents_gap_expected = *pv.expected_si;
        a.agents_gap_realized = realized_si;
        fail_if(a.total_gap > a.planner_gap + a.agents_gap_expected + kEstTol, tally.decomposition);
    }
    return a;
}

} // namespace detail

/// One seeded run: generate the market, run SOM, audit every episode.
inline SeedResult run_seed(const MarketConfig& market_cfg, SomConfig som_cfg, std::uint64_t seed,
                           bool keep_traces = false) {
    som_cfg.seed = seed;
    const MarketInstance market = generate_market(market_cfg, seed);
    const bool with_si = som_cfg.si_tracking && MarketOracle::si_feasible(market);
    const MarketOracle oracle(market, with_si);

    SeedResult out;
    out.seed = seed;
    auto observer = [&](const SomLearner& learner, const EpisodeTables& tables, EpisodeTrace& trace) {
        ledger_append(out.ledger, detail::audit_episode(oracle, learner, tables, trace, with_si, out.tally));
    };
    SomRun result = run(market, som_cfg, observer);
    if (keep_traces) out.traces = std::move(result.traces);
    return out;
}

// ---------------------------------------------------------------- CSV

namespace detail {

inline std::string fmt12(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

} // namespace detail

inline constexpr const char* kLedgerHeader =
    "episode,realized_welfare,pseudo_welfare,planner_gap,agents_gap_expected,agents_gap_realized,total_gap,"
    "bonus_sum,cum_realized_welfare,cum_pseudo_welfare,cum_planner_gap,cum_agents_gap_expected,"
    "cum_agents_gap_realized,cum_total_gap,cum_bonus_sum";

inline std::string ledger_csv(const RegretLedger& ledger) {
    std::string s = std::string(kLedgerHeader) + "\n";
    auto cols = [](const EpisodeArtifacts& a) {
        using detail::fmt12;
        return fmt12(a.realized_welfare) + "," + fmt12(a.pseudo_welfare) + "," + fmt12(a.planner_gap) + "," +
               fmt12(a.agents_gap_expected) + "," + fmt12(a.agents_gap_realized) + "," + fmt12(a.total_gap) + "," +
               fmt12(a.bonus_sum);
    };
    for (const LedgerRow& r : ledger.rows)
        s += std::to_string(r.per_episode.episode) + "," + cols(r.per_episode) + "," + cols(r.cumulative) + "\n";
    return s;
}

inline std::string trace_csv(const std::vector<EpisodeTrace>& traces) {
    std::string s = "episode,step,context,action,matching,welfare,utility_bonus,value_bonus,subset_instability\n";
    for (const auto& t : traces)
        for (std::size_t h = 0; h < t.steps.size(); ++h) {
            const StepRecord& r = t.steps[h];
            std::string pairs;
            for (const Pair& p : r.outcome.matching.pairs())
                pairs += (pairs.empty() ? "" : ";") + std::to_string(p.row) + "-" + std::to_string(p.col);
            s += std::to_string(t.episode) + "," + std::to_string(h + 1) + "," + std::to_string(r.context) + "," +
                 std::to_string(r.action) + "," + pairs + "," + detail::fmt12(r.welfare) + "," +
                 detail::fmt12(r.utility_bonus) + "," + detail::fmt12(r.value_bonus) + "," +
                 (r.subset_instability ? detail::fmt12(*r.subset_instability) : std::string("nan")) + "\n";
        }
    return s;
}

struct SeedSummary {
    std::uint64_t seed = 0;
    int episodes = 0;
    double cum_planner_gap = 0.0;
    double cum_agents_gap_expected = 0.0;
    double cum_agents_gap_realized = 0.0;
    double cum_total_gap = 0.0;
    double regret_slope = std::numeric_limits<double>::quiet_NaN(); ///< over the second half of episodes
    bool optimism_violated = false;
    std::size_t hard_failures = 0;
    std::size_t checks = 0;
};

struct RunSummary {
    std::vector<SeedSummary> seeds;
    int exit_code = 0;

    static double mean(const std::vector<double>& x) {
        double s = 0.0;
        for (double v : x) s += v;
        return x.empty() ? 0.0 : s / static_cast<double>(x.size());
    }
    static double stddev(const std::vector<double>& x) {
        if (x.size() < 2) return 0.0;
        const double mu = mean(x);
        double s = 0.0;
        for (double v : x) s += (v - mu) * (v - mu);
        return std::sqrt(s / static_cast<double>(x.size() - 1));
    }
};

inline SeedSummary summarize(const SeedResult& r) {
    SeedSummary s;
    s.seed = r.seed;
    s.episodes = static_cast<int>(r.ledger.rows.size());
    if (!r.ledger.rows.empty()) {
        const EpisodeArtifacts& c = r.ledger.rows.back().cumulative;
        s.cum_planner_gap = c.planner_gap;
        s.cum_agents_gap_expected = c.agents_gap_expected;
        s.cum_agents_gap_realized = c.agents_gap_realized;
        s.cum_total_gap = c.total_gap;
    }
    const int first = std::max(1, s.episodes / 2);
    if (s.episodes - first + 1 >= 10) {
        try {
            s.regret_slope = regret_slope(r.ledger, first, s.episodes);
        } catch (const InvalidInput&) {
            // zero cumulative regret: slope undefined
        }
    }
    s.optimism_violated = r.optimism_violated();
    s.hard_failures = r.tally.hard_failures();
    s.checks = r.tally.checks;
    return s;
}

inline std::string summary_csv(const RunSummary& sum) {
    std::string s = "seed,episodes,cum_planner_gap,cum_agents_gap_expected,cum_agents_gap_realized,cum_total_gap,"
                    "regret_slope,optimism_violated,hard_failures,checks\n";
    using detail::fmt12;
    std::vector<std::vector<double>> cols(9);
    for (const SeedSummary& r : sum.seeds) {
        const std::vector<double> row = {static_cast<double>(r.episodes), r.cum_planner_gap, r.cum_agents_gap_expected,
                                         r.cum_agents_gap_realized, r.cum_total_gap, r.regret_slope,
                                         r.optimism_violated ? 1.0 : 0.0, static_cast<double>(r.hard_failures),
                                         static_cast<double>(r.checks)};
        s += std::to_string(r.seed) + "," + std::to_string(r.episodes) + "," + fmt12(r.cum_planner_gap) + "," +
             fmt12(r.cum_agents_gap_expected) + "," + fmt12(r.cum_agents_gap_realized) + "," +
             fmt12(r.cum_total_gap) + "," + fmt12(r.regret_slope) + "," + (r.optimism_violated ? "1" : "0") + "," +
             std::to_string(r.hard_failures) + "," + std::to_string(r.checks) + "\n";
        for (std::size_t k = 0; k < row.size(); ++k) cols[k].push_back(row[k]);
    }
    for (const char* stat : {"mean", "std"}) {
        s += stat;
        for (const auto& c : cols) s += "," + fmt12(std::string(stat) == "mean" ? RunSummary::mean(c) : RunSummary::stddev(c));
        s += "\n";
    }
    return s;
}

/// Worker count from SOM_WORKERS, else the hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("SOM_WORKERS")) {
        unsigned n = 0;
        const std::string s(env);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), n);
        if (res.ec == std::errc() && n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs every seed, writes ledger_seed<N>.csv (and trace_seed<N>.csv) plus
/// summary.csv under run.out_dir. Exit code: 0 all invariants held, 2 some
/// seed lost the optimism event, 1 a hard invariant failed.
inline RunSummary run_experiment(const ExperimentConfig& cfg, unsigned workers = worker_count()) {
    validate(cfg);
    namespace fs = std::filesystem;
    const fs::path dir(cfg.run.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());

    SomConfig som_cfg = cfg.som;
    som_cfg.si_tracking = cfg.si_enabled();
    const std::size_t n = cfg.run.seeds.size();
    std::vector<std::optional<SeedResult>> results(n);
    std::vector<std::string> errors(n);
    std::size_t next = 0;
    std::mutex mu;

    auto worker = [&] {
        for (;;) {
            std::size_t idx;
            {
                std::lock_guard lock(mu);
                if (next >= n) return;
                idx = next++;
            }
            try {
                results[idx] = run_seed(cfg.market, som_cfg, cfg.run.seeds[idx], cfg.run.emit_traces);
            } catch (const std::exception& e) {
                errors[idx] = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(workers, n); ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::vector<SeedSummary> summaries(n);
    std::map<std::uint64_t, int> occurrences;
    for (std::size_t idx = 0; idx < n; ++idx) {
        const std::uint64_t seed = cfg.run.seeds[idx];
        // A repeated seed gets its own files: ledger_seed7.csv, ledger_seed7_r2.csv, ...
        const int occurrence = ++occurrences[seed];
        const std::string stem =
            "seed" + std::to_string(seed) + (occurrence > 1 ? "_r" + std::to_string(occurrence) : "");
        if (!results[idx]) {
            std::fprintf(stderr, "error: seed %llu: %s\n", static_cast<unsigned long long>(seed), errors[idx].c_str());
            summaries[idx].seed = seed;
            summaries[idx].hard_failures = 1;
            continue;
        }
        const SeedResult& r = *results[idx];
        detail::write_file(dir / ("ledger_" + stem + ".csv"), ledger_csv(r.ledger));
        if (cfg.run.emit_traces)
            detail::write_file(dir / ("trace_" + stem + ".csv"), trace_csv(r.traces));
        summaries[idx] = summarize(r);
    }

    RunSummary sum;
    sum.seeds = std::move(summaries);
    detail::write_file(dir / "summary.csv", summary_csv(sum));
    bool hard = false, optimism = false;
    for (const auto& s : sum.seeds) {
        hard = hard || s.hard_failures > 0;
        optimism = optimism || s.optimism_violated;
    }
    sum.exit_code = hard ? 1 : (optimism ? 2 : 0);
    return sum;
}

} // namespace som

#endif // SOM_EXPERIMENT_HPP
