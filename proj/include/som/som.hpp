#ifndef SOM_SOM_HPP
#define SOM_SOM_HPP

// Sequential Optimistic Matching: each episode runs a backward estimation
// pass (utilities -> pseudo-rewards -> Q-values), then acts greedily forward,
// implementing the stable outcome of the estimated market at every step.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "som/errors.hpp"
#include "som/estimation.hpp"
#include "som/market.hpp"
#include "som/matching.hpp"

namespace som {

struct SomConfig {
    int K = 100;
    double lambda = 1.0;
    double delta = 0.1;
    double eta = 0.1;
    double beta_scale_u = 1.0;
    double beta_scale_V = 1.0;
    bool si_tracking = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (K < 1) throw InvalidInput("som.K must be >= 1");
        if (!(lambda > 0.0)) throw InvalidInput("som.lambda must be positive");
        if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("som.delta must lie in (0, 1)");
        if (!(eta > 0.0)) throw InvalidInput("som.eta must be positive");
        if (!(beta_scale_u >= 0.0)) throw InvalidInput("som.beta_scale_u must be >= 0");
        if (!(beta_scale_V >= 0.0)) throw InvalidInput("som.beta_scale_V must be >= 0");
    }
};

/// Everything the backward pass produced for one step of one episode.
struct StepTables {
    std::vector<UtilityPair> estimates;    ///< [cell] optimistic (u, v) on the roster
    std::vector<MarketOutcome> outcomes;   ///< [cell] OM output on the estimates
    Eigen::MatrixXd r_bar;                 ///< estimated pseudo-reward, contexts x actions
    QTable q;
};

using EpisodeTables = std::vector<StepTables>;

struct StepRecord {
    int context = 0;
    int action = 0;
    MarketOutcome outcome;
    std::vector<UtilityObservation> observations;
    double welfare = 0.0;                      ///< true u + v over the implemented matching
    double utility_bonus = 0.0;                ///< sum over matched pairs of 2 beta_u ||Phi||
    double value_bonus = 0.0;                  ///< beta_V ||psi||_{Lambda^{-1}}
    std::optional<double> subset_instability;  ///< filled by the evaluator when tracked
};

struct EpisodeTrace {
    int episode = 0; ///< 1-based
    std::vector<StepRecord> steps;
    int final_context = 0;
};

struct SomBetas {
    double u = 0.0;
    double V = 0.0;
};

/// Literal confidence radii times the configured multipliers.
inline SomBetas som_betas(const MarketInstance& m, const SomConfig& cfg) {
    const int min_agents = std::min(m.universe_rows, m.universe_cols);
    return {cfg.beta_scale_u * beta_u(cfg.delta, m.d, cfg.K, cfg.lambda, m.max_min_roster()),
            cfg.beta_scale_V * beta_V(cfg.eta, m.d, cfg.K, m.H, min_agents, cfg.delta, std::max(m.sum_W(), 1e-12))};
}

/// Learner state across episodes. Uses the market only for what the planner
/// is assumed to know: features, rosters and W.
class SomLearner {
public:
    SomLearner(const MarketInstance& market, const SomConfig& cfg)
        : market_(&market), cfg_(cfg), betas_(som_betas(market, cfg)),
          utilities_(market.d, market.H, cfg.lambda, betas_.u),
          values_(market.psi, market.num_contexts, market.num_actions, market.H, cfg.lambda, betas_.V) {
        cfg.validate();
    }

    const SomBetas& betas() const { return betas_; }
    const UtilityEstimator& utility_estimator() const { return utilities_; }
    const QEstimator& value_estimator() const { return values_; }
    std::size_t observation_count() const { return observations_; }

    /// Steps H..1: UE, RE and QE with V_{H+1} = 0. Deterministic in the learner state.
    EpisodeTables backward_pass() const {
        const MarketInstance& m = *market_;
        EpisodeTables tables(static_cast<std::size_t>(m.H));
        Eigen::VectorXd v_next = Eigen::VectorXd::Zero(m.num_contexts);
        for (int h = m.H - 1; h >= 0; --h) {
            StepTables& st = tables[static_cast<std::size_t>(h)];
            st.r_bar.resize(m.num_contexts, m.num_actions);
            for (int C = 0; C < m.num_contexts; ++C)
                for (int e = 0; e < m.num_actions; ++e) {
                    UtilityPair est = utilities_.ucb_utilities(m, h, C, e);
                    MarketOutcome om = optimal_outcome(est.u, est.v);
                    st.r_bar(C, e) = om.matching.value(est.u + est.v);
                    st.estimates.push_back(std::move(est));
                    st.outcomes.push_back(std::move(om));
                }
            st.q = values_.fit(h, st.r_bar, v_next, m.sum_W(h));
            v_next = st.q.v;
        }
        return tables;
    }

    /// Greedy actions on the tables, OM outcomes, noisy observations, simulated transitions.
    EpisodeTrace forward_pass(const EpisodeTables& tables, int episode, Rng& rng) const {
        const MarketInstance& m = *market_;
        EpisodeTrace trace;
        trace.episode = episode;
        int C = m.initial_context;
        for (int h = 0; h < m.H; ++h) {
            const StepTables& st = tables.at(static_cast<std::size_t>(h));
            StepRecord rec;
            rec.context = C;
            rec.action = st.q.greedy_action(C);
            rec.outcome = st.outcomes[static_cast<std::size_t>(m.cell(C, rec.action))];
            const UtilityPair truth = true_utilities(m, h, C, rec.action);
            rec.welfare = rec.outcome.matching.value(truth.u + truth.v);
            for (const Pair& pr : rec.outcome.matching.pairs())
                rec.utility_bonus +=
                    2.0 * betas_.u * utilities_.width(h, pair_feature(m, h, C, rec.action, pr.row, pr.col));
            rec.value_bonus = betas_.V * values_.gram(h).norm(m.psi_at(C, rec.action));
            rec.observations = observe_utilities(m, h, C, rec.action, rec.outcome.matching, rng);
            const int next = sample_transition(m, h, C, rec.action, rng);
            trace.steps.push_back(std::move(rec));
            C = next;
        }
        trace.final_context = C;
        return trace;
    }

    /// Appends the episode's data to D_h and the transition statistics.
    void ingest(const EpisodeTrace& trace) {
        const MarketInstance& m = *market_;
        for (int h = 0; h < m.H; ++h) {
            const StepRecord& rec = trace.steps.at(static_cast<std::size_t>(h));
            std::vector<FeatureObservation> batch;
            for (const auto& ob : rec.observations)
                batch.push_back({pair_feature(m, h, rec.context, rec.action, ob.pair.row, ob.pair.col), ob.u, ob.v});
            utilities_.ingest(h, batch);
            observations_ += batch.size();
            const int next = h + 1 < m.H ? trace.steps[static_cast<std::size_t>(h) + 1].context : -1;
            values_.record(h, rec.context, rec.action, next);
        }
    }

private:
    const MarketInstance* market_;
    SomConfig cfg_;
    SomBetas betas_;
    UtilityEstimator utilities_;
    QEstimator values_;
    std::size_t observations_ = 0;
};

/// Called after each episode's forward pass, before its data is ingested.
using EpisodeObserver =
    std::function<void(const SomLearner&, const EpisodeTables&, EpisodeTrace&)>;

struct SomRun {
    std::vector<EpisodeTrace> traces;
    SomLearner learner;
};

/// Simulation stream derived from the run seed, distinct from market generation.
inline Rng simulation_rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
    return Rng(seq);
}

inline SomRun run(const MarketInstance& market, const SomConfig& cfg, const EpisodeObserver& observer = {}) {
    cfg.validate();
    SomRun out{{}, SomLearner(market, cfg)};
    Rng rng = simulation_rng(cfg.seed);
    for (int k = 1; k <= cfg.K; ++k) {
        const EpisodeTables tables = out.learner.backward_pass();
        EpisodeTrace trace = out.learner.forward_pass(tables, k, rng);
        if (observer) observer(out.learner, tables, trace);
        out.learner.ingest(trace);
        out.traces.push_back(std::move(trace));
    }
    return out;
}

} // namespace som

#endif // SOM_SOM_HPP
