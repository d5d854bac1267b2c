#ifndef SOM_EVALUATION_HPP
#define SOM_EVALUATION_HPP

// Exact dynamic-programming oracles over a known market, and the per-episode
// regret ledger built from them.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "som/errors.hpp"
#include "som/market.hpp"
#include "som/matching.hpp"

namespace som {

/// True pseudo-reward per step: contexts x actions.
inline std::vector<Eigen::MatrixXd> exact_pseudo_rewards(const MarketInstance& m) {
    std::vector<Eigen::MatrixXd> out;
    for (int h = 0; h < m.H; ++h) {
        Eigen::MatrixXd r(m.num_contexts, m.num_actions);
        for (int C = 0; C < m.num_contexts; ++C)
            for (int e = 0; e < m.num_actions; ++e) {
                const UtilityPair t = true_utilities(m, h, C, e);
                r(C, e) = max_weight_matching(t.u + t.v).value;
            }
        out.push_back(std::move(r));
    }
    return out;
}

struct ExactValues {
    std::vector<Eigen::MatrixXd> r_bar_true; ///< per step
    std::vector<Eigen::VectorXd> v_star;     ///< H + 1 entries, last is zero
    double w_star_1 = 0.0;                   ///< optimal pseudo-value at the initial context
};

/// E_{C' ~ P_h(.|C,e)} f(C')
inline double expected_next(const MarketInstance& m, int h, int C, int e, const Eigen::VectorXd& f) {
    return m.kernel_row(h, C, e).dot(f);
}

inline ExactValues optimal_value(const MarketInstance& m, std::vector<Eigen::MatrixXd> r_bar_true) {
    ExactValues out;
    out.r_bar_true = std::move(r_bar_true);
    out.v_star.assign(static_cast<std::size_t>(m.H) + 1, Eigen::VectorXd::Zero(m.num_contexts));
    for (int h = m.H - 1; h >= 0; --h)
        for (int C = 0; C < m.num_contexts; ++C) {
            double best = -std::numeric_limits<double>::infinity();
            for (int e = 0; e < m.num_actions; ++e)
                best = std::max(best, out.r_bar_true[h](C, e) + expected_next(m, h, C, e, out.v_star[h + 1]));
            out.v_star[h](C) = best;
        }
    out.w_star_1 = out.v_star[0](m.initial_context);
    return out;
}

inline ExactValues optimal_value(const MarketInstance& m) { return optimal_value(m, exact_pseudo_rewards(m)); }

/// Largest Bellman residual of v_star; zero up to rounding.
inline double bellman_residual(const MarketInstance& m, const ExactValues& ev) {
    double worst = 0.0;
    for (int h = 0; h < m.H; ++h)
        for (int C = 0; C < m.num_contexts; ++C) {
            double best = -std::numeric_limits<double>::infinity();
            for (int e = 0; e < m.num_actions; ++e)
                best = std::max(best, ev.r_bar_true[h](C, e) + expected_next(m, h, C, e, ev.v_star[h + 1]));
            worst = std::max(worst, std::abs(best - ev.v_star[h](C)));
        }
    return worst;
}

/// Deterministic episode policy: per (h, C) a planner action and the exact
/// outcome the matching oracle produced for it.
struct PolicySnapshot {
    std::vector<std::vector<int>> action;            ///< [h][C]
    std::vector<std::vector<MarketOutcome>> outcome; ///< [h][C]
};

struct PolicyValues {
    double pseudo_value = 0.0;
    double true_value = 0.0;
    std::optional<double> expected_si;
};

/// Everything about the true market the ledger needs, computed once.
class MarketOracle {
public:
    explicit MarketOracle(const MarketInstance& m, bool with_si = true)
        : market_(&m), values_(optimal_value(m)) {
        for (int h = 0; h < m.H; ++h)
            for (int C = 0; C < m.num_contexts; ++C)
                for (int e = 0; e < m.num_actions; ++e) truths_.push_back(true_utilities(m, h, C, e));
        if (with_si) {
            if (!si_feasible(m)) throw SizeError("MarketOracle: roster exceeds the subset-instability cap");
            for (const auto& t : truths_) tables_.emplace_back(t.u + t.v);
        }
    }

    static bool si_feasible(const MarketInstance& m, int cap = kDefaultSubsetCap) {
        for (int h = 0; h < m.H; ++h)
            if (m.rows_at(h) > cap || m.cols_at(h) > cap) return false;
        return true;
    }

    const MarketInstance& market() const { return *market_; }
    const ExactValues& values() const { return values_; }
    bool tracks_si() const { return !tables_.empty(); }
    const UtilityPair& truth(int h, int C, int e) const { return truths_.at(index(h, C, e)); }

    double subset_instability(int h, int C, int e, const MarketOutcome& outcome) const {
        if (!tracks_si()) throw SizeError("MarketOracle: subset instability not tracked");
        const UtilityPair& t = truth(h, C, e);
        return som::subset_instability(outcome, t.u, t.v, tables_.at(index(h, C, e)));
    }

private:
    std::size_t index(int h, int C, int e) const {
        return static_cast<std::size_t>(h) * market_->num_cells() + market_->cell(C, e);
    }

    const MarketInstance* market_;
    ExactValues values_;
    std::vector<UtilityPair> truths_;
    std::vector<SubsetValueTable> tables_;
};

/// Pseudo-value, true value and expected SI of a snapshot policy from the
/// initial context, by three backward recursions over the same kernel.
inline PolicyValues evaluate_policy(const MarketOracle& oracle, const PolicySnapshot& policy, bool with_si) {
    const MarketInstance& m = oracle.market();
    if (with_si && !oracle.tracks_si())
        throw SizeError("evaluate_policy: expected SI requested but the roster exceeds the cap");
    if (policy.action.size() != static_cast<std::size_t>(m.H) || policy.outcome.size() != static_cast<std::size_t>(m.H))
        throw InvalidInput("evaluate_policy: snapshot must cover every step");
    Eigen::VectorXd pseudo = Eigen::VectorXd::Zero(m.num_contexts);
    Eigen::VectorXd truth = pseudo, si = pseudo;
    for (int h = m.H - 1; h >= 0; --h) {
        Eigen::VectorXd p2(m.num_contexts), t2(m.num_contexts), s2(m.num_contexts);
        for (int C = 0; C < m.num_contexts; ++C) {
            const int e = policy.action[h].at(C);
            const MarketOutcome& out = policy.outcome[h].at(C);
            const UtilityPair& t = oracle.truth(h, C, e);
            p2(C) = oracle.values().r_bar_true[h](C, e) + expected_next(m, h, C, e, pseudo);
            t2(C) = out.matching.value(t.u + t.v) + expected_next(m, h, C, e, truth);
            s2(C) = with_si ? oracle.subset_instability(h, C, e, out) + expected_next(m, h, C, e, si) : 0.0;
        }
        pseudo = std::move(p2);
        truth = std::move(t2);
        si = std::move(s2);
    }
    PolicyValues out;
    out.pseudo_value = pseudo(m.initial_context);
    out.true_value = truth(m.initial_context);
    if (with_si) out.expected_si = si(m.initial_context);
    return out;
}

/// Per-episode quantities reported in one ledger row.
struct EpisodeArtifacts {
    int episode = 0;
    double realized_welfare = 0.0;
    double pseudo_welfare = 0.0;
    double planner_gap = 0.0;
    double agents_gap_expected = std::numeric_limits<double>::quiet_NaN();
    double agents_gap_realized = std::numeric_limits<double>::quiet_NaN();
    double total_gap = 0.0;
    double bonus_sum = 0.0;
};

struct LedgerRow {
    EpisodeArtifacts per_episode;
    EpisodeArtifacts cumulative; ///< running sums; `episode` repeats the index
};

struct RegretLedger {
    std::vector<LedgerRow> rows;
};

inline void ledger_append(RegretLedger& ledger, const EpisodeArtifacts& a) {
    const int expected = static_cast<int>(ledger.rows.size()) + 1;
    if (a.episode != expected)
        throw InvalidInput("ledger_append: expected episode " + std::to_string(expected) + ", got " +
                           std::to_string(a.episode));
    EpisodeArtifacts cum = ledger.rows.empty() ? EpisodeArtifacts{0, 0, 0, 0, 0, 0, 0, 0} : ledger.rows.back().cumulative;
    cum.episode = a.episode;
    cum.realized_welfare += a.realized_welfare;
    cum.pseudo_welfare += a.pseudo_welfare;
    cum.planner_gap += a.planner_gap;
    cum.agents_gap_expected += a.agents_gap_expected;
    cum.agents_gap_realized += a.agents_gap_realized;
    cum.total_gap += a.total_gap;
    cum.bonus_sum += a.bonus_sum;
    ledger.rows.push_back({a, cum});
}

/// Least-squares slope of log(cumulative total gap) against log(episode)
/// over episodes first..last (1-based, inclusive).
inline double regret_slope(const RegretLedger& ledger, int first, int last) {
    if (first < 1 || last > static_cast<int>(ledger.rows.size()) || last - first + 1 < 10)
        throw InvalidInput("regret_slope: window needs at least 10 recorded episodes");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = last - first + 1;
    for (int k = first; k <= last; ++k) {
        const double y = ledger.rows[static_cast<std::size_t>(k) - 1].cumulative.total_gap;
        if (!(y > 0.0)) throw InvalidInput("regret_slope: nonpositive cumulative gap at episode " + std::to_string(k));
        const double lx = std::log(static_cast<double>(k)), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace som

#endif // SOM_EVALUATION_HPP
