#ifndef SOM_ORACLE_SUITE_HPP
#define SOM_ORACLE_SUITE_HPP

// Randomised equivalence suites pitting the matching machinery against
// brute-force enumeration. Shared by the CLI and the acceptance tests.

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "som/matching.hpp"

namespace som {

struct SuiteResult {
    std::string name;
    int cases = 0;
    int failures = 0;
    double seconds = 0.0;
    double worst_error = 0.0;
    bool passed() const { return failures == 0; }
};

namespace detail {

inline Eigen::MatrixXd uniform_matrix(int rows, int cols, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

} // namespace detail

/// Random |I| x |J| weight matrix, each side uniform in 1..max_side, entries uniform in [-2, 2].
inline Eigen::MatrixXd random_weights(int max_side, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> side(1, max_side);
    const int r = side(rng), c = side(rng);
    return detail::uniform_matrix(r, c, -2.0, 2.0, rng);
}

/// max_weight_matching value equals brute-force enumeration.
inline SuiteResult matching_equivalence_suite(int cases, std::uint64_t seed = 1, int max_side = 5) {
    SuiteResult res{"matching oracle equivalence", cases};
    std::mt19937_64 rng(seed);
    detail::Stopwatch clock;
    for (int c = 0; c < cases; ++c) {
        const Eigen::MatrixXd w = random_weights(max_side, rng);
        const double fast = max_weight_matching(w).value;
        const double slow = brute_force_matching(w).value;
        const double err = std::abs(fast - slow);
        res.worst_error = std::max(res.worst_error, err);
        if (err > kExactTol) ++res.failures;
    }
    res.seconds = clock.seconds();
    return res;
}

/// Dual feasibility, complementary slackness, strong duality and stability
/// of the constructed outcome, on the same instance stream as above.
inline SuiteResult duality_stability_suite(int cases, std::uint64_t seed = 1, int max_side = 5) {
    SuiteResult res{"duality and stability", cases};
    std::mt19937_64 rng(seed);
    std::mt19937_64 split_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    detail::Stopwatch clock;
    for (int c = 0; c < cases; ++c) {
        const Eigen::MatrixXd w = random_weights(max_side, rng);
        // Split each weight into u and v so the outcome has two sides to pay.
        const Eigen::MatrixXd frac = detail::uniform_matrix(static_cast<int>(w.rows()), static_cast<int>(w.cols()),
                                                            0.0, 1.0, split_rng);
        const Eigen::MatrixXd u = w.cwiseProduct(frac), v = w - u;
        const MatchingResult primal = max_weight_matching(w);
        const double oracle_value = brute_force_matching(w).value;
        bool ok = true;
        double worst = 0.0;
        try {
            const DualPrices p = dual_prices(w, primal.matching);
            for (int i = 0; i < w.rows(); ++i)
                for (int j = 0; j < w.cols(); ++j) worst = std::max(worst, w(i, j) - p.rows[i] - p.cols[j]);
            for (double x : p.rows) ok = ok && x >= 0.0;
            for (double x : p.cols) ok = ok && x >= 0.0;
            for (const Pair& pr : primal.matching.pairs())
                worst = std::max(worst, std::abs(p.rows[pr.row] + p.cols[pr.col] - w(pr.row, pr.col)));
            for (int i = 0; i < w.rows(); ++i)
                if (primal.matching.partner_of_row(i) < 0) worst = std::max(worst, std::abs(p.rows[i]));
            for (int j = 0; j < w.cols(); ++j)
                if (primal.matching.partner_of_col(j) < 0) worst = std::max(worst, std::abs(p.cols[j]));
            worst = std::max(worst, std::abs(p.total() - oracle_value));
            const MarketOutcome outcome{primal.matching, transfers_from_prices(p, u, v, primal.matching)};
            worst = std::max(worst, std::abs(outcome.transfers.total()));
            ok = ok && is_stable(outcome, u, v, kExactTol);
        } catch (const std::exception&) {
            ok = false;
        }
        res.worst_error = std::max(res.worst_error, worst);
        if (!ok || worst > kExactTol) ++res.failures;
    }
    res.seconds = clock.seconds();
    return res;
}

/// SI = 0 iff stable, SI >= utility difference, and the Lipschitz bound
/// under `perturbations` random utility changes, on random outcomes where
/// every other one has its transfers deliberately disturbed.
inline SuiteResult subset_instability_suite(int cases, int perturbations = 100, std::uint64_t seed = 2,
                                            int max_side = 4) {
    SuiteResult res{"subset instability characterisation", cases};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> side(1, max_side);
    std::uniform_real_distribution<double> amount(0.05, 0.5);
    std::uniform_real_distribution<double> jitter_scale(0.01, 0.5);
    detail::Stopwatch clock;
    for (int c = 0; c < cases; ++c) {
        const int r = side(rng), k = side(rng);
        const Eigen::MatrixXd u = detail::uniform_matrix(r, k, -1.0, 1.0, rng);
        const Eigen::MatrixXd v = detail::uniform_matrix(r, k, -1.0, 1.0, rng);
        MarketOutcome outcome = optimal_outcome(u, v);
        if (c % 2 == 1) {
            // Move a transfer between two agents; the total stays zero.
            std::uniform_int_distribution<int> agent(0, r + k - 1);
            const int from = agent(rng), to = agent(rng);
            const double t = amount(rng);
            auto slot = [&](int a) -> double& {
                return a < r ? outcome.transfers.rows[a] : outcome.transfers.cols[a - r];
            };
            slot(from) -= t;
            slot(to) += t;
        }
        bool ok = true;
        const double si = subset_instability(outcome, u, v);
        const bool stable = is_stable(outcome, u, v, kExactTol);
        ok = ok && si >= 0.0 && ((si <= kExactTol) == stable);
        const double utility_gap = max_weight_matching(u + v).value - outcome.matching.value(u + v);
        ok = ok && si >= utility_gap - kExactTol;
        double worst = 0.0;
        for (int p = 0; p < perturbations; ++p) {
            const double s = jitter_scale(rng);
            const Eigen::MatrixXd du = detail::uniform_matrix(r, k, -s, s, rng);
            const Eigen::MatrixXd dv = detail::uniform_matrix(r, k, -s, s, rng);
            const double si2 = subset_instability(outcome, u + du, v + dv);
            double bound = 0.0;
            for (int i = 0; i < r; ++i) bound += du.row(i).cwiseAbs().maxCoeff();
            for (int j = 0; j < k; ++j) bound += dv.col(j).cwiseAbs().maxCoeff();
            bound *= 2.0;
            const double excess = std::abs(si - si2) - bound;
            worst = std::max(worst, excess);
            if (excess > kExactTol) ok = false;
        }
        res.worst_error = std::max(res.worst_error, worst);
        if (!ok) ++res.failures;
    }
    res.seconds = clock.seconds();
    return res;
}

} // namespace som

#endif // SOM_ORACLE_SUITE_HPP
