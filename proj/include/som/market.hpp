#ifndef SOM_MARKET_HPP
#define SOM_MARKET_HPP

// Ground-truth Markov matching market: contexts driven by planner actions
// through a linear kernel, per-step agent rosters, bilinear utilities and
// noisy utility observations.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "som/errors.hpp"
#include "som/matching.hpp"

namespace som {

using Rng = std::mt19937_64;

enum class Side { Row, Col };

struct MarketConfig {
    int d = 2;
    int H = 2;
    int num_contexts = 3;
    int num_actions = 2;
    int rows_per_step = 3;
    int cols_per_step = 3;
    int universe_rows = 0; ///< 0 means rows_per_step
    int universe_cols = 0; ///< 0 means cols_per_step
    double noise_sigma = 0.1;
    double utility_target_scale = 1.0;
};

/// Agents taking part at one step, as universe indices in increasing order.
struct Roster {
    std::vector<int> rows;
    std::vector<int> cols;
};

struct MarketInstance {
    int d = 0;
    int H = 0;
    int num_contexts = 0;
    int num_actions = 0;
    int universe_rows = 0;
    int universe_cols = 0;
    int initial_context = 0;
    double noise_sigma = 0.0;

    std::vector<Roster> rosters;          ///< per step
    std::vector<Eigen::VectorXd> psi;     ///< [C * num_actions + e], dimension d
    std::vector<Eigen::VectorXd> phi;     ///< [i * universe_cols + j], dimension d
    std::vector<Eigen::VectorXd> theta;   ///< per step, dimension d^2
    std::vector<Eigen::VectorXd> gamma;   ///< per step, dimension d^2
    std::vector<Eigen::MatrixXd> anchors; ///< per step, d x num_contexts, rows on the simplex

    // Derived by finalize_market().
    std::vector<Eigen::VectorXd> kernel; ///< [h][C * num_actions + e] flattened: distribution over C'
    std::vector<double> W;               ///< per step: max true pseudo-reward over (C, e)

    int cell(int C, int e) const { return C * num_actions + e; }
    int num_cells() const { return num_contexts * num_actions; }
    int rows_at(int h) const { return static_cast<int>(rosters.at(h).rows.size()); }
    int cols_at(int h) const { return static_cast<int>(rosters.at(h).cols.size()); }

    const Eigen::VectorXd& psi_at(int C, int e) const { return psi.at(cell(C, e)); }
    const Eigen::VectorXd& phi_at(int i, int j) const { return phi.at(i * universe_cols + j); }
    const Eigen::VectorXd& kernel_row(int h, int C, int e) const {
        return kernel.at(static_cast<std::size_t>(h) * num_cells() + cell(C, e));
    }

    double sum_W(int from_step = 0) const {
        return std::accumulate(W.begin() + from_step, W.end(), 0.0);
    }
    /// max over steps of min(|I_h|, |J_h|)
    int max_min_roster() const {
        int m = 0;
        for (int h = 0; h < H; ++h) m = std::max(m, std::min(rows_at(h), cols_at(h)));
        return m;
    }
};

/// Row-major vectorisation of psi * phi^T.
inline Eigen::VectorXd pair_feature(const Eigen::VectorXd& psi, const Eigen::VectorXd& phi) {
    if (psi.size() != phi.size() || psi.size() == 0)
        throw InvalidInput("pair_feature: dimension mismatch (" + std::to_string(psi.size()) + " vs " +
                           std::to_string(phi.size()) + ")");
    const Eigen::Index d = psi.size();
    Eigen::VectorXd out(d * d);
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) out(a * d + b) = psi(a) * phi(b);
    return out;
}

namespace detail {

inline void check_step(const MarketInstance& m, int h) {
    if (h < 0 || h >= m.H) throw InvalidInput("step index " + std::to_string(h) + " out of range");
}
inline void check_cell(const MarketInstance& m, int C, int e) {
    if (C < 0 || C >= m.num_contexts) throw InvalidInput("context index " + std::to_string(C) + " out of range");
    if (e < 0 || e >= m.num_actions) throw InvalidInput("action index " + std::to_string(e) + " out of range");
}
inline void check_pair(const MarketInstance& m, int h, int i, int j) {
    if (i < 0 || i >= m.rows_at(h) || j < 0 || j >= m.cols_at(h))
        throw InvalidInput("pair (" + std::to_string(i) + "," + std::to_string(j) + ") outside roster of step " +
                           std::to_string(h));
}

} // namespace detail

/// Phi(C, e, i, j) for roster-local agent indices at step h.
inline Eigen::VectorXd pair_feature(const MarketInstance& m, int h, int C, int e, int i, int j) {
    detail::check_step(m, h);
    detail::check_cell(m, C, e);
    detail::check_pair(m, h, i, j);
    const Roster& r = m.rosters[h];
    return pair_feature(m.psi_at(C, e), m.phi_at(r.rows[i], r.cols[j]));
}

inline double true_utility(const MarketInstance& m, int h, int C, int e, int i, int j, Side side) {
    const Eigen::VectorXd f = pair_feature(m, h, C, e, i, j);
    return f.dot(side == Side::Row ? m.theta[h] : m.gamma[h]);
}

struct UtilityPair {
    UtilityMatrix u;
    UtilityMatrix v;
};

/// True utilities on the roster of step h at (C, e).
inline UtilityPair true_utilities(const MarketInstance& m, int h, int C, int e) {
    detail::check_step(m, h);
    detail::check_cell(m, C, e);
    const int nr = m.rows_at(h), nc = m.cols_at(h);
    UtilityPair out{UtilityMatrix(nr, nc), UtilityMatrix(nr, nc)};
    const Roster& r = m.rosters[h];
    for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nc; ++j) {
            const Eigen::VectorXd f = pair_feature(m.psi_at(C, e), m.phi_at(r.rows[i], r.cols[j]));
            out.u(i, j) = f.dot(m.theta[h]);
            out.v(i, j) = f.dot(m.gamma[h]);
        }
    return out;
}

inline int sample_transition(const MarketInstance& m, int h, int C, int e, Rng& rng) {
    detail::check_step(m, h);
    detail::check_cell(m, C, e);
    const Eigen::VectorXd& p = m.kernel_row(h, C, e);
    if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-12)
        throw InvariantError("sample_transition: kernel row is not a distribution");
    const double x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    int last_positive = 0;
    for (int c = 0; c < m.num_contexts; ++c) {
        if (p(c) <= 0.0) continue;
        last_positive = c;
        acc += p(c);
        if (x < acc) return c;
    }
    return last_positive;
}

struct UtilityObservation {
    Pair pair;
    double u = 0.0;
    double v = 0.0;
};

/// Noisy (u, v) for every matched pair; independent N(0, sigma^2) per side.
inline std::vector<UtilityObservation> observe_utilities(const MarketInstance& m, int h, int C, int e,
                                                         const Matching& matching, Rng& rng) {
    detail::check_step(m, h);
    detail::check_cell(m, C, e);
    if (matching.rows() != m.rows_at(h) || matching.cols() != m.cols_at(h))
        throw InvalidInput("observe_utilities: matching is not over the roster of step " + std::to_string(h));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<UtilityObservation> out;
    for (const Pair& pr : matching.pairs()) {
        detail::check_pair(m, h, pr.row, pr.col);
        const Eigen::VectorXd f = pair_feature(m, h, C, e, pr.row, pr.col);
        const double nu = noise(rng);
        const double nv = noise(rng);
        out.push_back({pr, f.dot(m.theta[h]) + m.noise_sigma * nu, f.dot(m.gamma[h]) + m.noise_sigma * nv});
    }
    return out;
}

/// Checks every structural invariant, fills the kernel cache and W.
inline void finalize_market(MarketInstance& m) {
    if (m.d < 1 || m.H < 1 || m.num_contexts < 1 || m.num_actions < 1 || m.universe_rows < 1 ||
        m.universe_cols < 1)
        throw InvalidInput("market: dimensions must be positive");
    if (!(m.noise_sigma >= 0.0 && m.noise_sigma <= 1.0)) throw InvalidInput("market: noise_sigma outside [0, 1]");
    if (m.initial_context < 0 || m.initial_context >= m.num_contexts)
        throw InvalidInput("market: initial context out of range");
    const auto H = static_cast<std::size_t>(m.H);
    if (m.rosters.size() != H || m.theta.size() != H || m.gamma.size() != H || m.anchors.size() != H)
        throw InvalidInput("market: per-step tables must have H entries");
    if (m.psi.size() != static_cast<std::size_t>(m.num_cells()) ||
        m.phi.size() != static_cast<std::size_t>(m.universe_rows * m.universe_cols))
        throw InvalidInput("market: feature tables have the wrong size");

    constexpr double tol = 1e-12;
    for (const auto& p : m.psi) {
        if (p.size() != m.d) throw InvalidInput("market: psi dimension");
        if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > tol)
            throw InvalidInput("market: psi must lie on the probability simplex");
    }
    for (const auto& f : m.phi) {
        if (f.size() != m.d) throw InvalidInput("market: phi dimension");
        if (f.norm() > 1.0 + tol) throw InvalidInput("market: ||phi|| > 1");
    }
    for (int h = 0; h < m.H; ++h) {
        const Roster& r = m.rosters[h];
        if (r.rows.empty() || r.cols.empty()) throw InvalidInput("market: empty roster");
        for (int i : r.rows)
            if (i < 0 || i >= m.universe_rows) throw InvalidInput("market: roster row outside universe");
        for (int j : r.cols)
            if (j < 0 || j >= m.universe_cols) throw InvalidInput("market: roster col outside universe");
        if (m.theta[h].size() != m.d * m.d || m.gamma[h].size() != m.d * m.d)
            throw InvalidInput("market: utility parameter dimension");
        if (m.theta[h].norm() > m.d + tol || m.gamma[h].norm() > m.d + tol)
            throw InvalidInput("market: utility parameter norm exceeds d");
        const Eigen::MatrixXd& a = m.anchors[h];
        if (a.rows() != m.d || a.cols() != m.num_contexts) throw InvalidInput("market: anchor shape");
        for (Eigen::Index r_ = 0; r_ < a.rows(); ++r_)
            if ((a.row(r_).array() < 0.0).any() || std::abs(a.row(r_).sum() - 1.0) > tol)
                throw InvalidInput("market: anchor rows must be distributions");
    }

    m.kernel.clear();
    for (int h = 0; h < m.H; ++h)
        for (int c = 0; c < m.num_contexts; ++c)
            for (int e = 0; e < m.num_actions; ++e) {
                Eigen::VectorXd row = m.anchors[h].transpose() * m.psi_at(c, e);
                if ((row.array() < -tol).any() || std::abs(row.sum() - 1.0) > tol)
                    throw InvariantError("market: induced kernel row is not a distribution");
                m.kernel.push_back(row.cwiseMax(0.0));
            }

    m.W.assign(H, 0.0);
    for (int h = 0; h < m.H; ++h) {
        for (int c = 0; c < m.num_contexts; ++c)
            for (int e = 0; e < m.num_actions; ++e) {
                const UtilityPair up = true_utilities(m, h, c, e);
                if ((up.u.array().abs() > 1.0 + tol).any() || (up.v.array().abs() > 1.0 + tol).any())
                    throw InvalidInput("market: utility outside [-1, 1]");
                m.W[h] = std::max(m.W[h], max_weight_matching(up.u + up.v).value);
            }
        if (m.W[h] > 2.0 * std::min(m.rows_at(h), m.cols_at(h)) + tol)
            throw InvariantError("market: W_h exceeds 2 min(|I_h|, |J_h|)");
    }
}

namespace detail {

inline Eigen::VectorXd dirichlet_ones(int n, Rng& rng) {
    std::gamma_distribution<double> g(1.0, 1.0);
    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) x(k) = g(rng);
    const double s = x.sum();
    if (s > 0.0) {
        x /= s;
    } else {
        x.setConstant(1.0 / n);
    }
    return x;
}

inline Eigen::VectorXd gaussian_vector(int n, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) x(k) = g(rng);
    return x;
}

// Largest |<Phi, p>| over every (C, e, i, j) of the universe.
inline double max_abs_utility(const MarketInstance& m, const Eigen::VectorXd& p) {
    double best = 0.0;
    for (const auto& ps : m.psi)
        for (const auto& ph : m.phi) best = std::max(best, std::abs(pair_feature(ps, ph).dot(p)));
    return best;
}

inline Eigen::VectorXd scaled_utility_params(const MarketInstance& m, double target, Rng& rng) {
    Eigen::VectorXd p = gaussian_vector(m.d * m.d, rng);
    const double peak = max_abs_utility(m, p);
    if (peak > 0.0) p *= target / peak;
    if (p.norm() > m.d) p *= m.d / p.norm();
    // Rounding can leave the peak a hair above the target.
    const double after = max_abs_utility(m, p);
    if (after > target) p *= target / after;
    return p;
}

} // namespace detail

/// Random instance satisfying every market invariant; deterministic in seed.
inline MarketInstance generate_market(const MarketConfig& cfg, std::uint64_t seed) {
    if (cfg.d < 1) throw InvalidInput("market.d must be >= 1");
    if (cfg.H < 1) throw InvalidInput("market.H must be >= 1");
    if (cfg.num_contexts < 1) throw InvalidInput("market.num_contexts must be >= 1");
    if (cfg.num_actions < 1) throw InvalidInput("market.num_actions must be >= 1");
    if (cfg.rows_per_step < 1 || cfg.cols_per_step < 1) throw InvalidInput("market: roster sizes must be >= 1");
    if (!(cfg.noise_sigma >= 0.0 && cfg.noise_sigma <= 1.0)) throw InvalidInput("market.noise_sigma outside [0, 1]");
    if (!(cfg.utility_target_scale > 0.0 && cfg.utility_target_scale <= 1.0))
        throw InvalidInput("market.utility_target_scale outside (0, 1]");
    const int ur = cfg.universe_rows == 0 ? cfg.rows_per_step : cfg.universe_rows;
    const int uc = cfg.universe_cols == 0 ? cfg.cols_per_step : cfg.universe_cols;
    if (ur < cfg.rows_per_step || uc < cfg.cols_per_step)
        throw InvalidInput("market: universe smaller than the per-step roster");

    Rng rng(seed);
    MarketInstance m;
    m.d = cfg.d;
    m.H = cfg.H;
    m.num_contexts = cfg.num_contexts;
    m.num_actions = cfg.num_actions;
    m.universe_rows = ur;
    m.universe_cols = uc;
    m.initial_context = 0;
    m.noise_sigma = cfg.noise_sigma;

    for (int k = 0; k < m.num_cells(); ++k) m.psi.push_back(detail::dirichlet_ones(m.d, rng));

    std::uniform_real_distribution<double> radius(0.5, 1.0);
    for (int k = 0; k < ur * uc; ++k) {
        Eigen::VectorXd f = detail::gaussian_vector(m.d, rng);
        const double n = f.norm();
        if (n > 0.0) f *= radius(rng) / n;
        m.phi.push_back(f);
    }

    auto draw_subset = [&](int universe, int size) {
        std::vector<int> ids(static_cast<std::size_t>(universe));
        std::iota(ids.begin(), ids.end(), 0);
        for (int k = 0; k < size; ++k) {
            std::uniform_int_distribution<int> pick(k, universe - 1);
            std::swap(ids[k], ids[pick(rng)]);
        }
        ids.resize(static_cast<std::size_t>(size));
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    for (int h = 0; h < m.H; ++h)
        m.rosters.push_back({draw_subset(ur, cfg.rows_per_step), draw_subset(uc, cfg.cols_per_step)});

    for (int h = 0; h < m.H; ++h) {
        m.theta.push_back(detail::scaled_utility_params(m, cfg.utility_target_scale, rng));
        m.gamma.push_back(detail::scaled_utility_params(m, cfg.utility_target_scale, rng));
    }

    for (int h = 0; h < m.H; ++h) {
        Eigen::MatrixXd a(m.d, m.num_contexts);
        for (int r = 0; r < m.d; ++r) a.row(r) = detail::dirichlet_ones(m.num_contexts, rng).transpose();
        m.anchors.push_back(a);
    }

    finalize_market(m);
    return m;
}

} // namespace som

#endif // SOM_MARKET_HPP
