#ifndef SOM_ESTIMATION_HPP
#define SOM_ESTIMATION_HPP

// Optimistic estimators: ridge utility estimates with UCB bonuses, the
// pseudo-reward built from them, and least-squares value iteration for
// the planner's Q-function.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "som/errors.hpp"
#include "som/market.hpp"
#include "som/matching.hpp"

namespace som {

/// Confidence radius for the utility estimates.
inline double beta_u(double delta, int d, int K, double lambda, int m) {
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("beta_u: delta must lie in (0, 1)");
    if (d < 1 || K < 1 || m < 0 || !(lambda > 0.0)) throw InvalidInput("beta_u: need d >= 1, K >= 1, m >= 0, lambda > 0");
    const double d2 = static_cast<double>(d) * d;
    return std::sqrt(d2 * std::log(2.0 * (1.0 + d2 * K * m) / (lambda * delta))) + std::sqrt(lambda) * d;
}

/// Confidence radius for the value regression; eta is a free constant.
inline double beta_V(double eta, int d, int K, int H, int min_agents, double delta, double sum_W) {
    if (!(eta > 0.0) || d < 1 || K < 1 || H < 1 || min_agents < 1 || !(delta > 0.0) || !(sum_W > 0.0))
        throw InvalidInput("beta_V: arguments must be positive");
    const double iota = std::log(static_cast<double>(d) * K * H * min_agents / delta);
    if (!(iota > 0.0)) throw InvalidInput("beta_V: log argument must exceed 1");
    return eta * static_cast<double>(d) * d * sum_W * std::sqrt(iota);
}

/// lambda I + sum x x^T with its inverse kept current by Sherman-Morrison.
/// The inverse is refactorised from scratch every `refresh_every` updates.
class RidgeGram {
public:
    RidgeGram() = default;
    RidgeGram(int dim, double lambda, int refresh_every = 500)
        : lambda_(lambda), refresh_every_(refresh_every),
          gram_(Eigen::MatrixXd::Identity(dim, dim) * lambda),
          inverse_(Eigen::MatrixXd::Identity(dim, dim) / lambda) {
        if (dim < 1) throw InvalidInput("RidgeGram: dimension must be >= 1");
        if (!(lambda > 0.0)) throw InvalidInput("RidgeGram: lambda must be positive");
    }

    int dim() const { return static_cast<int>(gram_.rows()); }
    double lambda() const { return lambda_; }
    std::size_t updates() const { return updates_; }
    const Eigen::MatrixXd& matrix() const { return gram_; }
    const Eigen::MatrixXd& inverse() const { return inverse_; }

    void add(const Eigen::VectorXd& x) {
        if (x.size() != gram_.rows()) throw InvalidInput("RidgeGram::add: dimension mismatch");
        gram_.noalias() += x * x.transpose();
        const Eigen::VectorXd ax = inverse_ * x;
        inverse_.noalias() -= (ax * ax.transpose()) / (1.0 + x.dot(ax));
        if (++updates_ % static_cast<std::size_t>(refresh_every_) == 0) refresh();
    }

    /// Recompute the inverse from the Gram matrix; fails if drift exceeded 1e-8.
    void refresh() {
        if (inverse_residual() > 1e-8) throw InvariantError("RidgeGram: inverse drifted beyond 1e-8");
        Eigen::LLT<Eigen::MatrixXd> llt(gram_);
        if (llt.info() != Eigen::Success) throw InvariantError("RidgeGram: Gram matrix lost positive definiteness");
        inverse_ = llt.solve(Eigen::MatrixXd::Identity(dim(), dim()));
        inverse_ = 0.5 * (inverse_ + inverse_.transpose());
    }

    /// max |A A^{-1} - I|
    double inverse_residual() const {
        return (gram_ * inverse_ - Eigen::MatrixXd::Identity(dim(), dim())).cwiseAbs().maxCoeff();
    }

    /// ||x||_{A^{-1}}
    double norm(const Eigen::VectorXd& x) const { return std::sqrt(std::max(0.0, x.dot(inverse_ * x))); }

private:
    double lambda_ = 1.0;
    int refresh_every_ = 500;
    std::size_t updates_ = 0;
    Eigen::MatrixXd gram_;
    Eigen::MatrixXd inverse_;
};

/// One utility sample expressed in feature space.
struct FeatureObservation {
    Eigen::VectorXd feature; ///< Phi, dimension d^2
    double u = 0.0;
    double v = 0.0;
};

/// Per-step ridge regressions for theta_h and gamma_h sharing one Gram matrix.
class UtilityEstimator {
public:
    struct Step {
        RidgeGram sigma;
        Eigen::VectorXd b_theta;
        Eigen::VectorXd b_gamma;
        Eigen::VectorXd theta_hat;
        Eigen::VectorXd gamma_hat;
        std::size_t observations = 0;
    };

    UtilityEstimator(int d, int H, double lambda, double beta)
        : dim_(d * d), beta_(beta) {
        if (d < 1 || H < 1) throw InvalidInput("UtilityEstimator: d and H must be >= 1");
        if (beta < 0.0) throw InvalidInput("UtilityEstimator: negative beta");
        for (int h = 0; h < H; ++h) {
            steps_.push_back({RidgeGram(dim_, lambda), Eigen::VectorXd::Zero(dim_), Eigen::VectorXd::Zero(dim_),
                              Eigen::VectorXd::Zero(dim_), Eigen::VectorXd::Zero(dim_), 0});
        }
    }

    int horizon() const { return static_cast<int>(steps_.size()); }
    double beta() const { return beta_; }
    const Step& step(int h) const { return steps_.at(static_cast<std::size_t>(h)); }
    bool has_data(int h) const { return step(h).observations > 0; }

    void ingest(int h, std::span<const FeatureObservation> batch) {
        Step& s = steps_.at(static_cast<std::size_t>(h));
        for (const auto& ob : batch) {
            if (ob.feature.size() != dim_) throw InvalidInput("UtilityEstimator::ingest: feature dimension");
            s.sigma.add(ob.feature);
            s.b_theta += ob.feature * ob.u;
            s.b_gamma += ob.feature * ob.v;
            ++s.observations;
        }
        s.theta_hat.noalias() = s.sigma.inverse() * s.b_theta;
        s.gamma_hat.noalias() = s.sigma.inverse() * s.b_gamma;
    }

    /// ||Phi||_{Sigma^{-1}}
    double width(int h, const Eigen::VectorXd& feature) const { return step(h).sigma.norm(feature); }

    /// Clipped optimistic utility; identically 1 before any data at step h.
    double ucb(int h, const Eigen::VectorXd& feature, Side side) const {
        if (feature.size() != dim_) throw InvalidInput("UtilityEstimator::ucb: feature dimension");
        if (!has_data(h)) return 1.0;
        const Step& s = step(h);
        const double mean = feature.dot(side == Side::Row ? s.theta_hat : s.gamma_hat);
        return std::clamp(mean + beta_ * width(h, feature), -1.0, 1.0);
    }

    /// Optimistic utilities on the roster of step h at (C, e).
    UtilityPair ucb_utilities(const MarketInstance& m, int h, int C, int e) const {
        const int nr = m.rows_at(h), nc = m.cols_at(h);
        UtilityPair out{UtilityMatrix(nr, nc), UtilityMatrix(nr, nc)};
        for (int i = 0; i < nr; ++i)
            for (int j = 0; j < nc; ++j) {
                const Eigen::VectorXd f = pair_feature(m, h, C, e, i, j);
                out.u(i, j) = ucb(h, f, Side::Row);
                out.v(i, j) = ucb(h, f, Side::Col);
            }
        return out;
    }

private:
    Eigen::Index dim_;
    double beta_;
    std::vector<Step> steps_;
};

/// Estimated pseudo-reward: the assignment LP value under estimated utilities.
inline double re_pseudo_reward(const UtilityMatrix& u_est, const UtilityMatrix& v_est) {
    if (u_est.rows() != v_est.rows() || u_est.cols() != v_est.cols())
        throw InvalidInput("re_pseudo_reward: utility matrices differ in shape");
    return max_weight_matching(u_est + v_est).value;
}

/// Optimistic Q-values of one step for the current episode.
struct QTable {
    Eigen::MatrixXd q; ///< num_contexts x num_actions
    Eigen::VectorXd v; ///< max over actions
    Eigen::VectorXd w_hat;
    double clip_hi = 0.0;

    /// Lowest-index maximiser.
    int greedy_action(int C) const {
        int best = 0;
        for (int e = 1; e < q.cols(); ++e)
            if (q(C, e) > q(C, best)) best = e;
        return best;
    }
};

/// LSVI-style regression of next-step values on psi(C, e), one per step.
/// Transitions are kept as counts over (C, e, C'), so refitting against new
/// targets each episode costs O(|C|^2 |actions|) rather than O(episodes).
class QEstimator {
public:
    QEstimator(std::vector<Eigen::VectorXd> psi, int num_contexts, int num_actions, int H, double lambda,
               double beta)
        : psi_(std::move(psi)), num_contexts_(num_contexts), num_actions_(num_actions), beta_(beta) {
        if (num_contexts < 1 || num_actions < 1 || H < 1) throw InvalidInput("QEstimator: empty grid");
        if (psi_.size() != static_cast<std::size_t>(num_contexts * num_actions))
            throw InvalidInput("QEstimator: psi table size");
        if (beta < 0.0) throw InvalidInput("QEstimator: negative beta");
        const int d = static_cast<int>(psi_.front().size());
        for (int h = 0; h < H; ++h) {
            grams_.emplace_back(d, lambda);
            counts_.emplace_back(static_cast<std::size_t>(num_contexts * num_actions * num_contexts), 0.0);
        }
    }

    double beta() const { return beta_; }
    const RidgeGram& gram(int h) const { return grams_.at(static_cast<std::size_t>(h)); }
    const Eigen::VectorXd& psi(int C, int e) const { return psi_.at(static_cast<std::size_t>(C * num_actions_ + e)); }

    /// Adds one visited (C, e) at step h; next_context < 0 at the last step.
    void record(int h, int C, int e, int next_context) {
        grams_.at(static_cast<std::size_t>(h)).add(psi(C, e));
        if (next_context >= 0) {
            if (next_context >= num_contexts_) throw InvalidInput("QEstimator::record: next context out of range");
            counts_[static_cast<std::size_t>(h)][static_cast<std::size_t>((C * num_actions_ + e) * num_contexts_ +
                                                                          next_context)] += 1.0;
        }
    }

    /// psi^T w + beta ||psi||_{Lambda^{-1}} added to the estimated reward, clipped to [0, clip_hi].
    QTable fit(int h, const Eigen::MatrixXd& r_bar, const Eigen::VectorXd& v_next, double clip_hi) const {
        if (r_bar.rows() != num_contexts_ || r_bar.cols() != num_actions_)
            throw InvalidInput("QEstimator::fit: reward table shape");
        if (v_next.size() != num_contexts_) throw InvalidInput("QEstimator::fit: next-value shape");
        const RidgeGram& g = gram(h);
        const auto& counts = counts_[static_cast<std::size_t>(h)];
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(g.dim());
        for (int C = 0; C < num_contexts_; ++C)
            for (int e = 0; e < num_actions_; ++e) {
                double target = 0.0;
                for (int c2 = 0; c2 < num_contexts_; ++c2)
                    target += counts[static_cast<std::size_t>((C * num_actions_ + e) * num_contexts_ + c2)] * v_next(c2);
                if (target != 0.0) rhs += psi(C, e) * target;
            }
        QTable t;
        t.clip_hi = clip_hi;
        t.w_hat = g.inverse() * rhs;
        t.q.resize(num_contexts_, num_actions_);
        t.v.resize(num_contexts_);
        for (int C = 0; C < num_contexts_; ++C) {
            for (int e = 0; e < num_actions_; ++e) {
                const Eigen::VectorXd& p = psi(C, e);
                t.q(C, e) = std::clamp(r_bar(C, e) + p.dot(t.w_hat) + beta_ * g.norm(p), 0.0, clip_hi);
            }
            t.v(C) = t.q.row(C).maxCoeff();
        }
        return t;
    }

private:
    std::vector<Eigen::VectorXd> psi_;
    int num_contexts_;
    int num_actions_;
    double beta_;
    std::vector<RidgeGram> grams_;
    std::vector<std::vector<double>> counts_;
};

} // namespace som

#endif // SOM_ESTIMATION_HPP
