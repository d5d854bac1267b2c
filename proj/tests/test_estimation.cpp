#include <gtest/gtest.h>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <random>
#include <vector>

#include "som/estimation.hpp"
#include "som/evaluation.hpp"
#include "som/market.hpp"

using namespace som;

namespace {

std::vector<FeatureObservation> random_stream(int dim, int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<FeatureObservation> out;
    for (int t = 0; t < n; ++t) {
        FeatureObservation ob{Eigen::VectorXd(dim), g(rng), g(rng)};
        for (int k = 0; k < dim; ++k) ob.feature(k) = g(rng) * 0.5;
        out.push_back(std::move(ob));
    }
    return out;
}

// Ridge solution from scratch: (lambda I + X^T X)^{-1} X^T y.
Eigen::VectorXd batch_ridge(const std::vector<FeatureObservation>& obs, int dim, double lambda, bool row_side) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(dim, dim) * lambda;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    for (const auto& ob : obs) {
        a += ob.feature * ob.feature.transpose();
        b += ob.feature * (row_side ? ob.u : ob.v);
    }
    return a.ldlt().solve(b);
}

} // namespace

TEST(BetaU, ClosedFormExample) {
    EXPECT_NEAR(beta_u(0.1, 2, 100, 1.0, 4), 8.44, 0.01);
    const double expected = std::sqrt(4.0 * std::log(2.0 * (1.0 + 4.0 * 100 * 4) / 0.1)) + 2.0;
    EXPECT_NEAR(beta_u(0.1, 2, 100, 1.0, 4), expected, 1e-12);
}

TEST(BetaU, IncreasesWithData) {
    double prev = 0.0;
    for (int K = 1; K <= 1 << 20; K *= 4) {
        const double b = beta_u(0.1, 2, K, 1.0, 4);
        EXPECT_GT(b, prev);
        prev = b;
    }
}

TEST(BetaU, RejectsBadArguments) {
    EXPECT_THROW(beta_u(0.0, 2, 10, 1.0, 2), InvalidInput);
    EXPECT_THROW(beta_u(1.0, 2, 10, 1.0, 2), InvalidInput);
    EXPECT_THROW(beta_u(0.1, 2, 0, 1.0, 2), InvalidInput);
    EXPECT_THROW(beta_u(0.1, 2, 10, -1.0, 2), InvalidInput);
}

TEST(BetaV, ClosedForm) {
    // eta d^2 sum_W sqrt(log(d K H m / delta)) with the log argument equal to e.
    EXPECT_NEAR(beta_V(1.0, 1, 1, 1, 1, std::exp(-1.0), 1.0), 1.0, 1e-12);
    EXPECT_NEAR(beta_V(0.1, 3, 2000, 3, 4, 0.1, 12.0), 10.8 * std::sqrt(std::log(3.0 * 2000 * 3 * 4 / 0.1)), 1e-9);
}

TEST(BetaV, LinearInEta) {
    const double a = beta_V(0.1, 2, 300, 2, 3, 0.1, 4.0);
    EXPECT_NEAR(beta_V(0.2, 2, 300, 2, 3, 0.1, 4.0), 2.0 * a, 1e-12);
    EXPECT_NEAR(beta_V(0.1, 2, 300, 2, 3, 0.1, 8.0), 2.0 * a, 1e-12);
}

TEST(BetaV, RejectsBadArguments) {
    EXPECT_THROW(beta_V(0.0, 2, 10, 2, 2, 0.1, 1.0), InvalidInput);
    EXPECT_THROW(beta_V(0.1, 2, 10, 2, 2, 0.1, 0.0), InvalidInput);
    EXPECT_THROW(beta_V(0.1, 1, 1, 1, 1, 1.0, 1.0), InvalidInput);
}

TEST(RidgeGram, IncrementalInverseMatchesBatch) {
    std::mt19937_64 rng(21);
    for (int s = 0; s < 50; ++s) {
        RidgeGram g(4, 1.0, 7);
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(4, 4);
        for (const auto& ob : random_stream(4, 60, rng)) {
            g.add(ob.feature);
            a += ob.feature * ob.feature.transpose();
            ASSERT_LE((g.inverse() - a.inverse()).cwiseAbs().maxCoeff(), 1e-8);
        }
        EXPECT_LE(g.inverse_residual(), 1e-8);
    }
}

TEST(RidgeGram, NormOfFreshGram) {
    RidgeGram g(3, 4.0);
    Eigen::VectorXd x(3);
    x << 1.0, 2.0, 2.0;
    EXPECT_NEAR(g.norm(x), 3.0 / 2.0, 1e-15);
    EXPECT_THROW(RidgeGram(3, 0.0), InvalidInput);
    EXPECT_THROW(g.add(Eigen::VectorXd::Zero(2)), InvalidInput);
}

TEST(UtilityEstimator, IncrementalMatchesBatchRidge) {
    std::mt19937_64 rng(22);
    std::uniform_int_distribution<int> chunk(0, 6);
    for (int s = 0; s < 50; ++s) {
        UtilityEstimator ue(2, 1, 1.0, 1.0);
        const auto stream = random_stream(4, 40, rng);
        std::size_t pos = 0;
        while (pos < stream.size()) {
            const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(chunk(rng)), stream.size() - pos);
            ue.ingest(0, std::span<const FeatureObservation>(stream.data() + pos, n));
            pos += n;
            const std::vector<FeatureObservation> seen(stream.begin(), stream.begin() + static_cast<long>(pos));
            ASSERT_LE((ue.step(0).theta_hat - batch_ridge(seen, 4, 1.0, true)).cwiseAbs().maxCoeff(), 1e-8);
            ASSERT_LE((ue.step(0).gamma_hat - batch_ridge(seen, 4, 1.0, false)).cwiseAbs().maxCoeff(), 1e-8);
        }
    }
}

TEST(UtilityEstimator, RidgeIdentityAfterEveryUpdate) {
    std::mt19937_64 rng(23);
    UtilityEstimator ue(2, 2, 0.5, 1.0);
    for (const auto& ob : random_stream(4, 200, rng)) {
        ue.ingest(1, std::span<const FeatureObservation>(&ob, 1));
        const auto& s = ue.step(1);
        ASSERT_LE((s.sigma.matrix() * s.theta_hat - s.b_theta).cwiseAbs().maxCoeff(), 1e-8);
        ASSERT_LE((s.sigma.matrix() * s.gamma_hat - s.b_gamma).cwiseAbs().maxCoeff(), 1e-8);
    }
    EXPECT_FALSE(ue.has_data(0));
}

TEST(UtilityEstimator, NoiselessResidualIdentity) {
    std::mt19937_64 rng(24);
    std::normal_distribution<double> g(0.0, 1.0);
    for (double lambda : {0.1, 1.0, 5.0}) {
        Eigen::VectorXd theta(4);
        for (int k = 0; k < 4; ++k) theta(k) = g(rng);
        UtilityEstimator ue(2, 1, lambda, 1.0);
        auto stream = random_stream(4, 300, rng);
        for (auto& ob : stream) ob.u = ob.feature.dot(theta);
        ue.ingest(0, stream);
        const auto& s = ue.step(0);
        EXPECT_LE((s.sigma.matrix() * (s.theta_hat - theta)).norm(), lambda * theta.norm() + 1e-8);
    }
}

TEST(UtilityEstimator, IdenticallyOneBeforeData) {
    UtilityEstimator ue(2, 2, 1.0, 3.0);
    const MarketInstance m = generate_market(MarketConfig{}, 1);
    const UtilityPair est = ue.ucb_utilities(m, 1, 2, 1);
    EXPECT_TRUE((est.u.array() == 1.0).all());
    EXPECT_TRUE((est.v.array() == 1.0).all());
}

TEST(UtilityEstimator, BonusDecaysMonotonically) {
    std::mt19937_64 rng(25);
    UtilityEstimator ue(2, 1, 1.0, 1.0);
    const auto probes = random_stream(4, 10, rng);
    std::vector<double> last(probes.size(), std::numeric_limits<double>::infinity());
    for (const auto& ob : random_stream(4, 300, rng)) {
        ue.ingest(0, std::span<const FeatureObservation>(&ob, 1));
        for (std::size_t p = 0; p < probes.size(); ++p) {
            const double w = ue.width(0, probes[p].feature);
            ASSERT_LE(w, last[p] + 1e-12);
            last[p] = w;
        }
    }
}

TEST(UtilityEstimator, OptimisticAndWidthBoundedWhenNoiseless) {
    MarketConfig cfg;
    cfg.noise_sigma = 0.0;
    cfg.num_contexts = 3;
    cfg.num_actions = 2;
    const MarketInstance m = generate_market(cfg, 31);
    const double beta = beta_u(0.1, m.d, 50, 1.0, m.max_min_roster());
    UtilityEstimator ue(m.d, m.H, 1.0, beta);
    Rng rng(1);
    for (int round = 0; round < 5; ++round)
        for (int h = 0; h < m.H; ++h)
            for (int C = 0; C < m.num_contexts; ++C)
                for (int e = 0; e < m.num_actions; ++e) {
                    Matching x(m.rows_at(h), m.cols_at(h));
                    const int shift = (round + C + e) % m.cols_at(h);
                    for (int i = 0; i < std::min(m.rows_at(h), m.cols_at(h)); ++i) x.add(i, (i + shift) % m.cols_at(h));
                    std::vector<FeatureObservation> batch;
                    for (const auto& ob : observe_utilities(m, h, C, e, x, rng))
                        batch.push_back({pair_feature(m, h, C, e, ob.pair.row, ob.pair.col), ob.u, ob.v});
                    ue.ingest(h, batch);
                }
    for (int h = 0; h < m.H; ++h)
        for (int C = 0; C < m.num_contexts; ++C)
            for (int e = 0; e < m.num_actions; ++e) {
                const UtilityPair est = ue.ucb_utilities(m, h, C, e);
                const UtilityPair truth = true_utilities(m, h, C, e);
                for (int i = 0; i < m.rows_at(h); ++i)
                    for (int j = 0; j < m.cols_at(h); ++j) {
                        const double width = 2.0 * beta * ue.width(h, pair_feature(m, h, C, e, i, j));
                        EXPECT_GE(est.u(i, j), truth.u(i, j) - 1e-9);
                        EXPECT_GE(est.v(i, j), truth.v(i, j) - 1e-9);
                        EXPECT_LE(est.u(i, j) - truth.u(i, j), width + 1e-9);
                        EXPECT_LE(est.v(i, j) - truth.v(i, j), width + 1e-9);
                    }
            }
}

TEST(RePseudoReward, EdgeCases) {
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(3, 2);
    EXPECT_NEAR(re_pseudo_reward(ones, ones), 4.0, 1e-12);
    EXPECT_THROW(re_pseudo_reward(ones, Eigen::MatrixXd::Ones(2, 3)), InvalidInput);
}

TEST(RePseudoReward, TruthGivesExactPseudoReward) {
    const MarketInstance m = generate_market(MarketConfig{}, 4);
    const auto exact = exact_pseudo_rewards(m);
    for (int h = 0; h < m.H; ++h)
        for (int C = 0; C < m.num_contexts; ++C)
            for (int e = 0; e < m.num_actions; ++e) {
                const UtilityPair t = true_utilities(m, h, C, e);
                EXPECT_EQ(re_pseudo_reward(t.u, t.v), exact[h](C, e));
            }
}

TEST(RePseudoReward, DominatingEstimatesAreOptimisticAndBounded) {
    std::mt19937_64 rng(26);
    std::uniform_real_distribution<double> d(-1.0, 1.0), b(0.0, 0.3);
    for (int t = 0; t < 200; ++t) {
        Eigen::MatrixXd u(3, 3), v(3, 3), bu(3, 3), bv(3, 3);
        for (int k = 0; k < 9; ++k) {
            u.data()[k] = d(rng);
            v.data()[k] = d(rng);
            bu.data()[k] = b(rng);
            bv.data()[k] = b(rng);
        }
        const double truth = re_pseudo_reward(u, v);
        const double est = re_pseudo_reward(u + bu, v + bv);
        const Matching x = max_weight_matching(u + bu + v + bv).matching;
        EXPECT_GE(est, truth - 1e-12);
        EXPECT_LE(est - truth, si_bonus_bound(x, bu, bv) + 1e-12);
    }
}

namespace {

QEstimator simplex_qe(int contexts, int actions, int H, double lambda, double beta, std::mt19937_64& rng) {
    std::gamma_distribution<double> g(1.0, 1.0);
    std::vector<Eigen::VectorXd> psi;
    for (int k = 0; k < contexts * actions; ++k) {
        Eigen::VectorXd p(3);
        for (int a = 0; a < 3; ++a) p(a) = g(rng);
        psi.push_back(p / p.sum());
    }
    return QEstimator(psi, contexts, actions, H, lambda, beta);
}

} // namespace

TEST(QEstimator, EpisodeOneIsBonusOnly) {
    std::mt19937_64 rng(27);
    const QEstimator qe = simplex_qe(3, 2, 2, 1.0, 0.7, rng);
    Eigen::MatrixXd r(3, 2);
    r << 0.1, 0.5, 1.9, 0.0, 0.3, 0.8;
    const QTable t = qe.fit(0, r, Eigen::VectorXd::Constant(3, 5.0), 2.0);
    EXPECT_TRUE(t.w_hat.isZero(0.0));
    for (int C = 0; C < 3; ++C) {
        for (int e = 0; e < 2; ++e)
            EXPECT_NEAR(t.q(C, e), std::clamp(r(C, e) + 0.7 * qe.psi(C, e).norm(), 0.0, 2.0), 1e-15);
        EXPECT_EQ(t.v(C), t.q.row(C).maxCoeff());
    }
}

TEST(QEstimator, MatchesBatchRegressionOnRandomHistories) {
    std::mt19937_64 rng(28);
    std::uniform_int_distribution<int> ctx(0, 3), act(0, 1);
    std::uniform_real_distribution<double> val(0.0, 3.0), rew(0.0, 2.0);
    for (int s = 0; s < 50; ++s) {
        QEstimator qe = simplex_qe(4, 2, 1, 1.0, 0.3, rng);
        struct Visit {
            int C, e, next;
        };
        std::vector<Visit> history;
        for (int t = 0; t < 80; ++t) {
            const Visit v{ctx(rng), act(rng), ctx(rng)};
            qe.record(0, v.C, v.e, v.next);
            history.push_back(v);
        }
        Eigen::VectorXd v_next(4);
        for (int c = 0; c < 4; ++c) v_next(c) = val(rng);
        Eigen::MatrixXd r(4, 2);
        for (int k = 0; k < 8; ++k) r.data()[k] = rew(rng);

        Eigen::MatrixXd lam = Eigen::MatrixXd::Identity(3, 3);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(3);
        for (const Visit& v : history) {
            lam += qe.psi(v.C, v.e) * qe.psi(v.C, v.e).transpose();
            rhs += qe.psi(v.C, v.e) * v_next(v.next);
        }
        const Eigen::MatrixXd lam_inv = lam.inverse();
        ASSERT_LE((qe.gram(0).inverse() - lam_inv).cwiseAbs().maxCoeff(), 1e-8);
        const Eigen::VectorXd w = lam_inv * rhs;
        const QTable t = qe.fit(0, r, v_next, 3.5);
        ASSERT_LE((t.w_hat - w).cwiseAbs().maxCoeff(), 1e-8);
        for (int C = 0; C < 4; ++C)
            for (int e = 0; e < 2; ++e) {
                const Eigen::VectorXd& p = qe.psi(C, e);
                const double q = std::clamp(r(C, e) + p.dot(w) + 0.3 * std::sqrt(p.dot(lam_inv * p)), 0.0, 3.5);
                ASSERT_NEAR(t.q(C, e), q, 1e-8);
                ASSERT_GE(t.q(C, e), 0.0);
                ASSERT_LE(t.q(C, e), 3.5);
            }
    }
}

TEST(QTable, GreedyPrefersLowestIndexOnTies) {
    QTable t;
    t.q.resize(2, 3);
    t.q << 0.5, 0.5, 0.1, 0.2, 0.9, 0.9;
    EXPECT_EQ(t.greedy_action(0), 0);
    EXPECT_EQ(t.greedy_action(1), 1);
}
