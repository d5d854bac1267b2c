#ifndef SOM_TEST_SUPPORT_HPP
#define SOM_TEST_SUPPORT_HPP

#include <Eigen/Core>

#include <cstdio>
#include <string>
#include <vector>

#include "som/market.hpp"

namespace som::testing {

/// Small hand-built market: every step uses the full universe as its roster.
inline MarketInstance manual_market(int d, int H, int contexts, int actions, int rows, int cols) {
    MarketInstance m;
    m.d = d;
    m.H = H;
    m.num_contexts = contexts;
    m.num_actions = actions;
    m.universe_rows = rows;
    m.universe_cols = cols;
    m.noise_sigma = 0.0;
    std::vector<int> r(rows), c(cols);
    for (int i = 0; i < rows; ++i) r[i] = i;
    for (int j = 0; j < cols; ++j) c[j] = j;
    for (int h = 0; h < H; ++h) {
        m.rosters.push_back({r, c});
        m.theta.push_back(Eigen::VectorXd::Zero(d * d));
        m.gamma.push_back(Eigen::VectorXd::Zero(d * d));
        m.anchors.push_back(Eigen::MatrixXd::Constant(d, contexts, 1.0 / contexts));
    }
    for (int k = 0; k < contexts * actions; ++k) m.psi.push_back(Eigen::VectorXd::Constant(d, 1.0 / d));
    for (int k = 0; k < rows * cols; ++k) m.phi.push_back(Eigen::VectorXd::Zero(d));
    return m;
}

/// Bit-exact text rendering of every field, for determinism checks.
inline std::string fingerprint(const MarketInstance& m) {
    std::string s;
    char buf[64];
    auto put = [&](double x) {
        std::snprintf(buf, sizeof buf, "%a,", x);
        s += buf;
    };
    auto put_vec = [&](const Eigen::MatrixXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) put(v.data()[i]);
        s += "|";
    };
    s += std::to_string(m.d) + "," + std::to_string(m.H) + "," + std::to_string(m.num_contexts) + "," +
         std::to_string(m.num_actions) + "," + std::to_string(m.universe_rows) + "," +
         std::to_string(m.universe_cols) + ";";
    for (const auto& r : m.rosters) {
        for (int i : r.rows) s += std::to_string(i) + ",";
        s += "/";
        for (int j : r.cols) s += std::to_string(j) + ",";
        s += ";";
    }
    for (const auto& v : m.psi) put_vec(v);
    for (const auto& v : m.phi) put_vec(v);
    for (const auto& v : m.theta) put_vec(v);
    for (const auto& v : m.gamma) put_vec(v);
    for (const auto& v : m.anchors) put_vec(v);
    for (const auto& v : m.kernel) put_vec(v);
    for (double w : m.W) put(w);
    put(m.noise_sigma);
    return s;
}

} // namespace som::testing

#endif // SOM_TEST_SUPPORT_HPP
