#ifndef SOM_MATCHING_HPP
#define SOM_MATCHING_HPP

// Static two-sided matching with transferable utilities: max-weight
// matching with its dual prices, the induced transfers, stability checks
// and Subset Instability.

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "som/errors.hpp"

namespace som {

/// w(i, j) = u(i, j) + v(i, j); rows are side-1 agents, columns side-2 agents.
using WeightMatrix = Eigen::MatrixXd;
using UtilityMatrix = Eigen::MatrixXd;

inline constexpr double kExactTol = 1e-9;
inline constexpr int kDefaultSubsetCap = 8;

struct Pair {
    int row = 0;
    int col = 0;
    friend bool operator==(const Pair&, const Pair&) = default;
};

/// A set of disjoint (row, col) pairs over a fixed |I| x |J| market.
class Matching {
public:
    Matching() = default;
    Matching(int rows, int cols)
        : row_partner_(static_cast<std::size_t>(rows), -1),
          col_partner_(static_cast<std::size_t>(cols), -1) {
        if (rows < 0 || cols < 0) throw InvalidInput("Matching: negative market size");
    }

    int rows() const { return static_cast<int>(row_partner_.size()); }
    int cols() const { return static_cast<int>(col_partner_.size()); }

    void add(int i, int j) {
        if (i < 0 || i >= rows() || j < 0 || j >= cols())
            throw InvalidInput("Matching::add: pair (" + std::to_string(i) + "," +
                               std::to_string(j) + ") outside the market");
        if (row_partner_[i] != -1 || col_partner_[j] != -1)
            throw InvalidInput("Matching::add: agent already matched");
        row_partner_[i] = j;
        col_partner_[j] = i;
    }

    /// Partner column of row i, or -1.
    int partner_of_row(int i) const { return row_partner_.at(static_cast<std::size_t>(i)); }
    /// Partner row of column j, or -1.
    int partner_of_col(int j) const { return col_partner_.at(static_cast<std::size_t>(j)); }

    /// Pairs in increasing row order.
    std::vector<Pair> pairs() const {
        std::vector<Pair> out;
        for (int i = 0; i < rows(); ++i)
            if (row_partner_[i] >= 0) out.push_back({i, row_partner_[i]});
        return out;
    }

    std::size_t size() const {
        return static_cast<std::size_t>(
            std::count_if(row_partner_.begin(), row_partner_.end(), [](int j) { return j >= 0; }));
    }
    bool empty() const { return size() == 0; }

    double value(const WeightMatrix& w) const {
        double total = 0.0;
        for (int i = 0; i < rows(); ++i)
            if (row_partner_[i] >= 0) total += w(i, row_partner_[i]);
        return total;
    }

    friend bool operator==(const Matching&, const Matching&) = default;

private:
    std::vector<int> row_partner_;
    std::vector<int> col_partner_;
};

/// One real per agent, split by side. Used for prices and transfers.
struct AgentValues {
    std::vector<double> rows;
    std::vector<double> cols;

    AgentValues() = default;
    AgentValues(int n_rows, int n_cols)
        : rows(static_cast<std::size_t>(n_rows), 0.0), cols(static_cast<std::size_t>(n_cols), 0.0) {}

    double total() const {
        double s = 0.0;
        for (double x : rows) s += x;
        for (double x : cols) s += x;
        return s;
    }
    friend bool operator==(const AgentValues&, const AgentValues&) = default;
};

using DualPrices = AgentValues;
using Transfers = AgentValues;

struct MarketOutcome {
    Matching matching;
    Transfers transfers;
};

struct MatchingResult {
    Matching matching;
    double value = 0.0;
};

namespace detail {

inline void check_finite(const WeightMatrix& w, const char* who) {
    if (!w.allFinite()) throw InvalidInput(std::string(who) + ": non-finite weight");
}

struct AssignmentSolution {
    Matching matching;
    double value = 0.0;
    DualPrices prices;
};

// Shortest augmenting path (Hungarian) on the square (|I|+|J|) problem where
// every real agent may also take a zero-value dummy partner. Returns the
// matching restricted to positive-weight real pairs together with
// nonnegative prices recovered from the potentials.
inline AssignmentSolution solve_assignment(const WeightMatrix& w) {
    const int n_rows = static_cast<int>(w.rows());
    const int n_cols = static_cast<int>(w.cols());
    AssignmentSolution out{Matching(n_rows, n_cols), 0.0, DualPrices(n_rows, n_cols)};
    const int n = n_rows + n_cols;
    if (n_rows == 0 || n_cols == 0) return out;

    auto cost = [&](int r, int c) -> double {
        if (r < n_rows && c < n_cols) return -w(r, c);
        return 0.0;
    };

    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; index 0 is the virtual root column.
    std::vector<double> pot_row(n + 1, 0.0), pot_col(n + 1, 0.0);
    std::vector<int> col_owner(n + 1, 0), way(n + 1, 0);
    for (int r = 1; r <= n; ++r) {
        col_owner[0] = r;
        int c0 = 0;
        std::vector<double> min_slack(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[c0] = 1;
            const int r0 = col_owner[c0];
            double delta = inf;
            int c1 = 0;
            for (int c = 1; c <= n; ++c) {
                if (used[c]) continue;
                const double cur = cost(r0 - 1, c - 1) - pot_row[r0] - pot_col[c];
                if (cur < min_slack[c]) {
                    min_slack[c] = cur;
                    way[c] = c0;
                }
                if (min_slack[c] < delta) {
                    delta = min_slack[c];
                    c1 = c;
                }
            }
            for (int c = 0; c <= n; ++c) {
                if (used[c]) {
                    pot_row[col_owner[c]] += delta;
                    pot_col[c] -= delta;
                } else {
                    min_slack[c] -= delta;
                }
            }
            c0 = c1;
        } while (col_owner[c0] != 0);
        do {
            const int c1 = way[c0];
            col_owner[c0] = col_owner[c1];
            c0 = c1;
        } while (c0 != 0);
    }

    for (int c = 1; c <= n_cols; ++c) {
        const int r = col_owner[c] - 1;
        if (r < n_rows && w(r, c - 1) > 0.0) {
            out.matching.add(r, c - 1);
            out.value += w(r, c - 1);
        }
    }

    // Potentials satisfy pot_row + pot_col <= cost, so alpha = -pot_row and
    // beta = -pot_col cover the weights. Shifting real rows by the smallest
    // dummy-column beta (and columns by the smallest dummy-row alpha) gives
    // a nonnegative feasible price vector whose total equals the optimum.
    double min_dummy_col = inf;
    for (int c = n_cols + 1; c <= n; ++c) min_dummy_col = std::min(min_dummy_col, -pot_col[c]);
    double min_dummy_row = inf;
    for (int r = n_rows + 1; r <= n; ++r) min_dummy_row = std::min(min_dummy_row, -pot_row[r]);
    for (int i = 0; i < n_rows; ++i)
        out.prices.rows[i] = std::max(0.0, -pot_row[i + 1] + min_dummy_col);
    for (int j = 0; j < n_cols; ++j)
        out.prices.cols[j] = std::max(0.0, -pot_col[j + 1] + min_dummy_row);
    return out;
}

} // namespace detail

/// Optimal integral solution of the assignment LP. Pairs with nonpositive
/// weight are never matched, so the value is always >= 0.
inline MatchingResult max_weight_matching(const WeightMatrix& w) {
    detail::check_finite(w, "max_weight_matching");
    auto sol = detail::solve_assignment(w);
    return {std::move(sol.matching), sol.value};
}

/// Exhaustive enumeration of every partial matching. Verification oracle.
inline MatchingResult brute_force_matching(const WeightMatrix& w, int cap = kDefaultSubsetCap) {
    detail::check_finite(w, "brute_force_matching");
    const int n_rows = static_cast<int>(w.rows());
    const int n_cols = static_cast<int>(w.cols());
    if (n_rows > cap || n_cols > cap)
        throw SizeError("brute_force_matching: market " + std::to_string(n_rows) + "x" +
                        std::to_string(n_cols) + " exceeds cap " + std::to_string(cap));

    std::vector<int> current(static_cast<std::size_t>(n_rows), -1), best = current;
    std::vector<char> col_used(static_cast<std::size_t>(n_cols), 0);
    double best_value = 0.0;

    auto recurse = [&](auto&& self, int i, double acc) -> void {
        if (i == n_rows) {
            if (acc > best_value) {
                best_value = acc;
                best = current;
            }
            return;
        }
        self(self, i + 1, acc);
        for (int j = 0; j < n_cols; ++j) {
            if (col_used[j]) continue;
            col_used[j] = 1;
            current[i] = j;
            self(self, i + 1, acc + w(i, j));
            current[i] = -1;
            col_used[j] = 0;
        }
    };
    recurse(recurse, 0, 0.0);

    MatchingResult out{Matching(n_rows, n_cols), 0.0};
    for (int i = 0; i < n_rows; ++i)
        if (best[i] >= 0 && w(i, best[i]) > 0.0) out.matching.add(i, best[i]);
    out.value = out.matching.value(w);
    return out;
}

/// One optimal dual for the assignment LP, checked against `matching` by
/// complementary slackness. Throws InconsistencyError if `matching` is not
/// optimal for `w`.
inline DualPrices dual_prices(const WeightMatrix& w, const Matching& matching,
                              double tol = kExactTol) {
    detail::check_finite(w, "dual_prices");
    if (matching.rows() != w.rows() || matching.cols() != w.cols())
        throw InvalidInput("dual_prices: matching does not fit the weight matrix");
    auto sol = detail::solve_assignment(w);
    DualPrices& p = sol.prices;

    if (std::abs(p.total() - matching.value(w)) > tol * std::max(1.0, std::abs(p.total())))
        throw InconsistencyError("dual_prices: matching value differs from the LP optimum");
    for (int i = 0; i < matching.rows(); ++i) {
        const int j = matching.partner_of_row(i);
        if (j < 0) {
            if (p.rows[i] > tol) throw InconsistencyError("dual_prices: unmatched row with positive price");
            p.rows[i] = 0.0;
        } else if (std::abs(p.rows[i] + p.cols[j] - w(i, j)) > tol) {
            throw InconsistencyError("dual_prices: matched pair is not tight");
        }
    }
    for (int j = 0; j < matching.cols(); ++j) {
        if (matching.partner_of_col(j) < 0) {
            if (p.cols[j] > tol) throw InconsistencyError("dual_prices: unmatched column with positive price");
            p.cols[j] = 0.0;
        }
    }
    return p;
}

/// tau(i) = p(i) - u(i, X(i)), tau(j) = p(j) - v(X(j), j); zero when unmatched.
inline Transfers transfers_from_prices(const DualPrices& prices, const UtilityMatrix& u,
                                       const UtilityMatrix& v, const Matching& matching) {
    Transfers tau(matching.rows(), matching.cols());
    for (const Pair& pr : matching.pairs()) {
        tau.rows[pr.row] = prices.rows[pr.row] - u(pr.row, pr.col);
        tau.cols[pr.col] = prices.cols[pr.col] - v(pr.row, pr.col);
    }
    return tau;
}

/// Max-weight matching plus the transfers from its dual (the OM oracle).
inline MarketOutcome optimal_outcome(const UtilityMatrix& u, const UtilityMatrix& v) {
    if (u.rows() != v.rows() || u.cols() != v.cols())
        throw InvalidInput("optimal_outcome: utility matrices differ in shape");
    const WeightMatrix w = u + v;
    detail::check_finite(w, "optimal_outcome");
    auto sol = detail::solve_assignment(w);
    for (int i = 0; i < sol.matching.rows(); ++i)
        if (sol.matching.partner_of_row(i) < 0) sol.prices.rows[i] = 0.0;
    for (int j = 0; j < sol.matching.cols(); ++j)
        if (sol.matching.partner_of_col(j) < 0) sol.prices.cols[j] = 0.0;
    Transfers tau = transfers_from_prices(sol.prices, u, v, sol.matching);
    return {std::move(sol.matching), std::move(tau)};
}

/// Net utility of every agent under (X, tau): match utility plus transfer.
inline AgentValues net_utilities(const MarketOutcome& outcome, const UtilityMatrix& u,
                                 const UtilityMatrix& v) {
    const Matching& x = outcome.matching;
    if (x.rows() != u.rows() || x.cols() != u.cols() || u.rows() != v.rows() || u.cols() != v.cols() ||
        static_cast<int>(outcome.transfers.rows.size()) != x.rows() ||
        static_cast<int>(outcome.transfers.cols.size()) != x.cols())
        throw InvalidInput("net_utilities: inconsistent agent sets");
    AgentValues net = outcome.transfers;
    for (const Pair& pr : x.pairs()) {
        net.rows[pr.row] += u(pr.row, pr.col);
        net.cols[pr.col] += v(pr.row, pr.col);
    }
    return net;
}

/// Individual rationality plus no blocking pair, both up to eps.
inline bool is_stable(const MarketOutcome& outcome, const UtilityMatrix& u, const UtilityMatrix& v,
                      double eps = kExactTol) {
    const AgentValues net = net_utilities(outcome, u, v);
    for (double x : net.rows)
        if (x < -eps) return false;
    for (double x : net.cols)
        if (x < -eps) return false;
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (Eigen::Index j = 0; j < u.cols(); ++j)
            if (net.rows[i] + net.cols[j] < u(i, j) + v(i, j) - eps) return false;
    return true;
}

/// Max-weight matching value of every sub-market I' x J', indexed by bitmasks.
class SubsetValueTable {
public:
    explicit SubsetValueTable(const WeightMatrix& w, int cap = kDefaultSubsetCap)
        : rows_(static_cast<int>(w.rows())), cols_(static_cast<int>(w.cols())) {
        detail::check_finite(w, "SubsetValueTable");
        if (rows_ > cap || cols_ > cap)
            throw SizeError("subset instability: market " + std::to_string(rows_) + "x" +
                            std::to_string(cols_) + " exceeds cap " + std::to_string(cap));
        const std::size_t n_col_masks = std::size_t{1} << cols_;
        values_.assign((std::size_t{1} << rows_) * n_col_masks, 0.0);
        for (std::uint32_t rm = 1; rm < (1u << rows_); ++rm) {
            const int i = std::countr_zero(rm);
            const std::uint32_t rest = rm & (rm - 1);
            for (std::uint32_t cm = 0; cm < n_col_masks; ++cm) {
                double best = at(rest, cm);
                for (std::uint32_t left = cm; left != 0; left &= left - 1) {
                    const int j = std::countr_zero(left);
                    best = std::max(best, w(i, j) + at(rest, cm & ~(1u << j)));
                }
                values_[index(rm, cm)] = best;
            }
        }
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double at(std::uint32_t row_mask, std::uint32_t col_mask) const {
        return values_[index(row_mask, col_mask)];
    }

private:
    std::size_t index(std::uint32_t rm, std::uint32_t cm) const {
        return (static_cast<std::size_t>(rm) << cols_) | cm;
    }

    int rows_;
    int cols_;
    std::vector<double> values_;
};

namespace detail {

inline std::vector<double> subset_sums(const std::vector<double>& x) {
    std::vector<double> sums(std::size_t{1} << x.size(), 0.0);
    for (std::size_t m = 1; m < sums.size(); ++m) {
        const int k = std::countr_zero(static_cast<std::uint32_t>(m));
        sums[m] = sums[m & (m - 1)] + x[static_cast<std::size_t>(k)];
    }
    return sums;
}

} // namespace detail

/// Subset Instability against a precomputed sub-market value table built
/// from the same u + v.
inline double subset_instability(const MarketOutcome& outcome, const UtilityMatrix& u,
                                 const UtilityMatrix& v, const SubsetValueTable& table) {
    if (table.rows() != u.rows() || table.cols() != u.cols())
        throw InvalidInput("subset_instability: table does not fit the market");
    const AgentValues net = net_utilities(outcome, u, v);
    const auto row_sums = detail::subset_sums(net.rows);
    const auto col_sums = detail::subset_sums(net.cols);
    double worst = 0.0; // the empty coalition
    for (std::uint32_t rm = 0; rm < row_sums.size(); ++rm)
        for (std::uint32_t cm = 0; cm < col_sums.size(); ++cm)
            worst = std::max(worst, table.at(rm, cm) - row_sums[rm] - col_sums[cm]);
    return worst;
}

/// Largest gain any coalition I' x J' could obtain by rematching among
/// itself relative to what (X, tau) gives it. Exponential in |I| + |J|.
inline double subset_instability(const MarketOutcome& outcome, const UtilityMatrix& u,
                                 const UtilityMatrix& v, int cap = kDefaultSubsetCap) {
    if (u.rows() != v.rows() || u.cols() != v.cols())
        throw InvalidInput("subset_instability: utility matrices differ in shape");
    const SubsetValueTable table(u + v, cap);
    return subset_instability(outcome, u, v, table);
}

/// Sum over matched pairs of (bonus_u + bonus_v).
inline double si_bonus_bound(const Matching& matching, const Eigen::MatrixXd& bonus_u,
                             const Eigen::MatrixXd& bonus_v) {
    if (bonus_u.rows() != matching.rows() || bonus_u.cols() != matching.cols() ||
        bonus_v.rows() != matching.rows() || bonus_v.cols() != matching.cols())
        throw InvalidInput("si_bonus_bound: bonus matrices do not fit the matching");
    if ((bonus_u.array() < 0.0).any() || (bonus_v.array() < 0.0).any())
        throw InvalidInput("si_bonus_bound: negative bonus");
    double total = 0.0;
    for (const Pair& pr : matching.pairs()) total += bonus_u(pr.row, pr.col) + bonus_v(pr.row, pr.col);
    return total;
}

} // namespace som

#endif // SOM_MATCHING_HPP
