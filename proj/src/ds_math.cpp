#include "cdsrank/ds_math.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace cdsrank::ds {

namespace {

constexpr int kMaxRecursionNodes = 20;  // single-weight recursion guard
constexpr int kMaxEnumerationNodes = 12;
constexpr int kMaxQpNodes = 10;
constexpr double kPositiveTol = 1e-10;  // interior test for oracle solutions
constexpr double kKktTol = 1e-8;        // slack on the external payoff bound
constexpr double kCurvatureTol = 1e-8;  // max tangent-space eigenvalue allowed

void check_subset(const AffinityMatrix& a, const std::vector<int>& s) {
    if (s.empty()) throw std::invalid_argument("subset must be nonempty");
    std::vector<char> seen(a.size(), 0);
    for (int v : s) {
        if (v < 0 || v >= a.size())
            throw std::invalid_argument("subset index " + std::to_string(v) + " out of range");
        if (seen[v]) throw std::invalid_argument("subset has duplicate index " + std::to_string(v));
        seen[v] = 1;
    }
}

bool contains(const std::vector<int>& s, int v) {
    return std::find(s.begin(), s.end(), v) != s.end();
}

// Memoized w over the subsets of one (small) weight matrix, indexed by
// bitmask. All recursion stays inside the node set the table was built for.
class WeightTable {
public:
    explicit WeightTable(Eigen::MatrixXd w) : a_(std::move(w)) {}

    double weight(std::uint32_t mask, int i) {
        const int size = std::popcount(mask);
        if (size == 1) return 1.0;
        const std::uint32_t rest = mask & ~(std::uint32_t{1} << i);
        if (size == 2) return a_(i, std::countr_zero(rest));

        const std::uint64_t key = (std::uint64_t{mask} << 5) | static_cast<std::uint32_t>(i);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;

        double total = 0.0;
        for (std::uint32_t t = rest; t != 0; t &= t - 1) {
            const int j = std::countr_zero(t);
            total += phi(rest, j, i) * weight(rest, j);
        }
        memo_.emplace(key, total);
        return total;
    }

    // phi over the table's local indices: j inside mask, i outside.
    double phi(std::uint32_t mask, int j, int i) const {
        double avg = 0.0;
        for (std::uint32_t t = mask; t != 0; t &= t - 1) avg += a_(j, std::countr_zero(t));
        avg /= std::popcount(mask);
        return a_(j, i) - avg;
    }

private:
    Eigen::MatrixXd a_;
    std::unordered_map<std::uint64_t, double> memo_;
};

// Submatrix of the graph restricted to `nodes` (given order kept).
Eigen::MatrixXd local_matrix(const AffinityMatrix& a, const std::vector<int>& nodes) {
    const int m = static_cast<int>(nodes.size());
    Eigen::MatrixXd sub(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) sub(i, j) = a(nodes[i], nodes[j]);
    return sub;
}

std::uint32_t full_mask(int m) { return (std::uint32_t{1} << m) - 1; }

}  // namespace

double phi(const AffinityMatrix& a, const std::vector<int>& s, int i, int j) {
    check_subset(a, s);
    if (!contains(s, i)) throw std::invalid_argument("phi: i must be a member of S");
    if (contains(s, j)) throw std::invalid_argument("phi: j must lie outside S");
    if (j < 0 || j >= a.size()) throw std::invalid_argument("phi: j out of range");

    double avg = 0.0;
    for (int k : s) avg += a(i, k);
    avg /= static_cast<double>(s.size());
    return a(i, j) - avg;
}

double relative_weight(const AffinityMatrix& a, const std::vector<int>& s, int i) {
    check_subset(a, s);
    if (!contains(s, i)) throw std::invalid_argument("relative_weight: i must be a member of S");
    if (s.size() > kMaxRecursionNodes)
        throw std::invalid_argument("relative_weight: |S| > " +
                                    std::to_string(kMaxRecursionNodes) +
                                    " exceeds the oracle-scale guard");

    std::vector<int> nodes(s);
    std::sort(nodes.begin(), nodes.end());
    const int local_i =
        static_cast<int>(std::lower_bound(nodes.begin(), nodes.end(), i) - nodes.begin());
    WeightTable table(local_matrix(a, nodes));
    return table.weight(full_mask(static_cast<int>(nodes.size())), local_i);
}

double subset_coherence(const AffinityMatrix& a, const std::vector<int>& s) {
    double total = 0.0;
    for (int i : s) total += relative_weight(a, s, i);
    return total / static_cast<double>(s.size());
}

bool is_dominant_set(const AffinityMatrix& a, const std::vector<int>& s) {
    check_subset(a, s);
    const int n = a.size();
    if (static_cast<int>(s.size()) < n && s.size() + 1 > kMaxRecursionNodes)
        throw std::invalid_argument("is_dominant_set: |S|+1 exceeds the oracle-scale guard");

    for (int i : s)
        if (relative_weight(a, s, i) <= 0.0) return false;

    std::vector<int> extended(s);
    for (int j = 0; j < n; ++j) {
        if (contains(s, j)) continue;
        extended.push_back(j);
        const double joining = relative_weight(a, extended, j);
        extended.pop_back();
        if (joining >= 0.0) return false;
    }
    return true;
}

Eigen::VectorXd characteristic_vector(const AffinityMatrix& a, const std::vector<int>& s) {
    check_subset(a, s);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(a.size());
    double total = 0.0;
    for (int i : s) {
        const double w = relative_weight(a, s, i);
        if (w <= 0.0)
            throw std::invalid_argument("characteristic_vector: w_S(" + std::to_string(i) +
                                        ") is not positive");
        x(i) = w;
        total += w;
    }
    x /= total;
    return x;
}

std::vector<std::vector<int>> brute_force_dominant_sets(const AffinityMatrix& a) {
    const int n = a.size();
    if (n > kMaxEnumerationNodes)
        throw std::invalid_argument("brute_force_dominant_sets: n > " +
                                    std::to_string(kMaxEnumerationNodes));

    WeightTable table(a.matrix());
    const std::uint32_t all = full_mask(n);

    struct Found {
        std::vector<int> members;
        double coherence;
    };
    std::vector<Found> found;

    for (std::uint32_t mask = 1; mask <= all; ++mask) {
        bool ok = true;
        double coherence = 0.0;
        for (std::uint32_t t = mask; t != 0 && ok; t &= t - 1) {
            const int i = std::countr_zero(t);
            const double w = table.weight(mask, i);
            if (w <= 0.0) ok = false;
            coherence += w;
        }
        if (!ok) continue;
        for (std::uint32_t t = all & ~mask; t != 0 && ok; t &= t - 1) {
            const int j = std::countr_zero(t);
            if (table.weight(mask | (std::uint32_t{1} << j), j) >= 0.0) ok = false;
        }
        if (!ok) continue;

        std::vector<int> members;
        for (std::uint32_t t = mask; t != 0; t &= t - 1) members.push_back(std::countr_zero(t));
        found.push_back({std::move(members), coherence / std::popcount(mask)});
    }

    std::sort(found.begin(), found.end(), [](const Found& x, const Found& y) {
        if (x.coherence != y.coherence) return x.coherence > y.coherence;
        if (x.members.size() != y.members.size()) return x.members.size() < y.members.size();
        return x.members < y.members;
    });

    std::vector<std::vector<int>> out;
    out.reserve(found.size());
    for (auto& f : found) out.push_back(std::move(f.members));
    return out;
}

QpMaximizers brute_force_qp_maximizers(const AffinityMatrix& a, const std::vector<int>& constraint,
                                       double alpha) {
    const int n = a.size();
    if (n > kMaxQpNodes)
        throw std::invalid_argument("brute_force_qp_maximizers: n > " +
                                    std::to_string(kMaxQpNodes));
    if (alpha < 0.0) throw std::invalid_argument("brute_force_qp_maximizers: alpha must be >= 0");
    for (int p : constraint)
        if (p < 0 || p >= n)
            throw std::invalid_argument("brute_force_qp_maximizers: constraint index out of range");

    Eigen::MatrixXd b = a.matrix();
    for (int i = 0; i < n; ++i)
        if (!contains(constraint, i)) b(i, i) -= alpha;

    QpMaximizers result;
    const std::uint32_t all = full_mask(n);
    for (std::uint32_t mask = 1; mask <= all; ++mask) {
        std::vector<int> sup;
        for (std::uint32_t t = mask; t != 0; t &= t - 1) sup.push_back(std::countr_zero(t));
        const int s = static_cast<int>(sup.size());

        // First-order system on the support: (Bx)_i = mu on sup, sum x = 1.
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + 1, s + 1);
        for (int r = 0; r < s; ++r) {
            for (int c = 0; c < s; ++c) kkt(r, c) = b(sup[r], sup[c]);
            kkt(r, s) = -1.0;
            kkt(s, r) = 1.0;
        }
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + 1);
        rhs(s) = 1.0;

        Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
        if (!lu.isInvertible()) {
            result.skipped_supports.push_back(mask);
            continue;
        }
        const Eigen::VectorXd sol = lu.solve(rhs);

        bool ok = true;
        for (int r = 0; r < s && ok; ++r)
            if (sol(r) <= kPositiveTol) ok = false;
        if (!ok) continue;

        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        for (int r = 0; r < s; ++r) x(sup[r]) = sol(r);
        const Eigen::VectorXd bx = b * x;
        const double value = x.dot(bx);
        for (int j = 0; j < n && ok; ++j)
            if (x(j) == 0.0 && bx(j) > value + kKktTol) ok = false;
        if (!ok) continue;

        // Second-order: v'Bv <= 0 for every v supported on sup with sum 0.
        if (s >= 2) {
            Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(s, s - 1);
            for (int t = 0; t < s - 1; ++t) {
                basis(t, t) = 1.0;
                basis(t + 1, t) = -1.0;
            }
            const Eigen::MatrixXd bsub = kkt.topLeftCorner(s, s);
            const Eigen::MatrixXd tangent = basis.transpose() * bsub * basis;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(tangent);
            if (eig.eigenvalues().maxCoeff() > kCurvatureTol) continue;
        }

        result.vectors.push_back(std::move(x));
    }
    return result;
}

}  // namespace cdsrank::ds
