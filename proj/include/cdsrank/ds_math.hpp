#ifndef CDSRANK_DS_MATH_HPP
#define CDSRANK_DS_MATH_HPP

#include <cstdint>
#include <vector>

#include "cdsrank/affinity.hpp"

namespace cdsrank::ds {

// Relative similarity of outside node j to inside node i, measured against
// i's average similarity to S:  a_ij - (1/|S|) sum_{k in S} a_ik.
// Requires i in S and j not in S. May be negative.
double phi(const AffinityMatrix& a, const std::vector<int>& s, int i, int j);

// Recursive weight w_S(i): 1 for |S|=1, the edge weight for |S|=2, otherwise
// sum_{j in S\{i}} phi_{S\{i}}(j,i) * w_{S\{i}}(j). A positive value means
// adding i raises the coherence of S\{i}; negative means it lowers it.
// Memoized over subsets; exponential in |S|, so |S| <= 20 is enforced.
double relative_weight(const AffinityMatrix& a, const std::vector<int>& s, int i);

// Internal coherence sum_{i in S} w_S(i) / |S|, the quantity dominant sets
// are ordered by in brute_force_dominant_sets.
double subset_coherence(const AffinityMatrix& a, const std::vector<int>& s);

// Both defining conditions: w_S(i) > 0 for every member and
// w_{S + j}(j) < 0 for every outside node. |S|+1 <= 20 enforced whenever an
// outside node exists.
bool is_dominant_set(const AffinityMatrix& a, const std::vector<int>& s);

// Weighted characteristic vector of S: x_i = w_S(i) / W(S) on S, zero
// elsewhere. Requires every w_S(i) > 0 (as for a dominant set).
Eigen::VectorXd characteristic_vector(const AffinityMatrix& a, const std::vector<int>& s);

// Exhaustive enumeration over all nonempty subsets (n <= 12). Results are
// ordered by descending coherence, then ascending size, then lexicographic
// member order.
std::vector<std::vector<int>> brute_force_dominant_sets(const AffinityMatrix& a);

struct QpMaximizers {
    std::vector<Eigen::VectorXd> vectors;        // one simplex point per maximizer
    std::vector<std::uint32_t> skipped_supports; // bitmasks whose KKT system was singular
};

// Every strict local maximizer of x'(A - alpha*I_hat_P)x over the simplex,
// found by enumerating candidate supports (n <= 10), solving the restricted
// first-order system, and filtering by the KKT inequalities plus negative
// semidefiniteness on the support's tangent space. Test oracle; exponential.
QpMaximizers brute_force_qp_maximizers(const AffinityMatrix& a, const std::vector<int>& constraint,
                                       double alpha);

}  // namespace cdsrank::ds

#endif
