#ifndef CDSRANK_RERANK_HPP
#define CDSRANK_RERANK_HPP

#include <vector>

#include "cdsrank/affinity.hpp"
#include "cdsrank/solver.hpp"

namespace cdsrank {

// Stacked per-probe solutions: row i is the converged membership vector with
// probe i as the constraint.
struct MembershipMatrix {
    Eigen::MatrixXd y;
};

// Externally produced similarity (s) and dissimilarity (d) score matrices,
// same shape as the membership matrix they are fused with.
struct VerificationScores {
    Eigen::MatrixXd s;
    Eigen::MatrixXd d;
};

// Elementwise fusion
//   fs = (beta * Y) .* ((1-beta) * S')
//   fd = (beta * (delta - Y)) .* ((1-beta) * D')
// (delta - Y) entries may be negative; they pass through unclamped and are
// only counted in `negative_dissim_entries`.
struct FusedScores {
    Eigen::MatrixXd fs;
    Eigen::MatrixXd fd;
    double beta = 0.0;
    double delta = 0.0;
    long negative_dissim_entries = 0;
    bool degenerate_beta = false;  // beta in {0,1} zeroes one factor
};

struct RankedList {
    int probe = 0;
    std::vector<int> order;     // gallery indices, best first
    std::vector<double> scores; // aligned with `order`
};

// Row i = solve_cds(A, {i}, config).membership for every i. `threads` caps
// the worker count (0 = hardware concurrency); output is identical for any
// thread count. Per-probe failures are aggregated into one SolverError that
// names the failing probe indices.
MembershipMatrix cds_similarity_matrix(const AffinityMatrix& a, const SolveConfig& config,
                                       int threads = 1);

FusedScores fuse(const MembershipMatrix& y, const VerificationScores& v, double beta,
                 double delta);

// Descending sort of the entries whose mask flag is true; ties break toward
// the lower index. The probe's own flag must be false.
RankedList rank_gallery(const Eigen::VectorXd& scores, int probe, const std::vector<char>& mask);

struct ExpansionResult {
    RankedList ranking;
    CdsResult result;              // final full-graph solve
    std::vector<int> constraints;  // probe plus any promoted expanders
    bool fallback = false;         // no cluster beyond the probe in the k-NN stage
};

// Constraint expansion: cluster the probe's k-NN subgraph, promote the
// highest-membership cluster member (up to `extra_constraints` of them) to
// additional constraints, and re-solve on the full graph. Falls back to the
// plain single-constraint solve when the subgraph cluster holds nothing but
// the probe.
ExpansionResult constraint_expansion(const AffinityMatrix& a, int probe, int k,
                                     const SolveConfig& config, int extra_constraints = 1);

// Expansion with every node as probe, in probe order. Same aggregation and
// threading contract as cds_similarity_matrix.
std::vector<ExpansionResult> constraint_expansion_all(const AffinityMatrix& a, int k,
                                                      const SolveConfig& config,
                                                      int extra_constraints = 1, int threads = 1);

// Concatenation of two embeddings of the same item; labels must agree.
FeatureVector concat_features(const FeatureVector& f1, const FeatureVector& f2);

}  // namespace cdsrank

#endif
