#ifndef CDSRANK_AFFINITY_HPP
#define CDSRANK_AFFINITY_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace cdsrank {

enum class Metric { dot, cosine };

// One embedding with its labels. `camera` is absent for datasets that do not
// record a capture device.
struct FeatureVector {
    Eigen::VectorXd values;
    std::string id;
    std::optional<int> camera;

    Eigen::Index dim() const { return values.size(); }
};

// Dense symmetric nonnegative edge-weight matrix with a zero diagonal.
// Immutable after construction; every constructor path validates the three
// invariants (exact symmetry as stored, zero diagonal, nonnegative entries).
class AffinityMatrix {
public:
    static AffinityMatrix from_matrix(Eigen::MatrixXd entries);

    int size() const { return static_cast<int>(entries_.rows()); }
    double operator()(int i, int j) const { return entries_(i, j); }
    const Eigen::MatrixXd& matrix() const { return entries_; }

    // Same graph with all weights divided by the largest entry; identity on
    // an all-zero graph.
    AffinityMatrix normalized_by_max() const;

private:
    explicit AffinityMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {}

    Eigen::MatrixXd entries_;
};

// Pairwise affinities of a feature set. Negative dot products clamp to 0;
// cosine values map from [-1,1] onto [0,1] via (1+c)/2. The diagonal is
// forced to zero either way.
AffinityMatrix build_affinity(const std::vector<FeatureVector>& features, Metric metric);

// Rows/columns of A not listed in `exclude`, original relative order kept.
// `exclude` may not cover every node.
Eigen::MatrixXd principal_submatrix(const AffinityMatrix& a, const std::vector<int>& exclude);

// Largest eigenvalue of a symmetric nonnegative matrix by power iteration
// from the all-ones vector. The iteration runs on M + cI with c = max row
// sum, which keeps it convergent when the spectrum is symmetric around zero
// (for a plain bipartite graph the unshifted iterates oscillate forever).
// Returns 0 for the zero matrix. Throws SolverError carrying the last
// estimate if `max_iter` is exhausted.
double spectral_radius(const Eigen::MatrixXd& m, double tol = 1e-9, int max_iter = 100000);

struct KnnSubgraph {
    std::vector<int> nodes;  // original indices, ascending; includes the query node
    Eigen::MatrixXd entries; // induced submatrix aligned with `nodes`
};

// The query node plus its k highest-affinity neighbours (ties broken by the
// lower original index) and the induced subgraph.
KnnSubgraph knn_subgraph(const AffinityMatrix& a, int node, int k);

}  // namespace cdsrank

#endif
