#ifndef CDSRANK_SOLVER_HPP
#define CDSRANK_SOLVER_HPP

#include <vector>

#include "cdsrank/affinity.hpp"

namespace cdsrank {

// Membership-score vector: nonnegative, sums to 1 within 1e-9.
class SimplexVector {
public:
    explicit SimplexVector(Eigen::VectorXd values);
    static SimplexVector uniform(int n);

    const Eigen::VectorXd& values() const { return values_; }
    double operator[](int i) const { return values_(i); }
    int size() const { return static_cast<int>(values_.size()); }

private:
    Eigen::VectorXd values_;
};

struct SolveConfig {
    double alpha_margin = 0.05;  // relative + absolute slack above lambda_max
    double tol = 1e-7;           // L1 displacement stopping threshold
    int max_iter = 10000;
    double theta = 1e-5;         // support-extraction threshold
    bool normalize = false;      // divide A by its max entry before solving
};

// B = A - alpha*I_hat_P + shift*J. I_hat_P has zero diagonal entries on the
// constraint set and one elsewhere; J is the all-ones matrix. shift = alpha
// keeps every entry nonnegative, which the dynamics needs, and only adds a
// constant to the objective on the simplex.
struct ModifiedMatrix {
    Eigen::MatrixXd b;
    double alpha = 0.0;
    double shift = 0.0;
    std::vector<int> constraint;
};

struct CdsResult {
    SimplexVector membership;
    std::vector<int> support;
    double alpha = 0.0;
    int iterations = 0;
    double objective = 0.0;            // x'Bx at the final iterate
    double objective_unshifted = 0.0;  // x'(A - alpha*I_hat_P)x, i.e. objective - shift
    bool converged = false;
};

// alpha = lambda_max(A restricted to V\P) * (1 + margin) + margin, strictly
// above lambda_max even when it is zero. P must be a nonempty proper subset.
ModifiedMatrix build_modified_matrix(const AffinityMatrix& a, const std::vector<int>& constraint,
                                     double alpha_margin);

// One replicator update y_i = x_i (Bx)_i / x'Bx with no domain checks and no
// renormalization. Also the map the Jacobian below differentiates; tests
// feed it off-simplex points for finite differencing.
Eigen::VectorXd replicator_map(const Eigen::MatrixXd& b, const Eigen::VectorXd& x);

// Validated step: simplex in, simplex out (renormalized to absorb rounding).
SimplexVector replicator_step(const Eigen::MatrixXd& b, const SimplexVector& x);

// Iterate until the L1 displacement drops below tol or max_iter is reached.
CdsResult run_replicator(const ModifiedMatrix& mm, const SimplexVector& x0, double tol,
                         int max_iter, double theta = 1e-5);

// Indices with x_i > theta. Exact zeros are unreachable from interior starts
// in finite arithmetic, hence the threshold.
std::vector<int> extract_support(const SimplexVector& x, double theta = 1e-5);

// build_modified_matrix + run_replicator from the uniform start.
CdsResult solve_cds(const AffinityMatrix& a, const std::vector<int>& constraint,
                    const SolveConfig& config);

// Analytic Jacobian of replicator_map at x:
//   d y_i / d x_j = delta_ij (Bx)_i / q + x_i B_ij / q - 2 x_i (Bx)_i (Bx)_j / q^2
// with q = x'Bx.
Eigen::MatrixXd replicator_jacobian(const Eigen::MatrixXd& b, const Eigen::VectorXd& x);

}  // namespace cdsrank

#endif
