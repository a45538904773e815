#include "cdsrank/solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cdsrank/errors.hpp"

namespace cdsrank {

namespace {

constexpr double kSimplexSumTol = 1e-9;

void check_constraint(const AffinityMatrix& a, const std::vector<int>& constraint) {
    if (constraint.empty()) throw std::invalid_argument("constraint set must be nonempty");
    std::vector<char> seen(a.size(), 0);
    for (int p : constraint) {
        if (p < 0 || p >= a.size())
            throw std::invalid_argument("constraint index " + std::to_string(p) + " out of range");
        if (seen[p])
            throw std::invalid_argument("constraint has duplicate index " + std::to_string(p));
        seen[p] = 1;
    }
    if (static_cast<int>(constraint.size()) == a.size())
        throw std::invalid_argument("constraint covers every node; nothing left to rank");
}

}  // namespace

SimplexVector::SimplexVector(Eigen::VectorXd values) : values_(std::move(values)) {
    if (values_.size() == 0) throw std::invalid_argument("simplex vector must be nonempty");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
        const double v = values_(i);
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("simplex vector entry " + std::to_string(i) +
                                        " is negative or non-finite");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexSumTol)
        throw std::invalid_argument("simplex vector sums to " + std::to_string(sum) +
                                    ", expected 1");
}

SimplexVector SimplexVector::uniform(int n) {
    if (n < 1) throw std::invalid_argument("simplex vector must be nonempty");
    return SimplexVector(Eigen::VectorXd::Constant(n, 1.0 / n));
}

ModifiedMatrix build_modified_matrix(const AffinityMatrix& a, const std::vector<int>& constraint,
                                     double alpha_margin) {
    check_constraint(a, constraint);
    if (alpha_margin <= 0.0) throw std::invalid_argument("alpha_margin must be positive");

    const double lambda = spectral_radius(principal_submatrix(a, constraint));
    const double alpha = lambda * (1.0 + alpha_margin) + alpha_margin;
    const double shift = alpha;

    const int n = a.size();
    Eigen::MatrixXd b = a.matrix().array() + shift;
    for (int i = 0; i < n; ++i) b(i, i) = 0.0;  // shift - alpha off the constraint
    for (int p : constraint) b(p, p) = shift;
    return ModifiedMatrix{std::move(b), alpha, shift, constraint};
}

Eigen::VectorXd replicator_map(const Eigen::MatrixXd& b, const Eigen::VectorXd& x) {
    const Eigen::VectorXd bx = b * x;
    const double q = x.dot(bx);
    if (!(q > 0.0))
        throw SolverError("replicator step: x'Bx = " + std::to_string(q) +
                          " is not positive (degenerate input)");
    return (x.array() * bx.array() / q).matrix();
}

SimplexVector replicator_step(const Eigen::MatrixXd& b, const SimplexVector& x) {
    Eigen::VectorXd y = replicator_map(b, x.values());
    y /= y.sum();
    return SimplexVector(std::move(y));
}

CdsResult run_replicator(const ModifiedMatrix& mm, const SimplexVector& x0, double tol,
                         int max_iter, double theta) {
    if (tol <= 0.0) throw std::invalid_argument("tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
    if (mm.b.rows() != x0.size()) throw std::invalid_argument("matrix/vector size mismatch");

    Eigen::VectorXd x = x0.values();
    bool converged = false;
    int iterations = 0;
    while (iterations < max_iter) {
        Eigen::VectorXd y = replicator_map(mm.b, x);
        y /= y.sum();
        ++iterations;
        const double displacement = (y - x).lpNorm<1>();
        x = std::move(y);
        if (displacement < tol) {
            converged = true;
            break;
        }
    }

    const double objective = x.dot(mm.b * x);
    SimplexVector membership(std::move(x));
    std::vector<int> support = extract_support(membership, theta);
    return CdsResult{std::move(membership), std::move(support), mm.alpha,
                     iterations,            objective,          objective - mm.shift,
                     converged};
}

std::vector<int> extract_support(const SimplexVector& x, double theta) {
    if (theta < 0.0) throw std::invalid_argument("theta must be nonnegative");
    std::vector<int> support;
    for (int i = 0; i < x.size(); ++i)
        if (x[i] > theta) support.push_back(i);
    return support;
}

CdsResult solve_cds(const AffinityMatrix& a, const std::vector<int>& constraint,
                    const SolveConfig& config) {
    const ModifiedMatrix mm =
        config.normalize
            ? build_modified_matrix(a.normalized_by_max(), constraint, config.alpha_margin)
            : build_modified_matrix(a, constraint, config.alpha_margin);
    return run_replicator(mm, SimplexVector::uniform(a.size()), config.tol, config.max_iter,
                          config.theta);
}

Eigen::MatrixXd replicator_jacobian(const Eigen::MatrixXd& b, const Eigen::VectorXd& x) {
    const Eigen::VectorXd bx = b * x;
    const double q = x.dot(bx);
    if (!(q > 0.0))
        throw SolverError("replicator jacobian: x'Bx = " + std::to_string(q) +
                          " is not positive (degenerate input)");

    const Eigen::Index n = x.size();
    Eigen::MatrixXd jac(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double v = x(i) * b(i, j) / q - 2.0 * x(i) * bx(i) * bx(j) / (q * q);
            if (i == j) v += bx(i) / q;
            jac(i, j) = v;
        }
    return jac;
}

}  // namespace cdsrank
