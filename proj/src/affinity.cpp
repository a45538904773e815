#include "cdsrank/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cdsrank/errors.hpp"

namespace cdsrank {

AffinityMatrix AffinityMatrix::from_matrix(Eigen::MatrixXd entries) {
    const Eigen::Index n = entries.rows();
    if (entries.cols() != n) throw std::invalid_argument("affinity matrix must be square");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (entries(i, i) != 0.0)
            throw std::invalid_argument("affinity matrix diagonal must be zero at index " +
                                        std::to_string(i));
        for (Eigen::Index j = 0; j < n; ++j) {
            const double v = entries(i, j);
            if (!std::isfinite(v))
                throw std::invalid_argument("affinity matrix has non-finite entry at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
            if (v < 0.0)
                throw std::invalid_argument("affinity matrix has negative entry at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
            if (entries(i, j) != entries(j, i))
                throw std::invalid_argument("affinity matrix not symmetric at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
        }
    }
    return AffinityMatrix(std::move(entries));
}

AffinityMatrix AffinityMatrix::normalized_by_max() const {
    const double m = entries_.maxCoeff();
    if (m <= 0.0) return *this;
    return AffinityMatrix(entries_ / m);
}

AffinityMatrix build_affinity(const std::vector<FeatureVector>& features, Metric metric) {
    const int n = static_cast<int>(features.size());
    if (n < 2) throw std::invalid_argument("build_affinity needs at least 2 features");

    const Eigen::Index d = features[0].dim();
    for (int i = 0; i < n; ++i) {
        if (features[i].dim() != d)
            throw std::invalid_argument("feature dimension mismatch at index " + std::to_string(i) +
                                        ": " + std::to_string(features[i].dim()) + " vs " +
                                        std::to_string(d));
        if (!features[i].values.allFinite())
            throw std::invalid_argument("feature has non-finite entry at index " +
                                        std::to_string(i));
    }

    std::vector<double> norms;
    if (metric == Metric::cosine) {
        norms.resize(n);
        for (int i = 0; i < n; ++i) {
            norms[i] = features[i].values.norm();
            if (norms[i] == 0.0)
                throw std::invalid_argument("zero-norm feature at index " + std::to_string(i) +
                                            " cannot be used with the cosine metric");
        }
    }

    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double dot = features[i].values.dot(features[j].values);
            double w;
            if (metric == Metric::dot) {
                w = std::max(0.0, dot);
            } else {
                const double c = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
                w = 0.5 * (1.0 + c);
            }
            m(i, j) = w;
            m(j, i) = w;
        }
    }
    return AffinityMatrix::from_matrix(std::move(m));
}

Eigen::MatrixXd principal_submatrix(const AffinityMatrix& a, const std::vector<int>& exclude) {
    const int n = a.size();
    std::vector<char> drop(n, 0);
    for (int idx : exclude) {
        if (idx < 0 || idx >= n)
            throw std::invalid_argument("principal_submatrix: index " + std::to_string(idx) +
                                        " out of range for n=" + std::to_string(n));
        drop[idx] = 1;
    }
    std::vector<int> keep;
    keep.reserve(n);
    for (int i = 0; i < n; ++i)
        if (!drop[i]) keep.push_back(i);
    if (keep.empty()) throw std::invalid_argument("principal_submatrix: cannot exclude every node");

    const int m = static_cast<int>(keep.size());
    Eigen::MatrixXd sub(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) sub(i, j) = a(keep[i], keep[j]);
    return sub;
}

double spectral_radius(const Eigen::MatrixXd& m, double tol, int max_iter) {
    const Eigen::Index n = m.rows();
    if (m.cols() != n) throw std::invalid_argument("spectral_radius: matrix must be square");
    if (tol <= 0.0) throw std::invalid_argument("spectral_radius: tol must be positive");
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (m(i, j) < 0.0 || !std::isfinite(m(i, j)))
                throw std::invalid_argument("spectral_radius: matrix must be nonnegative");
            if (m(i, j) != m(j, i))
                throw std::invalid_argument("spectral_radius: matrix must be symmetric");
        }
    if (n == 0) return 0.0;

    // Row-sum shift; c >= lambda_max >= |lambda_min| for nonnegative symmetric m.
    const double c = m.rowwise().sum().maxCoeff();
    if (c == 0.0) return 0.0;

    Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd u = m * v;
        lambda = v.dot(u);
        const double residual = (u - lambda * v).norm();
        if (residual <= 0.5 * tol * std::max(1.0, std::abs(lambda))) return lambda;
        Eigen::VectorXd w = u + c * v;
        v = w / w.norm();
    }
    throw SolverError("spectral_radius: no convergence after " + std::to_string(max_iter) +
                          " iterations (last estimate " + std::to_string(lambda) + ")",
                      lambda);
}

KnnSubgraph knn_subgraph(const AffinityMatrix& a, int node, int k) {
    const int n = a.size();
    if (node < 0 || node >= n) throw std::invalid_argument("knn_subgraph: node out of range");
    if (k < 1 || k > n - 1)
        throw std::invalid_argument("knn_subgraph: k=" + std::to_string(k) +
                                    " outside [1," + std::to_string(n - 1) + "]");

    std::vector<int> others;
    others.reserve(n - 1);
    for (int j = 0; j < n; ++j)
        if (j != node) others.push_back(j);
    std::sort(others.begin(), others.end(), [&](int x, int y) {
        if (a(node, x) != a(node, y)) return a(node, x) > a(node, y);
        return x < y;
    });

    std::vector<int> nodes(others.begin(), others.begin() + k);
    nodes.push_back(node);
    std::sort(nodes.begin(), nodes.end());

    const int m = static_cast<int>(nodes.size());
    Eigen::MatrixXd sub(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) sub(i, j) = a(nodes[i], nodes[j]);
    return KnnSubgraph{std::move(nodes), std::move(sub)};
}

}  // namespace cdsrank
