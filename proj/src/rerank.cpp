#include "cdsrank/rerank.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <thread>

#include "cdsrank/errors.hpp"

namespace cdsrank {

namespace {

int resolve_threads(int threads, int jobs) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    return std::min(threads, jobs);
}

// Runs fn(i) for i in [0, jobs); per-index failures are collected and merged
// into one SolverError naming the failing probes.
template <typename Fn>
void for_each_probe(int jobs, int threads, Fn&& fn) {
    std::vector<std::string> failures(jobs);
    std::vector<char> failed(jobs, 0);

    const int workers = resolve_threads(threads, jobs);
    std::atomic<int> next{0};
    auto run = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= jobs) break;
            try {
                fn(i);
            } catch (const std::exception& e) {
                failed[i] = 1;
                failures[i] = e.what();
            }
        }
    };

    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int t = 0; t < workers; ++t) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }

    std::string message;
    for (int i = 0; i < jobs; ++i) {
        if (!failed[i]) continue;
        if (message.empty())
            message = "CDS solve failed for probe " + std::to_string(i) + ": " + failures[i];
        else
            message += "; probe " + std::to_string(i);
    }
    if (!message.empty()) throw SolverError(message);
}

}  // namespace

MembershipMatrix cds_similarity_matrix(const AffinityMatrix& a, const SolveConfig& config,
                                       int threads) {
    const int m = a.size();
    if (m < 2) throw std::invalid_argument("cds_similarity_matrix needs at least 2 items");

    Eigen::MatrixXd y(m, m);
    for_each_probe(m, threads, [&](int i) {
        y.row(i) = solve_cds(a, {i}, config).membership.values().transpose();
    });
    return MembershipMatrix{std::move(y)};
}

FusedScores fuse(const MembershipMatrix& y, const VerificationScores& v, double beta,
                 double delta) {
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta must lie in [0,1]");
    if (v.s.rows() != y.y.rows() || v.s.cols() != y.y.cols() || v.d.rows() != y.y.rows() ||
        v.d.cols() != y.y.cols())
        throw std::invalid_argument("verification score shape does not match membership matrix");

    FusedScores out;
    out.beta = beta;
    out.delta = delta;
    out.degenerate_beta = (beta == 0.0 || beta == 1.0);

    const Eigen::ArrayXXd yd = delta - y.y.array();
    out.negative_dissim_entries = (yd < 0.0).count();
    out.fs = (beta * y.y.array()) * ((1.0 - beta) * v.s.array());
    out.fd = (beta * yd) * ((1.0 - beta) * v.d.array());
    return out;
}

RankedList rank_gallery(const Eigen::VectorXd& scores, int probe, const std::vector<char>& mask) {
    const int n = static_cast<int>(scores.size());
    if (static_cast<int>(mask.size()) != n)
        throw std::invalid_argument("rank_gallery: mask length does not match scores");
    if (probe < 0 || probe >= n) throw std::invalid_argument("rank_gallery: probe out of range");
    if (mask[probe]) throw std::invalid_argument("rank_gallery: mask must exclude the probe");

    RankedList list;
    list.probe = probe;
    for (int i = 0; i < n; ++i)
        if (mask[i]) list.order.push_back(i);
    if (list.order.empty()) throw std::invalid_argument("rank_gallery: every entry is masked out");

    std::sort(list.order.begin(), list.order.end(), [&](int x, int yy) {
        if (scores(x) != scores(yy)) return scores(x) > scores(yy);
        return x < yy;
    });
    list.scores.reserve(list.order.size());
    for (int idx : list.order) list.scores.push_back(scores(idx));
    return list;
}

ExpansionResult constraint_expansion(const AffinityMatrix& a, int probe, int k,
                                     const SolveConfig& config, int extra_constraints) {
    const int n = a.size();
    if (k < 2 || k > n - 1)
        throw std::invalid_argument("constraint_expansion: k=" + std::to_string(k) +
                                    " outside [2," + std::to_string(n - 1) + "]");
    if (extra_constraints < 1)
        throw std::invalid_argument("constraint_expansion: extra_constraints must be >= 1");

    const KnnSubgraph sub = knn_subgraph(a, probe, k);
    const int local_probe = static_cast<int>(
        std::lower_bound(sub.nodes.begin(), sub.nodes.end(), probe) - sub.nodes.begin());
    const CdsResult pre =
        solve_cds(AffinityMatrix::from_matrix(sub.entries), {local_probe}, config);

    // Cluster members other than the probe, mapped back to original indices.
    std::vector<std::pair<double, int>> candidates;
    for (int local : pre.support)
        if (local != local_probe) candidates.emplace_back(pre.membership[local], sub.nodes[local]);
    std::sort(candidates.begin(), candidates.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
    });

    std::vector<int> constraints = {probe};
    const bool fallback = candidates.empty();
    if (!fallback) {
        const int take = std::min<int>(extra_constraints, static_cast<int>(candidates.size()));
        for (int t = 0; t < take; ++t) constraints.push_back(candidates[t].second);
    }

    CdsResult final_result = solve_cds(a, constraints, config);

    std::vector<char> mask(n, 1);
    mask[probe] = 0;
    RankedList ranking = rank_gallery(final_result.membership.values(), probe, mask);
    return ExpansionResult{std::move(ranking), std::move(final_result), std::move(constraints),
                           fallback};
}

std::vector<ExpansionResult> constraint_expansion_all(const AffinityMatrix& a, int k,
                                                      const SolveConfig& config,
                                                      int extra_constraints, int threads) {
    const int m = a.size();
    if (m < 2) throw std::invalid_argument("constraint_expansion_all needs at least 2 items");

    std::vector<std::optional<ExpansionResult>> slots(m);
    for_each_probe(m, threads, [&](int i) {
        slots[i] = constraint_expansion(a, i, k, config, extra_constraints);
    });

    std::vector<ExpansionResult> out;
    out.reserve(m);
    for (auto& slot : slots) out.push_back(std::move(*slot));
    return out;
}

FeatureVector concat_features(const FeatureVector& f1, const FeatureVector& f2) {
    if (f1.id != f2.id)
        throw std::invalid_argument("concat_features: id mismatch ('" + f1.id + "' vs '" + f2.id +
                                    "')");
    if (f1.camera != f2.camera) throw std::invalid_argument("concat_features: camera mismatch");

    FeatureVector out;
    out.id = f1.id;
    out.camera = f1.camera;
    out.values.resize(f1.dim() + f2.dim());
    out.values << f1.values, f2.values;
    return out;
}

}  // namespace cdsrank
