#ifndef CDSRANK_EVAL_HPP
#define CDSRANK_EVAL_HPP

#include <vector>

#include <nlohmann/json.hpp>

#include "cdsrank/dataset_io.hpp"
#include "cdsrank/rerank.hpp"

namespace cdsrank {

// Everything needed to score one query: the ranked gallery indices plus
// per-gallery-item relevance and protocol-validity flags (both indexed by
// gallery position, not by rank).
struct QueryJudgment {
    int probe = 0;
    std::vector<int> ranked_gallery;
    std::vector<char> relevant;
    std::vector<char> valid;
};

// Single-query protocol mask: a gallery item is invalid iff it is the probe
// itself, or it shares both identity and camera with the probe. Items
// without a camera label (on either side) stay valid.
std::vector<char> single_query_filter(const GalleryIndex& gallery, int probe_index);

// Judgment for one ranked list: relevance = same identity as the probe,
// validity from the single-query filter.
QueryJudgment make_judgment(const GalleryIndex& gallery, const RankedList& ranked);

bool ap_defined(const QueryJudgment& judgment);

// AP = (1/R) * sum over hit positions p of hits_so_far(p) / p, computed over
// valid items only. Throws when the query has no valid relevant item.
double average_precision(const QueryJudgment& judgment);

struct MeanApResult {
    double map = 0.0;
    int queries = 0;   // queries with a defined AP
    int excluded = 0;  // queries skipped for having no valid relevant item
};

MeanApResult mean_ap(const std::vector<QueryJudgment>& judgments);

// curve[r] = fraction of (defined) queries whose first valid relevant item
// appears at rank <= r+1. Non-decreasing in r.
std::vector<double> cmc(const std::vector<QueryJudgment>& judgments, int max_rank);

// {"mAP": ..., "CMC": [...], "queries": n, "excluded": m}
nlohmann::ordered_json metrics_json(const std::vector<QueryJudgment>& judgments, int max_rank);

}  // namespace cdsrank

#endif
