#include "cdsrank/eval.hpp"

#include <algorithm>
#include <stdexcept>

namespace cdsrank {

std::vector<char> single_query_filter(const GalleryIndex& gallery, int probe_index) {
    if (probe_index < 0 || probe_index >= gallery.size())
        throw std::invalid_argument("single_query_filter: probe index out of range");

    const FeatureVector& probe = gallery.items[probe_index];
    std::vector<char> valid(gallery.size(), 1);
    valid[probe_index] = 0;
    for (int j = 0; j < gallery.size(); ++j) {
        const FeatureVector& item = gallery.items[j];
        if (j != probe_index && item.id == probe.id && item.camera && probe.camera &&
            *item.camera == *probe.camera)
            valid[j] = 0;
    }
    return valid;
}

QueryJudgment make_judgment(const GalleryIndex& gallery, const RankedList& ranked) {
    if (ranked.probe < 0 || ranked.probe >= gallery.size())
        throw std::invalid_argument("make_judgment: probe index out of range");
    for (int g : ranked.order)
        if (g < 0 || g >= gallery.size())
            throw std::invalid_argument("make_judgment: ranked gallery index out of range");

    QueryJudgment judgment;
    judgment.probe = ranked.probe;
    judgment.ranked_gallery = ranked.order;
    judgment.valid = single_query_filter(gallery, ranked.probe);
    judgment.relevant.assign(gallery.size(), 0);
    const std::string& probe_id = gallery.items[ranked.probe].id;
    for (int j = 0; j < gallery.size(); ++j)
        judgment.relevant[j] = gallery.items[j].id == probe_id ? 1 : 0;
    return judgment;
}

namespace {

int count_valid_relevant(const QueryJudgment& j) {
    int r = 0;
    for (std::size_t i = 0; i < j.valid.size(); ++i)
        if (j.valid[i] && j.relevant[i]) ++r;
    return r;
}

// 1-based rank of the first valid relevant item in the ranked order, or 0
// when none appears there.
int first_hit_rank(const QueryJudgment& j) {
    int pos = 0;
    for (int g : j.ranked_gallery) {
        if (!j.valid[g]) continue;
        ++pos;
        if (j.relevant[g]) return pos;
    }
    return 0;
}

}  // namespace

bool ap_defined(const QueryJudgment& judgment) { return count_valid_relevant(judgment) > 0; }

double average_precision(const QueryJudgment& judgment) {
    if (judgment.relevant.size() != judgment.valid.size())
        throw std::invalid_argument("average_precision: relevant/valid size mismatch");
    const int total_relevant = count_valid_relevant(judgment);
    if (total_relevant == 0)
        throw std::invalid_argument("undefined AP: query " + std::to_string(judgment.probe) +
                                    " has no valid relevant item");

    int pos = 0;
    int hits = 0;
    double sum = 0.0;
    for (int g : judgment.ranked_gallery) {
        if (!judgment.valid[g]) continue;
        ++pos;
        if (judgment.relevant[g]) {
            ++hits;
            sum += static_cast<double>(hits) / pos;
        }
    }
    return sum / total_relevant;
}

MeanApResult mean_ap(const std::vector<QueryJudgment>& judgments) {
    MeanApResult result;
    double sum = 0.0;
    for (const auto& j : judgments) {
        if (!ap_defined(j)) {
            ++result.excluded;
            continue;
        }
        sum += average_precision(j);
        ++result.queries;
    }
    if (result.queries == 0)
        throw std::invalid_argument("mean_ap: every query has undefined AP");
    result.map = sum / result.queries;
    return result;
}

std::vector<double> cmc(const std::vector<QueryJudgment>& judgments, int max_rank) {
    if (max_rank < 1) throw std::invalid_argument("cmc: max_rank must be >= 1");

    std::vector<double> curve(max_rank, 0.0);
    int defined = 0;
    for (const auto& j : judgments) {
        if (!ap_defined(j)) continue;
        ++defined;
        const int hit = first_hit_rank(j);
        if (hit >= 1)
            for (int r = hit - 1; r < max_rank; ++r) curve[r] += 1.0;
    }
    if (defined == 0) throw std::invalid_argument("cmc: every query has undefined AP");
    for (double& v : curve) v /= defined;
    return curve;
}

nlohmann::ordered_json metrics_json(const std::vector<QueryJudgment>& judgments, int max_rank) {
    const MeanApResult m = mean_ap(judgments);
    nlohmann::ordered_json j;
    j["mAP"] = m.map;
    j["CMC"] = cmc(judgments, max_rank);
    j["queries"] = m.queries;
    j["excluded"] = m.excluded;
    return j;
}

}  // namespace cdsrank
