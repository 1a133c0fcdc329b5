#include "nightbird/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>

#include "json.hpp"
#include "nightbird/errors.hpp"

namespace nightbird {

size_t MatchResult::tp() const {
    size_t n = 0;
    for (const auto& d : per_detection) n += d.tp ? 1 : 0;
    return n;
}

size_t MatchResult::fp() const { return per_detection.size() - tp(); }

MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<GroundTruth>& gts, double iou_thresh) {
    if (!(iou_thresh >= 0.0 && iou_thresh <= 1.0))
        throw ValidationError("match_detections: iou threshold must lie in [0,1]");

    std::vector<size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return detections[a].score > detections[b].score;
    });

    MatchResult result;
    result.per_detection.resize(detections.size());
    std::vector<bool> gt_used(gts.size(), false);
    for (size_t oi : order) {
        const Detection& d = detections[oi];
        ptrdiff_t best = -1;
        double best_iou = 0.0;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (gt_used[g]) continue;
            if (gts[g].image_id != d.image_id) continue;
            if (gts[g].bbox.class_id != d.bbox.class_id) continue;
            const double i = iou(d.bbox, gts[g].bbox);
            if (i > best_iou) {
                best_iou = i;
                best = static_cast<ptrdiff_t>(g);
            }
        }
        if (best >= 0 && best_iou >= iou_thresh) {
            result.per_detection[oi] = {true, best};
            gt_used[static_cast<size_t>(best)] = true;
        }
    }
    for (bool used : gt_used) result.unmatched_gt += used ? 0 : 1;
    return result;
}

std::pair<double, double> precision_recall(const MatchResult& m) {
    const double tp = static_cast<double>(m.tp());
    const double fp = static_cast<double>(m.fp());
    const double fn = static_cast<double>(m.fn());
    const double p = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
    return {p, r};
}

double average_precision(std::vector<std::pair<double, bool>> scored, size_t gt_count) {
    if (gt_count == 0)
        throw ValidationError("average_precision: class has no ground truth");
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });

    const size_t n = scored.size();
    std::vector<double> precision(n), recall(n);
    size_t tp = 0;
    for (size_t i = 0; i < n; ++i) {
        tp += scored[i].second ? 1 : 0;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
    }

    double ap = 0.0, pmax = 0.0;
    for (size_t i = n; i-- > 0;) {
        pmax = std::max(pmax, precision[i]);
        const double r_prev = i == 0 ? 0.0 : recall[i - 1];
        ap += (recall[i] - r_prev) * pmax;
    }
    return ap;
}

EvalReport evaluate(const std::vector<Detection>& detections,
                    const std::vector<GroundTruth>& gts, double iou_thresh) {
    MatchResult match = match_detections(detections, gts, iou_thresh);

    std::map<int, ClassEval> classes;
    for (const auto& g : gts) {
        ClassEval& c = classes[g.bbox.class_id];
        c.class_id = g.bbox.class_id;
        ++c.gt_count;
    }

    EvalReport report;
    report.iou_threshold = iou_thresh;
    std::map<int, std::vector<std::pair<double, bool>>> scored;
    for (size_t i = 0; i < detections.size(); ++i) {
        const int cid = detections[i].bbox.class_id;
        auto it = classes.find(cid);
        if (it == classes.end()) {
            if (std::find(report.classes_without_gt.begin(), report.classes_without_gt.end(),
                          cid) == report.classes_without_gt.end())
                report.classes_without_gt.push_back(cid);
            continue;
        }
        const bool tp = match.per_detection[i].tp;
        it->second.tp += tp ? 1 : 0;
        it->second.fp += tp ? 0 : 1;
        scored[cid].push_back({detections[i].score, tp});
    }
    std::sort(report.classes_without_gt.begin(), report.classes_without_gt.end());

    if (classes.empty()) throw ValidationError("evaluate: no class has ground truth");

    double ap_sum = 0.0;
    for (auto& [cid, c] : classes) {
        const double tp = static_cast<double>(c.tp);
        const double dets = static_cast<double>(c.tp + c.fp);
        c.precision = dets > 0.0 ? tp / dets : 0.0;
        c.recall = tp / static_cast<double>(c.gt_count);
        auto it = scored.find(cid);
        c.ap = it == scored.end() ? 0.0 : average_precision(it->second, c.gt_count);
        ap_sum += c.ap;
        report.per_class.push_back(c);
    }
    report.map = ap_sum / static_cast<double>(classes.size());
    return report;
}

std::string report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["iou_threshold"] = r.iou_threshold;
    j["map"] = r.map;
    j["classes"] = nlohmann::ordered_json::array();
    for (const auto& c : r.per_class) {
        nlohmann::ordered_json cj;
        cj["class_id"] = c.class_id;
        cj["gt_count"] = c.gt_count;
        cj["tp"] = c.tp;
        cj["fp"] = c.fp;
        cj["precision"] = c.precision;
        cj["recall"] = c.recall;
        cj["ap"] = c.ap;
        j["classes"].push_back(cj);
    }
    j["classes_without_gt"] = r.classes_without_gt;
    return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& r, const std::string& model_label) {
    char line[160];
    std::string out = "Model                          mAP@";
    std::snprintf(line, sizeof(line), "%.2f\n", r.iou_threshold);
    out += line;
    out += "----------------------------------------\n";
    std::snprintf(line, sizeof(line), "%-28s %.4f\n", model_label.c_str(), r.map);
    out += line;
    return out;
}

}  // namespace nightbird
