#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "nightbird/geometry.hpp"

namespace nightbird {

struct GroundTruth {
    BBox bbox;
    std::string image_id;
};

struct DetectionMatch {
    bool tp = false;
    ptrdiff_t gt_index = -1;  // index into the ground-truth list, -1 for FP
};

struct MatchResult {
    std::vector<DetectionMatch> per_detection;  // aligned with the input detections
    size_t unmatched_gt = 0;

    size_t tp() const;
    size_t fp() const;
    size_t fn() const { return unmatched_gt; }
};

constexpr double kDefaultMatchIou = 0.5;

/// Greedy score-descending one-to-one matching: a detection is TP when its
/// best-IoU unmatched ground truth of the same class on the same image
/// reaches iou_thresh. Score ties keep input order.
MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<GroundTruth>& gts,
                             double iou_thresh = kDefaultMatchIou);

/// (precision, recall); each 0 when its denominator is 0.
std::pair<double, double> precision_recall(const MatchResult& m);

/// Area under the monotone precision envelope over all score thresholds.
/// `scored` holds (score, is_tp) per detection of one class; gt_count must
/// be >= 1.
double average_precision(std::vector<std::pair<double, bool>> scored, size_t gt_count);

struct ClassEval {
    int class_id = 0;
    size_t gt_count = 0;
    size_t tp = 0;
    size_t fp = 0;
    double precision = 0.0;
    double recall = 0.0;
    double ap = 0.0;
};

struct EvalReport {
    std::vector<ClassEval> per_class;      // classes with ground truth, ascending id
    std::vector<int> classes_without_gt;   // detected classes excluded from mAP
    double map = 0.0;
    double iou_threshold = kDefaultMatchIou;
};

/// Per-class matching + AP and their mean. Classes that appear only in the
/// detections carry no ground truth, cannot be scored, and are listed in
/// classes_without_gt instead of contributing to mAP.
EvalReport evaluate(const std::vector<Detection>& detections,
                    const std::vector<GroundTruth>& gts, double iou_thresh = kDefaultMatchIou);

std::string report_json(const EvalReport& r);
/// Two-column summary (model label, mAP) in the style of an ablation table.
std::string report_table(const EvalReport& r, const std::string& model_label);

}  // namespace nightbird
