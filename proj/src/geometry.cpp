#include "nightbird/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nightbird/errors.hpp"

namespace nightbird {

void validate_bbox(const BBox& b, const char* what) {
    if (!(b.w > 0.0) || !(b.h > 0.0))
        throw ValidationError(std::string(what) + ": box extents must be positive");
    if (b.class_id < 0)
        throw ValidationError(std::string(what) + ": class id must be non-negative");
}

double iou(const BBox& a, const BBox& b) {
    const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
    const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    // areas from the same corner differences: iou(a, a) is exactly 1
    const double area_a = (a.x2() - a.x1()) * (a.y2() - a.y1());
    const double area_b = (b.x2() - b.x1()) * (b.y2() - b.y1());
    return inter / (area_a + area_b - inter);
}

namespace {

double center_penalty(const BBox& a, const BBox& b) {
    const double rho2 = (a.cx - b.cx) * (a.cx - b.cx) + (a.cy - b.cy) * (a.cy - b.cy);
    const double ew = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
    const double eh = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
    const double c2 = ew * ew + eh * eh;
    return c2 > 0.0 ? rho2 / c2 : 0.0;
}

}  // namespace

double ciou_loss(const BBox& a, const BBox& b) {
    const double i = iou(a, b);
    const double da = std::atan(a.w / a.h) - std::atan(b.w / b.h);
    const double v = 4.0 / (std::numbers::pi * std::numbers::pi) * da * da;
    const double denom = (1.0 - i) + v;
    const double alpha = denom > 0.0 ? v / denom : 0.0;
    return 1.0 - i + center_penalty(a, b) + alpha * v;
}

std::vector<Detection> nms(const std::vector<Detection>& detections, const NmsOptions& options) {
    if (!(options.iou_threshold >= 0.0 && options.iou_threshold <= 1.0))
        throw ValidationError("nms: iou_threshold must lie in [0,1]");
    if (!(options.score_threshold >= 0.0 && options.score_threshold <= 1.0))
        throw ValidationError("nms: score_threshold must lie in [0,1]");

    std::vector<size_t> order;
    order.reserve(detections.size());
    for (size_t i = 0; i < detections.size(); ++i)
        if (detections[i].score >= options.score_threshold) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return detections[a].score > detections[b].score;
    });

    std::vector<Detection> kept;
    std::vector<bool> suppressed(detections.size(), false);
    for (size_t oi = 0; oi < order.size(); ++oi) {
        const size_t i = order[oi];
        if (suppressed[i]) continue;
        kept.push_back(detections[i]);
        for (size_t oj = oi + 1; oj < order.size(); ++oj) {
            const size_t j = order[oj];
            if (suppressed[j]) continue;
            if (detections[j].bbox.class_id != detections[i].bbox.class_id) continue;
            if (detections[j].image_id != detections[i].image_id) continue;
            double overlap = iou(detections[i].bbox, detections[j].bbox);
            if (options.distance_penalized)
                overlap -= center_penalty(detections[i].bbox, detections[j].bbox);
            if (overlap > options.iou_threshold) suppressed[j] = true;
        }
    }
    return kept;
}

}  // namespace nightbird
