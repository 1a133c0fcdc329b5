#pragma once

#include <string>
#include <vector>

namespace nightbird {

/// Axis-aligned box, normalized center/extent coordinates.
struct BBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
    int class_id = 0;

    double x1() const { return cx - 0.5 * w; }
    double y1() const { return cy - 0.5 * h; }
    double x2() const { return cx + 0.5 * w; }
    double y2() const { return cy + 0.5 * h; }
    double area() const { return w * h; }
};

void validate_bbox(const BBox& b, const char* what);

double iou(const BBox& a, const BBox& b);

/// 1 - IoU + center-distance penalty + aspect-ratio penalty; zero iff the
/// boxes coincide geometrically.
double ciou_loss(const BBox& a, const BBox& b);

struct Detection {
    BBox bbox;
    double score = 0.0;
    std::string image_id;
};

struct NmsOptions {
    double iou_threshold = 0.45;
    double score_threshold = 0.25;
    /// Suppress by IoU minus the normalized center-distance penalty instead of
    /// plain IoU.
    bool distance_penalized = false;
};

/// Greedy suppression among detections of the same class on the same image.
/// Kept detections come out in score-descending order, ties broken by lower
/// input index.
std::vector<Detection> nms(const std::vector<Detection>& detections,
                           const NmsOptions& options = {});

}  // namespace nightbird
