#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "nightbird/errors.hpp"
#include "nightbird/geometry.hpp"
#include "nightbird/rng.hpp"

using namespace nightbird;

namespace {

BBox from_corners(double x1, double y1, double x2, double y2, int cls = 0) {
    return {0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1, cls};
}

/// Straight-line restatement of greedy suppression, written without the
/// sort-then-sweep structure of the production code: repeatedly emit the
/// best remaining candidate and knock out what it overlaps.
std::vector<Detection> nms_oracle(const std::vector<Detection>& dets, const NmsOptions& opt) {
    std::vector<bool> dead(dets.size(), false);
    for (size_t i = 0; i < dets.size(); ++i)
        if (dets[i].score < opt.score_threshold) dead[i] = true;
    std::vector<Detection> out;
    for (;;) {
        size_t pick = dets.size();
        for (size_t i = 0; i < dets.size(); ++i)
            if (!dead[i] && (pick == dets.size() || dets[i].score > dets[pick].score)) pick = i;
        if (pick == dets.size()) break;
        out.push_back(dets[pick]);
        dead[pick] = true;
        for (size_t i = 0; i < dets.size(); ++i) {
            if (dead[i]) continue;
            if (dets[i].bbox.class_id != dets[pick].bbox.class_id) continue;
            if (dets[i].image_id != dets[pick].image_id) continue;
            double ov = iou(dets[pick].bbox, dets[i].bbox);
            if (opt.distance_penalized) {
                const double rho2 = std::pow(dets[pick].bbox.cx - dets[i].bbox.cx, 2) +
                                    std::pow(dets[pick].bbox.cy - dets[i].bbox.cy, 2);
                const double ew = std::max(dets[pick].bbox.x2(), dets[i].bbox.x2()) -
                                  std::min(dets[pick].bbox.x1(), dets[i].bbox.x1());
                const double eh = std::max(dets[pick].bbox.y2(), dets[i].bbox.y2()) -
                                  std::min(dets[pick].bbox.y1(), dets[i].bbox.y1());
                ov -= rho2 / (ew * ew + eh * eh);
            }
            if (ov > opt.iou_threshold) dead[i] = true;
        }
    }
    return out;
}

bool same_detections(const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].score != b[i].score || a[i].image_id != b[i].image_id) return false;
        if (a[i].bbox.cx != b[i].bbox.cx || a[i].bbox.cy != b[i].bbox.cy) return false;
        if (a[i].bbox.w != b[i].bbox.w || a[i].bbox.h != b[i].bbox.h) return false;
        if (a[i].bbox.class_id != b[i].bbox.class_id) return false;
    }
    return true;
}

std::vector<Detection> random_detections(Rng& rng, size_t n) {
    std::vector<Detection> out;
    for (size_t i = 0; i < n; ++i) {
        Detection d;
        d.bbox.cx = rng.uniform(0.2, 0.8);
        d.bbox.cy = rng.uniform(0.2, 0.8);
        d.bbox.w = rng.uniform(0.05, 0.4);
        d.bbox.h = rng.uniform(0.05, 0.4);
        d.bbox.class_id = static_cast<int>(rng.uniform_index(2));
        d.image_id = rng.uniform01() < 0.7 ? "a" : "b";
        // quantize half the scores so exact ties actually occur
        double s = rng.uniform(0.0, 1.0);
        if (rng.uniform01() < 0.5) s = std::round(s * 20.0) / 20.0;
        d.score = s;
        out.push_back(d);
    }
    return out;
}

}  // namespace

TEST_CASE("intersection-over-union closed forms") {
    const BBox a = from_corners(0, 0, 2, 2);
    const BBox b = from_corners(1, 1, 3, 3);
    CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(iou(a, from_corners(5, 5, 6, 6)) == 0.0);
    CHECK(iou(a, from_corners(2, 0, 4, 2)) == 0.0);  // edge contact only
    // b inside a: intersection = area(b)
    const BBox inner = from_corners(0.5, 0.5, 1.5, 1.5);
    CHECK(iou(a, inner) == doctest::Approx(1.0 / 4.0).epsilon(1e-12));
}

TEST_CASE("box-regression loss is zero exactly at coincidence") {
    const BBox a{0.5, 0.5, 0.2, 0.3, 0};
    CHECK(ciou_loss(a, a) == 0.0);
    for (double bump : {1e-6, 1e-3, 0.1}) {
        BBox b = a;
        b.cx += bump;
        CHECK(ciou_loss(a, b) > 0.0);
        b = a;
        b.w += bump;
        CHECK(ciou_loss(a, b) > 0.0);
        b = a;
        b.h -= bump / 2.0;
        CHECK(ciou_loss(a, b) > 0.0);
    }
}

TEST_CASE("concentric squares: only the overlap term contributes") {
    // same center (no distance penalty), same aspect (no shape penalty),
    // side 1 inside side 2: IoU 1/4
    const BBox small{0.5, 0.5, 1.0, 1.0, 0};
    const BBox big{0.5, 0.5, 2.0, 2.0, 0};
    CHECK(ciou_loss(small, big) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("box-regression loss decomposes into its three penalties") {
    // disjoint same-shape boxes: loss = 1 + rho^2/c^2 exactly
    const BBox a{0.2, 0.2, 0.1, 0.1, 0};
    const BBox b{0.8, 0.2, 0.1, 0.1, 0};
    const double ew = 0.85 - 0.15;
    const double expect = 1.0 + (0.6 * 0.6) / (ew * ew + 0.1 * 0.1);
    CHECK(ciou_loss(a, b) == doctest::Approx(expect).epsilon(1e-12));

    // concentric same-area different-aspect: aspect penalty activates
    const BBox wide{0.5, 0.5, 0.4, 0.1, 0};
    const BBox tall{0.5, 0.5, 0.1, 0.4, 0};
    const double i = iou(wide, tall);
    CHECK(ciou_loss(wide, tall) > 1.0 - i);
}

TEST_CASE("box-regression loss is symmetric") {
    Rng rng(1);
    for (int t = 0; t < 1000; ++t) {
        const BBox a{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.01, 0.5),
                     rng.uniform(0.01, 0.5), 0};
        const BBox b{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.01, 0.5),
                     rng.uniform(0.01, 0.5), 0};
        CHECK(ciou_loss(a, b) == ciou_loss(b, a));
    }
}

TEST_CASE("box validation") {
    CHECK_NOTHROW(validate_bbox({0.5, 0.5, 0.2, 0.2, 1}, "t"));
    CHECK_THROWS_AS(validate_bbox({0.5, 0.5, 0.0, 0.2, 0}, "t"), ValidationError);
    CHECK_THROWS_AS(validate_bbox({0.5, 0.5, 0.2, -0.1, 0}, "t"), ValidationError);
    CHECK_THROWS_AS(validate_bbox({0.5, 0.5, 0.2, 0.2, -1}, "t"), ValidationError);
}

TEST_CASE("suppression keeps the strongest of an overlapping pair") {
    std::vector<Detection> dets = {
        {{0.50, 0.50, 0.20, 0.20, 0}, 0.8, "img"},
        {{0.51, 0.50, 0.20, 0.20, 0}, 0.6, "img"},
        {{0.52, 0.50, 0.20, 0.20, 0}, 0.1, "img"},  // below score threshold
    };
    const auto kept = nms(dets);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.8);
}

TEST_CASE("suppression is class- and image-scoped") {
    std::vector<Detection> dets = {
        {{0.5, 0.5, 0.2, 0.2, 0}, 0.9, "img"},
        {{0.5, 0.5, 0.2, 0.2, 1}, 0.8, "img"},   // other class, same spot
        {{0.5, 0.5, 0.2, 0.2, 0}, 0.7, "other"}, // other image, same spot
    };
    CHECK(nms(dets).size() == 3);
}

TEST_CASE("equal scores break toward the earlier detection") {
    std::vector<Detection> dets = {
        {{0.50, 0.5, 0.2, 0.2, 0}, 0.6, "img"},
        {{0.51, 0.5, 0.2, 0.2, 0}, 0.6, "img"},
    };
    const auto kept = nms(dets);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].bbox.cx == 0.50);
}

TEST_CASE("far-apart same-class detections all survive") {
    std::vector<Detection> dets = {
        {{0.2, 0.2, 0.1, 0.1, 0}, 0.9, "img"},
        {{0.8, 0.8, 0.1, 0.1, 0}, 0.5, "img"},
        {{0.2, 0.8, 0.1, 0.1, 0}, 0.7, "img"},
    };
    const auto kept = nms(dets);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].score == 0.9);  // score-descending output
    CHECK(kept[1].score == 0.7);
    CHECK(kept[2].score == 0.5);
}

TEST_CASE("distance penalty can rescue a shifted overlap") {
    // heavy overlap with offset centers: plain IoU suppresses, the penalized
    // overlap drops under the threshold and keeps both
    std::vector<Detection> dets = {
        {{0.45, 0.5, 0.3, 0.1, 0}, 0.9, "img"},
        {{0.55, 0.5, 0.3, 0.1, 0}, 0.8, "img"},
    };
    NmsOptions opt;
    opt.iou_threshold = 0.45;
    REQUIRE(iou(dets[0].bbox, dets[1].bbox) > opt.iou_threshold);
    CHECK(nms(dets, opt).size() == 1);
    opt.distance_penalized = true;
    CHECK(nms(dets, opt).size() == 2);
}

TEST_CASE("suppression options are validated") {
    CHECK_THROWS_AS(nms({}, NmsOptions{1.5, 0.25, false}), ValidationError);
    CHECK_THROWS_AS(nms({}, NmsOptions{0.45, -0.1, false}), ValidationError);
}

TEST_CASE("suppression matches an independent greedy oracle and is idempotent") {
    Rng rng(2);
    for (int inst = 0; inst < 100; ++inst) {
        const auto dets = random_detections(rng, 10);
        NmsOptions opt;
        opt.distance_penalized = inst % 4 == 0;
        const auto kept = nms(dets, opt);
        CHECK(same_detections(kept, nms_oracle(dets, opt)));
        CHECK(same_detections(nms(kept, opt), kept));
    }
}
