#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "nightbird/errors.hpp"
#include "nightbird/metrics.hpp"
#include "nightbird/rng.hpp"

using namespace nightbird;

namespace {

Detection det(double cx, double cy, double w, double h, int cls, double score,
              std::string img = "img") {
    return {{cx, cy, w, h, cls}, score, std::move(img)};
}

GroundTruth gt(double cx, double cy, double w, double h, int cls, std::string img = "img") {
    return {{cx, cy, w, h, cls}, std::move(img)};
}

/// Textbook interpolated AP, written as a brute-force double loop: at every
/// recall step take the maximum precision over all later cut points. The
/// production code computes the same envelope with a backward running max.
double ap_oracle(std::vector<std::pair<double, bool>> scored, size_t gt_count) {
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const size_t n = scored.size();
    double ap = 0.0, r_prev = 0.0;
    size_t tp = 0;
    for (size_t k = 0; k < n; ++k) {
        tp += scored[k].second ? 1 : 0;
        const double r = static_cast<double>(tp) / static_cast<double>(gt_count);
        if (r > r_prev) {
            double pmax = 0.0;
            size_t tpj = tp;
            for (size_t j = k; j < n; ++j) {
                if (j > k) tpj += scored[j].second ? 1 : 0;
                pmax = std::max(pmax, static_cast<double>(tpj) / static_cast<double>(j + 1));
            }
            ap += (r - r_prev) * pmax;
            r_prev = r;
        }
    }
    return ap;
}

}  // namespace

TEST_CASE("precision and recall arithmetic") {
    MatchResult m;
    for (int i = 0; i < 8; ++i) m.per_detection.push_back({true, i});
    for (int i = 0; i < 2; ++i) m.per_detection.push_back({false, -1});
    m.unmatched_gt = 2;
    CHECK(m.tp() == 8);
    CHECK(m.fp() == 2);
    CHECK(m.fn() == 2);
    const auto [p, r] = precision_recall(m);
    CHECK(p == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(r == doctest::Approx(0.8).epsilon(1e-12));

    // empty denominators fall back to 0 instead of dividing
    CHECK(precision_recall(MatchResult{}) == std::pair<double, double>{0.0, 0.0});
    MatchResult misses;
    misses.unmatched_gt = 3;
    CHECK(precision_recall(misses) == std::pair<double, double>{0.0, 0.0});
}

TEST_CASE("average precision on the worked three-detection example") {
    // 2 ground truths; ranked TP, FP, TP
    const double ap = average_precision({{0.9, true}, {0.8, false}, {0.7, true}}, 2);
    CHECK(ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(std::abs(ap - 0.83333) < 5e-6);
}

TEST_CASE("average precision edge cases") {
    CHECK(average_precision({}, 4) == 0.0);
    CHECK(average_precision({{0.9, false}, {0.5, false}}, 2) == 0.0);
    CHECK(average_precision({{0.9, true}}, 1) == 1.0);
    // late TP after a flood of FPs: envelope lifts the early segment
    CHECK(average_precision({{0.9, true}, {0.8, false}, {0.7, false}, {0.6, true}}, 2) ==
          doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(average_precision({{0.9, true}}, 0), ValidationError);
}

TEST_CASE("average precision matches the brute-force envelope oracle") {
    Rng rng(3);
    for (int inst = 0; inst < 200; ++inst) {
        const size_t n = 1 + rng.uniform_index(20);
        const bool quantize = rng.uniform01() < 0.5;  // provoke exact score ties
        std::vector<std::pair<double, bool>> scored;
        size_t tp_total = 0;
        for (size_t i = 0; i < n; ++i) {
            double s = rng.uniform(0.0, 1.0);
            if (quantize) s = std::round(s * 10.0) / 10.0;
            const bool tp = rng.uniform01() < 0.5;
            tp_total += tp ? 1 : 0;
            scored.push_back({s, tp});
        }
        const size_t gt_count = std::max<size_t>(1, tp_total + rng.uniform_index(4));
        CHECK(std::abs(average_precision(scored, gt_count) - ap_oracle(scored, gt_count)) <=
              1e-12);
    }
}

TEST_CASE("average precision ignores monotone score warps") {
    Rng rng(4);
    std::vector<std::pair<double, bool>> scored;
    for (int i = 0; i < 30; ++i)
        scored.push_back({std::round(rng.uniform(0.0, 1.0) * 10.0) / 10.0,
                          rng.uniform01() < 0.4});
    auto warped = scored;
    for (auto& [s, tp] : warped) s = 0.1 + s / 3.0;  // order- and tie-preserving
    CHECK(average_precision(scored, 12) == average_precision(warped, 12));
}

TEST_CASE("matching picks the best-overlap ground truth") {
    const std::vector<GroundTruth> gts = {
        gt(0.30, 0.5, 0.2, 0.2, 0),
        gt(0.34, 0.5, 0.2, 0.2, 0),  // closer to the detection
    };
    const auto m = match_detections({det(0.35, 0.5, 0.2, 0.2, 0, 0.9)}, gts);
    REQUIRE(m.per_detection.size() == 1);
    CHECK(m.per_detection[0].tp);
    CHECK(m.per_detection[0].gt_index == 1);
    CHECK(m.unmatched_gt == 1);
}

TEST_CASE("matching is one-to-one with scores deciding priority") {
    const std::vector<GroundTruth> gts = {gt(0.5, 0.5, 0.2, 0.2, 0)};
    // the later, stronger detection wins the only ground truth
    const auto m = match_detections(
        {det(0.5, 0.5, 0.2, 0.2, 0, 0.6), det(0.51, 0.5, 0.2, 0.2, 0, 0.9)}, gts);
    CHECK_FALSE(m.per_detection[0].tp);
    CHECK(m.per_detection[1].tp);

    // equal scores resolve in input order
    const auto tie = match_detections(
        {det(0.51, 0.5, 0.2, 0.2, 0, 0.7), det(0.5, 0.5, 0.2, 0.2, 0, 0.7)}, gts);
    CHECK(tie.per_detection[0].tp);
    CHECK_FALSE(tie.per_detection[1].tp);
}

TEST_CASE("matching respects class, image, and the overlap threshold") {
    const std::vector<GroundTruth> gts = {gt(0.5, 0.5, 0.2, 0.2, 0, "a")};
    CHECK_FALSE(match_detections({det(0.5, 0.5, 0.2, 0.2, 1, 0.9, "a")}, gts)
                    .per_detection[0].tp);
    CHECK_FALSE(match_detections({det(0.5, 0.5, 0.2, 0.2, 0, 0.9, "b")}, gts)
                    .per_detection[0].tp);

    // overlap exactly at the threshold still counts
    const std::vector<GroundTruth> half = {gt(1.0, 0.5, 2.0, 1.0, 0)};
    const auto m = match_detections({det(0.5, 0.5, 1.0, 1.0, 0, 0.9)}, half, 0.5);
    CHECK(m.per_detection[0].tp);
    CHECK_FALSE(match_detections({det(0.5, 0.5, 1.0, 1.0, 0, 0.9)}, half, 0.51)
                    .per_detection[0].tp);

    CHECK_THROWS_AS(match_detections({}, {}, 1.2), ValidationError);
}

TEST_CASE("evaluation averages per-class average precision") {
    const std::vector<GroundTruth> gts = {
        gt(0.3, 0.3, 0.2, 0.2, 0),
        gt(0.7, 0.7, 0.2, 0.2, 1),
    };
    const std::vector<Detection> dets = {
        det(0.3, 0.3, 0.2, 0.2, 0, 0.95),  // class 0: perfect, AP 1
        det(0.2, 0.8, 0.1, 0.1, 1, 0.9),   // class 1: FP first...
        det(0.7, 0.7, 0.2, 0.2, 1, 0.8),   // ...then TP, AP 1/2
    };
    const auto rep = evaluate(dets, gts);
    REQUIRE(rep.per_class.size() == 2);
    CHECK(rep.per_class[0].class_id == 0);
    CHECK(rep.per_class[0].ap == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.per_class[1].ap == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rep.map == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(rep.per_class[1].tp == 1);
    CHECK(rep.per_class[1].fp == 1);
    CHECK(rep.per_class[1].precision == doctest::Approx(0.5));
    CHECK(rep.per_class[1].recall == doctest::Approx(1.0));
}

TEST_CASE("classes seen only in detections are reported, not scored") {
    const std::vector<GroundTruth> gts = {gt(0.3, 0.3, 0.2, 0.2, 0)};
    const std::vector<Detection> dets = {
        det(0.3, 0.3, 0.2, 0.2, 0, 0.9),
        det(0.6, 0.6, 0.1, 0.1, 7, 0.8),
        det(0.2, 0.2, 0.1, 0.1, 7, 0.7),
        det(0.8, 0.8, 0.1, 0.1, 4, 0.6),
    };
    const auto rep = evaluate(dets, gts);
    CHECK(rep.map == doctest::Approx(1.0));
    CHECK(rep.per_class.size() == 1);
    CHECK(rep.classes_without_gt == std::vector<int>{4, 7});
}

TEST_CASE("evaluation needs at least one scored class") {
    CHECK_THROWS_AS(evaluate({det(0.5, 0.5, 0.2, 0.2, 0, 0.9)}, {}), ValidationError);
}

TEST_CASE("a silent class drags the mean down to zero") {
    const std::vector<GroundTruth> gts = {
        gt(0.3, 0.3, 0.2, 0.2, 0),
        gt(0.7, 0.7, 0.2, 0.2, 1),
    };
    const auto rep = evaluate({det(0.3, 0.3, 0.2, 0.2, 0, 0.9)}, gts);
    CHECK(rep.map == doctest::Approx(0.5));
    CHECK(rep.per_class[1].ap == 0.0);
    CHECK(rep.per_class[1].recall == 0.0);
}

TEST_CASE("json report round-trips the numbers") {
    const std::vector<GroundTruth> gts = {gt(0.3, 0.3, 0.2, 0.2, 0)};
    const auto rep = evaluate({det(0.3, 0.3, 0.2, 0.2, 0, 0.9),
                               det(0.6, 0.6, 0.1, 0.1, 3, 0.5)},
                              gts, 0.5);
    const auto j = nlohmann::json::parse(report_json(rep));
    CHECK(j["iou_threshold"].get<double>() == 0.5);
    CHECK(j["map"].get<double>() == rep.map);
    REQUIRE(j["classes"].size() == 1);
    CHECK(j["classes"][0]["class_id"].get<int>() == 0);
    CHECK(j["classes"][0]["gt_count"].get<size_t>() == 1);
    CHECK(j["classes"][0]["tp"].get<size_t>() == 1);
    CHECK(j["classes"][0]["ap"].get<double>() == 1.0);
    CHECK(j["classes_without_gt"] == nlohmann::json::array({3}));
}

TEST_CASE("table report is aligned and labelled") {
    EvalReport rep;
    rep.map = 0.75;
    rep.iou_threshold = 0.5;
    const std::string table = report_table(rep, "cbam-retinex");
    CHECK(table.find("mAP@0.50") != std::string::npos);
    CHECK(table.find("cbam-retinex") != std::string::npos);
    CHECK(table.find("0.7500") != std::string::npos);
}
