#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nightbird/rng.hpp"

namespace nightbird {

/// Normalized box extents; position-free (anchors are origin-aligned priors).
struct BoxWH {
    double w = 0.0;
    double h = 0.0;
};

enum class BoxMetric { Iou, Euclidean };

std::string metric_name(BoxMetric m);
BoxMetric metric_from_name(const std::string& name);

/// Iou metric: 1 - IoU of the origin-aligned boxes. Euclidean: plain distance
/// in (w,h) space.
double box_distance(const BoxWH& a, const BoxWH& b, BoxMetric metric);

/// IoU of two boxes anchored at the same origin.
double aligned_iou(const BoxWH& a, const BoxWH& b);

/// First center uniform over boxes, each next drawn with probability
/// proportional to the squared distance to the nearest chosen center.
std::vector<BoxWH> kmeanspp_seed(const std::vector<BoxWH>& boxes, size_t k, BoxMetric metric,
                                 Rng& rng);

struct KmeansRun {
    std::vector<BoxWH> centers;
    std::vector<size_t> assignment;       // boxes.size() entries, center index each
    double inertia = 0.0;                 // mean distance to assigned center
    std::vector<double> inertia_history;  // one entry per accepted iteration, non-increasing
};

constexpr size_t kKmeansMaxIters = 300;
constexpr double kKmeansTol = 1e-6;

/// Lloyd iterations from the given centers. Recentering is the per-coordinate
/// median under the IoU metric and the mean under euclidean; empty clusters
/// are reseeded from the point farthest from its center. Stops on stable
/// assignments, center movement below tol, the iteration cap, or a step that
/// would increase inertia — that step is discarded, so the recorded inertia
/// sequence is non-increasing by construction. (Recentering minimizes a
/// squared objective, not the mean distance reported here, so such steps can
/// occur under either metric.)
KmeansRun kmeans_run(const std::vector<BoxWH>& boxes, std::vector<BoxWH> centers,
                     BoxMetric metric, size_t max_iters = kKmeansMaxIters,
                     double tol = kKmeansTol);

struct AnchorSet {
    std::vector<BoxWH> anchors;  // sorted by area ascending
    BoxMetric metric = BoxMetric::Iou;
    uint64_t seed = 0;
    double inertia = 0.0;
};

constexpr size_t kDefaultAnchorCount = 9;

AnchorSet mine_anchors(const std::vector<BoxWH>& boxes, size_t k, BoxMetric metric,
                       uint64_t seed);

/// Mean over boxes of the best origin-aligned IoU against any anchor.
double mean_best_iou(const std::vector<BoxWH>& boxes, const AnchorSet& anchors);

void save_anchors(const AnchorSet& a, const std::string& path);
AnchorSet load_anchors(const std::string& path);

}  // namespace nightbird
