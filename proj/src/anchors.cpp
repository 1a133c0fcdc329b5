#include "nightbird/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "nightbird/errors.hpp"

namespace nightbird {

namespace {

void validate_boxes(const std::vector<BoxWH>& boxes, const char* who) {
    if (boxes.empty()) throw ValidationError(std::string(who) + ": empty box list");
    for (const auto& b : boxes)
        if (!(b.w > 0.0 && b.w <= 1.0 && b.h > 0.0 && b.h <= 1.0))
            throw ValidationError(std::string(who) + ": box extents must lie in (0,1]");
}

size_t nearest_center(const BoxWH& b, const std::vector<BoxWH>& centers, BoxMetric metric,
                      double* dist_out) {
    size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < centers.size(); ++c) {
        const double d = box_distance(b, centers[c], metric);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (dist_out) *dist_out = best_d;
    return best;
}

double median(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_assigned_distance(const std::vector<BoxWH>& boxes, const std::vector<BoxWH>& centers,
                              const std::vector<size_t>& assignment, BoxMetric metric) {
    double sum = 0.0;
    for (size_t i = 0; i < boxes.size(); ++i)
        sum += box_distance(boxes[i], centers[assignment[i]], metric);
    return sum / static_cast<double>(boxes.size());
}

}  // namespace

std::string metric_name(BoxMetric m) { return m == BoxMetric::Iou ? "iou" : "euclidean"; }

BoxMetric metric_from_name(const std::string& name) {
    if (name == "iou") return BoxMetric::Iou;
    if (name == "euclidean") return BoxMetric::Euclidean;
    throw ValidationError("unknown box metric '" + name + "' (expected iou or euclidean)");
}

double aligned_iou(const BoxWH& a, const BoxWH& b) {
    const double inter = std::min(a.w, b.w) * std::min(a.h, b.h);
    const double uni = a.w * a.h + b.w * b.h - inter;
    return inter / uni;
}

double box_distance(const BoxWH& a, const BoxWH& b, BoxMetric metric) {
    if (metric == BoxMetric::Iou) return 1.0 - aligned_iou(a, b);
    return std::hypot(a.w - b.w, a.h - b.h);
}

std::vector<BoxWH> kmeanspp_seed(const std::vector<BoxWH>& boxes, size_t k, BoxMetric metric,
                                 Rng& rng) {
    validate_boxes(boxes, "kmeanspp_seed");
    if (k == 0) throw ValidationError("kmeanspp_seed: k must be >= 1");

    std::vector<BoxWH> centers;
    centers.reserve(k);
    centers.push_back(boxes[rng.uniform_index(boxes.size())]);

    std::vector<double> d2(boxes.size());
    while (centers.size() < k) {
        double total = 0.0;
        for (size_t i = 0; i < boxes.size(); ++i) {
            double d;
            nearest_center(boxes[i], centers, metric, &d);
            d2[i] = d * d;
            total += d2[i];
        }
        if (total == 0.0) {
            // All points coincide with existing centers; any choice is equivalent.
            centers.push_back(boxes[rng.uniform_index(boxes.size())]);
            continue;
        }
        double r = rng.uniform01() * total;
        size_t pick = boxes.size() - 1;
        for (size_t i = 0; i < boxes.size(); ++i) {
            r -= d2[i];
            if (r <= 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(boxes[pick]);
    }
    return centers;
}

KmeansRun kmeans_run(const std::vector<BoxWH>& boxes, std::vector<BoxWH> centers,
                     BoxMetric metric, size_t max_iters, double tol) {
    validate_boxes(boxes, "kmeans_run");
    if (centers.empty()) throw ValidationError("kmeans_run: no initial centers");
    const size_t k = centers.size();

    KmeansRun run;
    run.assignment.resize(boxes.size());
    for (size_t i = 0; i < boxes.size(); ++i)
        run.assignment[i] = nearest_center(boxes[i], centers, metric, nullptr);
    run.centers = std::move(centers);
    run.inertia = mean_assigned_distance(boxes, run.centers, run.assignment, metric);
    run.inertia_history.push_back(run.inertia);

    for (size_t iter = 0; iter < max_iters; ++iter) {
        std::vector<BoxWH> next(k);
        std::vector<std::vector<double>> ws(k), hs(k);
        for (size_t i = 0; i < boxes.size(); ++i) {
            ws[run.assignment[i]].push_back(boxes[i].w);
            hs[run.assignment[i]].push_back(boxes[i].h);
        }
        std::vector<bool> reseeded_from(boxes.size(), false);
        for (size_t c = 0; c < k; ++c) {
            if (ws[c].empty()) {
                // Reseed from the point farthest from its assigned center.
                size_t far = boxes.size();
                double far_d = -1.0;
                for (size_t i = 0; i < boxes.size(); ++i) {
                    if (reseeded_from[i]) continue;
                    const double d =
                        box_distance(boxes[i], run.centers[run.assignment[i]], metric);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                if (far == boxes.size()) far = 0;  // more empty clusters than points
                next[c] = boxes[far];
                reseeded_from[far] = true;
            } else if (metric == BoxMetric::Iou) {
                next[c] = {median(ws[c]), median(hs[c])};
            } else {
                double sw = 0.0, sh = 0.0;
                for (double v : ws[c]) sw += v;
                for (double v : hs[c]) sh += v;
                next[c] = {sw / static_cast<double>(ws[c].size()),
                           sh / static_cast<double>(hs[c].size())};
            }
        }

        std::vector<size_t> next_assign(boxes.size());
        for (size_t i = 0; i < boxes.size(); ++i)
            next_assign[i] = nearest_center(boxes[i], next, metric, nullptr);
        const double next_inertia = mean_assigned_distance(boxes, next, next_assign, metric);
        if (next_inertia > run.inertia) break;  // recentering overshot the mean-distance objective

        double movement = 0.0;
        for (size_t c = 0; c < k; ++c)
            movement = std::max(movement, std::hypot(next[c].w - run.centers[c].w,
                                                     next[c].h - run.centers[c].h));
        const bool stable = next_assign == run.assignment;
        run.centers = std::move(next);
        run.assignment = std::move(next_assign);
        run.inertia = next_inertia;
        run.inertia_history.push_back(next_inertia);
        if (stable || movement < tol) break;
    }
    return run;
}

AnchorSet mine_anchors(const std::vector<BoxWH>& boxes, size_t k, BoxMetric metric,
                       uint64_t seed) {
    Rng rng(seed);
    KmeansRun run = kmeans_run(boxes, kmeanspp_seed(boxes, k, metric, rng), metric);
    std::sort(run.centers.begin(), run.centers.end(), [](const BoxWH& a, const BoxWH& b) {
        const double aa = a.w * a.h, ab = b.w * b.h;
        if (aa != ab) return aa < ab;
        if (a.w != b.w) return a.w < b.w;
        return a.h < b.h;
    });
    return AnchorSet{std::move(run.centers), metric, seed, run.inertia};
}

double mean_best_iou(const std::vector<BoxWH>& boxes, const AnchorSet& anchors) {
    validate_boxes(boxes, "mean_best_iou");
    if (anchors.anchors.empty()) throw ValidationError("mean_best_iou: empty anchor set");
    double sum = 0.0;
    for (const auto& b : boxes) {
        double best = 0.0;
        for (const auto& a : anchors.anchors) best = std::max(best, aligned_iou(b, a));
        sum += best;
    }
    return sum / static_cast<double>(boxes.size());
}

void save_anchors(const AnchorSet& a, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open " + path + " for writing");
    char buf[96];
    out << "anchors v1\n";
    out << "metric " << metric_name(a.metric) << "\n";
    out << "seed " << a.seed << "\n";
    out << "k " << a.anchors.size() << "\n";
    std::snprintf(buf, sizeof(buf), "inertia %.17g\n", a.inertia);
    out << buf;
    for (const auto& box : a.anchors) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", box.w, box.h);
        out << buf;
    }
    if (!out) throw ValidationError("failed writing " + path);
}

AnchorSet load_anchors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    auto fail = [&](const std::string& why) -> ValidationError {
        return ValidationError("anchors file " + path + ": " + why);
    };

    std::string line;
    if (!std::getline(in, line) || line != "anchors v1") throw fail("bad header");
    AnchorSet a;
    size_t k = 0;
    for (const char* key : {"metric", "seed", "k", "inertia"}) {
        if (!std::getline(in, line)) throw fail(std::string("missing ") + key + " line");
        std::istringstream ls(line);
        std::string got;
        ls >> got;
        if (got != key) throw fail("expected '" + std::string(key) + "', got '" + got + "'");
        if (std::string(key) == "metric") {
            std::string name;
            ls >> name;
            a.metric = metric_from_name(name);
        } else if (std::string(key) == "seed") {
            ls >> a.seed;
        } else if (std::string(key) == "k") {
            ls >> k;
        } else {
            ls >> a.inertia;
        }
        if (!ls) throw fail(std::string("unparseable ") + key + " line");
    }
    for (size_t i = 0; i < k; ++i) {
        if (!std::getline(in, line)) throw fail("expected " + std::to_string(k) + " anchors");
        std::istringstream ls(line);
        BoxWH b;
        if (!(ls >> b.w >> b.h)) throw fail("bad anchor line " + std::to_string(i + 1));
        a.anchors.push_back(b);
    }
    return a;
}

}  // namespace nightbird
