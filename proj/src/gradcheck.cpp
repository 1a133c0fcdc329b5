#include "nightbird/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nightbird/errors.hpp"
#include "nightbird/rng.hpp"

namespace nightbird {

namespace {

std::vector<size_t> probe_coords(size_t n, size_t max_coords, uint64_t seed, size_t param_index) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (max_coords == 0 || max_coords >= n) return idx;
    Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * (param_index + 1)));
    rng.shuffle(idx);
    idx.resize(max_coords);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckReport finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params,
                                  const std::vector<Tensor>& analytic, double eps,
                                  size_t max_coords_per_tensor, uint64_t sample_seed) {
    if (eps <= 0.0) throw ValidationError("finite_diff_check: epsilon must be positive");
    if (params.size() != analytic.size()) {
        throw ValidationError("finite_diff_check: got " + std::to_string(analytic.size()) +
                              " analytic gradients for " + std::to_string(params.size()) +
                              " parameters");
    }
    std::vector<Tensor> probe = params;
    GradCheckReport report;
    for (size_t p = 0; p < probe.size(); ++p) {
        if (!probe[p].same_shape(analytic[p])) {
            throw ValidationError("finite_diff_check: gradient shape " +
                                  shape_to_string(analytic[p].shape) +
                                  " does not match parameter shape " +
                                  shape_to_string(probe[p].shape));
        }
        const auto coords = probe_coords(probe[p].numel(), max_coords_per_tensor, sample_seed, p);
        for (size_t i : coords) {
            const double saved = probe[p].data[i];
            probe[p].data[i] = saved + eps;
            const double fp = f(probe);
            probe[p].data[i] = saved - eps;
            const double fm = f(probe);
            probe[p].data[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericalError("finite_diff_check: non-finite loss probing parameter " +
                                     std::to_string(p) + " coordinate " + std::to_string(i));
            }
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[p].data[i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p;
                report.worst_coord = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

GradCheckReport check_gradients(const GraphBuilder& build, const std::vector<Tensor>& params,
                                double eps, size_t max_coords_per_tensor, uint64_t sample_seed) {
    Graph g;
    std::vector<NodeId> ids;
    ids.reserve(params.size());
    for (const Tensor& t : params) ids.push_back(g.param(t));
    const NodeId loss = build(g, ids);
    g.backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (NodeId id : ids) analytic.push_back(g.grad(id));

    ScalarFn f = [&build](const std::vector<Tensor>& ps) {
        Graph probe;
        std::vector<NodeId> pids;
        pids.reserve(ps.size());
        for (const Tensor& t : ps) pids.push_back(probe.input(t));
        return probe.value(build(probe, pids)).data[0];
    };
    return finite_diff_check(f, params, analytic, eps, max_coords_per_tensor, sample_seed);
}

}  // namespace nightbird
