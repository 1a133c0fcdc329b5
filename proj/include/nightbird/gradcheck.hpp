#pragma once

#include <functional>
#include <vector>

#include "nightbird/autodiff.hpp"
#include "nightbird/tensor.hpp"

namespace nightbird {

struct GradCheckReport {
    double max_rel_error = 0.0;
    size_t coords_checked = 0;
    size_t worst_param = 0;
    size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Scalar function of a parameter list, re-evaluated at perturbed points.
using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

/// Central finite differences (f(p+eps) - f(p-eps)) / 2 eps against the given
/// analytic gradients. Relative error uses denominator max(|a|,|b|,1e-8).
/// With max_coords_per_tensor > 0 only a seeded subset of coordinates per
/// tensor is probed (analytic gradients are still full). A non-finite f at a
/// probe point raises NumericalError naming the coordinate.
GradCheckReport finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params,
                                  const std::vector<Tensor>& analytic, double eps,
                                  size_t max_coords_per_tensor = 0,
                                  uint64_t sample_seed = 0x5eedULL);

/// Builds the loss from parameter nodes registered in declaration order.
using GraphBuilder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

/// Convenience wrapper: runs backward() once for the analytic gradients, then
/// probes the same builder with finite differences.
GradCheckReport check_gradients(const GraphBuilder& build, const std::vector<Tensor>& params,
                                double eps, size_t max_coords_per_tensor = 0,
                                uint64_t sample_seed = 0x5eedULL);

}  // namespace nightbird
