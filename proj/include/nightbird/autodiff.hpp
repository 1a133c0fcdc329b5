#pragma once

#include <functional>
#include <vector>

#include "nightbird/tensor.hpp"

namespace nightbird {

enum class PoolMode { Avg, Max };
enum class Activation { Sigmoid, Relu };

using NodeId = size_t;

/// Reverse-mode autodiff tape over the primitive set the networks and losses
/// need. Nodes are appended in topological order; backward() walks the tape
/// once in reverse and accumulates gradients into every reachable parameter.
/// All computation is sequential and bit-deterministic.
class Graph {
public:
    /// Leaf without gradient tracking.
    NodeId input(Tensor v);
    /// Leaf whose gradient is produced by backward().
    NodeId param(Tensor v);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    /// Gradient of the last backward() loss w.r.t. node `id`. Zero for
    /// parameters the loss does not reach.
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    size_t size() const { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and back-propagates. The loss must be scalar.
    void backward(NodeId loss);

    // Elementwise; shapes must match exactly.
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);

    NodeId scale(NodeId x, double factor);
    NodeId exp(NodeId x);
    NodeId abs(NodeId x);
    NodeId activation(NodeId x, Activation kind);
    NodeId relu(NodeId x) { return activation(x, Activation::Relu); }
    NodeId sigmoid(NodeId x) { return activation(x, Activation::Sigmoid); }

    /// Zero-padded cross-correlation. x: (C_in,H,W), kernel: (C_out,C_in,kH,kW),
    /// bias: (C_out). Output (C_out,H',W') with H' = (H + 2 pad - kH)/stride + 1.
    NodeId conv2d(NodeId x, NodeId kernel, NodeId bias, size_t stride, size_t pad);

    /// (C,H,W) -> (C,1,1); per-channel mean or max over all positions.
    NodeId global_pool(NodeId x, PoolMode mode);
    /// (C,H,W) -> (1,H,W); per-pixel mean or max across channels.
    NodeId channel_pool(NodeId x, PoolMode mode);

    /// Each pixel replicated into a factor x factor block.
    NodeId upsample_nearest(NodeId x, size_t factor);

    /// Forward differences; the last column (grad_h) / row (grad_v) is zero.
    NodeId grad_h(NodeId x);
    NodeId grad_v(NodeId x);

    NodeId concat_channels(const std::vector<NodeId>& xs);
    NodeId slice_channels(NodeId x, size_t from, size_t count);

    /// out[c,h,w] = x[c,h,w] * gate[c]; gate shape (C,1,1).
    NodeId scale_channels(NodeId x, NodeId gate);
    /// out[c,h,w] = x[c,h,w] * gate[h,w]; gate shape (1,H,W).
    NodeId scale_spatial(NodeId x, NodeId gate);

    NodeId sum_all(NodeId x);
    NodeId mean_all(NodeId x);

    NodeId reshape(NodeId x, Shape new_shape);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Graph&, NodeId)> backward_fn;  // null for leaves
    };

    NodeId emplace(Tensor value, bool requires_grad,
                   std::function<void(Graph&, NodeId)> backward_fn);
    bool any_requires(const std::vector<NodeId>& ids) const;
    void accum(NodeId id, size_t i, double v) {
        if (nodes_[id].requires_grad) nodes_[id].grad.data[i] += v;
    }

    std::vector<Node> nodes_;
};

}  // namespace nightbird
