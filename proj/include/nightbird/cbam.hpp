#pragma once

#include <variant>
#include <vector>

#include "nightbird/autodiff.hpp"
#include "nightbird/rng.hpp"
#include "nightbird/tensor.hpp"

namespace nightbird {

/// Shared two-layer MLP of the channel attention gate. The hidden layer has
/// C/r units (ReLU); both pooled descriptors pass through the same weights.
struct ChannelAttentionParams {
    Tensor w0;  // (C/r, C)
    Tensor w1;  // (C, C/r)

    size_t channels() const { return w0.shape[1]; }
    size_t hidden() const { return w0.shape[0]; }

    /// reduction must divide channels. Weights uniform in +-1/sqrt(fan_in).
    static ChannelAttentionParams init(size_t channels, size_t reduction, Rng& rng);
    static ChannelAttentionParams zeros(size_t channels, size_t reduction);
};

/// 7x7 convolution over the two channel-pooled maps.
struct SpatialAttentionParams {
    Tensor kernel;  // (1, 2, 7, 7)
    double bias = 0.0;

    static SpatialAttentionParams init(Rng& rng);
    static SpatialAttentionParams zeros();
};

constexpr size_t kDefaultReduction = 16;

// Graph builders; parameters come in as registered nodes so gradients flow.
NodeId channel_attention_node(Graph& g, NodeId f, NodeId w0, NodeId w1);
NodeId spatial_attention_node(Graph& g, NodeId f, NodeId kernel, NodeId bias);
NodeId cbam_node(Graph& g, NodeId f, NodeId w0, NodeId w1, NodeId kernel, NodeId bias);

/// Channel gate M_c, shape (C,1,1), every value in (0,1).
Tensor channel_attention(const Tensor& f, const ChannelAttentionParams& p);
/// Spatial gate M_s, shape (1,H,W), every value in (0,1).
Tensor spatial_attention(const Tensor& f, const SpatialAttentionParams& p);
/// Channel gate applied first, spatial gate second.
Tensor cbam_apply(const Tensor& f, const ChannelAttentionParams& cp,
                  const SpatialAttentionParams& sp);

// --- Toy host network for CBAM insertion ----------------------------------

struct ToyConvLayer {
    Tensor kernel;  // (C_out, C_in, kH, kW)
    Tensor bias;    // (C_out)
    size_t stride = 1;
    size_t pad = 1;
    bool relu = true;
};

struct ToyCbamLayer {
    ChannelAttentionParams channel;
    SpatialAttentionParams spatial;
};

using ToyLayer = std::variant<ToyConvLayer, ToyCbamLayer>;

/// Minimal sequential conv net, just enough structure to splice a CBAM block
/// into and differentiate end to end.
struct ToyConvNet {
    size_t in_channels = 3;
    std::vector<ToyLayer> layers;

    /// Channel count entering layer `position` (position may equal size()).
    size_t channels_at(size_t position) const;

    /// Parameters in a fixed flattened order (layer by layer).
    std::vector<Tensor> parameters() const;
    void set_parameters(const std::vector<Tensor>& params);

    /// Forward with externally registered parameter nodes (same order as
    /// parameters()).
    NodeId forward(Graph& g, NodeId x, const std::vector<NodeId>& params) const;
    Tensor forward(const Tensor& x) const;

    static ToyConvLayer make_conv(size_t out_channels, size_t in_channels, size_t ksize,
                                  size_t stride, size_t pad, bool relu, Rng& rng);
};

/// Returns a copy of the network with a CBAM block spliced in before layer
/// `position`; the forward shape is unchanged.
ToyConvNet insert_cbam(const ToyConvNet& net, size_t position, size_t reduction, Rng& rng);

}  // namespace nightbird
