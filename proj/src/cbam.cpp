#include "nightbird/cbam.hpp"

#include <cmath>
#include <string>

#include "nightbird/errors.hpp"

namespace nightbird {

namespace {

void check_reduction(size_t channels, size_t reduction) {
    if (reduction == 0 || channels % reduction != 0) {
        throw ValidationError("channel attention: reduction " + std::to_string(reduction) +
                              " does not divide " + std::to_string(channels) + " channels");
    }
}

double init_bound(size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace

ChannelAttentionParams ChannelAttentionParams::init(size_t channels, size_t reduction, Rng& rng) {
    check_reduction(channels, reduction);
    const size_t hidden = channels / reduction;
    const double b0 = init_bound(channels);
    const double b1 = init_bound(hidden);
    return {Tensor::uniform({hidden, channels}, rng, -b0, b0),
            Tensor::uniform({channels, hidden}, rng, -b1, b1)};
}

ChannelAttentionParams ChannelAttentionParams::zeros(size_t channels, size_t reduction) {
    check_reduction(channels, reduction);
    const size_t hidden = channels / reduction;
    return {Tensor::zeros({hidden, channels}), Tensor::zeros({channels, hidden})};
}

SpatialAttentionParams SpatialAttentionParams::init(Rng& rng) {
    const double b = init_bound(2 * 7 * 7);
    return {Tensor::uniform({1, 2, 7, 7}, rng, -b, b), rng.uniform(-b, b)};
}

SpatialAttentionParams SpatialAttentionParams::zeros() {
    return {Tensor::zeros({1, 2, 7, 7}), 0.0};
}

NodeId channel_attention_node(Graph& g, NodeId f, NodeId w0, NodeId w1) {
    const Tensor& vf = g.value(f);
    const Tensor& vw0 = g.value(w0);
    const Tensor& vw1 = g.value(w1);
    if (vf.rank() != 3) {
        throw ValidationError("channel_attention: input must be (C,H,W), got " +
                              shape_to_string(vf.shape));
    }
    const size_t c = vf.shape[0];
    const size_t hidden = vw0.shape[0];
    if (vw0.shape != Shape{hidden, c} || vw1.shape != Shape{c, hidden}) {
        throw ValidationError("channel_attention: weight shapes " + shape_to_string(vw0.shape) +
                              "/" + shape_to_string(vw1.shape) + " inconsistent with " +
                              std::to_string(c) + " channels");
    }
    // The biasless MLP is a pair of 1x1 convolutions over the (C,1,1) descriptors.
    const NodeId k0 = g.reshape(w0, {hidden, c, 1, 1});
    const NodeId k1 = g.reshape(w1, {c, hidden, 1, 1});
    const NodeId zb0 = g.input(Tensor::zeros({hidden}));
    const NodeId zb1 = g.input(Tensor::zeros({c}));
    auto mlp = [&](NodeId d) {
        return g.conv2d(g.relu(g.conv2d(d, k0, zb0, 1, 0)), k1, zb1, 1, 0);
    };
    const NodeId from_avg = mlp(g.global_pool(f, PoolMode::Avg));
    const NodeId from_max = mlp(g.global_pool(f, PoolMode::Max));
    return g.sigmoid(g.add(from_avg, from_max));
}

NodeId spatial_attention_node(Graph& g, NodeId f, NodeId kernel, NodeId bias) {
    const Tensor& vk = g.value(kernel);
    if (vk.shape != Shape{1, 2, 7, 7}) {
        throw ValidationError("spatial_attention: kernel must be (1,2,7,7), got " +
                              shape_to_string(vk.shape));
    }
    if (g.value(bias).numel() != 1) {
        throw ValidationError("spatial_attention: bias must be scalar");
    }
    const NodeId pooled = g.concat_channels(
        {g.channel_pool(f, PoolMode::Avg), g.channel_pool(f, PoolMode::Max)});
    // pad 3 keeps the map at the input resolution
    return g.sigmoid(g.conv2d(pooled, kernel, g.reshape(bias, {1}), 1, 3));
}

NodeId cbam_node(Graph& g, NodeId f, NodeId w0, NodeId w1, NodeId kernel, NodeId bias) {
    const NodeId mc = channel_attention_node(g, f, w0, w1);
    const NodeId f1 = g.scale_channels(f, mc);
    const NodeId ms = spatial_attention_node(g, f1, kernel, bias);
    return g.scale_spatial(f1, ms);
}

Tensor channel_attention(const Tensor& f, const ChannelAttentionParams& p) {
    Graph g;
    return g.value(channel_attention_node(g, g.input(f), g.input(p.w0), g.input(p.w1)));
}

Tensor spatial_attention(const Tensor& f, const SpatialAttentionParams& p) {
    Graph g;
    return g.value(spatial_attention_node(g, g.input(f), g.input(p.kernel),
                                          g.input(Tensor({1}, {p.bias}))));
}

Tensor cbam_apply(const Tensor& f, const ChannelAttentionParams& cp,
                  const SpatialAttentionParams& sp) {
    Graph g;
    return g.value(cbam_node(g, g.input(f), g.input(cp.w0), g.input(cp.w1), g.input(sp.kernel),
                             g.input(Tensor({1}, {sp.bias}))));
}

size_t ToyConvNet::channels_at(size_t position) const {
    if (position > layers.size()) {
        throw ValidationError("ToyConvNet: position " + std::to_string(position) +
                              " out of range (network has " + std::to_string(layers.size()) +
                              " layers)");
    }
    size_t c = in_channels;
    for (size_t i = 0; i < position; ++i) {
        if (const auto* conv = std::get_if<ToyConvLayer>(&layers[i])) c = conv->kernel.shape[0];
    }
    return c;
}

std::vector<Tensor> ToyConvNet::parameters() const {
    std::vector<Tensor> out;
    for (const auto& layer : layers) {
        if (const auto* conv = std::get_if<ToyConvLayer>(&layer)) {
            out.push_back(conv->kernel);
            out.push_back(conv->bias);
        } else {
            const auto& cb = std::get<ToyCbamLayer>(layer);
            out.push_back(cb.channel.w0);
            out.push_back(cb.channel.w1);
            out.push_back(cb.spatial.kernel);
            out.push_back(Tensor({1}, {cb.spatial.bias}));
        }
    }
    return out;
}

void ToyConvNet::set_parameters(const std::vector<Tensor>& params) {
    size_t i = 0;
    auto take = [&]() -> const Tensor& {
        if (i >= params.size()) throw ValidationError("ToyConvNet: too few parameter tensors");
        return params[i++];
    };
    for (auto& layer : layers) {
        if (auto* conv = std::get_if<ToyConvLayer>(&layer)) {
            conv->kernel = take();
            conv->bias = take();
        } else {
            auto& cb = std::get<ToyCbamLayer>(layer);
            cb.channel.w0 = take();
            cb.channel.w1 = take();
            cb.spatial.kernel = take();
            cb.spatial.bias = take().data[0];
        }
    }
    if (i != params.size()) throw ValidationError("ToyConvNet: too many parameter tensors");
}

NodeId ToyConvNet::forward(Graph& g, NodeId x, const std::vector<NodeId>& params) const {
    size_t i = 0;
    auto take = [&]() {
        if (i >= params.size()) throw ValidationError("ToyConvNet: too few parameter nodes");
        return params[i++];
    };
    NodeId h = x;
    for (const auto& layer : layers) {
        if (const auto* conv = std::get_if<ToyConvLayer>(&layer)) {
            // sequenced takes: argument evaluation order is unspecified
            const NodeId kernel = take();
            const NodeId bias = take();
            h = g.conv2d(h, kernel, bias, conv->stride, conv->pad);
            if (conv->relu) h = g.relu(h);
        } else {
            const NodeId w0 = take(), w1 = take(), kernel = take(), bias = take();
            h = cbam_node(g, h, w0, w1, kernel, bias);
        }
    }
    return h;
}

Tensor ToyConvNet::forward(const Tensor& x) const {
    Graph g;
    std::vector<NodeId> ids;
    for (const Tensor& t : parameters()) ids.push_back(g.input(t));
    return g.value(forward(g, g.input(x), ids));
}

ToyConvLayer ToyConvNet::make_conv(size_t out_channels, size_t in_channels, size_t ksize,
                                   size_t stride, size_t pad, bool relu, Rng& rng) {
    const double b = init_bound(in_channels * ksize * ksize);
    return {Tensor::uniform({out_channels, in_channels, ksize, ksize}, rng, -b, b),
            Tensor::uniform({out_channels}, rng, -b, b), stride, pad, relu};
}

ToyConvNet insert_cbam(const ToyConvNet& net, size_t position, size_t reduction, Rng& rng) {
    const size_t c = net.channels_at(position);  // throws on bad position
    ToyCbamLayer block{ChannelAttentionParams::init(c, reduction, rng),
                       SpatialAttentionParams::init(rng)};
    ToyConvNet out = net;
    out.layers.insert(out.layers.begin() + static_cast<long>(position), std::move(block));
    return out;
}

}  // namespace nightbird
