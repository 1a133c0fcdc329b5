#include "nightbird/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nightbird/errors.hpp"

namespace nightbird {

namespace {

double sigmoid_stable(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void require_rank3(const Tensor& t, const char* op) {
    if (t.rank() != 3) {
        throw ValidationError(std::string(op) + ": expected a (C,H,W) tensor, got shape " +
                              shape_to_string(t.shape));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ValidationError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape) +
                              " vs " + shape_to_string(b.shape));
    }
}

}  // namespace

NodeId Graph::emplace(Tensor value, bool requires_grad,
                      std::function<void(Graph&, NodeId)> backward_fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

bool Graph::any_requires(const std::vector<NodeId>& ids) const {
    return std::any_of(ids.begin(), ids.end(),
                       [&](NodeId id) { return nodes_[id].requires_grad; });
}

NodeId Graph::input(Tensor v) { return emplace(std::move(v), false, nullptr); }
NodeId Graph::param(Tensor v) { return emplace(std::move(v), true, nullptr); }

void Graph::backward(NodeId loss) {
    if (nodes_[loss].value.numel() != 1) {
        throw ValidationError("backward: loss node must be scalar, got shape " +
                              shape_to_string(nodes_[loss].value.shape));
    }
    for (auto& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
    nodes_[loss].grad.data[0] = 1.0;
    for (size_t i = loss + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.backward_fn) n.backward_fn(*this, i);
    }
}

NodeId Graph::add(NodeId a, NodeId b) {
    require_same_shape(nodes_[a].value, nodes_[b].value, "add");
    Tensor out = nodes_[a].value;
    const auto& vb = nodes_[b].value.data;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb[i];
    return emplace(std::move(out), any_requires({a, b}), [a, b](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        for (NodeId p : {a, b}) {
            if (!g.nodes_[p].requires_grad) continue;
            auto& gp = g.nodes_[p].grad.data;
            for (size_t i = 0; i < go.size(); ++i) gp[i] += go[i];
        }
    });
}

NodeId Graph::sub(NodeId a, NodeId b) {
    require_same_shape(nodes_[a].value, nodes_[b].value, "sub");
    Tensor out = nodes_[a].value;
    const auto& vb = nodes_[b].value.data;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb[i];
    return emplace(std::move(out), any_requires({a, b}), [a, b](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        if (g.nodes_[a].requires_grad) {
            auto& ga = g.nodes_[a].grad.data;
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (g.nodes_[b].requires_grad) {
            auto& gb = g.nodes_[b].grad.data;
            for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        }
    });
}

NodeId Graph::mul(NodeId a, NodeId b) {
    require_same_shape(nodes_[a].value, nodes_[b].value, "mul");
    Tensor out = nodes_[a].value;
    const auto& vb = nodes_[b].value.data;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb[i];
    return emplace(std::move(out), any_requires({a, b}), [a, b](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        const auto& va = g.nodes_[a].value.data;
        const auto& vb2 = g.nodes_[b].value.data;
        if (g.nodes_[a].requires_grad) {
            auto& ga = g.nodes_[a].grad.data;
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb2[i];
        }
        if (g.nodes_[b].requires_grad) {
            auto& gb = g.nodes_[b].grad.data;
            for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
        }
    });
}

NodeId Graph::scale(NodeId x, double factor) {
    Tensor out = nodes_[x].value;
    for (double& v : out.data) v *= factor;
    return emplace(std::move(out), nodes_[x].requires_grad, [x, factor](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        auto& gx = g.nodes_[x].grad.data;
        for (size_t i = 0; i < go.size(); ++i) gx[i] += factor * go[i];
    });
}

NodeId Graph::exp(NodeId x) {
    Tensor out = nodes_[x].value;
    for (double& v : out.data) v = std::exp(v);
    return emplace(std::move(out), nodes_[x].requires_grad, [x](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        const auto& vo = g.nodes_[self].value.data;
        auto& gx = g.nodes_[x].grad.data;
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * vo[i];
    });
}

NodeId Graph::abs(NodeId x) {
    Tensor out = nodes_[x].value;
    for (double& v : out.data) v = std::fabs(v);
    // Subgradient 0 at the origin.
    return emplace(std::move(out), nodes_[x].requires_grad, [x](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        const auto& vx = g.nodes_[x].value.data;
        auto& gx = g.nodes_[x].grad.data;
        for (size_t i = 0; i < go.size(); ++i) {
            if (vx[i] > 0.0) gx[i] += go[i];
            else if (vx[i] < 0.0) gx[i] -= go[i];
        }
    });
}

NodeId Graph::activation(NodeId x, Activation kind) {
    Tensor out = nodes_[x].value;
    if (kind == Activation::Sigmoid) {
        for (double& v : out.data) v = sigmoid_stable(v);
        return emplace(std::move(out), nodes_[x].requires_grad, [x](Graph& g, NodeId self) {
            const auto& go = g.nodes_[self].grad.data;
            const auto& vo = g.nodes_[self].value.data;
            auto& gx = g.nodes_[x].grad.data;
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * vo[i] * (1.0 - vo[i]);
        });
    }
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return emplace(std::move(out), nodes_[x].requires_grad, [x](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        const auto& vx = g.nodes_[x].value.data;
        auto& gx = g.nodes_[x].grad.data;
        for (size_t i = 0; i < go.size(); ++i) {
            if (vx[i] > 0.0) gx[i] += go[i];
        }
    });
}

NodeId Graph::conv2d(NodeId x, NodeId kernel, NodeId bias, size_t stride, size_t pad) {
    const Tensor& vx = nodes_[x].value;
    const Tensor& vk = nodes_[kernel].value;
    const Tensor& vb = nodes_[bias].value;
    require_rank3(vx, "conv2d");
    if (vk.rank() != 4) {
        throw ValidationError("conv2d: kernel must be (C_out,C_in,kH,kW), got " +
                              shape_to_string(vk.shape));
    }
    if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
    const size_t cin = vx.shape[0], h = vx.shape[1], w = vx.shape[2];
    const size_t cout = vk.shape[0], kh = vk.shape[2], kw = vk.shape[3];
    if (vk.shape[1] != cin) {
        throw ValidationError("conv2d: kernel expects " + std::to_string(vk.shape[1]) +
                              " input channels, input has " + std::to_string(cin));
    }
    if (vb.numel() != cout) {
        throw ValidationError("conv2d: bias length " + std::to_string(vb.numel()) +
                              " does not match " + std::to_string(cout) + " output channels");
    }
    if (kh > h + 2 * pad || kw > w + 2 * pad) {
        throw ValidationError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                              " exceeds padded input " + std::to_string(h + 2 * pad) + "x" +
                              std::to_string(w + 2 * pad));
    }
    const size_t oh = (h + 2 * pad - kh) / stride + 1;
    const size_t ow = (w + 2 * pad - kw) / stride + 1;

    Tensor out = Tensor::zeros({cout, oh, ow});
    const double* px = vx.data.data();
    const double* pk = vk.data.data();
    double* po = out.data.data();
    const long ip = static_cast<long>(pad);
    for (size_t oc = 0; oc < cout; ++oc) {
        const double b = vb.data[oc];
        for (size_t oy = 0; oy < oh; ++oy) {
            const long y0 = static_cast<long>(oy * stride) - ip;
            // valid kernel-row window at this output row
            const size_t ky_lo = static_cast<size_t>(std::max(0L, -y0));
            const size_t ky_hi = std::min(kh, static_cast<size_t>(std::max(0L, static_cast<long>(h) - y0)));
            for (size_t ox = 0; ox < ow; ++ox) {
                const long x0 = static_cast<long>(ox * stride) - ip;
                const size_t kx_lo = static_cast<size_t>(std::max(0L, -x0));
                const size_t kx_hi = std::min(kw, static_cast<size_t>(std::max(0L, static_cast<long>(w) - x0)));
                double acc = b;
                for (size_t ic = 0; ic < cin; ++ic) {
                    const double* xc = px + ic * h * w;
                    const double* kc = pk + ((oc * cin + ic) * kh) * kw;
                    for (size_t ky = ky_lo; ky < ky_hi; ++ky) {
                        const double* xrow = xc + static_cast<size_t>(y0 + static_cast<long>(ky)) * w + static_cast<size_t>(x0 + static_cast<long>(kx_lo));
                        const double* krow = kc + ky * kw + kx_lo;
                        for (size_t kxi = kx_lo; kxi < kx_hi; ++kxi) {
                            acc += *xrow++ * *krow++;
                        }
                    }
                }
                po[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }

    auto bw = [x, kernel, bias, stride, pad, cin, h, w, cout, kh, kw, oh, ow](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        const auto& vx2 = g.nodes_[x].value.data;
        const auto& vk2 = g.nodes_[kernel].value.data;
        const bool need_x = g.nodes_[x].requires_grad;
        const bool need_k = g.nodes_[kernel].requires_grad;
        const bool need_b = g.nodes_[bias].requires_grad;
        auto* gx = need_x ? g.nodes_[x].grad.data.data() : nullptr;
        auto* gk = need_k ? g.nodes_[kernel].grad.data.data() : nullptr;
        auto* gb = need_b ? g.nodes_[bias].grad.data.data() : nullptr;
        const long ip2 = static_cast<long>(pad);
        for (size_t oc = 0; oc < cout; ++oc) {
            for (size_t oy = 0; oy < oh; ++oy) {
                const long y0 = static_cast<long>(oy * stride) - ip2;
                const size_t ky_lo = static_cast<size_t>(std::max(0L, -y0));
                const size_t ky_hi = std::min(kh, static_cast<size_t>(std::max(0L, static_cast<long>(h) - y0)));
                for (size_t ox = 0; ox < ow; ++ox) {
                    const double gv = go[(oc * oh + oy) * ow + ox];
                    if (gv == 0.0) continue;
                    const long x0 = static_cast<long>(ox * stride) - ip2;
                    const size_t kx_lo = static_cast<size_t>(std::max(0L, -x0));
                    const size_t kx_hi = std::min(kw, static_cast<size_t>(std::max(0L, static_cast<long>(w) - x0)));
                    if (need_b) gb[oc] += gv;
                    for (size_t ic = 0; ic < cin; ++ic) {
                        const size_t xoff = ic * h * w;
                        const size_t koff = ((oc * cin + ic) * kh) * kw;
                        for (size_t ky = ky_lo; ky < ky_hi; ++ky) {
                            const size_t xbase = xoff + static_cast<size_t>(y0 + static_cast<long>(ky)) * w + static_cast<size_t>(x0);
                            const size_t kbase = koff + ky * kw;
                            for (size_t kxi = kx_lo; kxi < kx_hi; ++kxi) {
                                if (need_x) gx[xbase + kxi] += gv * vk2[kbase + kxi];
                                if (need_k) gk[kbase + kxi] += gv * vx2[xbase + kxi];
                            }
                        }
                    }
                }
            }
        }
    };
    return emplace(std::move(out), any_requires({x, kernel, bias}), std::move(bw));
}

NodeId Graph::global_pool(NodeId x, PoolMode mode) {
    const Tensor& vx = nodes_[x].value;
    require_rank3(vx, "global_pool");
    const size_t c = vx.shape[0], hw = vx.shape[1] * vx.shape[2];
    Tensor out = Tensor::zeros({c, 1, 1});
    if (mode == PoolMode::Avg) {
        for (size_t ci = 0; ci < c; ++ci) {
            double s = 0.0;
            for (size_t i = 0; i < hw; ++i) s += vx.data[ci * hw + i];
            out.data[ci] = s / static_cast<double>(hw);
        }
        return emplace(std::move(out), nodes_[x].requires_grad, [x, c, hw](Graph& g, NodeId self) {
            const auto& go = g.nodes_[self].grad.data;
            auto& gx = g.nodes_[x].grad.data;
            for (size_t ci = 0; ci < c; ++ci) {
                const double v = go[ci] / static_cast<double>(hw);
                for (size_t i = 0; i < hw; ++i) gx[ci * hw + i] += v;
            }
        });
    }
    // Max: gradient routes to the first maximal element per channel.
    std::vector<size_t> argmax(c);
    for (size_t ci = 0; ci < c; ++ci) {
        size_t best = 0;
        double bv = vx.data[ci * hw];
        for (size_t i = 1; i < hw; ++i) {
            if (vx.data[ci * hw + i] > bv) {
                bv = vx.data[ci * hw + i];
                best = i;
            }
        }
        argmax[ci] = best;
        out.data[ci] = bv;
    }
    return emplace(std::move(out), nodes_[x].requires_grad,
                   [x, c, hw, argmax = std::move(argmax)](Graph& g, NodeId self) {
                       const auto& go = g.nodes_[self].grad.data;
                       auto& gx = g.nodes_[x].grad.data;
                       for (size_t ci = 0; ci < c; ++ci) gx[ci * hw + argmax[ci]] += go[ci];
                   });
}

NodeId Graph::channel_pool(NodeId x, PoolMode mode) {
    const Tensor& vx = nodes_[x].value;
    require_rank3(vx, "channel_pool");
    const size_t c = vx.shape[0], hw = vx.shape[1] * vx.shape[2];
    Tensor out = Tensor::zeros({1, vx.shape[1], vx.shape[2]});
    if (mode == PoolMode::Avg) {
        for (size_t i = 0; i < hw; ++i) {
            double s = 0.0;
            for (size_t ci = 0; ci < c; ++ci) s += vx.data[ci * hw + i];
            out.data[i] = s / static_cast<double>(c);
        }
        return emplace(std::move(out), nodes_[x].requires_grad, [x, c, hw](Graph& g, NodeId self) {
            const auto& go = g.nodes_[self].grad.data;
            auto& gx = g.nodes_[x].grad.data;
            for (size_t i = 0; i < hw; ++i) {
                const double v = go[i] / static_cast<double>(c);
                for (size_t ci = 0; ci < c; ++ci) gx[ci * hw + i] += v;
            }
        });
    }
    std::vector<size_t> argmax(hw);
    for (size_t i = 0; i < hw; ++i) {
        size_t best = 0;
        double bv = vx.data[i];
        for (size_t ci = 1; ci < c; ++ci) {
            if (vx.data[ci * hw + i] > bv) {
                bv = vx.data[ci * hw + i];
                best = ci;
            }
        }
        argmax[i] = best;
        out.data[i] = bv;
    }
    return emplace(std::move(out), nodes_[x].requires_grad,
                   [x, hw, argmax = std::move(argmax)](Graph& g, NodeId self) {
                       const auto& go = g.nodes_[self].grad.data;
                       auto& gx = g.nodes_[x].grad.data;
                       for (size_t i = 0; i < hw; ++i) gx[argmax[i] * hw + i] += go[i];
                   });
}

NodeId Graph::upsample_nearest(NodeId x, size_t factor) {
    const Tensor& vx = nodes_[x].value;
    require_rank3(vx, "upsample_nearest");
    if (factor < 1) throw ValidationError("upsample_nearest: factor must be >= 1");
    const size_t c = vx.shape[0], h = vx.shape[1], w = vx.shape[2];
    Tensor out = Tensor::zeros({c, h * factor, w * factor});
    for (size_t ci = 0; ci < c; ++ci) {
        for (size_t y = 0; y < h * factor; ++y) {
            for (size_t xx = 0; xx < w * factor; ++xx) {
                out.at(ci, y, xx) = vx.at(ci, y / factor, xx / factor);
            }
        }
    }
    return emplace(std::move(out), nodes_[x].requires_grad,
                   [x, c, h, w, factor](Graph& g, NodeId self) {
                       const Tensor& go = g.nodes_[self].grad;
                       Tensor& gx = g.nodes_[x].grad;
                       for (size_t ci = 0; ci < c; ++ci) {
                           for (size_t y = 0; y < h * factor; ++y) {
                               for (size_t xx = 0; xx < w * factor; ++xx) {
                                   gx.at(ci, y / factor, xx / factor) += go.at(ci, y, xx);
                               }
                           }
                       }
                   });
}

NodeId Graph::grad_h(NodeId x) {
    const Tensor& vx = nodes_[x].value;
    require_rank3(vx, "grad_h");
    const size_t c = vx.shape[0], h = vx.shape[1], w = vx.shape[2];
    Tensor out = Tensor::zeros({c, h, w});
    for (size_t ci = 0; ci < c; ++ci)
        for (size_t y = 0; y < h; ++y)
            for (size_t xx = 0; xx + 1 < w; ++xx)
                out.at(ci, y, xx) = vx.at(ci, y, xx + 1) - vx.at(ci, y, xx);
    return emplace(std::move(out), nodes_[x].requires_grad, [x, c, h, w](Graph& g, NodeId self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& gx = g.nodes_[x].grad;
        for (size_t ci = 0; ci < c; ++ci) {
            for (size_t y = 0; y < h; ++y) {
                for (size_t xx = 0; xx < w; ++xx) {
                    double v = 0.0;
                    if (xx + 1 < w) v -= go.at(ci, y, xx);
                    if (xx > 0) v += go.at(ci, y, xx - 1);
                    gx.at(ci, y, xx) += v;
                }
            }
        }
    });
}

NodeId Graph::grad_v(NodeId x) {
    const Tensor& vx = nodes_[x].value;
    require_rank3(vx, "grad_v");
    const size_t c = vx.shape[0], h = vx.shape[1], w = vx.shape[2];
    Tensor out = Tensor::zeros({c, h, w});
    for (size_t ci = 0; ci < c; ++ci)
        for (size_t y = 0; y + 1 < h; ++y)
            for (size_t xx = 0; xx < w; ++xx)
                out.at(ci, y, xx) = vx.at(ci, y + 1, xx) - vx.at(ci, y, xx);
    return emplace(std::move(out), nodes_[x].requires_grad, [x, c, h, w](Graph& g, NodeId self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& gx = g.nodes_[x].grad;
        for (size_t ci = 0; ci < c; ++ci) {
            for (size_t y = 0; y < h; ++y) {
                for (size_t xx = 0; xx < w; ++xx) {
                    double v = 0.0;
                    if (y + 1 < h) v -= go.at(ci, y, xx);
                    if (y > 0) v += go.at(ci, y - 1, xx);
                    gx.at(ci, y, xx) += v;
                }
            }
        }
    });
}

NodeId Graph::concat_channels(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw ValidationError("concat_channels: no inputs");
    const Tensor& first = nodes_[xs[0]].value;
    require_rank3(first, "concat_channels");
    const size_t h = first.shape[1], w = first.shape[2];
    size_t ctot = 0;
    for (NodeId id : xs) {
        const Tensor& t = nodes_[id].value;
        require_rank3(t, "concat_channels");
        if (t.shape[1] != h || t.shape[2] != w) {
            throw ValidationError("concat_channels: spatial mismatch " + shape_to_string(t.shape) +
                                  " vs " + shape_to_string(first.shape));
        }
        ctot += t.shape[0];
    }
    Tensor out = Tensor::zeros({ctot, h, w});
    size_t off = 0;
    for (NodeId id : xs) {
        const Tensor& t = nodes_[id].value;
        std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<long>(off));
        off += t.numel();
    }
    return emplace(std::move(out), any_requires(xs), [xs](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        size_t off2 = 0;
        for (NodeId id : xs) {
            auto& n = g.nodes_[id];
            const size_t len = n.value.numel();
            if (n.requires_grad) {
                for (size_t i = 0; i < len; ++i) n.grad.data[i] += go[off2 + i];
            }
            off2 += len;
        }
    });
}

NodeId Graph::slice_channels(NodeId x, size_t from, size_t count) {
    const Tensor& vx = nodes_[x].value;
    require_rank3(vx, "slice_channels");
    if (from + count > vx.shape[0] || count == 0) {
        throw ValidationError("slice_channels: range [" + std::to_string(from) + ", " +
                              std::to_string(from + count) + ") out of " +
                              std::to_string(vx.shape[0]) + " channels");
    }
    const size_t hw = vx.shape[1] * vx.shape[2];
    Tensor out = Tensor::zeros({count, vx.shape[1], vx.shape[2]});
    std::copy(vx.data.begin() + static_cast<long>(from * hw),
              vx.data.begin() + static_cast<long>((from + count) * hw), out.data.begin());
    return emplace(std::move(out), nodes_[x].requires_grad,
                   [x, from, hw, count](Graph& g, NodeId self) {
                       const auto& go = g.nodes_[self].grad.data;
                       auto& gx = g.nodes_[x].grad.data;
                       for (size_t i = 0; i < count * hw; ++i) gx[from * hw + i] += go[i];
                   });
}

NodeId Graph::scale_channels(NodeId x, NodeId gate) {
    const Tensor& vx = nodes_[x].value;
    const Tensor& vg = nodes_[gate].value;
    require_rank3(vx, "scale_channels");
    if (vg.shape != Shape{vx.shape[0], 1, 1}) {
        throw ValidationError("scale_channels: gate must be (C,1,1) matching input, got " +
                              shape_to_string(vg.shape));
    }
    const size_t c = vx.shape[0], hw = vx.shape[1] * vx.shape[2];
    Tensor out = vx;
    for (size_t ci = 0; ci < c; ++ci)
        for (size_t i = 0; i < hw; ++i) out.data[ci * hw + i] *= vg.data[ci];
    return emplace(std::move(out), any_requires({x, gate}), [x, gate, c, hw](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        const auto& vx2 = g.nodes_[x].value.data;
        const auto& vg2 = g.nodes_[gate].value.data;
        if (g.nodes_[x].requires_grad) {
            auto& gx = g.nodes_[x].grad.data;
            for (size_t ci = 0; ci < c; ++ci)
                for (size_t i = 0; i < hw; ++i) gx[ci * hw + i] += go[ci * hw + i] * vg2[ci];
        }
        if (g.nodes_[gate].requires_grad) {
            auto& gg = g.nodes_[gate].grad.data;
            for (size_t ci = 0; ci < c; ++ci) {
                double s = 0.0;
                for (size_t i = 0; i < hw; ++i) s += go[ci * hw + i] * vx2[ci * hw + i];
                gg[ci] += s;
            }
        }
    });
}

NodeId Graph::scale_spatial(NodeId x, NodeId gate) {
    const Tensor& vx = nodes_[x].value;
    const Tensor& vg = nodes_[gate].value;
    require_rank3(vx, "scale_spatial");
    if (vg.shape != Shape{1, vx.shape[1], vx.shape[2]}) {
        throw ValidationError("scale_spatial: gate must be (1,H,W) matching input, got " +
                              shape_to_string(vg.shape));
    }
    const size_t c = vx.shape[0], hw = vx.shape[1] * vx.shape[2];
    Tensor out = vx;
    for (size_t ci = 0; ci < c; ++ci)
        for (size_t i = 0; i < hw; ++i) out.data[ci * hw + i] *= vg.data[i];
    return emplace(std::move(out), any_requires({x, gate}), [x, gate, c, hw](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        const auto& vx2 = g.nodes_[x].value.data;
        const auto& vg2 = g.nodes_[gate].value.data;
        if (g.nodes_[x].requires_grad) {
            auto& gx = g.nodes_[x].grad.data;
            for (size_t ci = 0; ci < c; ++ci)
                for (size_t i = 0; i < hw; ++i) gx[ci * hw + i] += go[ci * hw + i] * vg2[i];
        }
        if (g.nodes_[gate].requires_grad) {
            auto& gg = g.nodes_[gate].grad.data;
            for (size_t ci = 0; ci < c; ++ci)
                for (size_t i = 0; i < hw; ++i) gg[i] += go[ci * hw + i] * vx2[ci * hw + i];
        }
    });
}

NodeId Graph::sum_all(NodeId x) {
    const Tensor& vx = nodes_[x].value;
    double s = 0.0;
    for (double v : vx.data) s += v;
    return emplace(Tensor({1}, {s}), nodes_[x].requires_grad, [x](Graph& g, NodeId self) {
        const double gv = g.nodes_[self].grad.data[0];
        auto& gx = g.nodes_[x].grad.data;
        for (double& v : gx) v += gv;
    });
}

NodeId Graph::mean_all(NodeId x) {
    const Tensor& vx = nodes_[x].value;
    const double n = static_cast<double>(vx.numel());
    double s = 0.0;
    for (double v : vx.data) s += v;
    return emplace(Tensor({1}, {s / n}), nodes_[x].requires_grad, [x, n](Graph& g, NodeId self) {
        const double gv = g.nodes_[self].grad.data[0] / n;
        auto& gx = g.nodes_[x].grad.data;
        for (double& v : gx) v += gv;
    });
}

NodeId Graph::reshape(NodeId x, Shape new_shape) {
    const Tensor& vx = nodes_[x].value;
    if (shape_numel(new_shape) != vx.numel()) {
        throw ValidationError("reshape: cannot view " + shape_to_string(vx.shape) + " as " +
                              shape_to_string(new_shape));
    }
    Tensor out(new_shape, vx.data);
    return emplace(std::move(out), nodes_[x].requires_grad, [x](Graph& g, NodeId self) {
        const auto& go = g.nodes_[self].grad.data;
        auto& gx = g.nodes_[x].grad.data;
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
}

}  // namespace nightbird
