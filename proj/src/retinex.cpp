#include "nightbird/retinex.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>

#include "nightbird/errors.hpp"

namespace nightbird {

namespace {

// He-uniform kernels keep activation variance stable through the ReLU stacks;
// channel-preserving layers additionally get an identity center tap (with the
// noise shrunk to a quarter) so the stack starts as a signal-preserving chain
// and gradients reach every layer undamped — plain SGD at the small scheduled
// rates descends far too slowly otherwise. The small positive bias keeps
// initial ReLU preactivations off the kink, so no unit starts dead and
// finite-difference gradient probes stay clean.
ConvParam conv_init(size_t c_out, size_t c_in, size_t k, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(c_in * k * k));
    ConvParam p{Tensor::uniform({c_out, c_in, k, k}, rng, -bound, bound),
                Tensor::full({c_out}, 0.01)};
    if (c_out == c_in && k % 2 == 1) {
        for (double& v : p.kernel.data) v *= 0.25;
        for (size_t c = 0; c < c_out; ++c)
            p.kernel.data[((c * c_in + c) * k + k / 2) * k + k / 2] += 1.0;
    }
    return p;
}

std::vector<NodeId> register_params(Graph& g, const std::vector<ParamRef>& refs) {
    std::vector<NodeId> ids;
    ids.reserve(refs.size());
    for (const auto& r : refs) ids.push_back(g.input(*r.tensor));
    return ids;
}

NodeId l1_mean(Graph& g, NodeId a, NodeId b) { return g.mean_all(g.abs(g.sub(a, b))); }

NodeId broadcast3(Graph& g, NodeId illum) { return g.concat_channels({illum, illum, illum}); }

void check_param_count(const std::vector<NodeId>& params, size_t expected, const char* who) {
    if (params.size() != expected)
        throw ValidationError(std::string(who) + ": expected " + std::to_string(expected) +
                              " parameter nodes, got " + std::to_string(params.size()));
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double_meta(const TensorContainer& c, const std::string& key) {
    if (!c.has_meta(key)) throw ValidationError("model file: missing metadata key " + key);
    return std::stod(c.meta(key));
}

size_t parse_size_meta(const TensorContainer& c, const std::string& key) {
    if (!c.has_meta(key)) throw ValidationError("model file: missing metadata key " + key);
    return static_cast<size_t>(std::stoull(c.meta(key)));
}

}  // namespace

// --- Parameter construction ------------------------------------------------

DecomNetParams DecomNetParams::init(const DecomArch& arch, Rng& rng) {
    if (arch.feature_channels == 0 || arch.kernel_size == 0 || arch.kernel_size % 2 == 0)
        throw ValidationError("DecomArch: feature_channels must be > 0 and kernel_size odd");
    DecomNetParams p;
    p.arch = arch;
    p.feature = conv_init(arch.feature_channels, 3, arch.kernel_size, rng);
    p.hidden.reserve(arch.hidden_layers);
    for (size_t i = 0; i < arch.hidden_layers; ++i)
        p.hidden.push_back(conv_init(arch.feature_channels, arch.feature_channels,
                                     arch.kernel_size, rng));
    p.output = conv_init(4, arch.feature_channels, arch.kernel_size, rng);
    return p;
}

EnhanceNetParams EnhanceNetParams::init(const EnhanceArch& arch, Rng& rng) {
    if (arch.scales == 0 || arch.feature_channels == 0)
        throw ValidationError("EnhanceArch: scales and feature_channels must be > 0");
    EnhanceNetParams p;
    p.arch = arch;
    p.down.reserve(arch.scales);
    p.up.reserve(arch.scales);
    size_t c_in = 4;  // concat(R, I)
    for (size_t i = 0; i < arch.scales; ++i) {
        p.down.push_back(conv_init(arch.feature_channels, c_in, 3, rng));
        c_in = arch.feature_channels;
    }
    for (size_t i = 0; i < arch.scales; ++i)
        p.up.push_back(conv_init(arch.feature_channels, arch.feature_channels, 3, rng));
    p.fusion = conv_init(arch.feature_channels, arch.feature_channels * arch.scales, 1, rng);
    p.recon = conv_init(1, arch.feature_channels, 3, rng);
    return p;
}

// --- Validation ------------------------------------------------------------

void LossCoefficients::validate() const {
    const double all[] = {lambda_low_low,   lambda_low_normal, lambda_normal_low,
                          lambda_normal_normal, lambda_ir,     lambda_is,     lambda_g};
    for (double v : all)
        if (!(v >= 0.0)) throw ValidationError("loss coefficients must be non-negative");
    if (lambda_low_low <= 0.0 || lambda_normal_normal <= 0.0)
        throw ValidationError("self-reconstruction weights must be positive");
}

void validate_image(const Tensor& image, const char* what) {
    if (image.rank() != 3 || image.channels() != 3)
        throw ValidationError(std::string(what) + ": expected shape (3,H,W), got " +
                              shape_to_string(image.shape));
    if (!image.all_in_range(0.0, 1.0))
        throw ValidationError(std::string(what) + ": values must lie in [0,1]");
}

void validate_pair(const ImagePair& pair) {
    validate_image(pair.low, "ImagePair.low");
    validate_image(pair.normal, "ImagePair.normal");
    if (!pair.low.same_shape(pair.normal))
        throw ValidationError("ImagePair: low/normal shapes differ: " +
                              shape_to_string(pair.low.shape) + " vs " +
                              shape_to_string(pair.normal.shape));
}

void TrainConfig::validate() const {
    if (lr0 < 0.0 || final_lr_factor < 0.0 || warmup_epochs < 0.0 || warmup_bias_lr < 0.0)
        throw ValidationError("TrainConfig: rates and warmup must be non-negative");
    if (batch_size == 0) throw ValidationError("TrainConfig: batch_size must be >= 1");
    // epochs == 0 is legal: training becomes a no-op that returns the
    // freshly initialised parameters with an empty history.
    coefficients.validate();
}

// --- Parameter plumbing ----------------------------------------------------

std::vector<ParamRef> param_refs(DecomNetParams& p) {
    std::vector<ParamRef> refs;
    refs.push_back({"decom.feature.kernel", &p.feature.kernel});
    refs.push_back({"decom.feature.bias", &p.feature.bias});
    for (size_t i = 0; i < p.hidden.size(); ++i) {
        const std::string base = "decom.hidden" + std::to_string(i);
        refs.push_back({base + ".kernel", &p.hidden[i].kernel});
        refs.push_back({base + ".bias", &p.hidden[i].bias});
    }
    refs.push_back({"decom.output.kernel", &p.output.kernel});
    refs.push_back({"decom.output.bias", &p.output.bias});
    return refs;
}

std::vector<ParamRef> param_refs(EnhanceNetParams& p) {
    std::vector<ParamRef> refs;
    for (size_t i = 0; i < p.down.size(); ++i) {
        const std::string base = "enhance.down" + std::to_string(i);
        refs.push_back({base + ".kernel", &p.down[i].kernel});
        refs.push_back({base + ".bias", &p.down[i].bias});
    }
    for (size_t i = 0; i < p.up.size(); ++i) {
        const std::string base = "enhance.up" + std::to_string(i);
        refs.push_back({base + ".kernel", &p.up[i].kernel});
        refs.push_back({base + ".bias", &p.up[i].bias});
    }
    refs.push_back({"enhance.fusion.kernel", &p.fusion.kernel});
    refs.push_back({"enhance.fusion.bias", &p.fusion.bias});
    refs.push_back({"enhance.recon.kernel", &p.recon.kernel});
    refs.push_back({"enhance.recon.bias", &p.recon.bias});
    return refs;
}

// --- Graph builders --------------------------------------------------------

namespace {

// preacts, when given, collects every conv output feeding a ReLU: those are
// kink sites the finite-difference margin functions must account for.
std::pair<NodeId, NodeId> decom_stack(Graph& g, NodeId s, const DecomArch& arch,
                                      const std::vector<NodeId>& params,
                                      std::vector<NodeId>* preacts) {
    check_param_count(params, 2 * (arch.hidden_layers + 2), "decom_forward");
    const size_t pad = arch.kernel_size / 2;
    size_t i = 0;
    NodeId x = g.conv2d(s, params[i], params[i + 1], 1, pad);  // feature layer, no activation
    i += 2;
    for (size_t l = 0; l < arch.hidden_layers; ++l, i += 2) {
        x = g.conv2d(x, params[i], params[i + 1], 1, pad);
        if (preacts) preacts->push_back(x);
        x = g.relu(x);
    }
    NodeId out = g.sigmoid(g.conv2d(x, params[i], params[i + 1], 1, pad));
    return {g.slice_channels(out, 0, 3), g.slice_channels(out, 3, 1)};
}

}  // namespace

std::pair<NodeId, NodeId> decom_forward_node(Graph& g, NodeId s, const DecomArch& arch,
                                             const std::vector<NodeId>& params) {
    return decom_stack(g, s, arch, params, nullptr);
}

namespace {

NodeId enhance_stack(Graph& g, NodeId r, NodeId illum, const EnhanceArch& arch,
                     const std::vector<NodeId>& params, std::vector<NodeId>* preacts) {
    check_param_count(params, 2 * (2 * arch.scales + 2), "enhance_forward");
    const Tensor& rv = g.value(r);
    const size_t div = size_t{1} << arch.scales;
    const size_t h = rv.height(), w = rv.width();
    if (h % div != 0 || w % div != 0) {
        const size_t ph = (h + div - 1) / div * div, pw = (w + div - 1) / div * div;
        throw ValidationError("enhance_forward: spatial dims " + std::to_string(h) + "x" +
                              std::to_string(w) + " must be divisible by " + std::to_string(div) +
                              "; pad input to " + std::to_string(ph) + "x" + std::to_string(pw));
    }
    size_t i = 0;
    NodeId x = g.concat_channels({r, illum});
    for (size_t j = 0; j < arch.scales; ++j, i += 2) {
        x = g.conv2d(x, params[i], params[i + 1], 2, 1);
        if (preacts) preacts->push_back(x);
        x = g.relu(x);
    }
    std::vector<NodeId> scales;
    scales.reserve(arch.scales);
    for (size_t j = 0; j < arch.scales; ++j, i += 2) {
        x = g.conv2d(g.upsample_nearest(x, 2), params[i], params[i + 1], 1, 1);
        if (preacts) preacts->push_back(x);
        x = g.relu(x);
        scales.push_back(x);
    }
    // Bring every decoder scale to full resolution before fusing.
    for (size_t j = 0; j + 1 < arch.scales; ++j)
        scales[j] = g.upsample_nearest(scales[j], size_t{1} << (arch.scales - 1 - j));
    NodeId fused = g.conv2d(g.concat_channels(scales), params[i], params[i + 1], 1, 0);
    i += 2;
    NodeId rec = g.conv2d(fused, params[i], params[i + 1], 1, 1);
    return g.sigmoid(rec);
}

}  // namespace

NodeId enhance_forward_node(Graph& g, NodeId r, NodeId illum, const EnhanceArch& arch,
                            const std::vector<NodeId>& params) {
    return enhance_stack(g, r, illum, arch, params, nullptr);
}

NodeId loss_recon_node(Graph& g, NodeId r_low, NodeId r_normal, NodeId i_low, NodeId i_normal,
                       NodeId s_low, NodeId s_normal, const LossCoefficients& c) {
    NodeId il3 = broadcast3(g, i_low);
    NodeId in3 = broadcast3(g, i_normal);
    NodeId loss = g.scale(l1_mean(g, g.mul(r_low, il3), s_low), c.lambda_low_low);
    loss = g.add(loss, g.scale(l1_mean(g, g.mul(r_low, in3), s_normal), c.lambda_low_normal));
    loss = g.add(loss, g.scale(l1_mean(g, g.mul(r_normal, il3), s_low), c.lambda_normal_low));
    loss = g.add(loss, g.scale(l1_mean(g, g.mul(r_normal, in3), s_normal), c.lambda_normal_normal));
    return loss;
}

NodeId loss_ir_node(Graph& g, NodeId r_low, NodeId r_normal) {
    return l1_mean(g, r_low, r_normal);
}

NodeId smoothness_node(Graph& g, NodeId illum, NodeId refl, double lambda_g) {
    NodeId wh = g.exp(g.scale(g.channel_pool(g.grad_h(refl), PoolMode::Avg), -lambda_g));
    NodeId wv = g.exp(g.scale(g.channel_pool(g.grad_v(refl), PoolMode::Avg), -lambda_g));
    NodeId th = g.abs(g.mul(g.grad_h(illum), wh));
    NodeId tv = g.abs(g.mul(g.grad_v(illum), wv));
    return g.mean_all(g.concat_channels({th, tv}));
}

NodeId loss_is_node(Graph& g, NodeId i_low, NodeId i_normal, NodeId r_low, NodeId r_normal,
                    double lambda_g) {
    return g.add(smoothness_node(g, i_low, r_low, lambda_g),
                 smoothness_node(g, i_normal, r_normal, lambda_g));
}

NodeId decom_loss_node(Graph& g, NodeId s_low, NodeId s_normal, const DecomArch& arch,
                       const std::vector<NodeId>& params, const LossCoefficients& c) {
    auto [r_low, i_low] = decom_forward_node(g, s_low, arch, params);
    auto [r_normal, i_normal] = decom_forward_node(g, s_normal, arch, params);
    NodeId loss = loss_recon_node(g, r_low, r_normal, i_low, i_normal, s_low, s_normal, c);
    loss = g.add(loss, g.scale(loss_ir_node(g, r_low, r_normal), c.lambda_ir));
    loss = g.add(loss, g.scale(loss_is_node(g, i_low, i_normal, r_low, r_normal, c.lambda_g),
                               c.lambda_is));
    return loss;
}

NodeId enhance_loss_node(Graph& g, NodeId r_low, NodeId i_hat, NodeId s_normal,
                         const LossCoefficients& c) {
    NodeId recon = l1_mean(g, g.mul(r_low, broadcast3(g, i_hat)), s_normal);
    return g.add(recon, smoothness_node(g, i_hat, r_low, c.lambda_g));
}

// --- Tensor-level API ------------------------------------------------------

std::pair<Tensor, Tensor> decom_forward(const Tensor& s, const DecomNetParams& p) {
    validate_image(s, "decom_forward input");
    Graph g;
    DecomNetParams copy = p;
    auto ids = register_params(g, param_refs(copy));
    auto [r, i] = decom_forward_node(g, g.input(s), p.arch, ids);
    return {g.value(r), g.value(i)};
}

Tensor enhance_forward(const Tensor& r, const Tensor& illum, const EnhanceNetParams& p) {
    if (r.rank() != 3 || r.channels() != 3)
        throw ValidationError("enhance_forward: reflectance must be (3,H,W)");
    if (illum.rank() != 3 || illum.channels() != 1 || illum.height() != r.height() ||
        illum.width() != r.width())
        throw ValidationError("enhance_forward: illumination must be (1,H,W) matching R");
    Graph g;
    EnhanceNetParams copy = p;
    auto ids = register_params(g, param_refs(copy));
    NodeId out = enhance_forward_node(g, g.input(r), g.input(illum), p.arch, ids);
    return g.value(out);
}

double loss_recon(const Tensor& r_low, const Tensor& r_normal, const Tensor& i_low,
                  const Tensor& i_normal, const Tensor& s_low, const Tensor& s_normal,
                  const LossCoefficients& c) {
    Graph g;
    NodeId loss = loss_recon_node(g, g.input(r_low), g.input(r_normal), g.input(i_low),
                                  g.input(i_normal), g.input(s_low), g.input(s_normal), c);
    return g.value(loss)[0];
}

double loss_ir(const Tensor& r_low, const Tensor& r_normal) {
    Graph g;
    return g.value(loss_ir_node(g, g.input(r_low), g.input(r_normal)))[0];
}

double loss_is(const Tensor& i_low, const Tensor& i_normal, const Tensor& r_low,
               const Tensor& r_normal, double lambda_g) {
    Graph g;
    return g.value(loss_is_node(g, g.input(i_low), g.input(i_normal), g.input(r_low),
                                g.input(r_normal), lambda_g))[0];
}

double decom_total_loss(const ImagePair& pair, const DecomNetParams& p,
                        const LossCoefficients& c) {
    validate_pair(pair);
    c.validate();
    Graph g;
    DecomNetParams copy = p;
    auto ids = register_params(g, param_refs(copy));
    return g.value(decom_loss_node(g, g.input(pair.low), g.input(pair.normal), p.arch, ids, c))[0];
}

double enhance_total_loss(const Tensor& r_low, const Tensor& i_hat, const Tensor& s_normal,
                          const LossCoefficients& c) {
    Graph g;
    return g.value(enhance_loss_node(g, g.input(r_low), g.input(i_hat), g.input(s_normal), c))[0];
}

namespace {

void min_recon_residual(const Tensor& r, const Tensor& illum, const Tensor& s, double& m) {
    const size_t hw = r.height() * r.width();
    for (size_t c = 0; c < r.channels(); ++c)
        for (size_t k = 0; k < hw; ++k)
            m = std::min(m, std::fabs(r.data[c * hw + k] * illum.data[k] - s.data[c * hw + k]));
}

// forward differences; the last column/row entries are identically zero and
// carry no kink, so only interior differences count
void min_interior_grad(const Tensor& im, double& m) {
    const size_t H = im.height(), W = im.width();
    for (size_t h = 0; h < H; ++h)
        for (size_t w = 0; w < W; ++w) {
            if (w + 1 < W) m = std::min(m, std::fabs(im.at(0, h, w + 1) - im.at(0, h, w)));
            if (h + 1 < H) m = std::min(m, std::fabs(im.at(0, h + 1, w) - im.at(0, h, w)));
        }
}

}  // namespace

double decom_l1_margin(const ImagePair& pair, const DecomNetParams& p) {
    const auto [r_low, i_low] = decom_forward(pair.low, p);
    const auto [r_normal, i_normal] = decom_forward(pair.normal, p);
    double m = std::numeric_limits<double>::infinity();
    min_recon_residual(r_low, i_low, pair.low, m);
    min_recon_residual(r_low, i_normal, pair.normal, m);
    min_recon_residual(r_normal, i_low, pair.low, m);
    min_recon_residual(r_normal, i_normal, pair.normal, m);
    for (size_t k = 0; k < r_low.numel(); ++k)
        m = std::min(m, std::fabs(r_low.data[k] - r_normal.data[k]));
    min_interior_grad(i_low, m);
    min_interior_grad(i_normal, m);
    return m;
}

double enhance_l1_margin(const Tensor& r, const Tensor& illum, const EnhanceNetParams& p,
                         const Tensor& s_normal) {
    const Tensor i_hat = enhance_forward(r, illum, p);
    double m = std::numeric_limits<double>::infinity();
    min_recon_residual(r, i_hat, s_normal, m);
    min_interior_grad(i_hat, m);
    return m;
}

namespace {

double min_abs_value(const Graph& g, const std::vector<NodeId>& nodes) {
    double m = std::numeric_limits<double>::infinity();
    for (NodeId id : nodes)
        for (double v : g.value(id).data) m = std::min(m, std::fabs(v));
    return m;
}

}  // namespace

double decom_relu_margin(const ImagePair& pair, const DecomNetParams& p) {
    validate_pair(pair);
    Graph g;
    DecomNetParams copy = p;
    auto ids = register_params(g, param_refs(copy));
    std::vector<NodeId> pre;
    decom_stack(g, g.input(pair.low), p.arch, ids, &pre);
    decom_stack(g, g.input(pair.normal), p.arch, ids, &pre);
    return min_abs_value(g, pre);
}

double enhance_relu_margin(const Tensor& r, const Tensor& illum, const EnhanceNetParams& p) {
    Graph g;
    EnhanceNetParams copy = p;
    auto ids = register_params(g, param_refs(copy));
    std::vector<NodeId> pre;
    enhance_stack(g, g.input(r), g.input(illum), p.arch, ids, &pre);
    return min_abs_value(g, pre);
}

// --- Training --------------------------------------------------------------

double scheduled_lr(const TrainConfig& cfg, double epoch, bool is_bias) {
    if (cfg.warmup_epochs > 0.0 && epoch < cfg.warmup_epochs) {
        const double t = epoch / cfg.warmup_epochs;
        const double from = is_bias ? cfg.warmup_bias_lr : 0.0;
        return from + (cfg.lr0 - from) * t;
    }
    const double total = static_cast<double>(cfg.epochs);
    if (total <= cfg.warmup_epochs) return cfg.lr0;
    double t = (epoch - cfg.warmup_epochs) / (total - cfg.warmup_epochs);
    t = std::clamp(t, 0.0, 1.0);
    return cfg.lr0 * (1.0 - t * (1.0 - cfg.final_lr_factor));
}

namespace {

// One SGD run over any loss expressible as a per-pair graph. `build` returns
// the scalar loss node for pair `idx` given registered parameter nodes.
template <typename BuildFn>
std::vector<double> sgd_train(std::vector<ParamRef> refs, size_t n_pairs, const TrainConfig& cfg,
                              Rng& rng, const char* who, BuildFn build) {
    std::vector<double> history;
    history.reserve(cfg.epochs);
    std::vector<size_t> order(n_pairs);
    std::iota(order.begin(), order.end(), 0);
    const size_t steps_per_epoch = (n_pairs + cfg.batch_size - 1) / cfg.batch_size;

    std::vector<Tensor> grad_accum;
    grad_accum.reserve(refs.size());
    for (const auto& r : refs) grad_accum.push_back(Tensor::zeros(r.tensor->shape));

    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t step = 0; step < steps_per_epoch; ++step) {
            const size_t begin = step * cfg.batch_size;
            const size_t end = std::min(begin + cfg.batch_size, n_pairs);
            const double inv_batch = 1.0 / static_cast<double>(end - begin);
            for (auto& t : grad_accum) std::fill(t.data.begin(), t.data.end(), 0.0);

            double batch_loss = 0.0;
            for (size_t b = begin; b < end; ++b) {
                Graph g;
                std::vector<NodeId> ids;
                ids.reserve(refs.size());
                for (const auto& r : refs) ids.push_back(g.param(*r.tensor));
                NodeId loss = build(g, ids, order[b]);
                batch_loss += g.value(loss)[0];
                g.backward(loss);
                for (size_t p = 0; p < refs.size(); ++p) {
                    const Tensor& gd = g.grad(ids[p]);
                    for (size_t i = 0; i < gd.numel(); ++i) grad_accum[p].data[i] += gd[i];
                }
            }
            batch_loss *= inv_batch;
            if (!std::isfinite(batch_loss))
                throw NumericalError(std::string(who) + ": non-finite loss at epoch " +
                                     std::to_string(epoch) + " step " + std::to_string(step));
            epoch_loss += batch_loss * static_cast<double>(end - begin);

            const double frac_epoch = static_cast<double>(epoch) +
                                      static_cast<double>(step) / static_cast<double>(steps_per_epoch);
            for (size_t p = 0; p < refs.size(); ++p) {
                const double lr = scheduled_lr(cfg, frac_epoch, refs[p].tensor->rank() <= 1);
                if (lr == 0.0) continue;
                Tensor& t = *refs[p].tensor;
                for (size_t i = 0; i < t.numel(); ++i)
                    t.data[i] -= lr * inv_batch * grad_accum[p][i];
            }
        }
        history.push_back(epoch_loss / static_cast<double>(n_pairs));
    }
    return history;
}

}  // namespace

DecomTrainResult train_decom(const std::vector<ImagePair>& pairs, const TrainConfig& cfg,
                             uint64_t seed, const DecomArch& arch) {
    if (pairs.empty()) throw ValidationError("train_decom: empty dataset");
    cfg.validate();
    for (const auto& p : pairs) validate_pair(p);

    Rng rng(seed);
    DecomTrainResult result{DecomNetParams::init(arch, rng), {}};
    auto refs = param_refs(result.params);
    result.history = sgd_train(refs, pairs.size(), cfg, rng, "train_decom",
                               [&](Graph& g, const std::vector<NodeId>& ids, size_t idx) {
                                   return decom_loss_node(g, g.input(pairs[idx].low),
                                                          g.input(pairs[idx].normal), arch, ids,
                                                          cfg.coefficients);
                               });
    return result;
}

EnhanceTrainResult train_enhance(const std::vector<ImagePair>& pairs,
                                 const DecomNetParams& decom, const TrainConfig& cfg,
                                 uint64_t seed, const EnhanceArch& arch) {
    if (pairs.empty()) throw ValidationError("train_enhance: empty dataset");
    cfg.validate();
    for (const auto& p : pairs) validate_pair(p);

    // Decom-Net is frozen, so its outputs can be computed once per pair.
    std::vector<Tensor> r_low(pairs.size()), i_low(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        auto [r, il] = decom_forward(pairs[i].low, decom);
        r_low[i] = std::move(r);
        i_low[i] = std::move(il);
    }

    Rng rng(seed);
    EnhanceTrainResult result{EnhanceNetParams::init(arch, rng), {}};
    auto refs = param_refs(result.params);
    result.history = sgd_train(refs, pairs.size(), cfg, rng, "train_enhance",
                               [&](Graph& g, const std::vector<NodeId>& ids, size_t idx) {
                                   NodeId r = g.input(r_low[idx]);
                                   NodeId i_hat = enhance_forward_node(g, r, g.input(i_low[idx]),
                                                                       arch, ids);
                                   return enhance_loss_node(g, r, i_hat,
                                                            g.input(pairs[idx].normal),
                                                            cfg.coefficients);
                               });
    return result;
}

Tensor enhance_image(const Tensor& s_low, const DecomNetParams& decom,
                     const EnhanceNetParams& enhance, bool identity_illumination) {
    auto [r, illum] = decom_forward(s_low, decom);
    Tensor i_hat = identity_illumination ? Tensor::full(illum.shape, 1.0)
                                         : enhance_forward(r, illum, enhance);
    Tensor out = Tensor::zeros(r.shape);
    const size_t hw = r.height() * r.width();
    for (size_t c = 0; c < 3; ++c)
        for (size_t i = 0; i < hw; ++i) out.data[c * hw + i] = r.data[c * hw + i] * i_hat.data[i];
    return out.clamped(0.0, 1.0);
}

// --- Model container I/O ---------------------------------------------------

void save_model(const RetinexModel& model, const std::string& path) {
    TensorContainer c;
    c.set_meta("model", "retinex");
    c.set_meta("decom.feature_channels", std::to_string(model.decom.arch.feature_channels));
    c.set_meta("decom.hidden_layers", std::to_string(model.decom.arch.hidden_layers));
    c.set_meta("decom.kernel_size", std::to_string(model.decom.arch.kernel_size));
    c.set_meta("enhance.scales", std::to_string(model.enhance.arch.scales));
    c.set_meta("enhance.feature_channels", std::to_string(model.enhance.arch.feature_channels));
    const LossCoefficients& k = model.coefficients;
    c.set_meta("coeff.lambda_low_low", fmt_double(k.lambda_low_low));
    c.set_meta("coeff.lambda_low_normal", fmt_double(k.lambda_low_normal));
    c.set_meta("coeff.lambda_normal_low", fmt_double(k.lambda_normal_low));
    c.set_meta("coeff.lambda_normal_normal", fmt_double(k.lambda_normal_normal));
    c.set_meta("coeff.lambda_ir", fmt_double(k.lambda_ir));
    c.set_meta("coeff.lambda_is", fmt_double(k.lambda_is));
    c.set_meta("coeff.lambda_g", fmt_double(k.lambda_g));
    c.set_meta("seed", std::to_string(model.seed));

    RetinexModel copy = model;
    for (const auto& r : param_refs(copy.decom)) c.add(r.name, *r.tensor);
    for (const auto& r : param_refs(copy.enhance)) c.add(r.name, *r.tensor);
    c.save(path);
}

RetinexModel load_model(const std::string& path) {
    TensorContainer c = TensorContainer::load(path);
    if (!c.has_meta("model") || c.meta("model") != "retinex")
        throw ValidationError("model file " + path + ": not a retinex model container");

    RetinexModel m;
    DecomArch da;
    da.feature_channels = parse_size_meta(c, "decom.feature_channels");
    da.hidden_layers = parse_size_meta(c, "decom.hidden_layers");
    da.kernel_size = parse_size_meta(c, "decom.kernel_size");
    EnhanceArch ea;
    ea.scales = parse_size_meta(c, "enhance.scales");
    ea.feature_channels = parse_size_meta(c, "enhance.feature_channels");

    m.coefficients.lambda_low_low = parse_double_meta(c, "coeff.lambda_low_low");
    m.coefficients.lambda_low_normal = parse_double_meta(c, "coeff.lambda_low_normal");
    m.coefficients.lambda_normal_low = parse_double_meta(c, "coeff.lambda_normal_low");
    m.coefficients.lambda_normal_normal = parse_double_meta(c, "coeff.lambda_normal_normal");
    m.coefficients.lambda_ir = parse_double_meta(c, "coeff.lambda_ir");
    m.coefficients.lambda_is = parse_double_meta(c, "coeff.lambda_is");
    m.coefficients.lambda_g = parse_double_meta(c, "coeff.lambda_g");
    m.seed = std::stoull(c.has_meta("seed") ? c.meta("seed") : "0");

    Rng dummy(0);
    m.decom = DecomNetParams::init(da, dummy);
    m.enhance = EnhanceNetParams::init(ea, dummy);
    auto fill = [&](std::vector<ParamRef> refs) {
        for (auto& r : refs) {
            const Tensor& t = c.get(r.name);
            if (t.shape != r.tensor->shape)
                throw ValidationError("model file " + path + ": tensor " + r.name + " has shape " +
                                      shape_to_string(t.shape) + ", expected " +
                                      shape_to_string(r.tensor->shape));
            *r.tensor = t;
        }
    };
    fill(param_refs(m.decom));
    fill(param_refs(m.enhance));
    return m;
}

}  // namespace nightbird
