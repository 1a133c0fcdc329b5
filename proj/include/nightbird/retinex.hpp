#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nightbird/autodiff.hpp"
#include "nightbird/rng.hpp"
#include "nightbird/tensor.hpp"
#include "nightbird/tensor_io.hpp"

namespace nightbird {

struct ConvParam {
    Tensor kernel;  // (C_out, C_in, k, k)
    Tensor bias;    // (C_out)
};

// --- Decomposition network -------------------------------------------------

struct DecomArch {
    size_t feature_channels = 16;
    size_t hidden_layers = 5;
    size_t kernel_size = 3;
};

/// Feature conv, hidden conv+ReLU stack, 4-channel output conv; the final
/// sigmoid bounds reflectance (3 channels) and illumination (1 channel) to
/// [0,1].
struct DecomNetParams {
    DecomArch arch;
    ConvParam feature;
    std::vector<ConvParam> hidden;
    ConvParam output;

    static DecomNetParams init(const DecomArch& arch, Rng& rng);
};

// --- Enhancement network ---------------------------------------------------

struct EnhanceArch {
    size_t scales = 3;            // M: downsampling / upsampling block count
    size_t feature_channels = 16; // C
};

/// Encoder-decoder over concat(R, I): M stride-2 conv+ReLU blocks down, M
/// (nearest x2 + conv + ReLU) blocks up, every decoder scale upsampled to full
/// resolution and concatenated (C*M channels), 1x1 fusion, 3x3 reconstruction,
/// sigmoid.
struct EnhanceNetParams {
    EnhanceArch arch;
    std::vector<ConvParam> down;
    std::vector<ConvParam> up;
    ConvParam fusion;
    ConvParam recon;

    static EnhanceNetParams init(const EnhanceArch& arch, Rng& rng);
};

// --- Losses ----------------------------------------------------------------

struct LossCoefficients {
    double lambda_low_low = 1.0;
    double lambda_low_normal = 0.001;
    double lambda_normal_low = 0.001;
    double lambda_normal_normal = 1.0;
    double lambda_ir = 0.01;
    double lambda_is = 0.1;
    double lambda_g = 10.0;

    void validate() const;  // all non-negative, self-reconstruction weights positive
};

struct ImagePair {
    Tensor low;     // (3,H,W) in [0,1]
    Tensor normal;  // (3,H,W) in [0,1]
};

void validate_image(const Tensor& image, const char* what);
void validate_pair(const ImagePair& pair);

// --- Parameter plumbing ----------------------------------------------------

struct ParamRef {
    std::string name;
    Tensor* tensor;
};

std::vector<ParamRef> param_refs(DecomNetParams& p);
std::vector<ParamRef> param_refs(EnhanceNetParams& p);

// --- Graph builders --------------------------------------------------------

/// Parameter nodes must follow the param_refs() order of the matching net.
std::pair<NodeId, NodeId> decom_forward_node(Graph& g, NodeId s, const DecomArch& arch,
                                             const std::vector<NodeId>& params);
NodeId enhance_forward_node(Graph& g, NodeId r, NodeId illum, const EnhanceArch& arch,
                            const std::vector<NodeId>& params);

NodeId loss_recon_node(Graph& g, NodeId r_low, NodeId r_normal, NodeId i_low, NodeId i_normal,
                       NodeId s_low, NodeId s_normal, const LossCoefficients& c);
NodeId loss_ir_node(Graph& g, NodeId r_low, NodeId r_normal);
/// Structure-weighted smoothness of one illumination map against one
/// reflectance guide: mean |grad I . exp(-lambda_g mean_c grad R)| over both
/// gradient directions.
NodeId smoothness_node(Graph& g, NodeId illum, NodeId refl, double lambda_g);
NodeId loss_is_node(Graph& g, NodeId i_low, NodeId i_normal, NodeId r_low, NodeId r_normal,
                    double lambda_g);
NodeId decom_loss_node(Graph& g, NodeId s_low, NodeId s_normal, const DecomArch& arch,
                       const std::vector<NodeId>& params, const LossCoefficients& c);
NodeId enhance_loss_node(Graph& g, NodeId r_low, NodeId i_hat, NodeId s_normal,
                         const LossCoefficients& c);

// --- Tensor-level API ------------------------------------------------------

std::pair<Tensor, Tensor> decom_forward(const Tensor& s, const DecomNetParams& p);
Tensor enhance_forward(const Tensor& r, const Tensor& illum, const EnhanceNetParams& p);

double loss_recon(const Tensor& r_low, const Tensor& r_normal, const Tensor& i_low,
                  const Tensor& i_normal, const Tensor& s_low, const Tensor& s_normal,
                  const LossCoefficients& c);
double loss_ir(const Tensor& r_low, const Tensor& r_normal);
double loss_is(const Tensor& i_low, const Tensor& i_normal, const Tensor& r_low,
               const Tensor& r_normal, double lambda_g);
double decom_total_loss(const ImagePair& pair, const DecomNetParams& p,
                        const LossCoefficients& c);
double enhance_total_loss(const Tensor& r_low, const Tensor& i_hat, const Tensor& s_normal,
                          const LossCoefficients& c);

/// The losses are L1, so their gradient is undefined where an |.| argument
/// crosses zero. These return the smallest such argument magnitude over the
/// whole loss (reconstruction residuals, reflectance differences, interior
/// illumination gradients; the structurally-zero boundary gradient entries
/// never move and are skipped). Finite-difference checks are only trustworthy
/// at points whose margin comfortably clears the probe step.
double decom_l1_margin(const ImagePair& pair, const DecomNetParams& p);
double enhance_l1_margin(const Tensor& r, const Tensor& illum, const EnhanceNetParams& p,
                         const Tensor& s_normal);

/// ReLU stacks add kinks of their own: these return the smallest
/// |pre-activation| over every conv output feeding a ReLU (for the
/// decomposition net, across both images of the pair). Probing a parameter
/// moves a pre-activation by at most its sensitivity times the step, so a
/// smaller bar suffices here than for the loss-level margins.
double decom_relu_margin(const ImagePair& pair, const DecomNetParams& p);
double enhance_relu_margin(const Tensor& r, const Tensor& illum, const EnhanceNetParams& p);

// --- Training --------------------------------------------------------------

struct TrainConfig {
    double lr0 = 0.0032;           // initial learning rate
    double final_lr_factor = 0.12; // last-epoch LR = lr0 * final_lr_factor
    size_t batch_size = 16;
    size_t epochs = 100;
    double warmup_epochs = 2.0;
    double warmup_bias_lr = 0.05;
    LossCoefficients coefficients;

    void validate() const;
};

/// Learning rate at fractional epoch e: linear warmup into a linear decay
/// towards lr0 * final_lr_factor. Biases ramp from warmup_bias_lr instead
/// of 0 during warmup.
double scheduled_lr(const TrainConfig& cfg, double epoch, bool is_bias);

struct DecomTrainResult {
    DecomNetParams params;
    std::vector<double> history;  // per-epoch mean loss
};

struct EnhanceTrainResult {
    EnhanceNetParams params;
    std::vector<double> history;
};

DecomTrainResult train_decom(const std::vector<ImagePair>& pairs, const TrainConfig& cfg,
                             uint64_t seed, const DecomArch& arch = {});
EnhanceTrainResult train_enhance(const std::vector<ImagePair>& pairs,
                                 const DecomNetParams& decom, const TrainConfig& cfg,
                                 uint64_t seed, const EnhanceArch& arch = {});

/// Full enhancement: decompose, adjust illumination, recombine, clamp to [0,1].
/// With identity_illumination the adjusted map is forced to 1 and the output
/// equals the reflectance.
Tensor enhance_image(const Tensor& s_low, const DecomNetParams& decom,
                     const EnhanceNetParams& enhance, bool identity_illumination = false);

// --- Model container I/O ---------------------------------------------------

struct RetinexModel {
    DecomNetParams decom;
    EnhanceNetParams enhance;
    LossCoefficients coefficients;
    uint64_t seed = 0;
};

void save_model(const RetinexModel& model, const std::string& path);
RetinexModel load_model(const std::string& path);

}  // namespace nightbird
