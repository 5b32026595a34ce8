#pragma once

#include "crossdiff/diffusion.hpp"
#include "crossdiff/nn.hpp"
#include "crossdiff/occlusion.hpp"

#include <memory>
#include <string>
#include <vector>

namespace crossdiff {

enum class Modality { bbox, center, speed };

struct ModalitySet {
    bool bbox = true;
    bool center = true;
    bool speed = true;

    int count() const { return int(bbox) + int(center) + int(speed); }
    bool has(Modality m) const {
        return m == Modality::bbox ? bbox : m == Modality::center ? center : speed;
    }
};

enum class AttentionVariant { adaln_deformable, context_concat, basic };
enum class FusionKind { gate, concat, average };

std::string to_string(AttentionVariant v);
AttentionVariant attention_variant_from_string(const std::string& s);
std::string to_string(FusionKind f);
FusionKind fusion_kind_from_string(const std::string& s);

struct DenoiserConfig {
    int model_dim = 64;
    int heads = 8;
    int encoder_layers = 2;
    int decoder_layers = 2;
    int masking_block_layers = 1;
    double dropout = 0.1;
    int raw_dim = kRawDim;
    int window = kWindow;
    double offset_clamp = 0.25;  // fraction of the axis length
    AttentionVariant attention = AttentionVariant::adaln_deformable;
    bool use_transformer_mask = true;
    // Default wiring routes the feature-stage residual from the temporal
    // stage's scaled-norm tensor; false switches to the symmetric choice
    // (the temporal stage output).
    bool spatial_residual_from_scaled = true;
    ModalitySet modalities;
    FusionKind fusion = FusionKind::gate;

    void validate() const;
};

// The eight per-token conditioning tensors one regression head emits for a
// block: scale/shift/gate plus offset context, for the temporal and the
// feature stage.
struct AdaLnParams {
    ag::Tensor scale_t, shift_t, gate_t, offset_ctx_t;
    ag::Tensor scale_s, shift_s, gate_s, offset_ctx_s;
};

struct ForwardCtx {
    bool training = false;
    Rng* rng = nullptr;
};

// Per-modality branch: projection MLP + sinusoidal positions + GRU, then a
// score-based temporal context attention over the hidden states.
class ModalityEncoder {
public:
    ModalityEncoder() = default;
    ModalityEncoder(nn::ParamStore& params, const std::string& prefix, int in_dim, int model_dim, int window,
                    Rng& rng);

    // MLP(seq) + PE through the GRU; rows are per-step hidden states.
    ag::Tensor encode(const ag::Tensor& seq) const;
    // Attention-context update g_t over the hidden states.
    ag::Tensor context(const ag::Tensor& hidden) const;
    ag::Tensor operator()(const ag::Tensor& seq) const { return context(encode(seq)); }

    struct ContextParts {
        ag::Tensor weights;  // [T x T] rows on the probability simplex
        ag::Tensor summary;  // attention-weighted hidden states
        ag::Tensor output;   // g_1..g_T
    };
    ContextParts context_parts(const ag::Tensor& hidden) const;

    int in_dim() const { return in_dim_; }

private:
    nn::Mlp2 input_mlp_;
    nn::Gru gru_;
    ag::Tensor score_hidden_, score_other_, score_vec_;  // tanh-score attention
    nn::Linear combine_;                                 // [c_t; h_t] -> D
    nn::Linear out_fc_;
    Mat pe_;
    int in_dim_ = 0;
};

// One occlusion-conditioned encoder/decoder block. In the deformable
// variant both stages resample their keys/values at offset-adjusted
// fractional grid positions; the basic variant keeps the conditioning but
// uses a plain attention + feedforward pair.
class ConditionedBlock {
public:
    ConditionedBlock() = default;
    ConditionedBlock(nn::ParamStore& params, const std::string& prefix, const DenoiserConfig& config, Rng& rng,
                     bool zero_init_gates);

    AdaLnParams regress_conditioning(const ag::Tensor& cond) const;

    // Temporal stage output plus its scaled-norm tensor (the feature stage
    // residual under the default wiring).
    struct TemporalOut {
        ag::Tensor output;
        ag::Tensor scaled_norm;
    };
    TemporalOut temporal_stage(const ag::Tensor& h_in, const AdaLnParams& p, const ForwardCtx& ctx) const;
    ag::Tensor feature_stage(const ag::Tensor& h_t, const ag::Tensor& scaled_norm_t, const AdaLnParams& p,
                             const ForwardCtx& ctx) const;

    ag::Tensor operator()(const ag::Tensor& h_in, const ag::Tensor& cond, const ForwardCtx& ctx) const;

    // Offset-adjusted sampling positions for one stage; exposed for tests.
    ag::Tensor sample_positions_time(const AdaLnParams& p) const;
    ag::Tensor sample_positions_feat(const AdaLnParams& p) const;

private:
    const DenoiserConfig* config_ = nullptr;
    nn::Mlp2 ada_;  // cond -> 8 groups, final layer zero-init
    nn::MultiHeadAttention att_time_;
    nn::MultiHeadAttention att_feat_;
    nn::Mlp2 offset_time_;
    nn::Mlp2 offset_feat_;
    ag::Tensor pos_time_;  // [T x 1], initialized to the integer grid
    ag::Tensor pos_feat_;  // [D x 1]
    nn::Linear ff_in_, ff_out_;  // basic variant second stage
};

class DenoiserModel {
public:
    // zero_init_conditioning applies the identity-at-init policy: the
    // conditioning regressors and the output head start at zero. Gradient
    // checks switch it off to obtain a fully generic operating point.
    explicit DenoiserModel(DenoiserConfig config, std::uint64_t seed = 0, bool zero_init_conditioning = true);

    // Blocks hold a pointer to the owned config and parameters are shared
    // handles, so model objects stay put once built.
    DenoiserModel(const DenoiserModel&) = delete;
    DenoiserModel& operator=(const DenoiserModel&) = delete;

    const DenoiserConfig& config() const { return config_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // --- conditioning path -------------------------------------------------
    ag::Tensor encode_modality(const ag::Tensor& seq, Modality which) const;
    ag::Tensor temporal_attention_context(const ag::Tensor& hidden, Modality which) const;
    ag::Tensor gate_fuse(const std::vector<ag::Tensor>& features) const;
    // Fused features for a masked observation window (zero-fill outside).
    ag::Tensor conditioning(const Mat& x_obs_window) const;
    ag::Tensor step_condition(const ag::Tensor& fused, int k) const;

    // --- denoising path ----------------------------------------------------
    ag::Tensor occlusion_masking_block(const ag::Tensor& enc_out, const Eigen::VectorXi& frame_bits,
                                       const ForwardCtx& ctx) const;

    ag::Tensor estimate_noise_t(const ag::Tensor& x_k, const ag::Tensor& fused_cond, const OcclusionMask& mask,
                                int k, const ForwardCtx& ctx) const;

    // Convenience full pass from raw matrices, recording no gradients.
    Mat estimate_noise(const Mat& x_k, const Mat& x_obs_window, const OcclusionMask& mask, int k) const;

    const std::vector<ConditionedBlock>& encoder_blocks() const { return encoder_; }
    const std::vector<ConditionedBlock>& decoder_blocks() const { return decoder_; }
    const ModalityEncoder& modality_encoder(Modality which) const;

private:
    DenoiserConfig config_;
    nn::ParamStore params_;
    ModalityEncoder enc_bbox_, enc_center_, enc_speed_;
    nn::Mlp2 fuse_gate_, fuse_value_;  // gate fusion MLPs over concatenated features
    nn::Linear fuse_proj_;
    nn::Mlp2 step_mlp_;
    nn::Linear input_proj_;
    nn::Linear context_proj_;  // context_concat variant
    std::vector<ConditionedBlock> encoder_;
    std::vector<ConditionedBlock> decoder_;
    std::vector<nn::TransformerLayer> masking_;
    nn::Linear output_head_;
};

// Sampler adapter: precomputes the conditioning features once and reuses
// them across every reverse step of a chain.
NoiseEstimator make_noise_estimator(const DenoiserModel& model, const Mat& x_obs_window, const OcclusionMask& mask);

}  // namespace crossdiff
