#ifndef FSWAP_DENOISER_HPP
#define FSWAP_DENOISER_HPP

#include "fswap/masks.hpp"
#include "fswap/nn.hpp"

namespace fswap {

struct DenoiserConfig {
    int latent_channels = 3;  // c; the stacked input carries 2c+1 channels
    int latent_size = 32;     // must be divisible by 4
    int base_channels = 16;
    int temb_dim = 32;
    int temb_hidden = 64;
    int cond_dim = 768;  // D
    int attn_dim = 32;
    int norm_groups = 4;
    std::uint64_t seed = 0;

    int in_channels() const { return 2 * latent_channels + 1; }
};

// The argument tuple fed to the denoiser: noisy latent, inpaint-context
// latent, mask resampled to latent resolution, timestep and condition.
struct DenoiserInput {
    Tensor stacked;  // (2c+1, h, w) = [z_t | z_inp | mask]
    int t = 0;
    Tensor f;        // (D, 1, 1)
};

// [z_t | z_inp | area-downsampled mask] channel stack shared by the eval and
// training paths.
Tensor stack_latents(const Tensor& z_t, const Tensor& z_inp, const BinaryMask& mask_image_res);

DenoiserInput assemble_input(const Tensor& z_t, const Tensor& z_inp, const BinaryMask& mask_image_res, int t,
                             const Tensor& f);

// Minimal epsilon-prediction interface: the trainable U-Net implements it;
// tests plug oracle models through it.
struct EpsModel {
    virtual ~EpsModel() = default;
    virtual ag::Var forward(const ag::Var& stacked, int t, const ag::Var& f) const = 0;
    virtual int model_latent_channels() const = 0;
};

// Residual block with scale-shift timestep modulation.
struct ResBlock {
    GroupNormLayer gn1, gn2;
    Conv2dLayer conv1, conv2, skip;
    Linear temb_proj;
    int cin = 0, cout = 0;
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(ParamStore& ps, const std::string& prefix, int cin_, int cout_, int temb_hidden, int groups, Rng& rng);
    ag::Var operator()(const ag::Var& x, const ag::Var& temb) const;
};

// Small U-Net style encoder-decoder over three resolutions (S, S/2, S/4) with
// one cross-attention site per resolution; the condition enters as a single
// key/value token at every site.
class Denoiser : public EpsModel {
public:
    explicit Denoiser(const DenoiserConfig& cfg);

    // stacked: (2c+1, S, S); f: (D,1,1) -> epsilon prediction (c, S, S)
    ag::Var forward(const ag::Var& stacked, int t, const ag::Var& f) const override;
    int model_latent_channels() const override { return cfg_.latent_channels; }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const DenoiserConfig& config() const { return cfg_; }
    long forward_calls() const { return calls_; }
    void reset_forward_calls() { calls_ = 0; }

private:
    ag::Var temb_trunk(int t) const;

    DenoiserConfig cfg_;
    Conv2dLayer conv_in_;
    Linear temb1_, temb2_;
    ResBlock down0_, down1_, mid1_, mid2_, up1_, up0_;
    CrossAttention attn_mid_, attn_up1_, attn_up0_;
    GroupNormLayer out_norm_;
    Conv2dLayer conv_out_;
    Linear input_gain_;  // timestep-conditioned per-channel gains for the z_t / z_inp skips
    ParamStore params_;
    mutable long calls_ = 0;
};

// Evaluation-mode prediction: deterministic, no gradient bookkeeping exposed.
Tensor predict_noise(const Denoiser& model, const DenoiserInput& input);

}  // namespace fswap

#endif
