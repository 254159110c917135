#include "fswap/denoiser.hpp"

namespace fswap {

Tensor stack_latents(const Tensor& z_t, const Tensor& z_inp, const BinaryMask& mask_image_res) {
    require_same_shape(z_t, z_inp, "assemble_input");
    if (mask_image_res.h() % z_t.h() || mask_image_res.w() % z_t.w())
        throw ShapeError("assemble_input: mask " + std::to_string(mask_image_res.h()) + "x" +
                         std::to_string(mask_image_res.w()) + " not divisible to latent " + z_t.shape().str());
    Tensor mask_lat = downsample_mask_area(mask_image_res, z_t.h(), z_t.w());
    Tensor stacked(2 * z_t.c() + 1, z_t.h(), z_t.w());
    std::int64_t per = static_cast<std::int64_t>(z_t.h()) * z_t.w();
    stacked.array().segment(0, z_t.c() * per) = z_t.array();
    stacked.array().segment(z_t.c() * per, z_t.c() * per) = z_inp.array();
    stacked.array().segment(2 * z_t.c() * per, per) = mask_lat.array();
    return stacked;
}

DenoiserInput assemble_input(const Tensor& z_t, const Tensor& z_inp, const BinaryMask& mask_image_res, int t,
                             const Tensor& f) {
    return {stack_latents(z_t, z_inp, mask_image_res), t, f};
}

ResBlock::ResBlock(ParamStore& ps, const std::string& prefix, int cin_, int cout_, int temb_hidden, int groups,
                   Rng& rng)
    : cin(cin_), cout(cout_), has_skip(cin_ != cout_) {
    gn1 = GroupNormLayer(ps, prefix + ".gn1", cin_, groups);
    conv1 = Conv2dLayer(ps, prefix + ".conv1", cin_, cout_, 3, rng);
    gn2 = GroupNormLayer(ps, prefix + ".gn2", cout_, groups);
    conv2 = Conv2dLayer(ps, prefix + ".conv2", cout_, cout_, 3, rng);
    temb_proj = Linear(ps, prefix + ".temb", temb_hidden, 2 * cout_, rng);
    if (has_skip) skip = Conv2dLayer(ps, prefix + ".skip", cin_, cout_, 1, rng);
}

ag::Var ResBlock::operator()(const ag::Var& x, const ag::Var& temb) const {
    ag::Var h = conv1(ag::silu(gn1(x)));
    ag::Var ss = temb_proj(ag::silu(temb));
    ag::Var scale = ag::slice_c(ss, 0, cout);
    ag::Var shift = ag::slice_c(ss, cout, cout);
    h = ag::add_bias_c(ag::mul_bias_c(gn2(h), ag::add_scalar(scale, 1.0)), shift);
    h = conv2(ag::silu(h));
    ag::Var res = has_skip ? skip(x) : x;
    return ag::add(h, res);
}

Denoiser::Denoiser(const DenoiserConfig& cfg) : cfg_(cfg) {
    if (cfg.latent_size % 4) throw ShapeError("Denoiser: latent_size must be divisible by 4");
    Rng rng(cfg.seed);
    const int C = cfg.base_channels;
    const int C2 = 2 * C;
    conv_in_ = Conv2dLayer(params_, "conv_in", cfg.in_channels(), C, 3, rng);
    temb1_ = Linear(params_, "temb1", cfg.temb_dim, cfg.temb_hidden, rng);
    temb2_ = Linear(params_, "temb2", cfg.temb_hidden, cfg.temb_hidden, rng);
    down0_ = ResBlock(params_, "down0", C, C, cfg.temb_hidden, cfg.norm_groups, rng);
    down1_ = ResBlock(params_, "down1", C, C2, cfg.temb_hidden, cfg.norm_groups, rng);
    mid1_ = ResBlock(params_, "mid1", C2, C2, cfg.temb_hidden, cfg.norm_groups, rng);
    attn_mid_ = CrossAttention(params_, "attn_mid", C2, cfg.cond_dim, cfg.attn_dim, rng);
    mid2_ = ResBlock(params_, "mid2", C2, C2, cfg.temb_hidden, cfg.norm_groups, rng);
    up1_ = ResBlock(params_, "up1", C2 + C2, C2, cfg.temb_hidden, cfg.norm_groups, rng);
    attn_up1_ = CrossAttention(params_, "attn_up1", C2, cfg.cond_dim, cfg.attn_dim, rng);
    up0_ = ResBlock(params_, "up0", C2 + C, C, cfg.temb_hidden, cfg.norm_groups, rng);
    attn_up0_ = CrossAttention(params_, "attn_up0", C, cfg.cond_dim, cfg.attn_dim, rng);
    out_norm_ = GroupNormLayer(params_, "out_norm", C, cfg.norm_groups);
    conv_out_ = Conv2dLayer(params_, "conv_out", C, cfg.latent_channels, 3, rng, 0.05);
    // zero-init: the skips switch on only where training wants them. They let
    // the eps head reproduce the exact input scale that the normalization
    // layers discard, which high-t prediction accuracy depends on.
    input_gain_ = Linear(params_, "input_gain", cfg.temb_hidden, 2 * cfg.latent_channels, rng, 0.0);
}

ag::Var Denoiser::temb_trunk(int t) const {
    ag::Var e = ag::constant(timestep_embedding(t, cfg_.temb_dim));
    return temb2_(ag::silu(temb1_(e)));
}

ag::Var Denoiser::forward(const ag::Var& stacked, int t, const ag::Var& f) const {
    ++calls_;
    if (stacked.shape().c != cfg_.in_channels() || stacked.shape().h != cfg_.latent_size ||
        stacked.shape().w != cfg_.latent_size)
        throw ShapeError("Denoiser::forward: input " + stacked.shape().str() + " vs config (" +
                         std::to_string(cfg_.in_channels()) + "," + std::to_string(cfg_.latent_size) + ")");
    if (f.shape().c != cfg_.cond_dim || f.shape().h != 1 || f.shape().w != 1)
        throw ShapeError("Denoiser::forward: condition " + f.shape().str() + " vs D=" + std::to_string(cfg_.cond_dim));
    if (!stacked.value().all_finite() || !f.value().all_finite())
        throw NumericError("Denoiser::forward: non-finite input");

    ag::Var temb = temb_trunk(t);
    ag::Var token = ag::reshape(f, Shape{1, cfg_.cond_dim, 1});  // single context token

    ag::Var h0 = down0_(conv_in_(stacked), temb);          // (C, S, S)
    ag::Var h1 = down1_(ag::avg_pool2(h0), temb);          // (2C, S/2, S/2)
    ag::Var m = ag::avg_pool2(h1);                         // (2C, S/4, S/4)
    m = mid2_(attn_mid_(mid1_(m, temb), token), temb);
    ag::Var u1 = up1_(ag::concat_c({ag::upsample2(m), h1}), temb);
    u1 = attn_up1_(u1, token);
    ag::Var u0 = up0_(ag::concat_c({ag::upsample2(u1), h0}), temb);
    u0 = attn_up0_(u0, token);
    ag::Var out = conv_out_(ag::silu(out_norm_(u0)));

    const int c = cfg_.latent_channels;
    ag::Var gains = input_gain_(ag::silu(temb));
    ag::Var z_t = ag::slice_c(stacked, 0, c);
    ag::Var z_inp = ag::slice_c(stacked, c, c);
    out = ag::add(out, ag::mul_bias_c(z_t, ag::slice_c(gains, 0, c)));
    out = ag::add(out, ag::mul_bias_c(z_inp, ag::slice_c(gains, c, c)));
    if (!out.value().all_finite()) throw NumericError("Denoiser::forward: non-finite output");
    return out;
}

Tensor predict_noise(const Denoiser& model, const DenoiserInput& input) {
    return model.forward(ag::constant(input.stacked), input.t, ag::constant(input.f)).value();
}

}  // namespace fswap
