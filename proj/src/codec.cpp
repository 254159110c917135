#include "fswap/codec.hpp"

namespace fswap {

void check_image_range(const Tensor& image, double tol) {
    double lo = image.array().minCoeff(), hi = image.array().maxCoeff();
    if (lo < -tol || hi > 1.0 + tol)
        throw RangeError("image values outside [0,1]: min=" + std::to_string(lo) + " max=" + std::to_string(hi));
}

ConvCodec::ConvCodec(const ConvCodecConfig& cfg) : cfg_(cfg) {
    if (cfg.image_size % 4) throw ShapeError("ConvCodec: image_size must be divisible by 4");
    Rng rng(cfg.seed);
    int b = cfg.base_channels;
    e1_ = Conv2dLayer(params_, "enc1", 3, b, 3, rng);
    en1_ = GroupNormLayer(params_, "enc_n1", b, cfg.norm_groups);
    e2_ = Conv2dLayer(params_, "enc2", b, 2 * b, 3, rng);
    en2_ = GroupNormLayer(params_, "enc_n2", 2 * b, cfg.norm_groups);
    e3_ = Conv2dLayer(params_, "enc3", 2 * b, 2 * b, 3, rng);
    en3_ = GroupNormLayer(params_, "enc_n3", 2 * b, cfg.norm_groups);
    e4_ = Conv2dLayer(params_, "enc4", 2 * b, cfg.latent_channels, 3, rng);
    d1_ = Conv2dLayer(params_, "dec1", cfg.latent_channels, 2 * b, 3, rng);
    dn1_ = GroupNormLayer(params_, "dec_n1", 2 * b, cfg.norm_groups);
    d2_ = Conv2dLayer(params_, "dec2", 2 * b, 2 * b, 3, rng);
    dn2_ = GroupNormLayer(params_, "dec_n2", 2 * b, cfg.norm_groups);
    d3_ = Conv2dLayer(params_, "dec3", 2 * b, b, 3, rng);
    dn3_ = GroupNormLayer(params_, "dec_n3", b, cfg.norm_groups);
    d4_ = Conv2dLayer(params_, "dec4", b, 3, 3, rng);
}

ag::Var ConvCodec::encode_var(const ag::Var& image) const {
    ag::Var h = ag::avg_pool2(ag::silu(en1_(e1_(image))));
    h = ag::avg_pool2(ag::silu(en2_(e2_(h))));
    h = ag::silu(en3_(e3_(h)));
    return ag::tanh_(e4_(h));
}

Latent ConvCodec::encode(const Tensor& image) const {
    check_image_range(image);
    if (image.h() != cfg_.image_size || image.w() != cfg_.image_size)
        throw ShapeError("ConvCodec::encode: expected " + std::to_string(cfg_.image_size) + ", got " +
                         image.shape().str());
    return {encode_var(ag::constant(image)).value(), LatentSpace::codec_latent};
}

ag::Var ConvCodec::decode_var(const ag::Var& latent) const {
    ag::Var h = ag::silu(dn1_(d1_(latent)));
    h = ag::upsample2(ag::silu(dn2_(d2_(h))));
    h = ag::upsample2(ag::silu(dn3_(d3_(h))));
    return ag::sigmoid(d4_(h));
}

Tensor ConvCodec::decode(const Tensor& latent) const { return decode_var(ag::constant(latent)).value(); }

double ConvCodec::pretrain(const std::vector<Tensor>& images, int steps, double lr, std::uint64_t seed) {
    if (images.empty()) throw RangeError("ConvCodec::pretrain: no images");
    std::vector<ag::Var> params;
    for (auto& [n, v] : params_.items()) params.push_back(v);
    AdamW opt(params, lr, 1e-5);
    Rng rng(seed);
    const int batch = 4;
    for (int s = 0; s < steps; ++s) {
        double frac = static_cast<double>(s) / steps;  // step decay for the tail of training
        opt.lr = lr * (frac < 0.5 ? 1.0 : frac < 0.75 ? 0.5 : frac < 0.9 ? 0.25 : 0.1);
        opt.zero_grad();
        ag::Var loss;
        for (int b = 0; b < batch; ++b) {
            const Tensor& img = images[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(images.size()) - 1))];
            ag::Var rec = decode_var(encode_var(ag::constant(img)));
            ag::Var l = ag::mse(rec, ag::constant(img));
            loss = loss.defined() ? ag::add(loss, l) : l;
        }
        ag::backward(loss);
        opt.step();
    }
    double mae = 0.0;
    for (const auto& img : images) {
        Tensor rec = decode(encode(img).data);
        mae += (rec.array() - img.array()).abs().mean();
    }
    return mae / static_cast<double>(images.size());
}

}  // namespace fswap
