#ifndef FSWAP_CODEC_HPP
#define FSWAP_CODEC_HPP

#include <memory>
#include <vector>

#include "fswap/nn.hpp"

namespace fswap {

enum class LatentSpace { image, codec_latent };

struct Latent {
    Tensor data;
    LatentSpace space = LatentSpace::codec_latent;
};

// Image <-> latent codec pair. encode validates the [0,1] input range;
// decode_var is the differentiable path used inside the enhancement losses.
class Codec {
public:
    virtual ~Codec() = default;
    virtual int latent_channels() const = 0;
    virtual int latent_size(int image_size) const = 0;
    virtual Latent encode(const Tensor& image) const = 0;
    virtual Tensor decode(const Tensor& latent) const = 0;
    virtual ag::Var decode_var(const ag::Var& latent) const = 0;
    virtual std::string name() const = 0;
};

inline Latent encode(const Codec& codec, const Tensor& image) { return codec.encode(image); }
inline Tensor decode(const Codec& codec, const Latent& z) { return codec.decode(z.data); }

void check_image_range(const Tensor& image, double tol = 1e-9);

// Pixel-space diffusion: latent == image, exact round trip.
class IdentityCodec : public Codec {
public:
    int latent_channels() const override { return 3; }
    int latent_size(int image_size) const override { return image_size; }
    Latent encode(const Tensor& image) const override {
        check_image_range(image);
        return {image, LatentSpace::codec_latent};
    }
    Tensor decode(const Tensor& latent) const override { return latent; }
    ag::Var decode_var(const ag::Var& latent) const override { return latent; }
    std::string name() const override { return "identity"; }
};

struct ConvCodecConfig {
    int image_size = 32;
    int latent_channels = 4;
    int base_channels = 24;
    int norm_groups = 4;
    std::uint64_t seed = 0;
};

// Small convolutional autoencoder: 3 x S x S -> latent_channels x S/4 x S/4,
// tanh-bounded latent, sigmoid-bounded reconstruction.
class ConvCodec : public Codec {
public:
    explicit ConvCodec(const ConvCodecConfig& cfg);

    int latent_channels() const override { return cfg_.latent_channels; }
    int latent_size(int image_size) const override { return image_size / 4; }
    Latent encode(const Tensor& image) const override;
    Tensor decode(const Tensor& latent) const override;
    ag::Var decode_var(const ag::Var& latent) const override;
    std::string name() const override { return "conv"; }

    ag::Var encode_var(const ag::Var& image) const;

    // Autoencoder pretraining on toy images; returns final mean-abs
    // reconstruction error over the training images.
    double pretrain(const std::vector<Tensor>& images, int steps, double lr, std::uint64_t seed);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const ConvCodecConfig& config() const { return cfg_; }

private:
    ConvCodecConfig cfg_;
    Conv2dLayer e1_, e2_, e3_, e4_;
    GroupNormLayer en1_, en2_, en3_;
    Conv2dLayer d1_, d2_, d3_, d4_;
    GroupNormLayer dn1_, dn2_, dn3_;
    ParamStore params_;
};

}  // namespace fswap

#endif
