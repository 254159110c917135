#ifndef FSWAP_NN_HPP
#define FSWAP_NN_HPP

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fswap/autodiff.hpp"
#include "fswap/common.hpp"

namespace fswap {

// Named trainable leaves. Creation order is stable, so digests, checkpoints
// and optimizer state are reproducible.
class ParamStore {
public:
    ag::Var create(const std::string& name, Tensor init);
    const std::vector<std::pair<std::string, ag::Var>>& items() const { return items_; }
    ag::Var find(const std::string& name) const;
    bool has(const std::string& name) const;
    void zero_grad();
    std::int64_t scalar_count() const;
    std::uint64_t digest() const;
    void absorb(ParamStore& other);  // move other's entries into this registry

private:
    std::vector<std::pair<std::string, ag::Var>> items_;
};

struct Linear {
    ag::Var W, b;
    int in = 0, out = 0;

    Linear() = default;
    Linear(ParamStore& ps, const std::string& prefix, int in_dim, int out_dim, Rng& rng, double init_mult = 1.0);
    ag::Var operator()(const ag::Var& x) const;  // (in,1,1) -> (out,1,1)
};

struct Conv2dLayer {
    ag::Var W, b;
    int cin = 0, cout = 0, k = 3, pad = 1;

    Conv2dLayer() = default;
    Conv2dLayer(ParamStore& ps, const std::string& prefix, int cin_, int cout_, int k_, Rng& rng,
                double init_mult = 1.0);
    ag::Var operator()(const ag::Var& x) const;
};

struct GroupNormLayer {
    ag::Var gamma, beta;
    int groups = 1;

    GroupNormLayer() = default;
    GroupNormLayer(ParamStore& ps, const std::string& prefix, int channels, int groups_);
    ag::Var operator()(const ag::Var& x) const;
};

// Cross-attention over a context token sequence (ntok, d_ctx, 1). A single
// token is the normal conditioning path; multi-token contexts exercise the
// softmax. Output projection starts near zero so the site begins as a
// near-identity residual.
struct CrossAttention {
    ag::Var Wq, Wk, Wv, Wo, bo;
    int channels = 0, d_ctx = 0, d_attn = 0;

    CrossAttention() = default;
    CrossAttention(ParamStore& ps, const std::string& prefix, int channels_, int d_ctx_, int d_attn_, Rng& rng);
    ag::Var operator()(const ag::Var& x, const ag::Var& context) const;
};

// Sinusoidal timestep features; `scale` slows the phases so neighboring
// timesteps share features (the fastest component has period 2*pi/scale).
Tensor timestep_embedding(int t, int dim, double scale = 0.1);

// Pluggable image -> feature-vector encoder. Frozen instances are shared
// read-only; gradients still flow through to the image input.
struct ImageEncoder {
    virtual ~ImageEncoder() = default;
    virtual ag::Var forward(const ag::Var& image) const = 0;          // (dim,1,1)
    virtual std::vector<ag::Var> features(const ag::Var& image) const {
        return {forward(image)};
    }
    virtual int dim() const = 0;
    Tensor embed(const Tensor& image) const { return forward(ag::constant(image)).value(); }
};

struct ConvEncoderConfig {
    int in_channels = 3;
    std::vector<int> widths = {16, 32, 64};
    int embed_dim = 64;
    int norm_groups = 4;
    std::uint64_t seed = 0;
};

class ConvEncoder : public ImageEncoder {
public:
    ConvEncoder() = default;
    explicit ConvEncoder(const ConvEncoderConfig& cfg);

    ag::Var forward(const ag::Var& image) const override;
    std::vector<ag::Var> features(const ag::Var& image) const override;
    ag::Var trunk(const ag::Var& image) const;  // pooled features before the head
    int dim() const override { return cfg_.embed_dim; }

    const ConvEncoderConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

private:
    ConvEncoderConfig cfg_;
    std::vector<Conv2dLayer> convs_;
    std::vector<GroupNormLayer> norms_;
    Linear head_;
    ParamStore params_;
};

// Adam with decoupled weight decay over a fixed parameter list. State arrays
// are index-aligned with the parameter list for checkpointing.
class AdamW {
public:
    AdamW(std::vector<ag::Var> params, double lr, double weight_decay = 0.0, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grad();
    long steps_taken() const { return t_; }
    double lr = 0.0;

    // checkpoint hooks
    std::vector<Eigen::ArrayXd>& m_state() { return m_; }
    std::vector<Eigen::ArrayXd>& v_state() { return v_; }
    void set_steps_taken(long t) { t_ = t; }
    const std::vector<ag::Var>& params() const { return params_; }

private:
    std::vector<ag::Var> params_;
    std::vector<Eigen::ArrayXd> m_, v_;
    double wd_, beta1_, beta2_, eps_;
    long t_ = 0;
};

double clip_global_norm(const std::vector<ag::Var>& params, double max_norm);

}  // namespace fswap

#endif
