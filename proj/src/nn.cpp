#include "fswap/nn.hpp"

#include <cmath>

namespace fswap {

ag::Var ParamStore::create(const std::string& name, Tensor init) {
    if (has(name)) throw SchemaError("ParamStore: duplicate parameter " + name);
    ag::Var v(std::move(init), true);
    items_.emplace_back(name, v);
    return v;
}

ag::Var ParamStore::find(const std::string& name) const {
    for (const auto& [n, v] : items_)
        if (n == name) return v;
    throw SchemaError("ParamStore: no parameter named " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, v] : items_)
        if (n == name) return true;
    return false;
}

void ParamStore::zero_grad() {
    for (auto& [n, v] : items_) v.zero_grad();
}

std::int64_t ParamStore::scalar_count() const {
    std::int64_t c = 0;
    for (const auto& [n, v] : items_) c += v.shape().count();
    return c;
}

std::uint64_t ParamStore::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [n, v] : items_) {
        h = fnv1a64(n.data(), n.size(), h);
        h = fnv1a64(v.value().data(), sizeof(double) * v.value().size(), h);
    }
    return h;
}

void ParamStore::absorb(ParamStore& other) {
    for (auto& [n, v] : other.items_) {
        if (has(n)) throw SchemaError("ParamStore::absorb: duplicate parameter " + n);
        items_.emplace_back(n, v);
    }
    other.items_.clear();
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int in_dim, int out_dim, Rng& rng, double init_mult)
    : in(in_dim), out(out_dim) {
    double s = init_mult / std::sqrt(static_cast<double>(in_dim));
    Tensor w(out_dim, in_dim, 1);
    for (auto& v : w) v = rng.normal() * s;
    W = ps.create(prefix + ".weight", std::move(w));
    b = ps.create(prefix + ".bias", Tensor(out_dim, 1, 1));
}

ag::Var Linear::operator()(const ag::Var& x) const {
    if (x.shape().c != in || x.shape().h != 1 || x.shape().w != 1)
        throw ShapeError("Linear: input " + x.shape().str() + " vs in=" + std::to_string(in));
    return ag::add(ag::matmul(W, ag::reshape(x, Shape{in, 1, 1})), b);
}

Conv2dLayer::Conv2dLayer(ParamStore& ps, const std::string& prefix, int cin_, int cout_, int k_, Rng& rng,
                         double init_mult)
    : cin(cin_), cout(cout_), k(k_), pad((k_ - 1) / 2) {
    double s = init_mult * std::sqrt(2.0 / (static_cast<double>(cin_) * k_ * k_));
    Tensor w(cout_, cin_ * k_ * k_, 1);
    for (auto& v : w) v = rng.normal() * s;
    W = ps.create(prefix + ".weight", std::move(w));
    b = ps.create(prefix + ".bias", Tensor(cout_, 1, 1));
}

ag::Var Conv2dLayer::operator()(const ag::Var& x) const { return ag::conv2d(x, W, b, k, pad); }

GroupNormLayer::GroupNormLayer(ParamStore& ps, const std::string& prefix, int channels, int groups_)
    : groups(groups_) {
    gamma = ps.create(prefix + ".gamma", Tensor::full(Shape{channels, 1, 1}, 1.0));
    beta = ps.create(prefix + ".beta", Tensor(channels, 1, 1));
}

ag::Var GroupNormLayer::operator()(const ag::Var& x) const { return ag::group_norm(x, gamma, beta, groups); }

CrossAttention::CrossAttention(ParamStore& ps, const std::string& prefix, int channels_, int d_ctx_, int d_attn_,
                               Rng& rng)
    : channels(channels_), d_ctx(d_ctx_), d_attn(d_attn_) {
    auto init = [&](int r, int c, double mult) {
        double s = mult / std::sqrt(static_cast<double>(c));
        Tensor w(r, c, 1);
        for (auto& v : w) v = rng.normal() * s;
        return w;
    };
    Wq = ps.create(prefix + ".wq", init(d_attn_, channels_, 1.0));
    Wk = ps.create(prefix + ".wk", init(d_attn_, d_ctx_, 1.0));
    Wv = ps.create(prefix + ".wv", init(d_attn_, d_ctx_, 1.0));
    Wo = ps.create(prefix + ".wo", init(channels_, d_attn_, 0.05));
    bo = ps.create(prefix + ".bo", Tensor(channels_, 1, 1));
}

ag::Var CrossAttention::operator()(const ag::Var& x, const ag::Var& context) const {
    const Shape s = x.shape();
    if (s.c != channels) throw ShapeError("CrossAttention: channels " + s.str());
    if (context.shape().h != d_ctx || context.shape().w != 1)
        throw ShapeError("CrossAttention: context " + context.shape().str() + " vs d_ctx=" + std::to_string(d_ctx));
    int npix = s.h * s.w;
    ag::Var xm = ag::reshape(x, Shape{s.c, npix, 1});              // (c, hw)
    ag::Var q = ag::matmul(Wq, xm);                                // (dk, hw)
    ag::Var kt = ag::matmul(context, ag::transpose(Wk));           // (ntok, dk)
    ag::Var vt = ag::matmul(context, ag::transpose(Wv));           // (ntok, dv)
    ag::Var logits = ag::scale(ag::matmul(kt, q), 1.0 / std::sqrt(static_cast<double>(d_attn)));  // (ntok, hw)
    ag::Var attn = ag::softmax_cols(logits);
    ag::Var mixed = ag::matmul(ag::transpose(vt), attn);           // (dv, hw)
    ag::Var out = ag::matmul(Wo, mixed);                           // (c, hw)
    out = ag::add_bias_c(ag::reshape(out, s), bo);
    return ag::add(x, out);
}

Tensor timestep_embedding(int t, int dim, double scale) {
    if (dim < 2 || dim % 2) throw ShapeError("timestep_embedding: dim must be even and >= 2");
    Tensor e(dim, 1, 1);
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = scale * std::exp(-std::log(10000.0) * i / (half - 1 > 0 ? half - 1 : 1));
        e[i] = std::sin(t * freq);
        e[half + i] = std::cos(t * freq);
    }
    return e;
}

ConvEncoder::ConvEncoder(const ConvEncoderConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.seed);
    int cin = cfg.in_channels;
    for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
        int cout = cfg.widths[i];
        convs_.emplace_back(params_, "conv" + std::to_string(i), cin, cout, 3, rng);
        int g = cfg.norm_groups;
        while (cout % g) g /= 2;
        norms_.emplace_back(params_, "norm" + std::to_string(i), cout, std::max(g, 1));
        cin = cout;
    }
    head_ = Linear(params_, "head", cin, cfg.embed_dim, rng);
}

ag::Var ConvEncoder::trunk(const ag::Var& image) const {
    ag::Var h = image;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = ag::silu(norms_[i](convs_[i](h)));
        if (h.shape().h % 2 == 0 && h.shape().w % 2 == 0) h = ag::avg_pool2(h);
    }
    return ag::spatial_mean(h);
}

ag::Var ConvEncoder::forward(const ag::Var& image) const { return head_(trunk(image)); }

std::vector<ag::Var> ConvEncoder::features(const ag::Var& image) const {
    std::vector<ag::Var> feats;
    ag::Var h = image;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = ag::silu(norms_[i](convs_[i](h)));
        feats.push_back(h);
        if (h.shape().h % 2 == 0 && h.shape().w % 2 == 0) h = ag::avg_pool2(h);
    }
    return feats;
}

AdamW::AdamW(std::vector<ag::Var> params, double lr_, double weight_decay, double beta1, double beta2, double eps)
    : lr(lr_), params_(std::move(params)), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(Eigen::ArrayXd::Zero(p.value().size()));
        v_.emplace_back(Eigen::ArrayXd::Zero(p.value().size()));
    }
}

void AdamW::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        Eigen::ArrayXd g = p.has_grad() ? p.grad().array() : Eigen::ArrayXd::Zero(p.value().size());
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.square();
        Eigen::ArrayXd mhat = m_[i] / bc1;
        Eigen::ArrayXd vhat = v_[i] / bc2;
        p.value().array() -= lr * (mhat / (vhat.sqrt() + eps_) + wd_ * p.value().array());
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double clip_global_norm(const std::vector<ag::Var>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        if (p.has_grad()) sq += p.grad().array().square().sum();
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double s = max_norm / norm;
        for (auto p : params)
            if (p.has_grad()) p.grad_mut().array() *= s;
    }
    return norm;
}

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace fswap
