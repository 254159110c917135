#include "fswap/conditioning.hpp"

#include <cmath>

namespace fswap {

EncoderSuite EncoderSuite::create(const EncoderSuiteConfig& cfg) {
    EncoderSuite s;
    s.cfg = cfg;
    Rng rng(cfg.seed);

    ConvEncoderConfig sem;
    sem.widths = cfg.semantic_widths;
    sem.embed_dim = cfg.clip_dim;
    sem.seed = rng.fork("semantic").seed();
    s.semantic = std::make_shared<ConvEncoder>(sem);

    ConvEncoderConfig ide;
    ide.widths = cfg.identity_widths;
    ide.embed_dim = cfg.id_dim;
    ide.seed = rng.fork("identity").seed();
    s.identity = std::make_shared<ConvEncoder>(ide);

    Rng lin_rng = rng.fork("linear_maps");
    s.mlp_id = Linear(s.trainable, "mlp_id", cfg.id_dim, cfg.cond_dim, lin_rng);
    s.mlp_lm = Linear(s.trainable, "mlp_lm", 136, cfg.cond_dim, lin_rng);
    s.proj_ref = Linear(s.trainable, "proj_ref", cfg.clip_dim, cfg.cond_dim, lin_rng);
    s.proj_tar = Linear(s.trainable, "proj_tar", cfg.clip_dim, cfg.cond_dim, lin_rng);
    return s;
}

ag::Var embed_id(const EncoderSuite& suite, const ag::Var& image) {
    return suite.mlp_id(suite.identity->forward(image));
}

ag::Var embed_landmarks(const EncoderSuite& suite, const Landmarks& lm) {
    lm.validate();
    return suite.mlp_lm(ag::constant(lm.flatten()));
}

ag::Var disentangle_clip(const EncoderSuite& suite, const ag::Var& ref_image, const ag::Var& tar_image) {
    ag::Var f_ref = suite.proj_ref(suite.semantic->forward(ref_image));
    ag::Var f_tar = suite.proj_tar(suite.semantic->forward(tar_image));
    return ag::add(f_ref, f_tar);
}

ag::Var fuse_condition(const ag::Var& f_clip, const ag::Var& f_id, const ag::Var& f_lm, const FusionWeights& w) {
    w.validate();
    if (!(f_clip.shape() == f_id.shape()) || !(f_clip.shape() == f_lm.shape()))
        throw ShapeError("fuse_condition: dimension mismatch " + f_clip.shape().str() + " / " + f_id.shape().str() +
                         " / " + f_lm.shape().str());
    return ag::add(ag::add(ag::scale(f_clip, w.w_clip), ag::scale(f_id, w.w_id)), ag::scale(f_lm, w.w_lm));
}

ag::Var build_condition(const EncoderSuite& suite, const ag::Var& ref_image, const ag::Var& tar_image,
                        const Landmarks& lm_tar) {
    ag::Var f_clip = disentangle_clip(suite, ref_image, tar_image);
    ag::Var f_id = embed_id(suite, ref_image);
    ag::Var f_lm = embed_landmarks(suite, lm_tar);
    return fuse_condition(f_clip, f_id, f_lm, suite.fusion);
}

namespace {

std::vector<ag::Var> store_params(ParamStore& ps) {
    std::vector<ag::Var> out;
    for (auto& [n, v] : ps.items()) out.push_back(v);
    return out;
}

double factor_similarity(const ToyItem& a, const ToyItem& b) {
    double same_id = a.identity == b.identity ? 1.0 : 0.0;
    double pose_sim = 1.0 - std::abs(a.pose_deg - b.pose_deg) / (2.0 * kToyPoseRangeDeg);
    double expr_sim = 1.0 - std::abs(a.expression - b.expression) / 2.0;
    double light_sim = 1.0 - std::abs(a.lighting - b.lighting) / (kToyLightingMax - kToyLightingMin);
    return 0.55 * same_id + 0.20 * pose_sim + 0.10 * expr_sim + 0.15 * light_sim;
}

}  // namespace

PretrainReport pretrain_semantic_encoder(ConvEncoder& enc, const Dataset& ds, int steps, double lr,
                                         std::uint64_t seed) {
    auto train = ds.split_indices("train");
    if (train.size() < 2) throw RangeError("pretrain_semantic_encoder: need >= 2 training items");
    AdamW opt(store_params(enc.params()), lr, 1e-5);
    Rng rng(seed);
    PretrainReport rep;
    const int pairs = 6;
    for (int s = 0; s < steps; ++s) {
        opt.zero_grad();
        ag::Var loss;
        for (int p = 0; p < pairs; ++p) {
            int i = train[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(train.size()) - 1))];
            int j = train[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(train.size()) - 1))];
            ag::Var zi = enc.forward(ag::constant(ds.image(i)));
            ag::Var zj = enc.forward(ag::constant(ds.image(j)));
            double target = i == j ? 1.0 : factor_similarity(ds.items[i], ds.items[j]);
            ag::Var d = ag::add_scalar(ag::cosine_similarity(zi, zj), -target);
            ag::Var l = ag::mul(d, d);
            loss = loss.defined() ? ag::add(loss, l) : l;
        }
        loss = ag::scale(loss, 1.0 / pairs);
        if (s == 0) rep.initial_loss = ag::scalar(loss);
        rep.final_loss = ag::scalar(loss);
        ag::backward(loss);
        opt.step();
    }
    return rep;
}

PretrainReport pretrain_identity_encoder(ConvEncoder& enc, const Dataset& ds, int steps, double lr,
                                         std::uint64_t seed) {
    auto train = ds.split_indices("train");
    if (train.empty()) throw RangeError("pretrain_identity_encoder: empty training split");
    int num_classes = 0;
    for (int i : train) num_classes = std::max(num_classes, ds.items[i].identity + 1);

    ParamStore head_store;
    Rng init_rng(mix_seed(seed, 0xC1A55));
    Linear head(head_store, "cls_head", enc.dim(), num_classes, init_rng);

    std::vector<ag::Var> params = store_params(enc.params());
    auto head_params = store_params(head_store);
    params.insert(params.end(), head_params.begin(), head_params.end());
    AdamW opt(params, lr, 1e-5);

    Rng rng(seed);
    PretrainReport rep;
    const int batch = 8;
    for (int s = 0; s < steps; ++s) {
        opt.zero_grad();
        ag::Var loss;
        for (int b = 0; b < batch; ++b) {
            int i = train[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(train.size()) - 1))];
            ag::Var logits = head(enc.forward(ag::constant(ds.image(i))));
            ag::Var l = ag::cross_entropy(logits, ds.items[i].identity);
            loss = loss.defined() ? ag::add(loss, l) : l;
        }
        loss = ag::scale(loss, 1.0 / batch);
        if (s == 0) rep.initial_loss = ag::scalar(loss);
        rep.final_loss = ag::scalar(loss);
        ag::backward(loss);
        opt.step();
    }
    return rep;  // the classifier head goes out of scope; only the embedding is kept
}

ag::Var perceptual_distance(const ImageEncoder& enc, const ag::Var& a, const ag::Var& b) {
    auto fa = enc.features(a);
    auto fb = enc.features(b);
    if (fa.size() != fb.size() || fa.empty()) throw ShapeError("perceptual_distance: feature stacks differ");
    ag::Var total;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        ag::Var d = ag::mse(ag::l2_normalize_channels(fa[l]), ag::l2_normalize_channels(fb[l]));
        total = total.defined() ? ag::add(total, d) : d;
    }
    return ag::scale(total, 1.0 / static_cast<double>(fa.size()));
}

}  // namespace fswap
