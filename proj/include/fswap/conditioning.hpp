#ifndef FSWAP_CONDITIONING_HPP
#define FSWAP_CONDITIONING_HPP

#include <memory>

#include "fswap/landmarks.hpp"
#include "fswap/nn.hpp"
#include "fswap/toydata.hpp"

namespace fswap {

struct FusionWeights {
    double w_clip = 1.0, w_id = 10.0, w_lm = 0.05;

    void validate() const {
        if (w_clip < 0 || w_id < 0 || w_lm < 0) throw RangeError("FusionWeights: negative weight");
        if (w_clip == 0 && w_id == 0 && w_lm == 0) throw RangeError("FusionWeights: all weights zero");
    }
};

struct EncoderSuiteConfig {
    int cond_dim = 768;  // D
    int clip_dim = 512;  // semantic embedding width before projection
    int id_dim = 32;     // identity embedding width
    std::uint64_t seed = 0;
    std::vector<int> semantic_widths = {16, 32, 64};
    std::vector<int> identity_widths = {12, 24};
};

// Pluggable encoders plus the trainable maps of the condition generator. The
// semantic and identity encoders are frozen during diffusion training; the
// four linear maps live in `trainable` and receive gradients.
struct EncoderSuite {
    std::shared_ptr<ImageEncoder> semantic;
    std::shared_ptr<ImageEncoder> identity;
    Linear mlp_id;    // id_dim  -> D
    Linear mlp_lm;    // 136     -> D
    Linear proj_ref;  // clip_dim -> D
    Linear proj_tar;  // clip_dim -> D
    ParamStore trainable;
    FusionWeights fusion;
    EncoderSuiteConfig cfg;

    static EncoderSuite create(const EncoderSuiteConfig& cfg);
};

ag::Var embed_id(const EncoderSuite& suite, const ag::Var& image);
ag::Var embed_landmarks(const EncoderSuite& suite, const Landmarks& lm);
ag::Var disentangle_clip(const EncoderSuite& suite, const ag::Var& ref_image, const ag::Var& tar_image);
ag::Var fuse_condition(const ag::Var& f_clip, const ag::Var& f_id, const ag::Var& f_lm, const FusionWeights& w);

// f = w_clip (P_ref sem(ref) + P_tar sem(tar)) + w_id MLP_id(idfeat(ref)) + w_lm MLP_lm(lm_tar)
ag::Var build_condition(const EncoderSuite& suite, const ag::Var& ref_image, const ag::Var& tar_image,
                        const Landmarks& lm_tar);

struct PretrainReport {
    double initial_loss = 0.0, final_loss = 0.0;
};

// Semantic encoder: pairwise cosine regression toward factor similarity over
// (identity, pose, expression, lighting) pairs.
PretrainReport pretrain_semantic_encoder(ConvEncoder& enc, const Dataset& ds, int steps, double lr,
                                         std::uint64_t seed);
// Identity featurizer: identity-classification embedding (the classifier head
// is discarded after pretraining).
PretrainReport pretrain_identity_encoder(ConvEncoder& enc, const Dataset& ds, int steps, double lr,
                                         std::uint64_t seed);

// Perceptual distance stand-in: channel-normalized multi-layer feature MSE of
// the (frozen) semantic encoder, averaged over layers.
ag::Var perceptual_distance(const ImageEncoder& enc, const ag::Var& a, const ag::Var& b);

}  // namespace fswap

#endif
