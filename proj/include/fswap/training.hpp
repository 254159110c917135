#ifndef FSWAP_TRAINING_HPP
#define FSWAP_TRAINING_HPP

#include <memory>
#include <utility>

#include "fswap/augment.hpp"
#include "fswap/codec.hpp"
#include "fswap/conditioning.hpp"
#include "fswap/denoiser.hpp"
#include "fswap/diffusion_ad.hpp"
#include "fswap/toydata.hpp"

namespace fswap {

// One (source, target, masks, landmarks) bundle flowing through training and
// inference. In pipeline (a) the reference derives from the target itself.
struct SwapSample {
    Tensor x_tar;
    Tensor x_src;
    Tensor x_ref;  // the (augmented) reference crop fed to the encoders
    BinaryMask m_tar, m_src;
    Landmarks lm_tar;
    int identity_tar = -1, identity_src = -1;  // oracle labels, evaluation only
};

struct LossWeights {
    double w_id = 0.3, w_ps = 0.1;

    void validate() const {
        if (w_id < 0 || w_ps < 0) throw RangeError("LossWeights: negative weight");
    }
};

enum class MixPolicy { both, alternate };

struct TrainConfig {
    int epochs = 2;
    double learning_rate = 1e-5;
    double weight_decay = 1e-4;
    int n_ddim_steps = 4;  // N, trainable DDIM steps in pipeline (b)
    int timesteps = 1000;  // T
    double beta_start = 1e-4, beta_end = 0.02;
    FusionWeights fusion;
    LossWeights loss_weights;
    MixPolicy mixing = MixPolicy::both;
    std::uint64_t seed = 0;
    double grad_clip = 1.0;
    int image_size = 32;
    std::string codec = "identity";  // identity | conv
    int model_channels = 16;
    int cond_dim = 768, clip_dim = 512, id_dim = 32, attn_dim = 32;
    int enhancement_warmup_steps = 0;
    int checkpoint_every = 0;  // 0: final checkpoint only
    int sem_pretrain_steps = 300, id_pretrain_steps = 300, codec_pretrain_steps = 2200;
    double pretrain_lr = 2e-3;
    int shuffle_lo = 1, shuffle_hi = 17;
    std::string shuffle_pool = "all";  // all | face | head

    void validate() const;
    const std::vector<int>& shuffle_pool_categories() const;
};

// Everything a trained system consists of; built fresh from a config or
// reconstructed from a checkpoint.
struct ModelBundle {
    TrainConfig cfg;
    NoiseSchedule sched;
    std::shared_ptr<Codec> codec;
    std::shared_ptr<Denoiser> model;
    EncoderSuite suite;

    int latent_channels() const { return codec->latent_channels(); }
    int latent_size() const { return codec->latent_size(cfg.image_size); }
};

ModelBundle build_bundle(const TrainConfig& cfg);

// Sample builders. Pipeline (a): self-supervised, reference = augmented
// masked crop of the target, shuffled-category mask. Pipeline (b): cross
// pair with face-preset masks.
SwapSample make_pipeline_a_sample(const Dataset& ds, int index, const TrainConfig& cfg, Rng& rng);
SwapSample make_pipeline_b_sample(const Dataset& ds, int tar_index, int src_index, const TrainConfig& cfg, Rng& rng);

// Pipeline (a) objective: eps-prediction MSE with inpaint context and fused
// condition, t ~ U{1..T}, eps ~ N(0, I).
ag::Var diffusion_loss(const EpsModel& model, const SwapSample& sample, const Codec& codec,
                       const NoiseSchedule& sched, const EncoderSuite& suite, Rng& rng);

// Pipeline (b): differentiable N-step DDIM from pure noise with cross-pair
// condition; identity and perceptual sums over the decoded clean estimates.
std::pair<ag::Var, ag::Var> enhancement_losses(const EpsModel& model, const SwapSample& sample, const Codec& codec,
                                               const NoiseSchedule& sched, const EncoderSuite& suite, int n_steps,
                                               Rng& rng);

ag::Var total_loss(const ag::Var& l_diff, const ag::Var& l_id, const ag::Var& l_ps, const LossWeights& w);
double total_loss(double l_diff, double l_id, double l_ps, const LossWeights& w);

struct StepRecord {
    long step = 0;
    double l_diff = 0, l_id = 0, l_ps = 0, l_total = 0;
    double wall_ms = 0;
};

struct TrainReport {
    std::vector<StepRecord> records;
    std::string report_path, checkpoint_path;
    double first_smoothed_ldiff = 0, last_smoothed_ldiff = 0;
    std::uint64_t semantic_digest_before = 0, semantic_digest_after = 0;
    std::uint64_t identity_digest_before = 0, identity_digest_after = 0;
};

// Full training run: encoder/codec pretraining (fresh runs), then the joint
// optimization loop; writes report.jsonl and checkpoints under out_dir.
TrainReport train(const TrainConfig& cfg, const Dataset& ds, const std::string& out_dir,
                  const std::string& resume_from = "");

// Checkpoint plumbing shared by trainer, inference and evaluation.
void save_bundle(const ModelBundle& bundle, const std::string& path, long global_step, const AdamW* opt,
                 const std::string& kind);
ModelBundle load_bundle(const std::string& path);
long checkpoint_step(const std::string& path);
void load_optimizer_state(const std::string& path, AdamW& opt);

std::string train_config_echo(const TrainConfig& cfg);
TrainConfig train_config_from_echo(const std::string& text);

}  // namespace fswap

#endif
