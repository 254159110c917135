#include "fswap/training.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fswap/checkpoint.hpp"
#include "fswap/config.hpp"
#include "fswap/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fswap {

void TrainConfig::validate() const {
    if (epochs < 1) throw RangeError("TrainConfig: epochs must be >= 1");
    if (learning_rate <= 0 || pretrain_lr <= 0) throw RangeError("TrainConfig: rates must be positive");
    if (n_ddim_steps < 1) throw RangeError("TrainConfig: n_ddim_steps must be >= 1");
    if (timesteps < 1) throw RangeError("TrainConfig: timesteps must be >= 1");
    if (image_size % 4) throw RangeError("TrainConfig: image_size must be divisible by 4");
    if (codec != "identity" && codec != "conv") throw SchemaError("TrainConfig: codec must be identity|conv");
    if (shuffle_pool != "all" && shuffle_pool != "face" && shuffle_pool != "head")
        throw SchemaError("TrainConfig: shuffle_pool must be all|face|head");
    int pool = static_cast<int>(shuffle_pool_categories().size());
    if (shuffle_lo < 1 || shuffle_lo > shuffle_hi || shuffle_hi > pool)
        throw RangeError("TrainConfig: bad shuffle range");
    fusion.validate();
    loss_weights.validate();
}

const std::vector<int>& TrainConfig::shuffle_pool_categories() const {
    if (shuffle_pool == "face") return face_preset_categories();
    if (shuffle_pool == "head") return head_preset_categories();
    return all_mask_categories();
}

ModelBundle build_bundle(const TrainConfig& cfg) {
    cfg.validate();
    ModelBundle b;
    b.cfg = cfg;
    b.sched = build_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);

    if (cfg.codec == "identity") {
        b.codec = std::make_shared<IdentityCodec>();
    } else {
        ConvCodecConfig cc;
        cc.image_size = cfg.image_size;
        cc.seed = mix_seed(cfg.seed, fnv1a64("codec_init"));
        b.codec = std::make_shared<ConvCodec>(cc);
    }

    DenoiserConfig dc;
    dc.latent_channels = b.codec->latent_channels();
    dc.latent_size = b.codec->latent_size(cfg.image_size);
    dc.base_channels = cfg.model_channels;
    dc.cond_dim = cfg.cond_dim;
    dc.attn_dim = cfg.attn_dim;
    dc.seed = mix_seed(cfg.seed, fnv1a64("model_init"));
    b.model = std::make_shared<Denoiser>(dc);

    EncoderSuiteConfig sc;
    sc.cond_dim = cfg.cond_dim;
    sc.clip_dim = cfg.clip_dim;
    sc.id_dim = cfg.id_dim;
    sc.seed = mix_seed(cfg.seed, fnv1a64("suite_init"));
    b.suite = EncoderSuite::create(sc);
    b.suite.fusion = cfg.fusion;
    return b;
}

namespace {

Tensor mask3(const BinaryMask& m) {
    Tensor t(3, m.h(), m.w());
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < m.h(); ++y)
            for (int x = 0; x < m.w(); ++x) t.at(c, y, x) = m.m(y, x);
    return t;
}

int draw_cross_source(const Dataset& ds, const std::vector<int>& train, int tar_index, Rng& rng) {
    int tar_id = ds.items[tar_index].identity;
    for (int tries = 0; tries < 64; ++tries) {
        int idx = train[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(train.size()) - 1))];
        if (ds.items[idx].identity != tar_id) return idx;
    }
    throw RangeError("draw_cross_source: could not find a source with a different identity");
}

}  // namespace

SwapSample make_pipeline_a_sample(const Dataset& ds, int index, const TrainConfig& cfg, Rng& rng) {
    SwapSample s;
    s.x_tar = ds.image(index);
    s.x_src = s.x_tar;
    s.lm_tar = ds.landmarks(index);
    s.identity_tar = s.identity_src = ds.items[index].identity;
    auto [mask, cats] = select_shuffled_mask(ds.labels(index), rng, {cfg.shuffle_lo, cfg.shuffle_hi},
                                             cfg.shuffle_pool_categories());
    mask.role = MaskRole::target;
    s.m_tar = mask;
    s.m_src = mask;  // the same chosen categories define both m_ref and m_tar
    s.x_ref = reference_augment(apply_mask(s.x_tar, mask), rng);
    return s;
}

SwapSample make_pipeline_b_sample(const Dataset& ds, int tar_index, int src_index, const TrainConfig& cfg, Rng& rng) {
    (void)cfg;
    SwapSample s;
    s.x_tar = ds.image(tar_index);
    s.x_src = ds.image(src_index);
    s.lm_tar = ds.landmarks(tar_index);
    s.identity_tar = ds.items[tar_index].identity;
    s.identity_src = ds.items[src_index].identity;
    s.m_tar = category_mask(ds.labels(tar_index), face_preset_categories());
    s.m_tar.role = MaskRole::target;
    s.m_src = category_mask(ds.labels(src_index), face_preset_categories());
    s.m_src.role = MaskRole::source;
    s.x_ref = reference_augment(apply_mask(s.x_src, s.m_src), rng);
    return s;
}

ag::Var diffusion_loss(const EpsModel& model, const SwapSample& sample, const Codec& codec,
                       const NoiseSchedule& sched, const EncoderSuite& suite, Rng& rng) {
    int t = rng.uniform_int(1, sched.T);
    Tensor z0 = codec.encode(sample.x_tar).data;
    Tensor eps = Tensor::randn(z0.shape(), rng);
    Tensor z_t = forward_diffuse(z0, t, eps, sched);
    Tensor inpaint = make_inpaint_image(sample.x_tar, sample.m_tar, rng);
    Tensor z_inp = codec.encode(inpaint).data;

    ag::Var f = build_condition(suite, ag::constant(sample.x_ref), ag::constant(sample.x_tar), sample.lm_tar);
    ag::Var pred = model.forward(ag::constant(stack_latents(z_t, z_inp, sample.m_tar)), t, f);
    return ag::mse(pred, ag::constant(eps));
}

std::pair<ag::Var, ag::Var> enhancement_losses(const EpsModel& model, const SwapSample& sample, const Codec& codec,
                                               const NoiseSchedule& sched, const EncoderSuite& suite, int n_steps,
                                               Rng& rng) {
    if (n_steps < 1) throw RangeError("enhancement_losses: N must be >= 1");
    if (sample.identity_tar >= 0 && sample.identity_tar == sample.identity_src)
        throw RangeError("enhancement_losses: source and target must be distinct");

    // inference-like context: no face-shape augmentation on the cross pair
    FaceShapeAugmentParams no_fa;
    no_fa.enabled = false;
    Tensor inpaint = make_inpaint_image(sample.x_tar, sample.m_tar, rng, no_fa);
    Tensor z_inp = codec.encode(inpaint).data;
    Tensor mask_lat = downsample_mask_area(sample.m_tar, z_inp.h(), z_inp.w());

    ag::Var f = build_condition(suite, ag::constant(sample.x_ref), ag::constant(sample.x_tar), sample.lm_tar);

    Tensor mask_tar3 = mask3(sample.m_tar);
    Tensor src_masked = apply_mask(sample.x_src, sample.m_src);
    ag::Var src_id_feat = suite.identity->forward(ag::constant(src_masked));
    ag::Var tar_const = ag::constant(sample.x_tar);

    ag::Var z_inp_const = ag::constant(z_inp);
    ag::Var mask_const = ag::constant(mask_lat);
    auto denoise = [&](const ag::Var& z, int t) {
        return model.forward(ag::concat_c({z, z_inp_const, mask_const}), t, f);
    };

    ag::Var z_T = ag::constant(Tensor::randn(z_inp.shape(), rng));
    auto trace = ddim_sample_var(denoise, z_T, make_step_schedule(sched.T, n_steps), sched);

    ag::Var l_id, l_ps;
    for (const auto& [t_i, x0_hat] : trace.x0_estimates) {
        ag::Var img = codec.decode_var(x0_hat);
        ag::Var swap_id_feat = suite.identity->forward(ag::mul_const(img, mask_tar3));
        ag::Var id_term = ag::add_scalar(ag::neg(ag::cosine_similarity(swap_id_feat, src_id_feat)), 1.0);
        l_id = l_id.defined() ? ag::add(l_id, id_term) : id_term;
        ag::Var ps_term = perceptual_distance(*suite.semantic, img, tar_const);
        l_ps = l_ps.defined() ? ag::add(l_ps, ps_term) : ps_term;
    }
    if (!std::isfinite(ag::scalar(l_id)) || !std::isfinite(ag::scalar(l_ps)))
        throw NumericError("enhancement_losses: non-finite loss");
    return {l_id, l_ps};
}

ag::Var total_loss(const ag::Var& l_diff, const ag::Var& l_id, const ag::Var& l_ps, const LossWeights& w) {
    w.validate();
    return ag::add(l_diff, ag::add(ag::scale(l_id, w.w_id), ag::scale(l_ps, w.w_ps)));
}

double total_loss(double l_diff, double l_id, double l_ps, const LossWeights& w) {
    w.validate();
    return l_diff + w.w_id * l_id + w.w_ps * l_ps;
}

std::string train_config_echo(const TrainConfig& cfg) { return config_from_train(cfg).echo(); }

TrainConfig train_config_from_echo(const std::string& text) { return train_config_from(KeyValueConfig::parse(text)); }

namespace {

std::vector<ag::Var> trainable_params(ModelBundle& b) {
    std::vector<ag::Var> p;
    for (auto& [n, v] : b.model->params().items()) p.push_back(v);
    for (auto& [n, v] : b.suite.trainable.items()) p.push_back(v);
    return p;
}

ConvEncoder& as_conv_encoder(ImageEncoder& e) {
    auto* ce = dynamic_cast<ConvEncoder*>(&e);
    if (!ce) throw SchemaError("expected a ConvEncoder-backed suite");
    return *ce;
}

void zero_all_grads(ModelBundle& b) {
    b.model->params().zero_grad();
    b.suite.trainable.zero_grad();
    as_conv_encoder(*b.suite.semantic).params().zero_grad();
    as_conv_encoder(*b.suite.identity).params().zero_grad();
    if (auto* cc = dynamic_cast<ConvCodec*>(b.codec.get())) cc->params().zero_grad();
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::string& path, long global_step, const AdamW* opt,
                 const std::string& kind) {
    Checkpoint ck;
    std::string echo = train_config_echo(bundle.cfg);
    ck.config_hash = fnv1a64(echo);
    ck.meta["config"] = echo;
    ck.meta["kind"] = kind;
    ck.meta["global_step"] = std::to_string(global_step);
    ck.add_store("model", bundle.model->params());
    ck.add_store("suite", bundle.suite.trainable);
    ck.add_store("semantic", as_conv_encoder(*bundle.suite.semantic).params());
    ck.add_store("identity", as_conv_encoder(*bundle.suite.identity).params());
    if (auto* cc = dynamic_cast<const ConvCodec*>(bundle.codec.get())) ck.add_store("codec", cc->params());
    if (opt) {
        ck.meta["opt_t"] = std::to_string(opt->steps_taken());
        const auto& m = const_cast<AdamW*>(opt)->m_state();
        const auto& v = const_cast<AdamW*>(opt)->v_state();
        for (std::size_t i = 0; i < m.size(); ++i) {
            ck.add_array("opt/m/" + std::to_string(i), Tensor(Shape{static_cast<int>(m[i].size()), 1, 1}, m[i]));
            ck.add_array("opt/v/" + std::to_string(i), Tensor(Shape{static_cast<int>(v[i].size()), 1, 1}, v[i]));
        }
    }
    ck.save(path);
}

ModelBundle load_bundle(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    auto it = ck.meta.find("config");
    if (it == ck.meta.end()) throw SchemaError("load_bundle: checkpoint lacks a config echo: " + path);
    if (ck.config_hash != fnv1a64(it->second))
        throw SchemaError("load_bundle: config hash mismatch in " + path);
    TrainConfig cfg = train_config_from_echo(it->second);
    ModelBundle b = build_bundle(cfg);
    ck.load_into_store("model", b.model->params());
    ck.load_into_store("suite", b.suite.trainable);
    ck.load_into_store("semantic", as_conv_encoder(*b.suite.semantic).params());
    ck.load_into_store("identity", as_conv_encoder(*b.suite.identity).params());
    if (auto* cc = dynamic_cast<ConvCodec*>(b.codec.get())) ck.load_into_store("codec", cc->params());
    return b;
}

long checkpoint_step(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    auto it = ck.meta.find("global_step");
    return it == ck.meta.end() ? 0 : std::stol(it->second);
}

void load_optimizer_state(const std::string& path, AdamW& opt) {
    Checkpoint ck = Checkpoint::load(path);
    auto it = ck.meta.find("opt_t");
    if (it == ck.meta.end()) throw SchemaError("load_optimizer_state: checkpoint has no optimizer state: " + path);
    opt.set_steps_taken(std::stol(it->second));
    auto& m = opt.m_state();
    auto& v = opt.v_state();
    for (std::size_t i = 0; i < m.size(); ++i) {
        const Tensor& tm = ck.array("opt/m/" + std::to_string(i));
        const Tensor& tv = ck.array("opt/v/" + std::to_string(i));
        if (tm.size() != m[i].size() || tv.size() != v[i].size())
            throw SchemaError("load_optimizer_state: state size mismatch at index " + std::to_string(i));
        m[i] = tm.array();
        v[i] = tv.array();
    }
}

TrainReport train(const TrainConfig& cfg, const Dataset& ds, const std::string& out_dir,
                  const std::string& resume_from) {
    cfg.validate();
    if (ds.image_size != cfg.image_size)
        throw ShapeError("train: dataset size " + std::to_string(ds.image_size) + " vs config " +
                         std::to_string(cfg.image_size));
    auto train_split = ds.split_indices("train");
    if (train_split.size() < 2) throw RangeError("train: need at least 2 training items");
    fs::create_directories(out_dir);

    ModelBundle bundle;
    long start_step = 0;
    bool fresh = resume_from.empty();
    if (fresh) {
        bundle = build_bundle(cfg);
        // frozen featurizers are pretrained before diffusion training
        pretrain_semantic_encoder(as_conv_encoder(*bundle.suite.semantic), ds, cfg.sem_pretrain_steps,
                                  cfg.pretrain_lr, mix_seed(cfg.seed, fnv1a64("sem_pretrain")));
        pretrain_identity_encoder(as_conv_encoder(*bundle.suite.identity), ds, cfg.id_pretrain_steps, cfg.pretrain_lr,
                                  mix_seed(cfg.seed, fnv1a64("id_pretrain")));
        if (auto* cc = dynamic_cast<ConvCodec*>(bundle.codec.get())) {
            std::vector<Tensor> imgs;
            for (int i : train_split) imgs.push_back(ds.image(i));
            cc->pretrain(imgs, cfg.codec_pretrain_steps, cfg.pretrain_lr, mix_seed(cfg.seed, fnv1a64("codec_pre")));
        }
    } else {
        bundle = load_bundle(resume_from);
        if (!(train_config_echo(bundle.cfg) == train_config_echo(cfg)))
            throw SchemaError("train: resume config does not match checkpoint config");
        start_step = checkpoint_step(resume_from);
    }

    AdamW opt(trainable_params(bundle), cfg.learning_rate, cfg.weight_decay);
    if (!fresh) load_optimizer_state(resume_from, opt);

    TrainReport report;
    report.semantic_digest_before = as_conv_encoder(*bundle.suite.semantic).params().digest();
    report.identity_digest_before = as_conv_encoder(*bundle.suite.identity).params().digest();

    const long steps_per_epoch = static_cast<long>(train_split.size());
    const long total_steps = steps_per_epoch * cfg.epochs;
    std::string report_path = out_dir + "/report.jsonl";
    std::ofstream report_out(report_path, fresh ? std::ios::trunc : std::ios::app);
    if (!report_out) throw IoError("train: cannot open " + report_path);

    for (long step = start_step; step < total_steps; ++step) {
        auto t0 = std::chrono::steady_clock::now();
        long epoch = step / steps_per_epoch;
        long pos = step % steps_per_epoch;

        // deterministic epoch order, independent of resume point
        std::vector<int> order = train_split;
        Rng order_rng(mix_seed(cfg.seed, fnv1a64("order") + static_cast<std::uint64_t>(epoch)));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[order_rng.uniform_int(0, i)]);

        Rng step_rng(mix_seed(cfg.seed, fnv1a64("step") + static_cast<std::uint64_t>(step)));
        zero_all_grads(bundle);

        bool run_a = true, run_b = step >= cfg.enhancement_warmup_steps;
        if (cfg.mixing == MixPolicy::alternate) {
            run_a = step % 2 == 0;
            run_b = run_b && step % 2 == 1;
        }

        StepRecord rec;
        rec.step = step;
        ag::Var l_diff, l_id, l_ps;
        if (run_a) {
            Rng a_rng = step_rng.fork("pipeline_a");
            SwapSample a = make_pipeline_a_sample(ds, order[pos], cfg, a_rng);
            l_diff = diffusion_loss(*bundle.model, a, *bundle.codec, bundle.sched, bundle.suite, a_rng);
            rec.l_diff = ag::scalar(l_diff);
        }
        if (run_b) {
            Rng b_rng = step_rng.fork("pipeline_b");
            int tar = order[(pos + 1) % order.size()];
            int src = draw_cross_source(ds, train_split, tar, b_rng);
            SwapSample b = make_pipeline_b_sample(ds, tar, src, cfg, b_rng);
            std::tie(l_id, l_ps) =
                enhancement_losses(*bundle.model, b, *bundle.codec, bundle.sched, bundle.suite, cfg.n_ddim_steps,
                                   b_rng);
            rec.l_id = ag::scalar(l_id);
            rec.l_ps = ag::scalar(l_ps);
        }

        ag::Var zero = ag::constant(Tensor::zeros(Shape{1, 1, 1}));
        ag::Var total = total_loss(l_diff.defined() ? l_diff : zero, l_id.defined() ? l_id : zero,
                                   l_ps.defined() ? l_ps : zero, cfg.loss_weights);
        rec.l_total = ag::scalar(total);
        if (!std::isfinite(rec.l_total)) throw NumericError("train: loss diverged at step " + std::to_string(step));

        if (total.requires_grad()) {
            ag::backward(total);
            clip_global_norm(opt.params(), cfg.grad_clip);
            opt.step();
        }

        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        report.records.push_back(rec);
        json line = {{"step", rec.step},   {"l_diff", rec.l_diff},   {"l_id", rec.l_id},
                     {"l_ps", rec.l_ps},   {"l_total", rec.l_total}, {"wall_ms", rec.wall_ms}};
        report_out << line.dump() << "\n";
        report_out.flush();

        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < total_steps)
            save_bundle(bundle, out_dir + "/checkpoint_step_" + std::to_string(step + 1) + ".ckpt", step + 1, &opt,
                        "train_state");
    }

    report.checkpoint_path = out_dir + "/checkpoint.ckpt";
    save_bundle(bundle, report.checkpoint_path, total_steps, &opt, "final");
    report.report_path = report_path;
    report.semantic_digest_after = as_conv_encoder(*bundle.suite.semantic).params().digest();
    report.identity_digest_after = as_conv_encoder(*bundle.suite.identity).params().digest();

    auto window_mean = [&](bool front) {
        std::size_t k = std::max<std::size_t>(5, report.records.size() / 10);
        k = std::min(k, report.records.size());
        double acc = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < report.records.size(); ++i) {
            bool in = front ? i < k : i + k >= report.records.size();
            if (in && report.records[i].l_diff > 0) {
                acc += report.records[i].l_diff;
                ++n;
            }
        }
        return n ? acc / n : 0.0;
    };
    report.first_smoothed_ldiff = window_mean(true);
    report.last_smoothed_ldiff = window_mean(false);
    return report;
}

}  // namespace fswap
