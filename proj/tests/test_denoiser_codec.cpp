#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fswap/codec.hpp"
#include "fswap/denoiser.hpp"
#include "fswap/toydata.hpp"

using namespace fswap;

namespace {

BinaryMask ones_mask(int h, int w) {
    BinaryMask m;
    m.m = Eigen::ArrayXXd::Ones(h, w);
    return m;
}

DenoiserConfig tiny_config() {
    DenoiserConfig c;
    c.latent_channels = 3;
    c.latent_size = 8;
    c.base_channels = 4;
    c.cond_dim = 16;
    c.attn_dim = 4;
    c.temb_dim = 8;
    c.temb_hidden = 12;
    c.norm_groups = 2;
    c.seed = 7;
    return c;
}

}  // namespace

TEST_CASE("assemble_input: channel arithmetic (9 in latent mode, 7 in pixel mode)") {
    Rng rng(1);
    // codec-latent mode: 4-channel latent
    Tensor z4 = Tensor::randn(Shape{4, 8, 8}, rng);
    Tensor z4i = Tensor::randn(Shape{4, 8, 8}, rng);
    DenoiserInput in9 = assemble_input(z4, z4i, ones_mask(32, 32), 5, Tensor(8, 1, 1));
    CHECK(in9.stacked.shape() == Shape{9, 8, 8});

    // pixel mode: 3-channel latent
    Tensor z3 = Tensor::randn(Shape{3, 32, 32}, rng);
    Tensor z3i = Tensor::randn(Shape{3, 32, 32}, rng);
    DenoiserInput in7 = assemble_input(z3, z3i, ones_mask(32, 32), 5, Tensor(8, 1, 1));
    CHECK(in7.stacked.shape() == Shape{7, 32, 32});

    // all-ones mask stays identically 1 after area resampling
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(in9.stacked.at(8, y, x) == 1.0);

    // layout: z_t first, then z_inp, then the mask channel
    CHECK(in7.stacked.at(0, 3, 3) == z3.at(0, 3, 3));
    CHECK(in7.stacked.at(3, 3, 3) == z3i.at(0, 3, 3));

    CHECK_THROWS_AS(assemble_input(z4, z3, ones_mask(32, 32), 5, Tensor(8, 1, 1)), ShapeError);
    CHECK_THROWS_AS(assemble_input(z3, z3i, ones_mask(33, 33), 5, Tensor(8, 1, 1)), ShapeError);
}

TEST_CASE("assemble_input: fractional mask values after downsampling") {
    Rng rng(2);
    BinaryMask half;
    half.m = Eigen::ArrayXXd::Zero(8, 8);
    half.m(0, 0) = 1.0;  // one of the four pixels in the top-left 2x2 block
    Tensor z = Tensor::randn(Shape{3, 4, 4}, rng);
    DenoiserInput in = assemble_input(z, z, half, 1, Tensor(4, 1, 1));
    CHECK(in.stacked.at(6, 0, 0) == doctest::Approx(0.25));
    CHECK(in.stacked.at(6, 1, 1) == 0.0);
}

TEST_CASE("denoiser: output shape, determinism in eval mode, call counting") {
    DenoiserConfig cfg = tiny_config();
    Denoiser model(cfg);
    Rng rng(3);
    Tensor stacked = Tensor::randn(Shape{cfg.in_channels(), 8, 8}, rng);
    Tensor f = Tensor::randn(Shape{cfg.cond_dim, 1, 1}, rng);

    long calls0 = model.forward_calls();
    Tensor out1 = predict_noise(model, DenoiserInput{stacked, 3, f});
    Tensor out2 = predict_noise(model, DenoiserInput{stacked, 3, f});
    CHECK(out1.shape() == Shape{3, 8, 8});
    CHECK(out1.digest() == out2.digest());
    CHECK(model.forward_calls() - calls0 == 2);

    Tensor out3 = predict_noise(model, DenoiserInput{stacked, 4, f});
    CHECK(out1.digest() != out3.digest());  // timestep conditioning reaches the output
}

TEST_CASE("denoiser: conditioning sensitivity (nonzero gradient w.r.t. f)") {
    DenoiserConfig cfg = tiny_config();
    Denoiser model(cfg);
    Rng rng(4);
    Tensor stacked = Tensor::randn(Shape{cfg.in_channels(), 8, 8}, rng);
    ag::Var f(Tensor::randn(Shape{cfg.cond_dim, 1, 1}, rng), true);

    ag::Var out = model.forward(ag::constant(stacked), 3, f);
    ag::backward(ag::mean(ag::mul(out, out)));
    REQUIRE(f.has_grad());
    CHECK(f.grad().array().abs().maxCoeff() > 0.0);

    // finite-difference probe on one coordinate of f
    Tensor f0 = f.value();
    Tensor base = predict_noise(model, DenoiserInput{stacked, 3, f0});
    Tensor f1 = f0;
    f1[0] += 0.1;
    Tensor bumped = predict_noise(model, DenoiserInput{stacked, 3, f1});
    CHECK((bumped.array() - base.array()).abs().maxCoeff() > 0.0);
}

TEST_CASE("denoiser: paper-scale latent 4x64x64 keeps shape") {
    DenoiserConfig cfg;
    cfg.latent_channels = 4;
    cfg.latent_size = 64;
    cfg.base_channels = 4;
    cfg.cond_dim = 16;
    cfg.attn_dim = 4;
    cfg.norm_groups = 2;
    cfg.seed = 11;
    Denoiser model(cfg);
    CHECK(cfg.in_channels() == 9);
    Rng rng(5);
    Tensor stacked = Tensor::randn(Shape{9, 64, 64}, rng);
    Tensor f = Tensor::randn(Shape{16, 1, 1}, rng);
    Tensor out = predict_noise(model, DenoiserInput{stacked, 999, f});
    CHECK(out.shape() == Shape{4, 64, 64});
}

TEST_CASE("denoiser: non-finite inputs rejected") {
    DenoiserConfig cfg = tiny_config();
    Denoiser model(cfg);
    Tensor stacked = Tensor::zeros(Shape{cfg.in_channels(), 8, 8});
    stacked[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(predict_noise(model, DenoiserInput{stacked, 1, Tensor(cfg.cond_dim, 1, 1)}), NumericError);
}

TEST_CASE("denoiser: gradient health on a handful of parameters") {
    DenoiserConfig cfg = tiny_config();
    Denoiser model(cfg);
    Rng rng(6);
    Tensor stacked = Tensor::randn(Shape{cfg.in_channels(), 8, 8}, rng);
    Tensor f = Tensor::randn(Shape{cfg.cond_dim, 1, 1}, rng);
    Tensor target = Tensor::randn(Shape{3, 8, 8}, rng);

    auto loss_value = [&] {
        ag::Var out = model.forward(ag::constant(stacked), 5, ag::constant(f));
        return ag::mse(out, ag::constant(target));
    };
    model.params().zero_grad();
    ag::backward(loss_value());

    Rng pick(99);
    const auto& items = model.params().items();
    for (int probe = 0; probe < 10; ++probe) {
        auto& [name, var] = items[static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(items.size()) - 1))];
        std::int64_t idx = pick.uniform_int(0, static_cast<int>(var.value().size()) - 1);
        double saved = var.value()[idx];
        const double h = 1e-5;
        ag::Var v = var;
        v.value()[idx] = saved + h;
        double lp = ag::scalar(loss_value());
        v.value()[idx] = saved - h;
        double lm = ag::scalar(loss_value());
        v.value()[idx] = saved;
        double fd = (lp - lm) / (2 * h);
        double an = var.has_grad() ? var.grad()[idx] : 0.0;
        CAPTURE(name);
        CHECK(std::abs(fd - an) <= 1e-3 * std::max({1.0, std::abs(fd), std::abs(an)}));
    }
}

TEST_CASE("identity codec: exact round trip, zero image, range check") {
    IdentityCodec codec;
    Rng rng(7);
    Tensor img = Tensor::rand_uniform(Shape{3, 16, 16}, rng);
    Latent z = encode(codec, img);
    CHECK(z.space == LatentSpace::codec_latent);
    CHECK(decode(codec, z).digest() == img.digest());

    Tensor zero = Tensor::zeros(Shape{3, 8, 8});
    CHECK(encode(codec, zero).data.array().abs().maxCoeff() == 0.0);

    Tensor bad = img;
    bad[0] = 1.5;
    CHECK_THROWS_AS(encode(codec, bad), RangeError);
    bad[0] = -0.2;
    CHECK_THROWS_AS(encode(codec, bad), RangeError);

    // decode accepts out-of-range latents (diffusion intermediates)
    Tensor wild = Tensor::full(Shape{3, 8, 8}, 3.0);
    CHECK(codec.decode(wild).digest() == wild.digest());
}

TEST_CASE("conv codec: shapes and bounded latent") {
    ConvCodecConfig cc;
    cc.image_size = 32;
    cc.seed = 5;
    ConvCodec codec(cc);
    Rng rng(8);
    Tensor img = Tensor::rand_uniform(Shape{3, 32, 32}, rng);
    Latent z = codec.encode(img);
    CHECK(z.data.shape() == Shape{4, 8, 8});
    CHECK(z.data.array().abs().maxCoeff() <= 1.0);
    Tensor rec = codec.decode(z.data);
    CHECK(rec.shape() == Shape{3, 32, 32});
    CHECK(rec.array().minCoeff() >= 0.0);
    CHECK(rec.array().maxCoeff() <= 1.0);
}

TEST_CASE("conv codec: pretraining reaches the reconstruction tolerance on held-out toy images") {
    // oracle data: toy renders, train on one set, measure on unseen instances
    std::vector<Tensor> train_imgs, held_out;
    for (int i = 0; i < 48; ++i) {
        ToyFactorSpec s;
        s.identity = i % 4;
        s.style_seed = 50;
        s.instance_seed = 1000 + i;
        s.pose_deg = -24.0 + 1.0 * i;
        s.expression = -0.95 + 0.04 * i;
        s.lighting = 0.85 + 0.3 * ((i * 37) % 100) / 100.0;
        auto r = render_toy_face(s, 32);
        if (i < 40)
            train_imgs.push_back(r.image);
        else
            held_out.push_back(r.image);
    }
    ConvCodecConfig cc;
    cc.image_size = 32;
    cc.seed = 21;
    ConvCodec codec(cc);
    double train_mae = codec.pretrain(train_imgs, 2200, 4e-3, 77);
    CHECK(train_mae < 0.05);
    double mae = 0.0;
    for (const auto& img : held_out) {
        Tensor rec = codec.decode(codec.encode(img).data);
        mae += (rec.array() - img.array()).abs().mean();
    }
    mae /= static_cast<double>(held_out.size());
    CHECK(mae <= 0.05);
}
