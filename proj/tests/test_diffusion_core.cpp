#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fswap/diffusion.hpp"

using namespace fswap;

namespace {

// Independent cumulative-product oracle for alpha_bar.
Eigen::ArrayXd alpha_bar_oracle(const Eigen::ArrayXd& betas) {
    Eigen::ArrayXd bars(betas.size());
    double acc = 1.0;
    for (Eigen::Index i = 0; i < betas.size(); ++i) {
        acc *= 1.0 - betas[i];
        bars[i] = acc;
    }
    return bars;
}

NoiseSchedule schedule_with_bars(std::initializer_list<double> bars) {
    // builds an explicit schedule from target alpha_bar values (test rig)
    NoiseSchedule s;
    s.T = static_cast<int>(bars.size());
    s.alpha_bars.resize(s.T);
    s.alphas.resize(s.T);
    double prev = 1.0;
    int i = 0;
    for (double b : bars) {
        s.alpha_bars[i] = b;
        s.alphas[i] = b / prev;
        prev = b;
        ++i;
    }
    return s;
}

}  // namespace

TEST_CASE("build_schedule: single-step degenerate case") {
    auto s = build_schedule(1, 0.5, 0.5);
    CHECK(s.T == 1);
    CHECK(s.alphas[0] == doctest::Approx(0.5));
    CHECK(s.alpha_bars[0] == doctest::Approx(0.5));
}

TEST_CASE("build_schedule: default config matches cumulative-product oracle") {
    auto s = build_schedule(1000, 1e-4, 0.02);
    CHECK(s.alpha_bars[0] == doctest::Approx(0.9999).epsilon(1e-12));

    Eigen::ArrayXd betas = Eigen::ArrayXd::LinSpaced(1000, 1e-4, 0.02);
    Eigen::ArrayXd oracle = alpha_bar_oracle(betas);
    for (int t = 0; t < 1000; ++t) CHECK(s.alpha_bars[t] == doctest::Approx(oracle[t]).epsilon(1e-12));

    // z_T must be noise dominated for the default configuration
    CHECK(std::sqrt(s.alpha_bars[999]) < 0.01);
}

TEST_CASE("build_schedule: two-step hand computation") {
    auto s = build_schedule(2, 0.1, 0.2);
    CHECK(s.alpha_bars[0] == doctest::Approx(0.9));
    CHECK(s.alpha_bars[1] == doctest::Approx(0.72));  // 0.9 * 0.8
}

TEST_CASE("build_schedule: precondition violations") {
    CHECK_THROWS_AS(build_schedule(0, 0.1, 0.2), RangeError);
    CHECK_THROWS_AS(build_schedule(10, 0.0, 0.2), RangeError);
    CHECK_THROWS_AS(build_schedule(10, 0.3, 0.2), RangeError);
    CHECK_THROWS_AS(build_schedule(10, 0.1, 1.0), RangeError);
}

TEST_CASE("NoiseSchedule invariants: strictly decreasing alpha_bar in (0,1], exact recurrence") {
    auto s = build_schedule(1000, 1e-4, 0.02);
    double prev = 1.0;
    for (int t = 1; t <= s.T; ++t) {
        double ab = s.alpha_bar(t);
        CHECK(ab > 0.0);
        CHECK(ab <= 1.0);
        CHECK(ab < prev);
        CHECK(ab == doctest::Approx(prev * s.alpha(t)).epsilon(1e-15));
        prev = ab;
    }
    CHECK(s.alpha_bar(0) == 1.0);
}

TEST_CASE("forward_diffuse: zero-noise limit and deterministic scaling") {
    Rng rng(7);
    auto near_one = build_schedule(1, 1e-8, 1e-8);
    Tensor z0 = Tensor::randn(Shape{3, 4, 4}, rng);
    Tensor eps = Tensor::randn(Shape{3, 4, 4}, rng);
    Tensor out = forward_diffuse(z0, 1, eps, near_one);
    CHECK((out.array() - z0.array()).abs().maxCoeff() < 1e-3);

    auto s = build_schedule(100, 1e-3, 0.2);
    Tensor zeros = Tensor::zeros(z0.shape());
    Tensor scaled = forward_diffuse(z0, 42, zeros, s);
    double sa = std::sqrt(s.alpha_bar(42));
    CHECK((scaled.array() - sa * z0.array()).abs().maxCoeff() < 1e-15);
}

TEST_CASE("forward_diffuse: scalar hand evaluation at alpha_bar=0.25") {
    auto s = schedule_with_bars({0.25});
    Tensor z0 = Tensor::vec({1.0});
    Tensor eps = Tensor::vec({2.0});
    double oracle = 0.5 * 1.0 + std::sqrt(0.75) * 2.0;
    Tensor out = forward_diffuse(z0, 1, eps, s);
    CHECK(out[0] == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(out[0] == doctest::Approx(2.2320508).epsilon(1e-7));
}

TEST_CASE("forward_diffuse: errors") {
    auto s = build_schedule(10, 1e-3, 0.1);
    Rng rng(1);
    Tensor a = Tensor::randn(Shape{1, 2, 2}, rng);
    Tensor b = Tensor::randn(Shape{1, 2, 3}, rng);
    CHECK_THROWS_AS(forward_diffuse(a, 1, b, s), ShapeError);
    Tensor e = Tensor::zeros(a.shape());
    CHECK_THROWS_AS(forward_diffuse(a, 0, e, s), RangeError);
    CHECK_THROWS_AS(forward_diffuse(a, 11, e, s), RangeError);
}

TEST_CASE("true_noise: algebraic inverse of forward_diffuse") {
    Rng rng(11);
    auto s = build_schedule(1000, 1e-4, 0.02);
    Tensor z0 = Tensor::randn(Shape{3, 8, 8}, rng);
    Tensor eps = Tensor::randn(Shape{3, 8, 8}, rng);
    for (int t : {1, 250, 999}) {
        Tensor zt = forward_diffuse(z0, t, eps, s);
        Tensor rec = true_noise(zt, z0, t, s);
        CHECK((rec.array() - eps.array()).abs().maxCoeff() < 1e-6);
    }
    Tensor exact = Tensor(z0.shape(), std::sqrt(s.alpha_bar(500)) * z0.array());
    CHECK(true_noise(exact, z0, 500, s).array().abs().maxCoeff() < 1e-12);
}

TEST_CASE("true_noise: scalar inverse of the forward example") {
    auto s = schedule_with_bars({0.25});
    Tensor zt = Tensor::vec({2.2320508075688772});
    Tensor z0 = Tensor::vec({1.0});
    CHECK(true_noise(zt, z0, 1, s)[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("true_noise: degenerate alpha_bar = 1 rejected") {
    auto s = schedule_with_bars({1.0});
    Tensor z = Tensor::vec({1.0});
    CHECK_THROWS_AS(true_noise(z, z, 1, s), NumericError);
}

TEST_CASE("ddim_predict_x0: round trip and scalar example") {
    Rng rng(13);
    auto s = build_schedule(1000, 1e-4, 0.02);
    Tensor z0 = Tensor::randn(Shape{2, 5, 5}, rng);
    Tensor eps = Tensor::randn(Shape{2, 5, 5}, rng);
    Tensor zt = forward_diffuse(z0, 700, eps, s);
    Tensor hat = ddim_predict_x0(zt, eps, 700, s);
    CHECK((hat.array() - z0.array()).abs().maxCoeff() < 1e-5);

    auto s25 = schedule_with_bars({0.25});
    Tensor out = ddim_predict_x0(Tensor::vec({2.2320508075688772}), Tensor::vec({2.0}), 1, s25);
    CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-12));

    auto near_one = build_schedule(1, 1e-9, 1e-9);
    Tensor zt2 = Tensor::randn(Shape{1, 3, 3}, rng);
    Tensor any_eps = Tensor::randn(Shape{1, 3, 3}, rng);
    Tensor back = ddim_predict_x0(zt2, any_eps, 1, near_one);
    CHECK((back.array() - zt2.array()).abs().maxCoeff() < 1e-3);
}

TEST_CASE("ddim_predict_x0: alpha_bar below numeric floor rejected") {
    auto s = schedule_with_bars({1e-13});
    Tensor z = Tensor::vec({1.0});
    CHECK_THROWS_AS(ddim_predict_x0(z, z, 1, s), NumericError);
}

TEST_CASE("ddim_step: terminal step returns the clean estimate") {
    Rng rng(17);
    auto s = build_schedule(100, 1e-3, 0.1);
    Tensor zt = Tensor::randn(Shape{3, 4, 4}, rng);
    Tensor eps = Tensor::randn(Shape{3, 4, 4}, rng);
    Tensor stepped = ddim_step(zt, eps, 60, 0, s);
    Tensor x0 = ddim_predict_x0(zt, eps, 60, s);
    CHECK((stepped.array() - x0.array()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("ddim_step: perfect oracle keeps the trajectory on the z0 manifold") {
    Rng rng(19);
    auto s = build_schedule(1000, 1e-4, 0.02);
    Tensor z0 = Tensor::randn(Shape{3, 4, 4}, rng);
    Tensor eps = Tensor::randn(Shape{3, 4, 4}, rng);
    Tensor zt = forward_diffuse(z0, 800, eps, s);
    Tensor stepped = ddim_step(zt, eps, 800, 500, s);
    Tensor expected = forward_diffuse(z0, 500, eps, s);
    CHECK((stepped.array() - expected.array()).abs().maxCoeff() < 1e-10);
}

TEST_CASE("ddim_step: scalar hand evaluation") {
    // alpha_bar: 0.81 at t=1, 0.25 at t=2
    auto s = schedule_with_bars({0.81, 0.25});
    Tensor zt = Tensor::vec({2.2320508075688772});
    Tensor eps = Tensor::vec({2.0});
    double oracle = 0.9 * 1.0 + std::sqrt(0.19) * 2.0;
    Tensor out = ddim_step(zt, eps, 2, 1, s);
    CHECK(out[0] == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(out[0] == doctest::Approx(1.7717798).epsilon(1e-7));

    CHECK_THROWS_AS(ddim_step(zt, eps, 1, 1, s), RangeError);
    CHECK_THROWS_AS(ddim_step(zt, eps, 1, 2, s), RangeError);
}

TEST_CASE("make_step_schedule: uniform descending construction") {
    auto s = make_step_schedule(1000, 4);
    CHECK(s.steps == std::vector<int>{1000, 750, 500, 250, 0});

    auto s1 = make_step_schedule(10, 1);
    CHECK(s1.steps == std::vector<int>{10, 0});

    auto s50 = make_step_schedule(1000, 50);
    CHECK(s50.count() == 50);
    CHECK(s50.steps.front() == 1000);
    for (int i = 0; i + 1 < 50; ++i) CHECK(s50.steps[i] - s50.steps[i + 1] == 20);

    CHECK_THROWS_AS(make_step_schedule(10, 0), RangeError);
    CHECK_THROWS_AS(make_step_schedule(10, 11), RangeError);
}

TEST_CASE("make_step_schedule: spacing uniformity over irregular divisors") {
    for (auto [T, n] : std::vector<std::pair<int, int>>{{1000, 7}, {100, 3}, {37, 5}, {50, 50}, {997, 13}}) {
        auto s = make_step_schedule(T, n);
        CHECK(s.count() == n);
        CHECK(s.steps.back() == 0);
        int max_gap = 0, min_gap = 1 << 30;
        for (int i = 0; i + 1 < n; ++i) {
            int g = s.steps[i] - s.steps[i + 1];
            CHECK(g >= 1);
            max_gap = std::max(max_gap, g);
            min_gap = std::min(min_gap, g);
        }
        if (n > 1) CHECK(max_gap - min_gap <= 1);
        CHECK(T - s.steps.front() <= (T + n - 1) / n);  // first element within one interval of T
        CHECK(s.steps[n - 1] >= 1);
    }
}

TEST_CASE("ddim_sample: oracle denoiser recovers z0 for any step count") {
    Rng rng(23);
    auto s = build_schedule(1000, 1e-4, 0.02);
    Tensor z0 = Tensor::randn(Shape{3, 8, 8}, rng);
    auto oracle_denoiser = [&](const Tensor& z, int t) { return true_noise(z, z0, t, s); };
    Tensor zT = Tensor::randn(z0.shape(), rng);
    for (int n : {1, 5, 50}) {
        auto trace = ddim_sample(oracle_denoiser, zT, make_step_schedule(1000, n), s);
        CHECK((trace.z0.array() - z0.array()).abs().maxCoeff() < 1e-4);
        for (const auto& [t, x0] : trace.x0_estimates)
            CHECK((x0.array() - z0.array()).abs().maxCoeff() < 1e-4);
        CHECK(static_cast<int>(trace.x0_estimates.size()) == n);
    }
}

TEST_CASE("ddim_sample: single step equals ddim_predict_x0 at T") {
    Rng rng(29);
    auto s = build_schedule(500, 1e-4, 0.02);
    Tensor zT = Tensor::randn(Shape{2, 4, 4}, rng);
    auto pseudo = [](const Tensor& z, int t) {
        (void)t;
        return Tensor(z.shape(), 0.1 * z.array());
    };
    auto trace = ddim_sample(pseudo, zT, make_step_schedule(500, 1), s);
    Tensor expect = ddim_predict_x0(zT, pseudo(zT, 500), 500, s);
    CHECK((trace.z0.array() - expect.array()).abs().maxCoeff() == 0.0);
}

TEST_CASE("ddim_sample: bitwise determinism across runs") {
    Rng rng(31);
    auto s = build_schedule(1000, 1e-4, 0.02);
    Tensor zT = Tensor::randn(Shape{3, 6, 6}, rng);
    auto pseudo = [](const Tensor& z, int t) {
        return Tensor(z.shape(), (0.05 * z.array() + 1e-4 * t).eval());
    };
    auto a = ddim_sample(pseudo, zT, make_step_schedule(1000, 20), s);
    auto b = ddim_sample(pseudo, zT, make_step_schedule(1000, 20), s);
    CHECK(a.z0.digest() == b.z0.digest());
    for (std::size_t i = 0; i < a.x0_estimates.size(); ++i)
        CHECK(a.x0_estimates[i].second.digest() == b.x0_estimates[i].second.digest());
}

TEST_CASE("ddim_sample: non-finite intermediates rejected") {
    auto s = build_schedule(100, 1e-3, 0.1);
    Tensor zT = Tensor::full(Shape{1, 2, 2}, 0.5);
    auto bad = [](const Tensor& z, int) {
        Tensor e = z;
        e[0] = std::numeric_limits<double>::quiet_NaN();
        return e;
    };
    CHECK_THROWS_AS(ddim_sample(bad, zT, make_step_schedule(100, 4), s), NumericError);
}

TEST_CASE("round trip property: 1000 random (z0, t, eps) triples at rel tol 1e-5") {
    Rng rng(37);
    auto s = build_schedule(1000, 1e-4, 0.02);
    for (int i = 0; i < 1000; ++i) {
        Tensor z0 = Tensor::randn(Shape{1, 3, 3}, rng);
        Tensor eps = Tensor::randn(Shape{1, 3, 3}, rng);
        int t = rng.uniform_int(1, 1000);
        Tensor zt = forward_diffuse(z0, t, eps, s);
        Tensor back = ddim_predict_x0(zt, eps, t, s);
        double rel = (back.array() - z0.array()).abs().maxCoeff() / (1.0 + z0.array().abs().maxCoeff());
        CHECK(rel < 1e-5);
        Tensor noise_back = true_noise(zt, z0, t, s);
        CHECK((noise_back.array() - eps.array()).abs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("float instantiation of the templated kernels") {
    auto s = build_schedule<float>(100, 1e-3f, 0.1f);
    Eigen::ArrayXf z0(4), eps(4);
    z0 << 0.1f, -0.2f, 0.3f, 0.7f;
    eps << 1.f, -1.f, 0.5f, 0.f;
    auto zt = forward_diffuse_expr(z0, eps, 50, s);
    auto back = ddim_predict_x0_expr(zt, eps, 50, s);
    CHECK((back - z0).abs().maxCoeff() < 1e-5f);
}

#include "fswap/diffusion_ad.hpp"

TEST_CASE("differentiable sampler matches the plain sampler and propagates gradients") {
    Rng rng(41);
    auto s = build_schedule(200, 1e-4, 0.02);
    Tensor zT = Tensor::randn(Shape{2, 4, 4}, rng);

    // shared pseudo-denoiser: eps = k * z with a trainable scalar k
    ag::Var k(Tensor::vec({0.07}), true);
    auto plain_fn = [&](const Tensor& z, int) { return Tensor(z.shape(), z.array() * k.value()[0]); };
    auto var_fn = [&](const ag::Var& z, int) { return ag::mul_by(z, k); };

    auto plain = ddim_sample(plain_fn, zT, make_step_schedule(200, 6), s);
    auto traced = ddim_sample_var(var_fn, ag::constant(zT), make_step_schedule(200, 6), s);
    CHECK(plain.z0.digest() == traced.z0.value().digest());
    REQUIRE(plain.x0_estimates.size() == traced.x0_estimates.size());
    for (std::size_t i = 0; i < plain.x0_estimates.size(); ++i) {
        CHECK(plain.x0_estimates[i].first == traced.x0_estimates[i].first);
        CHECK(plain.x0_estimates[i].second.digest() == traced.x0_estimates[i].second.value().digest());
    }

    // the whole loop supports gradient propagation to the denoiser parameter
    k.zero_grad();
    ag::backward(ag::mean(ag::mul(traced.z0, traced.z0)));
    REQUIRE(k.has_grad());
    CHECK(std::abs(k.grad()[0]) > 0.0);

    // finite-difference check of d(mean(z0^2))/dk through all steps
    auto loss_at = [&](double kv) {
        ag::Var kk(Tensor::vec({kv}), true);
        auto fn = [&](const ag::Var& z, int) { return ag::mul_by(z, kk); };
        auto tr = ddim_sample_var(fn, ag::constant(zT), make_step_schedule(200, 6), s);
        return ag::scalar(ag::mean(ag::mul(tr.z0, tr.z0)));
    };
    double h = 1e-6;
    double fd = (loss_at(0.07 + h) - loss_at(0.07 - h)) / (2 * h);
    CHECK(std::abs(fd - k.grad()[0]) <= 1e-5 * std::max(1.0, std::abs(fd)));
}
