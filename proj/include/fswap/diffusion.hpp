#ifndef FSWAP_DIFFUSION_HPP
#define FSWAP_DIFFUSION_HPP

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "fswap/schedule.hpp"
#include "fswap/tensor.hpp"

namespace fswap {

inline constexpr double kAlphaBarFloor = 1e-12;  // divisions by sqrt(alpha_bar) below this are rejected

// z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps. Expression-friendly: returns an
// Eigen expression over the operand arrays.
template <typename A, typename B, typename Scalar>
auto forward_diffuse_expr(const Eigen::ArrayBase<A>& z0, const Eigen::ArrayBase<B>& eps, int t,
                          const NoiseScheduleT<Scalar>& sched) {
    sched.check_t(t);
    Scalar sa = sched.sqrt_alpha_bar(t);
    Scalar sb = sched.sqrt_one_minus_alpha_bar(t);
    return (sa * z0.derived() + sb * eps.derived()).eval();
}

inline Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    require_same_shape(z0, eps, "forward_diffuse");
    return Tensor(z0.shape(), forward_diffuse_expr(z0.array(), eps.array(), t, sched));
}

// eps = (z_t - sqrt(ab_t) z0) / sqrt(1 - ab_t); exact inverse of forward_diffuse.
template <typename A, typename B, typename Scalar>
auto true_noise_expr(const Eigen::ArrayBase<A>& z_t, const Eigen::ArrayBase<B>& z0, int t,
                     const NoiseScheduleT<Scalar>& sched) {
    sched.check_t(t);
    Scalar ab = sched.alpha_bar(t);
    if (Scalar(1) - ab < Scalar(kAlphaBarFloor))
        throw NumericError("true_noise: alpha_bar(t) too close to 1 at t=" + std::to_string(t));
    Scalar sa = std::sqrt(ab);
    Scalar inv = Scalar(1) / std::sqrt(Scalar(1) - ab);
    return ((z_t.derived() - sa * z0.derived()) * inv).eval();
}

inline Tensor true_noise(const Tensor& z_t, const Tensor& z0, int t, const NoiseSchedule& sched) {
    require_same_shape(z_t, z0, "true_noise");
    return Tensor(z_t.shape(), true_noise_expr(z_t.array(), z0.array(), t, sched));
}

// Clean-data estimate x0_hat = (z_t - sqrt(1 - ab_t) eps) / sqrt(ab_t).
template <typename A, typename B, typename Scalar>
auto ddim_predict_x0_expr(const Eigen::ArrayBase<A>& z_t, const Eigen::ArrayBase<B>& eps_pred, int t,
                          const NoiseScheduleT<Scalar>& sched) {
    sched.check_t(t);
    Scalar ab = sched.alpha_bar(t);
    if (ab < Scalar(kAlphaBarFloor))
        throw NumericError("ddim_predict_x0: alpha_bar(t) below numeric floor at t=" + std::to_string(t));
    Scalar sb = std::sqrt(Scalar(1) - ab);
    Scalar inv = Scalar(1) / std::sqrt(ab);
    return ((z_t.derived() - sb * eps_pred.derived()) * inv).eval();
}

inline Tensor ddim_predict_x0(const Tensor& z_t, const Tensor& eps_pred, int t, const NoiseSchedule& sched) {
    require_same_shape(z_t, eps_pred, "ddim_predict_x0");
    return Tensor(z_t.shape(), ddim_predict_x0_expr(z_t.array(), eps_pred.array(), t, sched));
}

// Deterministic DDIM update: z_{t_prev} = sqrt(ab_{t_prev}) x0_hat + sqrt(1 - ab_{t_prev}) eps_pred,
// with ab_0 = 1 so t_prev = 0 yields x0_hat exactly.
template <typename A, typename B, typename Scalar>
auto ddim_step_expr(const Eigen::ArrayBase<A>& z_t, const Eigen::ArrayBase<B>& eps_pred, int t, int t_prev,
                    const NoiseScheduleT<Scalar>& sched) {
    if (t_prev >= t)
        throw RangeError("ddim_step: need t_prev < t, got t=" + std::to_string(t) +
                         ", t_prev=" + std::to_string(t_prev));
    if (t_prev < 0) throw RangeError("ddim_step: t_prev must be >= 0");
    auto x0 = ddim_predict_x0_expr(z_t, eps_pred, t, sched);
    Scalar sa = sched.sqrt_alpha_bar(t_prev);
    Scalar sb = sched.sqrt_one_minus_alpha_bar(t_prev);
    return (sa * x0 + sb * eps_pred.derived()).eval();
}

inline Tensor ddim_step(const Tensor& z_t, const Tensor& eps_pred, int t, int t_prev, const NoiseSchedule& sched) {
    require_same_shape(z_t, eps_pred, "ddim_step");
    return Tensor(z_t.shape(), ddim_step_expr(z_t.array(), eps_pred.array(), t, t_prev, sched));
}

struct SampleTrace {
    Tensor z0;
    std::vector<std::pair<int, Tensor>> x0_estimates;  // clean-latent estimate at every visited t_i
};

// Inference-grade sampling loop; the denoiser is any callable (const Tensor&, int t) -> Tensor.
// The differentiable training-grade counterpart lives in diffusion_ad.hpp.
template <typename DenoiseFn>
SampleTrace ddim_sample(DenoiseFn&& denoise_fn, const Tensor& z_T, const StepSchedule& steps,
                        const NoiseSchedule& sched) {
    if (steps.count() < 1) throw RangeError("ddim_sample: empty step schedule");
    SampleTrace trace;
    trace.x0_estimates.reserve(steps.count());
    Tensor z = z_T;
    for (int i = 0; i < steps.count(); ++i) {
        int t = steps.steps[i];
        int t_prev = steps.steps[i + 1];
        Tensor eps = denoise_fn(static_cast<const Tensor&>(z), t);
        require_same_shape(z, eps, "ddim_sample: denoiser output");
        trace.x0_estimates.emplace_back(t, ddim_predict_x0(z, eps, t, sched));
        z = ddim_step(z, eps, t, t_prev, sched);
        if (!z.all_finite()) throw NumericError("ddim_sample: non-finite latent at t=" + std::to_string(t));
    }
    trace.z0 = std::move(z);
    return trace;
}

}  // namespace fswap

#endif
