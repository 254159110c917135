#ifndef FSWAP_DIFFUSION_AD_HPP
#define FSWAP_DIFFUSION_AD_HPP

#include "fswap/autodiff.hpp"
#include "fswap/diffusion.hpp"

namespace fswap {

// Graph-building counterparts of the DDIM kernels: identical arithmetic, with
// gradient propagation through every step to the denoiser parameters.

inline ag::Var ddim_predict_x0_var(const ag::Var& z_t, const ag::Var& eps_pred, int t, const NoiseSchedule& sched) {
    sched.check_t(t);
    double ab = sched.alpha_bar(t);
    if (ab < kAlphaBarFloor)
        throw NumericError("ddim_predict_x0_var: alpha_bar below numeric floor at t=" + std::to_string(t));
    double sb = std::sqrt(1.0 - ab);
    double inv = 1.0 / std::sqrt(ab);
    return ag::scale(ag::sub(z_t, ag::scale(eps_pred, sb)), inv);
}

inline ag::Var ddim_step_var(const ag::Var& z_t, const ag::Var& eps_pred, int t, int t_prev,
                             const NoiseSchedule& sched) {
    if (t_prev >= t) throw RangeError("ddim_step_var: need t_prev < t");
    ag::Var x0 = ddim_predict_x0_var(z_t, eps_pred, t, sched);
    double sa = sched.sqrt_alpha_bar(t_prev);
    double sb = sched.sqrt_one_minus_alpha_bar(t_prev);
    return ag::add(ag::scale(x0, sa), ag::scale(eps_pred, sb));
}

struct SampleTraceVar {
    ag::Var z0;
    std::vector<std::pair<int, ag::Var>> x0_estimates;
};

// Differentiable N-step sampling loop. denoise_fn: (const ag::Var& z, int t) -> ag::Var.
template <typename DenoiseFn>
SampleTraceVar ddim_sample_var(DenoiseFn&& denoise_fn, const ag::Var& z_T, const StepSchedule& steps,
                               const NoiseSchedule& sched) {
    if (steps.count() < 1) throw RangeError("ddim_sample_var: empty step schedule");
    SampleTraceVar trace;
    trace.x0_estimates.reserve(steps.count());
    ag::Var z = z_T;
    for (int i = 0; i < steps.count(); ++i) {
        int t = steps.steps[i];
        int t_prev = steps.steps[i + 1];
        ag::Var eps = denoise_fn(static_cast<const ag::Var&>(z), t);
        require_same_shape(z.value(), eps.value(), "ddim_sample_var: denoiser output");
        trace.x0_estimates.emplace_back(t, ddim_predict_x0_var(z, eps, t, sched));
        z = ddim_step_var(z, eps, t, t_prev, sched);
        if (!z.value().all_finite())
            throw NumericError("ddim_sample_var: non-finite latent at t=" + std::to_string(t));
    }
    trace.z0 = z;
    return trace;
}

}  // namespace fswap

#endif
