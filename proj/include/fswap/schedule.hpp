#ifndef FSWAP_SCHEDULE_HPP
#define FSWAP_SCHEDULE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "fswap/common.hpp"

namespace fswap {

enum class ScheduleKind { linear };

// Forward-diffusion coefficient sequences alpha_t and alpha_bar_t = prod alpha_i,
// 1-indexed over t in [1, T]; alpha_bar(0) == 1 by convention. Immutable after
// construction and safe to share across threads.
template <typename Scalar = double>
struct NoiseScheduleT {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    int T = 0;
    Array alphas;      // alpha_1 .. alpha_T
    Array alpha_bars;  // alpha_bar_1 .. alpha_bar_T

    Scalar alpha(int t) const {
        check_t(t);
        return alphas[t - 1];
    }
    // Valid for t in [0, T]; t = 0 returns 1 (terminal convention).
    Scalar alpha_bar(int t) const {
        if (t == 0) return Scalar(1);
        check_t(t);
        return alpha_bars[t - 1];
    }
    Scalar sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar(t)); }
    Scalar sqrt_one_minus_alpha_bar(int t) const { return std::sqrt(Scalar(1) - alpha_bar(t)); }

    void check_t(int t) const {
        if (t < 1 || t > T)
            throw RangeError("timestep out of range: t=" + std::to_string(t) + ", T=" + std::to_string(T));
    }
};

using NoiseSchedule = NoiseScheduleT<double>;

template <typename Scalar = double>
NoiseScheduleT<Scalar> build_schedule(int T, Scalar beta_start, Scalar beta_end,
                                      ScheduleKind kind = ScheduleKind::linear) {
    (void)kind;  // single kind for now
    if (T < 1) throw RangeError("build_schedule: T must be >= 1, got " + std::to_string(T));
    if (!(Scalar(0) < beta_start && beta_start <= beta_end && beta_end < Scalar(1)))
        throw RangeError("build_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseScheduleT<Scalar> s;
    s.T = T;
    typename NoiseScheduleT<Scalar>::Array betas;
    if (T == 1)
        betas = NoiseScheduleT<Scalar>::Array::Constant(1, beta_start);
    else
        betas = NoiseScheduleT<Scalar>::Array::LinSpaced(T, beta_start, beta_end);
    s.alphas = Scalar(1) - betas;
    s.alpha_bars.resize(T);
    Scalar acc(1);
    for (int t = 0; t < T; ++t) {
        acc *= s.alphas[t];
        s.alpha_bars[t] = acc;
    }
    return s;
}

// Descending timesteps at uniform intervals over [1, T] with t_1 = T, plus the
// terminal target 0 as the last entry.
struct StepSchedule {
    std::vector<int> steps;  // t_1 > t_2 > ... > t_n >= 1, then 0

    int count() const { return static_cast<int>(steps.size()) - 1; }
};

inline StepSchedule make_step_schedule(int T, int n) {
    if (n < 1 || n > T)
        throw RangeError("make_step_schedule: need 1 <= n <= T, got n=" + std::to_string(n) +
                         ", T=" + std::to_string(T));
    StepSchedule s;
    s.steps.reserve(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i < n; ++i) {
        double pos = static_cast<double>(T) * (n - i) / n;
        s.steps.push_back(static_cast<int>(std::lround(pos)));
    }
    s.steps.push_back(0);
    return s;
}

}  // namespace fswap

#endif
