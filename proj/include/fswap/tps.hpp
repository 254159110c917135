#ifndef FSWAP_TPS_HPP
#define FSWAP_TPS_HPP

#include <Eigen/Dense>
#include <cmath>

#include "fswap/common.hpp"

namespace fswap {

// 2D thin-plate spline interpolant with the r^2 log r radial kernel plus an
// affine part; exact interpolation (no smoothing term).
template <typename Scalar = double>
class ThinPlateSpline {
public:
    using Points = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

    void fit(const Points& src, const Points& dst) {
        const Eigen::Index n = src.rows();
        if (n < 3 || dst.rows() != n) throw RangeError("ThinPlateSpline::fit: need >= 3 matched points");
        src_ = src;
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> L(n + 3, n + 3);
        L.setZero();
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                L(i, j) = kernel(src.row(i), src.row(j));
        for (Eigen::Index i = 0; i < n; ++i) {
            L(i, n) = Scalar(1);
            L(i, n + 1) = src(i, 0);
            L(i, n + 2) = src(i, 1);
            L(n, i) = Scalar(1);
            L(n + 1, i) = src(i, 0);
            L(n + 2, i) = src(i, 1);
        }
        Eigen::Matrix<Scalar, Eigen::Dynamic, 2> Y(n + 3, 2);
        Y.setZero();
        Y.topRows(n) = dst;
        weights_ = L.fullPivLu().solve(Y);
        if (!weights_.allFinite()) throw NumericError("ThinPlateSpline::fit: singular control lattice");
    }

    Eigen::Matrix<Scalar, 2, 1> apply(Scalar x, Scalar y) const {
        const Eigen::Index n = src_.rows();
        Eigen::Matrix<Scalar, 1, 2> p;
        p << x, y;
        Eigen::Matrix<Scalar, 2, 1> out;
        for (int d = 0; d < 2; ++d)
            out[d] = weights_(n, d) + weights_(n + 1, d) * x + weights_(n + 2, d) * y;
        for (Eigen::Index i = 0; i < n; ++i) {
            Scalar u = kernel(p, src_.row(i));
            out[0] += weights_(i, 0) * u;
            out[1] += weights_(i, 1) * u;
        }
        return out;
    }

private:
    static Scalar kernel(const Eigen::Matrix<Scalar, 1, 2>& a, const Eigen::Matrix<Scalar, 1, 2>& b) {
        Scalar r2 = (a - b).squaredNorm();
        return r2 > Scalar(1e-12) ? Scalar(0.5) * r2 * std::log(r2) : Scalar(0);  // r^2 log r
    }

    Points src_;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 2> weights_;  // (n + 3, 2): kernel weights then 1, x, y
};

}  // namespace fswap

#endif
